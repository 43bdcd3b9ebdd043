#include "feddtpt/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <json.hpp>

#include "feddtpt/errors.hpp"
#include "feddtpt/util.hpp"

namespace feddtpt {

namespace {

kernels::Points collect_points(const std::vector<TokenEmbedding>& embeddings, bool normalize) {
    kernels::Points pts;
    pts.reserve(embeddings.size());
    for (const auto& e : embeddings) pts.push_back(e.vector);
    if (normalize) {
        for (size_t i = 0; i < pts.size(); ++i) {
            double n = kernels::norm(pts[i]);
            if (n == 0.0)
                throw DegenerateVectorError("embedding " + std::to_string(i) +
                                            " is a zero vector");
            for (auto& x : pts[i]) x /= n;
        }
    }
    return pts;
}

std::vector<int> owners_of(const std::vector<TokenEmbedding>& embeddings) {
    std::vector<int> owner;
    owner.reserve(embeddings.size());
    for (const auto& e : embeddings) owner.push_back(e.client);
    return owner;
}

const std::vector<double>& selection_of(const AttentionWeights& weights, SelectionWeight sel) {
    return sel == SelectionWeight::alpha ? weights.normalized : weights.raw;
}

// Per-cluster argmax of the selection weight; strict > keeps the smallest
// embedding index (= smallest (k,n)) on ties.
std::vector<int> pick_representatives(const std::vector<int>& assignments, int num_clusters,
                                      const std::vector<double>& selection) {
    std::vector<int> reps(static_cast<size_t>(num_clusters), -1);
    for (size_t i = 0; i < assignments.size(); ++i) {
        int c = assignments[i];
        if (c == kNoise) continue;
        int& rep = reps[static_cast<size_t>(c)];
        if (rep == -1 || selection[i] > selection[static_cast<size_t>(rep)])
            rep = static_cast<int>(i);
    }
    return reps;
}

}  // namespace

double cosine_similarity(const kernels::Point& a, const kernels::Point& b) {
    return kernels::cosine(a, b);
}

std::vector<TokenEmbedding> embed_prompts(const std::vector<std::pair<int, Prompt>>& prompts,
                                          const EmbeddingBackend& embedder) {
    if (prompts.empty()) throw EmptyAggregateError("no prompts to embed");
    std::vector<TokenEmbedding> out;
    for (const auto& [client, prompt] : prompts) {
        for (int j = 0; j < prompt.size(); ++j) {
            const Token& tok = prompt.tokens()[static_cast<size_t>(j)];
            out.push_back(TokenEmbedding{client, prompt.positions()[static_cast<size_t>(j)], tok,
                                         embedder.embed(tok)});
        }
    }
    return out;
}

AttentionWeights attention_weights(const std::vector<TokenEmbedding>& embeddings) {
    std::set<int> clients;
    for (const auto& e : embeddings) clients.insert(e.client);
    if (clients.size() < 2)
        throw SingleClientError("attention weights need tokens from at least 2 clients, got " +
                                std::to_string(clients.size()));

    AttentionWeights w;
    w.raw = kernels::raw_attention_parallel(collect_points(embeddings, false),
                                            owners_of(embeddings));

    // Per-client softmax, max-subtracted for stability; summation runs in
    // ascending index order so results are reproducible bit-for-bit.
    w.normalized.assign(w.raw.size(), 0.0);
    for (int client : clients) {
        std::vector<size_t> idx;
        for (size_t i = 0; i < embeddings.size(); ++i)
            if (embeddings[i].client == client) idx.push_back(i);
        double m = -std::numeric_limits<double>::infinity();
        for (size_t i : idx) m = std::max(m, w.raw[i]);
        double denom = 0.0;
        for (size_t i : idx) {
            w.normalized[i] = std::exp(w.raw[i] - m);
            denom += w.normalized[i];
        }
        for (size_t i : idx) w.normalized[i] /= denom;
    }
    return w;
}

namespace {

struct LloydOutcome {
    std::vector<int> assignments;
    double sse = std::numeric_limits<double>::infinity();
};

LloydOutcome run_lloyd(const kernels::Points& pts, int k, std::uint64_t seed) {
    const size_t m = pts.size();
    const size_t dim = pts[0].size();
    std::mt19937_64 gen(seed);

    // k-means++ seeding: D^2-weighted draws over the points.
    kernels::Points centroids;
    centroids.reserve(static_cast<size_t>(k));
    centroids.push_back(pts[rng::uniform_index(gen, m)]);
    std::vector<double> d2(m);
    while (static_cast<int>(centroids.size()) < k) {
        double total = 0.0;
        for (size_t i = 0; i < m; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centroids)
                best = std::min(best, kernels::squared_distance(pts[i], c));
            d2[i] = best;
            total += best;
        }
        size_t pick = 0;
        if (total > 0.0) {
            double t = rng::u01(gen) * total;
            double acc = 0.0;
            pick = m - 1;
            for (size_t i = 0; i < m; ++i) {
                acc += d2[i];
                if (acc > t) {
                    pick = i;
                    break;
                }
            }
        } else {
            // All remaining mass is on duplicates; take indices in order.
            pick = centroids.size() % m;
        }
        centroids.push_back(pts[pick]);
    }

    std::vector<int> assign;
    for (int round = 0; round < 100; ++round) {
        assign = kernels::nearest_centroid_parallel(pts, centroids);
        kernels::Points next(static_cast<size_t>(k), kernels::Point(dim, 0.0));
        std::vector<int> count(static_cast<size_t>(k), 0);
        for (size_t i = 0; i < m; ++i) {
            auto c = static_cast<size_t>(assign[i]);
            ++count[c];
            for (size_t x = 0; x < dim; ++x) next[c][x] += pts[i][x];
        }
        double shift = 0.0;
        for (size_t c = 0; c < static_cast<size_t>(k); ++c) {
            if (count[c] == 0) {
                // Reseed an empty cluster on the point farthest from its own
                // centroid (lowest index on ties), instead of letting the
                // centroid idle.
                size_t farthest = 0;
                double worst = -1.0;
                for (size_t i = 0; i < m; ++i) {
                    const double d = kernels::squared_distance(
                        pts[i], centroids[static_cast<size_t>(assign[i])]);
                    if (d > worst) {
                        worst = d;
                        farthest = i;
                    }
                }
                next[c] = pts[farthest];
                shift = std::max(shift,
                                 std::sqrt(kernels::squared_distance(next[c], centroids[c])));
                continue;
            }
            for (size_t x = 0; x < dim; ++x) next[c][x] /= count[c];
            shift = std::max(shift, std::sqrt(kernels::squared_distance(next[c], centroids[c])));
        }
        centroids = std::move(next);
        if (shift < 1e-6) break;
    }
    assign = kernels::nearest_centroid_parallel(pts, centroids);

    LloydOutcome out;
    out.assignments = std::move(assign);
    out.sse = 0.0;
    for (size_t i = 0; i < m; ++i)
        out.sse += kernels::squared_distance(
            pts[i], centroids[static_cast<size_t>(out.assignments[i])]);
    return out;
}

}  // namespace

ClusterResult kmeans_cluster(const std::vector<TokenEmbedding>& embeddings,
                             const AttentionWeights& weights, int num_clusters,
                             std::uint64_t seed, SelectionWeight selection, bool normalize) {
    if (num_clusters < 1) throw ConfigError("num_clusters must be >= 1");
    if (static_cast<size_t>(num_clusters) > embeddings.size())
        throw InsufficientPointsError("num_clusters " + std::to_string(num_clusters) +
                                      " exceeds token count " +
                                      std::to_string(embeddings.size()));
    const kernels::Points pts = collect_points(embeddings, normalize);

    // Several seeded restarts, keeping the lowest SSE (first restart wins
    // ties), so small instances land on the global optimum reliably. Point
    // sets here are a few dozen tokens, so generous restarts stay cheap.
    constexpr int kRestarts = 30;
    LloydOutcome best;
    for (int r = 0; r < kRestarts; ++r) {
        LloydOutcome cur = run_lloyd(pts, num_clusters, derive_seed(seed, std::uint64_t(r),
                                                                    std::string("kmeans")));
        if (cur.sse < best.sse) best = std::move(cur);
    }

    ClusterResult result;
    result.assignments = std::move(best.assignments);
    result.representatives =
        pick_representatives(result.assignments, num_clusters, selection_of(weights, selection));
    return result;
}

double elbow_from_sorted_distances(const std::vector<double>& s) {
    if (s.empty()) throw InsufficientPointsError("no distances to pick an elbow from");
    double eps;
    if (s.size() < 3) {
        eps = s[(s.size() - 1) / 2];
    } else {
        // Maximal positive second difference = sharpest bend of the sorted
        // curve; smallest index wins ties. A curve with no positive bend is
        // treated as featureless: take the (lower) median.
        int best_i = -1;
        double best_d2 = 0.0;
        for (size_t i = 1; i + 1 < s.size(); ++i) {
            double d2 = s[i + 1] - 2.0 * s[i] + s[i - 1];
            if (d2 > best_d2) {
                best_d2 = d2;
                best_i = static_cast<int>(i);
            }
        }
        eps = best_i >= 0 ? s[static_cast<size_t>(best_i)] : s[(s.size() - 1) / 2];
    }
    if (eps > 0.0) return eps;
    // Duplicate-heavy curves can put the elbow at distance zero, which is no
    // usable radius; fall forward to the smallest positive distance.
    for (double v : s)
        if (v > 0.0) return v;
    return 1.0;
}

double elbow_epsilon(const std::vector<TokenEmbedding>& embeddings, int min_pts, bool normalize) {
    if (min_pts < 1) throw ConfigError("min_pts must be >= 1");
    if (embeddings.size() <= static_cast<size_t>(min_pts))
        throw InsufficientPointsError("elbow detection needs more than min_pts=" +
                                      std::to_string(min_pts) + " tokens, got " +
                                      std::to_string(embeddings.size()));
    auto s = kernels::kth_neighbor_distance_parallel(collect_points(embeddings, normalize),
                                                     min_pts);
    std::sort(s.begin(), s.end());
    return elbow_from_sorted_distances(s);
}

ClusterResult dbscan_cluster(const std::vector<TokenEmbedding>& embeddings,
                             const AttentionWeights& weights, double epsilon, int min_pts,
                             SelectionWeight selection, bool normalize) {
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
    if (min_pts < 1) throw ConfigError("min_pts must be >= 1");
    const kernels::Points pts = collect_points(embeddings, normalize);
    const auto neighbors = kernels::epsilon_neighbors_parallel(pts, epsilon);
    const size_t m = pts.size();

    std::vector<bool> core(m);
    for (size_t i = 0; i < m; ++i) core[i] = neighbors[i].size() + 1 >= static_cast<size_t>(min_pts);

    // Clusters = connected components of core points under the ε-graph,
    // grown in ascending index order.
    std::vector<int> assign(m, kNoise);
    int next_id = 0;
    for (size_t i = 0; i < m; ++i) {
        if (!core[i] || assign[i] != kNoise) continue;
        const int id = next_id++;
        std::vector<size_t> stack{i};
        assign[i] = id;
        while (!stack.empty()) {
            size_t cur = stack.back();
            stack.pop_back();
            for (int j : neighbors[cur]) {
                auto ju = static_cast<size_t>(j);
                if (!core[ju] || assign[ju] != kNoise) continue;
                assign[ju] = id;
                stack.push_back(ju);
            }
        }
    }

    // Border points attach to the smallest-index core point within reach.
    for (size_t i = 0; i < m; ++i) {
        if (core[i] || assign[i] != kNoise) continue;
        for (int j : neighbors[i]) {
            if (core[static_cast<size_t>(j)]) {
                assign[i] = assign[static_cast<size_t>(j)];
                break;  // neighbors are ascending, first core hit is smallest
            }
        }
    }

    // Canonical ids: clusters numbered by their smallest member index, so two
    // runs over permuted input agree up to that relabeling.
    std::vector<int> first_member(static_cast<size_t>(next_id),
                                  std::numeric_limits<int>::max());
    for (size_t i = 0; i < m; ++i)
        if (assign[i] != kNoise)
            first_member[static_cast<size_t>(assign[i])] =
                std::min(first_member[static_cast<size_t>(assign[i])], static_cast<int>(i));
    std::vector<int> ids(static_cast<size_t>(next_id));
    for (int c = 0; c < next_id; ++c) ids[static_cast<size_t>(c)] = c;
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
        return first_member[static_cast<size_t>(a)] < first_member[static_cast<size_t>(b)];
    });
    std::vector<int> remap(static_cast<size_t>(next_id));
    for (int rank = 0; rank < next_id; ++rank)
        remap[static_cast<size_t>(ids[static_cast<size_t>(rank)])] = rank;
    for (auto& a : assign)
        if (a != kNoise) a = remap[static_cast<size_t>(a)];

    ClusterResult result;
    result.assignments = std::move(assign);
    result.representatives =
        pick_representatives(result.assignments, next_id, selection_of(weights, selection));
    return result;
}

Prompt assemble_global_prompt(const ClusterResult& clusters,
                              const std::vector<TokenEmbedding>& embeddings,
                              const AttentionWeights& weights, SelectionWeight selection,
                              int max_prompt_tokens) {
    struct Rep {
        int position;
        int client;
        int cluster;
        int index;
    };
    std::vector<Rep> reps;
    for (int c = 0; c < clusters.num_clusters(); ++c) {
        int idx = clusters.representatives[static_cast<size_t>(c)];
        if (idx < 0) continue;  // empty k-means cluster
        const auto& e = embeddings[static_cast<size_t>(idx)];
        reps.push_back({e.position, e.client, c, idx});
    }
    if (reps.empty()) throw EmptyAggregateError("every token ended up as noise");

    if (max_prompt_tokens > 0 && static_cast<int>(reps.size()) > max_prompt_tokens) {
        const auto& sel = selection_of(weights, selection);
        std::stable_sort(reps.begin(), reps.end(), [&](const Rep& a, const Rep& b) {
            if (sel[static_cast<size_t>(a.index)] != sel[static_cast<size_t>(b.index)])
                return sel[static_cast<size_t>(a.index)] > sel[static_cast<size_t>(b.index)];
            return a.index < b.index;
        });
        reps.resize(static_cast<size_t>(max_prompt_tokens));
    }

    std::sort(reps.begin(), reps.end(), [](const Rep& a, const Rep& b) {
        if (a.position != b.position) return a.position < b.position;
        if (a.client != b.client) return a.client < b.client;
        return a.cluster < b.cluster;
    });
    std::vector<Token> tokens;
    tokens.reserve(reps.size());
    for (const auto& r : reps) tokens.push_back(embeddings[static_cast<size_t>(r.index)].token);
    return Prompt(std::move(tokens));
}

AggregationOutcome aggregate_detailed(const std::vector<std::pair<int, Prompt>>& prompts,
                                      const EmbeddingBackend& embedder,
                                      const AggregationStrategy& strategy,
                                      const AggregationOptions& options) {
    if (prompts.size() < 2)
        throw SingleClientError("aggregation needs at least 2 client prompts, got " +
                                std::to_string(prompts.size()));

    std::vector<TokenEmbedding> embeddings = embed_prompts(prompts, embedder);
    AttentionWeights weights = attention_weights(embeddings);

    ClusterResult clusters;
    if (const auto* km = std::get_if<KmeansStrategy>(&strategy)) {
        int k = km->num_clusters;
        if (k == 0)  // default: the first client's prompt length, capped
            k = std::min(prompts.front().second.size(), static_cast<int>(embeddings.size()));
        clusters = kmeans_cluster(embeddings, weights, k, options.seed, options.selection,
                                  options.normalize_embeddings);
    } else {
        const auto& ad = std::get<AdaptiveStrategy>(strategy);
        double eps = elbow_epsilon(embeddings, ad.min_pts, options.normalize_embeddings);
        clusters = dbscan_cluster(embeddings, weights, eps, ad.min_pts, options.selection,
                                  options.normalize_embeddings);
    }

    Prompt global = assemble_global_prompt(clusters, embeddings, weights, options.selection,
                                           options.max_prompt_tokens);
    return AggregationOutcome{std::move(embeddings), std::move(weights), std::move(clusters),
                              std::move(global)};
}

Prompt aggregate(const std::vector<std::pair<int, Prompt>>& prompts,
                 const EmbeddingBackend& embedder, const AggregationStrategy& strategy,
                 const AggregationOptions& options) {
    return aggregate_detailed(prompts, embedder, strategy, options).global_prompt;
}

std::string aggregation_report_json(const AggregationOutcome& outcome) {
    nlohmann::ordered_json j;
    j["global_prompt"] = outcome.global_prompt.text();
    j["num_clusters"] = outcome.clusters.num_clusters();
    auto tokens = nlohmann::ordered_json::array();
    std::set<int> rep_indices;
    for (int idx : outcome.clusters.representatives)
        if (idx >= 0) rep_indices.insert(idx);
    for (size_t i = 0; i < outcome.embeddings.size(); ++i) {
        const auto& e = outcome.embeddings[i];
        tokens.push_back({{"client", e.client},
                          {"position", e.position},
                          {"token", e.token.text()},
                          {"w", outcome.weights.raw[i]},
                          {"alpha", outcome.weights.normalized[i]},
                          {"cluster", outcome.clusters.assignments[i]},
                          {"is_representative", rep_indices.count(static_cast<int>(i)) > 0}});
    }
    j["tokens"] = std::move(tokens);
    return j.dump(2) + "\n";
}

}  // namespace feddtpt
