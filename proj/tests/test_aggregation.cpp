#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "feddtpt/aggregation.hpp"
#include "feddtpt/errors.hpp"
#include "feddtpt/util.hpp"

using namespace feddtpt;

namespace {

struct MapEmbedder : EmbeddingBackend {
    std::unordered_map<std::string, kernels::Point> table;
    int dim = 2;

    kernels::Point embed(const Token& t) const override {
        auto it = table.find(t.text());
        if (it == table.end()) throw UnknownTokenError("no vector for " + t.text());
        return it->second;
    }
    int dimension() const override { return dim; }
};

TokenEmbedding emb(int client, int position, const std::string& token, kernels::Point v) {
    return TokenEmbedding{client, position, Token(token), std::move(v)};
}

// Independent evaluation of the attention definition: each token's raw weight
// sums plain cosine similarities against every other client's tokens; the
// normalized weight is a naive per-client softmax.
AttentionWeights brute_force_attention(const std::vector<TokenEmbedding>& es) {
    auto cos = [](const kernels::Point& a, const kernels::Point& b) {
        double num = 0, na = 0, nb = 0;
        for (size_t x = 0; x < a.size(); ++x) {
            num += a[x] * b[x];
            na += a[x] * a[x];
            nb += b[x] * b[x];
        }
        return num / (std::sqrt(na) * std::sqrt(nb));
    };
    AttentionWeights w;
    w.raw.resize(es.size());
    w.normalized.resize(es.size());
    for (size_t i = 0; i < es.size(); ++i) {
        double sum = 0;
        for (size_t j = 0; j < es.size(); ++j)
            if (es[j].client != es[i].client) sum += cos(es[i].vector, es[j].vector);
        w.raw[i] = sum;
    }
    for (size_t i = 0; i < es.size(); ++i) {
        double denom = 0;
        for (size_t j = 0; j < es.size(); ++j)
            if (es[j].client == es[i].client) denom += std::exp(w.raw[j]);
        w.normalized[i] = std::exp(w.raw[i]) / denom;
    }
    return w;
}

std::vector<TokenEmbedding> random_instance(std::uint64_t seed, int num_clients, int max_tokens,
                                            int dim) {
    std::mt19937_64 g(seed);
    std::vector<TokenEmbedding> es;
    int counter = 0;
    for (int k = 0; k < num_clients; ++k) {
        int n = 1 + static_cast<int>(rng::uniform_index(g, static_cast<std::uint64_t>(max_tokens)));
        for (int p = 0; p < n; ++p) {
            kernels::Point v(static_cast<size_t>(dim));
            double norm2 = 0;
            do {
                norm2 = 0;
                for (auto& x : v) {
                    x = 2 * rng::u01(g) - 1;
                    norm2 += x * x;
                }
            } while (norm2 < 1e-12);
            es.push_back(emb(k, p, "t" + std::to_string(counter++), v));
        }
    }
    return es;
}

// Exhaustive minimum SSE over every assignment of the points into num_clusters
// groups (empty groups allowed, they contribute nothing).
double exhaustive_min_sse(const kernels::Points& pts, int num_clusters) {
    const size_t m = pts.size();
    const size_t dim = pts[0].size();
    size_t combos = 1;
    for (size_t i = 0; i < m; ++i) combos *= static_cast<size_t>(num_clusters);
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> assign(m);
    for (size_t code = 0; code < combos; ++code) {
        size_t c = code;
        for (size_t i = 0; i < m; ++i) {
            assign[i] = static_cast<int>(c % static_cast<size_t>(num_clusters));
            c /= static_cast<size_t>(num_clusters);
        }
        double sse = 0;
        for (int g = 0; g < num_clusters; ++g) {
            kernels::Point mean(dim, 0.0);
            int count = 0;
            for (size_t i = 0; i < m; ++i)
                if (assign[i] == g) {
                    ++count;
                    for (size_t x = 0; x < dim; ++x) mean[x] += pts[i][x];
                }
            if (count == 0) continue;
            for (auto& x : mean) x /= count;
            for (size_t i = 0; i < m; ++i)
                if (assign[i] == g) sse += kernels::squared_distance(pts[i], mean);
        }
        best = std::min(best, sse);
    }
    return best;
}

double cluster_sse(const kernels::Points& pts, const std::vector<int>& assign, int num_clusters) {
    const size_t dim = pts[0].size();
    double sse = 0;
    for (int g = 0; g < num_clusters; ++g) {
        kernels::Point mean(dim, 0.0);
        int count = 0;
        for (size_t i = 0; i < pts.size(); ++i)
            if (assign[i] == g) {
                ++count;
                for (size_t x = 0; x < dim; ++x) mean[x] += pts[i][x];
            }
        if (count == 0) continue;
        for (auto& x : mean) x /= count;
        for (size_t i = 0; i < pts.size(); ++i)
            if (assign[i] == g) sse += kernels::squared_distance(pts[i], mean);
    }
    return sse;
}

std::multiset<std::string> representative_tokens(const ClusterResult& c,
                                                 const std::vector<TokenEmbedding>& es) {
    std::multiset<std::string> out;
    for (int idx : c.representatives)
        if (idx >= 0) out.insert(es[static_cast<size_t>(idx)].token.text());
    return out;
}

}  // namespace

TEST_CASE("cosine_similarity closed forms and degeneracy") {
    CHECK(cosine_similarity({1, 0}, {1, 0}) == 1.0);
    CHECK(cosine_similarity({1, 0}, {0, 1}) == 0.0);
    CHECK(cosine_similarity({1, 1}, {1, 0}) == doctest::Approx(0.7071067811865475).epsilon(1e-15));
    CHECK_THROWS_AS(cosine_similarity({0, 0}, {1, 0}), DegenerateVectorError);
    CHECK_THROWS_AS(cosine_similarity({1}, {1, 0}), ShapeError);
}

TEST_CASE("embed_prompts is client-major, position-minor and keeps positions") {
    MapEmbedder e;
    e.table = {{"a", {1, 0}}, {"b", {0, 1}}, {"c", {1, 1}}};
    std::vector<std::pair<int, Prompt>> prompts = {
        {3, make_prompt("a b c")},
        {1, Prompt({Token("b"), Token("a")}, {2, 5})},
    };
    auto es = embed_prompts(prompts, e);
    REQUIRE(es.size() == 5);
    CHECK(es[0].client == 3);
    CHECK(es[0].position == 0);
    CHECK(es[2].position == 2);
    CHECK(es[3].client == 1);
    CHECK(es[3].position == 2);  // original positions preserved
    CHECK(es[4].position == 5);
    CHECK(es[0].vector == kernels::Point{1, 0});
    CHECK(es[4].vector == es[0].vector);  // same token "a" -> same vector
    CHECK_THROWS_AS(embed_prompts({}, e), EmptyAggregateError);
}

TEST_CASE("attention weights: hand-computed two-client instance") {
    // Client 0 holds (1,0) and (0,1); client 1 holds (1,0).
    std::vector<TokenEmbedding> es = {
        emb(0, 0, "a", {1, 0}),
        emb(0, 1, "b", {0, 1}),
        emb(1, 0, "c", {1, 0}),
    };
    auto w = attention_weights(es);
    CHECK(w.raw[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w.raw[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(w.raw[2] == doctest::Approx(1.0).epsilon(1e-12));
    const double e1 = std::exp(1.0);
    CHECK(w.normalized[0] == doctest::Approx(e1 / (e1 + 1)).epsilon(1e-12));
    CHECK(w.normalized[1] == doctest::Approx(1 / (e1 + 1)).epsilon(1e-12));
    CHECK(w.normalized[2] == doctest::Approx(1.0).epsilon(1e-12));  // singleton softmax
}

TEST_CASE("attention weights match the brute-force definition on random instances") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        int clients = 2 + static_cast<int>(seed % 3);
        int dim = seed % 2 == 0 ? 2 : 8;
        auto es = random_instance(seed, clients, 4, dim);
        auto got = attention_weights(es);
        auto want = brute_force_attention(es);
        for (size_t i = 0; i < es.size(); ++i) {
            CHECK(got.raw[i] == doctest::Approx(want.raw[i]).epsilon(1e-9));
            CHECK(got.normalized[i] == doctest::Approx(want.normalized[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("attention weights require two clients and nonzero vectors") {
    std::vector<TokenEmbedding> one_client = {emb(0, 0, "a", {1, 0}), emb(0, 1, "b", {0, 1})};
    CHECK_THROWS_AS(attention_weights(one_client), SingleClientError);
    std::vector<TokenEmbedding> zero = {emb(0, 0, "a", {0, 0}), emb(1, 0, "b", {0, 1})};
    CHECK_THROWS_AS(attention_weights(zero), DegenerateVectorError);
}

TEST_CASE("per-client alpha sums to one") {
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
        auto es = random_instance(seed, 3, 4, 2);
        auto w = attention_weights(es);
        std::map<int, double> sums;
        for (size_t i = 0; i < es.size(); ++i) sums[es[i].client] += w.normalized[i];
        for (auto [client, sum] : sums) CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("kmeans saturation: one cluster per token") {
    std::vector<TokenEmbedding> es = {
        emb(0, 0, "a", {1, 0}),
        emb(0, 1, "b", {0, 1}),
        emb(1, 0, "c", {-1, 0}),
        emb(1, 1, "d", {0, -1}),
    };
    auto w = attention_weights(es);
    auto c = kmeans_cluster(es, w, 4, 0);
    std::set<int> distinct(c.assignments.begin(), c.assignments.end());
    CHECK(distinct.size() == 4);
    CHECK(representative_tokens(c, es) == std::multiset<std::string>{"a", "b", "c", "d"});
}

TEST_CASE("kmeans k=1 selects the global argmax weight") {
    std::vector<TokenEmbedding> es = {
        emb(0, 0, "a", {1, 0}),
        emb(0, 1, "b", {0.9, 0.1}),
        emb(1, 0, "c", {1, 0}),
    };
    auto w = attention_weights(es);
    auto c = kmeans_cluster(es, w, 1, 0);
    CHECK(c.assignments == std::vector<int>{0, 0, 0});
    REQUIRE(c.representatives.size() == 1);
    int best = 0;
    for (size_t i = 1; i < es.size(); ++i)
        if (w.normalized[i] > w.normalized[static_cast<size_t>(best)]) best = static_cast<int>(i);
    CHECK(c.representatives[0] == best);
}

TEST_CASE("kmeans SSE matches the exhaustive optimum on small instances") {
    for (std::uint64_t seed = 0; seed < 15; ++seed) {
        auto es = random_instance(seed + 500, 2, 4, 2);
        if (es.size() > 8 || es.size() < 3) continue;
        auto w = attention_weights(es);
        kernels::Points pts;
        for (const auto& e : es) pts.push_back(e.vector);
        for (int k = 2; k <= 3; ++k) {
            auto c = kmeans_cluster(es, w, k, seed);
            double got = cluster_sse(pts, c.assignments, k);
            double want = exhaustive_min_sse(pts, k);
            CHECK(got <= want * 1.05 + 1e-12);
        }
    }
}

TEST_CASE("kmeans representatives have maximal weight within their cluster") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        auto es = random_instance(seed + 900, 3, 4, 2);
        auto w = attention_weights(es);
        int k = 2 + static_cast<int>(seed % 3);
        if (static_cast<size_t>(k) > es.size()) continue;
        auto c = kmeans_cluster(es, w, k, seed);
        for (size_t i = 0; i < es.size(); ++i) {
            int rep = c.representatives[static_cast<size_t>(c.assignments[i])];
            REQUIRE(rep >= 0);
            CHECK(c.assignments[static_cast<size_t>(rep)] == c.assignments[i]);
            CHECK(w.normalized[static_cast<size_t>(rep)] >= w.normalized[i]);
        }
    }
}

TEST_CASE("kmeans validates num_clusters") {
    auto es = random_instance(1, 2, 2, 2);
    auto w = attention_weights(es);
    CHECK_THROWS_AS(kmeans_cluster(es, w, 0, 0), ConfigError);
    CHECK_THROWS_AS(kmeans_cluster(es, w, static_cast<int>(es.size()) + 1, 0),
                    InsufficientPointsError);
}

TEST_CASE("elbow rule on hand-computed curves") {
    // Second differences of [1,1,1,1,10,10] peak at index 3 (value 9).
    CHECK(elbow_from_sorted_distances({1, 1, 1, 1, 10, 10}) == 1.0);
    // Featureless curve: all second differences zero -> median.
    CHECK(elbow_from_sorted_distances({3, 3, 3, 3}) == 3.0);
    CHECK(elbow_from_sorted_distances({2, 4, 6, 8}) == 4.0);  // linear, lower median
    // Too short for curvature -> median.
    CHECK(elbow_from_sorted_distances({5}) == 5.0);
    CHECK(elbow_from_sorted_distances({5, 7}) == 5.0);
    // Elbow lands on a zero distance -> smallest positive distance.
    CHECK(elbow_from_sorted_distances({0, 0, 0, 0, 2, 2}) == 2.0);
    CHECK(elbow_from_sorted_distances({0, 0, 0}) == 1.0);  // nothing positive
    CHECK_THROWS_AS(elbow_from_sorted_distances({}), InsufficientPointsError);
}

TEST_CASE("elbow_epsilon reproduces the curve rule end to end") {
    // Pairs at 0/1 and 50/51, singletons at 100 and 110. Each point's nearest
    // other neighbor: 1,1,1,1,10,10 -> elbow at 1.
    std::vector<TokenEmbedding> es = {
        emb(0, 0, "a", {0, 0}),   emb(0, 1, "b", {1, 0}),   emb(0, 2, "c", {50, 0}),
        emb(1, 0, "d", {51, 0}),  emb(1, 1, "e", {100, 0}), emb(1, 2, "f", {110, 0}),
    };
    CHECK(elbow_epsilon(es, 2) == 1.0);
    CHECK_THROWS_AS(elbow_epsilon(es, 6), InsufficientPointsError);
    CHECK_THROWS_AS(elbow_epsilon(es, 0), ConfigError);
}

TEST_CASE("dbscan separates two blobs with elbow-derived epsilon") {
    // Blob A: tight triangle near (1,1), blob B the same shape shifted by 100.
    // min_pts=2 keeps every point core. (No point sits at the origin: the
    // attention pass needs nonzero vectors.)
    std::vector<TokenEmbedding> es = {
        emb(0, 0, "a0", {1.0, 1.0}),   emb(0, 1, "a1", {1.5, 1.0}),
        emb(0, 2, "a2", {1.0, 1.5}),   emb(1, 0, "b0", {101.0, 1.0}),
        emb(1, 1, "b1", {101.5, 1.0}), emb(1, 2, "b2", {101.0, 1.5}),
    };
    auto w = attention_weights(es);
    double eps = elbow_epsilon(es, 2);
    CHECK(eps < 100.0);
    auto c = dbscan_cluster(es, w, eps, 2);
    std::set<int> ids(c.assignments.begin(), c.assignments.end());
    CHECK(ids == std::set<int>{0, 1});  // two clusters, no noise
    CHECK(c.assignments[0] == c.assignments[1]);
    CHECK(c.assignments[0] == c.assignments[2]);
    CHECK(c.assignments[3] == c.assignments[4]);
    CHECK(c.assignments[0] != c.assignments[3]);
}

TEST_CASE("dbscan representative multiset is invariant to input permutation") {
    auto base = random_instance(77, 3, 3, 2);
    auto w = attention_weights(base);
    double eps = elbow_epsilon(base, 2);
    auto c = dbscan_cluster(base, w, eps, 2);
    auto want = representative_tokens(c, base);

    std::mt19937_64 g(5);
    for (int trial = 0; trial < 10; ++trial) {
        auto perm = base;
        rng::shuffle(perm, g);
        auto wp = attention_weights(perm);
        auto cp = dbscan_cluster(perm, wp, eps, 2);
        CHECK(representative_tokens(cp, perm) == want);
    }
}

TEST_CASE("dbscan labels isolated points as noise, excluded from representatives") {
    std::vector<TokenEmbedding> es = {
        emb(0, 0, "a", {1, 1}),
        emb(0, 1, "b", {1.5, 1}),
        emb(1, 0, "lone", {500, 1}),
        emb(1, 1, "c", {1, 1.5}),
    };
    auto w = attention_weights(es);
    auto c = dbscan_cluster(es, w, 1.0, 2);
    CHECK(c.assignments[2] == kNoise);
    auto reps = representative_tokens(c, es);
    CHECK(reps.count("lone") == 0);
    CHECK(c.num_clusters() == 1);
}

TEST_CASE("dbscan with min_pts=1 and wide epsilon forms one cluster") {
    auto es = random_instance(3, 2, 3, 2);
    auto w = attention_weights(es);
    auto c = dbscan_cluster(es, w, 1e9, 1);
    for (int a : c.assignments) CHECK(a == 0);
    CHECK(c.num_clusters() == 1);
}

TEST_CASE("dbscan border points join the smallest-index core contact") {
    // A 1-D chain at unit spacing; the two endpoints are border points.
    std::vector<TokenEmbedding> es = {
        emb(0, 0, "a", {0.0, 1}),  emb(0, 1, "b", {1.0, 1}), emb(0, 2, "x", {2.0, 1}),
        emb(1, 0, "c", {3.0, 1}),  emb(1, 1, "d", {4.0, 1}),
    };
    auto w = attention_weights(es);
    auto c = dbscan_cluster(es, w, 1.0, 3);
    // cores: 1 (neighbors 0,2), 2 (neighbors 1,3), 3 (neighbors 2,4) all have
    // 2 others + self = 3 -> the chain is one cluster; ends are borders.
    CHECK(c.assignments[0] == c.assignments[1]);
    CHECK(c.assignments[4] == c.assignments[3]);
    CHECK(c.num_clusters() == 1);
}

TEST_CASE("assemble orders representatives by position then client") {
    std::vector<TokenEmbedding> es = {
        emb(1, 2, "sentiment", {1, 0}),
        emb(0, 0, "judge", {0, 1}),
        emb(2, 0, "tone", {1, 1}),
    };
    AttentionWeights w;
    w.raw = {1, 1, 1};
    w.normalized = {0.5, 0.9, 0.7};
    ClusterResult c;
    c.assignments = {0, 1, 2};
    c.representatives = {0, 1, 2};

    Prompt p = assemble_global_prompt(c, es, w);
    CHECK(p.text() == "judge tone sentiment");  // n=0 (clients 0,2), then n=2
    CHECK(p.positions() == std::vector<int>{0, 1, 2});

    // Same position from clients 2 and 0 -> client 0 first.
    std::vector<TokenEmbedding> es2 = {emb(2, 0, "later", {1, 0}), emb(0, 0, "first", {0, 1})};
    ClusterResult c2;
    c2.assignments = {0, 1};
    c2.representatives = {0, 1};
    AttentionWeights w2;
    w2.raw = {1, 1};
    w2.normalized = {0.5, 0.5};
    CHECK(assemble_global_prompt(c2, es2, w2).text() == "first later");
}

TEST_CASE("assemble trims to max_prompt_tokens by selection weight") {
    std::vector<TokenEmbedding> es = {
        emb(0, 0, "low", {1, 0}),
        emb(0, 1, "high", {0, 1}),
        emb(1, 0, "mid", {1, 1}),
    };
    AttentionWeights w;
    w.raw = {0.1, 0.9, 0.5};
    w.normalized = {0.1, 0.9, 0.5};
    ClusterResult c;
    c.assignments = {0, 1, 2};
    c.representatives = {0, 1, 2};
    Prompt trimmed = assemble_global_prompt(c, es, w, SelectionWeight::alpha, 2);
    // Keeps the two heaviest tokens, then orders them positionally as usual.
    CHECK(trimmed.text() == "mid high");
}

TEST_CASE("assemble throws when every cluster is empty or noise") {
    std::vector<TokenEmbedding> es = {emb(0, 0, "a", {1, 0})};
    AttentionWeights w;
    w.raw = {0.0};
    w.normalized = {1.0};
    ClusterResult all_noise;
    all_noise.assignments = {kNoise};
    CHECK_THROWS_AS(assemble_global_prompt(all_noise, es, w), EmptyAggregateError);
}

TEST_CASE("aggregate: identical prompts with kmeans k=N reproduce the prompt") {
    MapEmbedder e;
    e.dim = 3;
    e.table = {{"classify", {1, 0, 0}},
               {"the", {0, 1, 0}},
               {"overall", {0, 0, 1}},
               {"sentiment", {1, 1, 0}}};
    std::vector<std::pair<int, Prompt>> prompts;
    for (int k = 0; k < 10; ++k) prompts.emplace_back(k, make_prompt("classify the overall sentiment"));
    Prompt global = aggregate(prompts, e, KmeansStrategy{4});
    CHECK(global.text() == "classify the overall sentiment");
}

TEST_CASE("aggregate: disjoint orthogonal prompts with k=2N keep all tokens") {
    MapEmbedder e;
    e.dim = 4;
    e.table = {{"a", {1, 0, 0, 0}}, {"b", {0, 1, 0, 0}}, {"c", {0, 0, 1, 0}}, {"d", {0, 0, 0, 1}}};
    std::vector<std::pair<int, Prompt>> prompts = {{0, make_prompt("a b")}, {1, make_prompt("c d")}};
    Prompt global = aggregate(prompts, e, KmeansStrategy{4});
    std::multiset<std::string> tokens;
    for (const auto& t : global.tokens()) tokens.insert(t.text());
    CHECK(tokens == std::multiset<std::string>{"a", "b", "c", "d"});
}

TEST_CASE("aggregate: adaptive strategy on two blobs gives a 2-token prompt") {
    MapEmbedder e;
    e.dim = 2;
    e.table = {{"p0", {1.0, 1.0}},   {"p1", {1.5, 1.0}},   {"p2", {1.0, 1.5}},
               {"q0", {101.0, 1.0}}, {"q1", {101.5, 1.0}}, {"q2", {101.0, 1.5}}};
    std::vector<std::pair<int, Prompt>> prompts = {{0, make_prompt("p0 q0")},
                                                   {1, make_prompt("p1 q1")},
                                                   {2, make_prompt("p2 q2")}};
    Prompt global = aggregate(prompts, e, AdaptiveStrategy{2});
    CHECK(global.size() == 2);
}

TEST_CASE("aggregate requires at least two prompts") {
    MapEmbedder e;
    e.table = {{"a", {1, 0}}};
    CHECK_THROWS_AS(aggregate({{0, make_prompt("a")}}, e, KmeansStrategy{1}), SingleClientError);
}

TEST_CASE("aggregation report carries per-token rows and is stable") {
    MapEmbedder e;
    e.dim = 2;
    e.table = {{"a", {1, 0}}, {"b", {0, 1}}};
    std::vector<std::pair<int, Prompt>> prompts = {{0, make_prompt("a b")}, {1, make_prompt("a")}};
    auto outcome = aggregate_detailed(prompts, e, KmeansStrategy{2});
    std::string report = aggregation_report_json(outcome);
    CHECK(report == aggregation_report_json(outcome));

    auto j = nlohmann::json::parse(report);
    CHECK(j["global_prompt"].is_string());
    REQUIRE(j["tokens"].size() == 3);
    for (const auto& row : j["tokens"]) {
        CHECK(row.contains("client"));
        CHECK(row.contains("position"));
        CHECK(row.contains("token"));
        CHECK(row.contains("w"));
        CHECK(row.contains("alpha"));
        CHECK(row.contains("cluster"));
        CHECK(row.contains("is_representative"));
    }
    int reps = 0;
    for (const auto& row : j["tokens"]) reps += row["is_representative"].get<bool>() ? 1 : 0;
    CHECK(reps == 2);
}
