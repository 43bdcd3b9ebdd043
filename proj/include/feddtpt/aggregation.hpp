#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "feddtpt/backends.hpp"
#include "feddtpt/kernels.hpp"
#include "feddtpt/prompt.hpp"

namespace feddtpt {

// One client token lifted into embedding space. The list order produced by
// embed_prompts is client-major, position-minor, so list index order is
// exactly lexicographic (client, position) order — tie-breaking "smallest
// (k,n)" below means smallest list index.
struct TokenEmbedding {
    int client = 0;
    int position = 0;  // original position in the client's prompt
    Token token;
    kernels::Point vector;
};

// raw[i]: sum of cosine similarities between embedding i and every embedding
// owned by a different client. normalized[i]: softmax of raw over embedding
// i's own client.
struct AttentionWeights {
    std::vector<double> raw;
    std::vector<double> normalized;
};

inline constexpr int kNoise = -1;

// assignments[i]: cluster id per embedding, kNoise for noise points.
// representatives[c]: embedding index representing cluster c, or -1 when the
// cluster ended up empty (k-means only).
struct ClusterResult {
    std::vector<int> assignments;
    std::vector<int> representatives;

    int num_clusters() const { return static_cast<int>(representatives.size()); }
};

// Which per-token weight drives representative selection.
enum class SelectionWeight { alpha, raw };

struct KmeansStrategy {
    int num_clusters = 0;
};
struct AdaptiveStrategy {
    int min_pts = 2;
};
using AggregationStrategy = std::variant<KmeansStrategy, AdaptiveStrategy>;

struct AggregationOptions {
    SelectionWeight selection = SelectionWeight::alpha;
    // Normalize embeddings to unit length before clustering, making Euclidean
    // clustering follow cosine geometry.
    bool normalize_embeddings = false;
    // Upper bound on the assembled prompt length; 0 = unlimited. When the
    // cluster count exceeds it, the highest-selection-weight representatives
    // are kept.
    int max_prompt_tokens = 0;
    std::uint64_t seed = 0;
};

// Everything the server derives in one aggregation step; inputs to the
// report writer.
struct AggregationOutcome {
    std::vector<TokenEmbedding> embeddings;
    AttentionWeights weights;
    ClusterResult clusters;
    Prompt global_prompt;
};

double cosine_similarity(const kernels::Point& a, const kernels::Point& b);

std::vector<TokenEmbedding> embed_prompts(const std::vector<std::pair<int, Prompt>>& prompts,
                                          const EmbeddingBackend& embedder);

// Cross-client attention with per-client softmax normalization. Requires
// embeddings from at least two distinct clients.
AttentionWeights attention_weights(const std::vector<TokenEmbedding>& embeddings);

// Seeded k-means++ plus Lloyd iterations (at most 100, or until every
// centroid moves < 1e-6), best SSE over a fixed number of restarts.
// Representative per cluster = member with maximal selection weight, smallest
// (k,n) on ties.
ClusterResult kmeans_cluster(const std::vector<TokenEmbedding>& embeddings,
                             const AttentionWeights& weights, int num_clusters,
                             std::uint64_t seed,
                             SelectionWeight selection = SelectionWeight::alpha,
                             bool normalize = false);

// DBSCAN radius from the sorted curve of min_pts-th-nearest-neighbor
// distances (the point itself counts as its first neighbor): the point of
// maximal positive second difference, with degenerate curves falling back to
// the median and zero radii to the smallest positive distance.
double elbow_epsilon(const std::vector<TokenEmbedding>& embeddings, int min_pts,
                     bool normalize = false);

// The curve rule itself, exposed for direct verification; `s` must be sorted
// ascending.
double elbow_from_sorted_distances(const std::vector<double>& s);

// Standard DBSCAN over Euclidean distance. Core point: at least min_pts
// neighbors within epsilon, counting itself. Border points join the cluster
// of their smallest-(k,n) core contact; unreachable points become kNoise and
// produce no representative. Cluster ids are canonical: ordered by each
// cluster's smallest member index.
ClusterResult dbscan_cluster(const std::vector<TokenEmbedding>& embeddings,
                             const AttentionWeights& weights, double epsilon, int min_pts,
                             SelectionWeight selection = SelectionWeight::alpha,
                             bool normalize = false);

// Representative tokens ordered by (original position, client, cluster id),
// renumbered 0..M-1. Throws EmptyAggregateError when nothing represents.
Prompt assemble_global_prompt(const ClusterResult& clusters,
                              const std::vector<TokenEmbedding>& embeddings,
                              const AttentionWeights& weights,
                              SelectionWeight selection = SelectionWeight::alpha,
                              int max_prompt_tokens = 0);

// Full pipeline: embed -> attention -> cluster (per strategy) -> assemble.
AggregationOutcome aggregate_detailed(const std::vector<std::pair<int, Prompt>>& prompts,
                                      const EmbeddingBackend& embedder,
                                      const AggregationStrategy& strategy,
                                      const AggregationOptions& options = {});

Prompt aggregate(const std::vector<std::pair<int, Prompt>>& prompts,
                 const EmbeddingBackend& embedder, const AggregationStrategy& strategy,
                 const AggregationOptions& options = {});

// Report JSON: per-token {client, position, token, w, alpha, cluster,
// is_representative} plus the global prompt line.
std::string aggregation_report_json(const AggregationOutcome& outcome);

}  // namespace feddtpt
