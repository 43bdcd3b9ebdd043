#include "feddtpt/kernels.hpp"

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <string>

#include "feddtpt/errors.hpp"

namespace feddtpt::kernels {

double dot(const Point& a, const Point& b) {
    if (a.size() != b.size())
        throw ShapeError("vector dimensions differ: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const Point& a) { return std::sqrt(dot(a, a)); }

double squared_distance(const Point& a, const Point& b) {
    if (a.size() != b.size())
        throw ShapeError("vector dimensions differ: " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double cosine(const Point& a, const Point& b) {
    double na = norm(a);
    double nb = norm(b);
    if (na == 0.0 || nb == 0.0)
        throw DegenerateVectorError("cosine similarity of a zero vector is undefined");
    return dot(a, b) / (na * nb);
}

namespace {

// Parallel regions must not throw, so shape problems are rejected up front.
void check_uniform_dims(const Points& points) {
    if (points.empty()) return;
    const size_t d = points[0].size();
    for (size_t i = 1; i < points.size(); ++i) {
        if (points[i].size() != d)
            throw ShapeError("point " + std::to_string(i) + " has dimension " +
                             std::to_string(points[i].size()) + ", expected " + std::to_string(d));
    }
}

std::vector<double> precomputed_norms(const Points& points) {
    std::vector<double> norms(points.size());
    for (size_t i = 0; i < points.size(); ++i) {
        norms[i] = norm(points[i]);
        if (norms[i] == 0.0)
            throw DegenerateVectorError("point " + std::to_string(i) + " is a zero vector");
    }
    return norms;
}

double attention_row(const Points& points, const std::vector<int>& owner,
                     const std::vector<double>& norms, size_t i) {
    double w = 0.0;
    for (size_t j = 0; j < points.size(); ++j) {
        if (owner[j] == owner[i]) continue;
        w += dot(points[i], points[j]) / (norms[i] * norms[j]);
    }
    return w;
}

double kth_distance_row(const Points& points, int k, size_t i) {
    std::vector<double> d2(points.size());
    for (size_t j = 0; j < points.size(); ++j) d2[j] = squared_distance(points[i], points[j]);
    std::nth_element(d2.begin(), d2.begin() + (k - 1), d2.end());
    return std::sqrt(d2[static_cast<size_t>(k - 1)]);
}

int nearest_row(const Points& points, const Points& centroids, size_t i) {
    int best = 0;
    double best_d2 = squared_distance(points[i], centroids[0]);
    for (size_t c = 1; c < centroids.size(); ++c) {
        double d2 = squared_distance(points[i], centroids[c]);
        if (d2 < best_d2) {
            best_d2 = d2;
            best = static_cast<int>(c);
        }
    }
    return best;
}

std::vector<int> neighbors_row(const Points& points, double eps2, size_t i) {
    std::vector<int> nbrs;
    for (size_t j = 0; j < points.size(); ++j) {
        if (j == i) continue;
        if (squared_distance(points[i], points[j]) <= eps2) nbrs.push_back(static_cast<int>(j));
    }
    return nbrs;
}

}  // namespace

std::vector<double> raw_attention_serial(const Points& points, const std::vector<int>& owner) {
    if (points.size() != owner.size()) throw ShapeError("owner list must match point count");
    check_uniform_dims(points);
    auto norms = precomputed_norms(points);
    std::vector<double> out(points.size());
    for (size_t i = 0; i < points.size(); ++i) out[i] = attention_row(points, owner, norms, i);
    return out;
}

std::vector<double> raw_attention_parallel(const Points& points, const std::vector<int>& owner) {
    if (points.size() != owner.size()) throw ShapeError("owner list must match point count");
    check_uniform_dims(points);
    auto norms = precomputed_norms(points);
    std::vector<double> out(points.size());
    const std::int64_t n = static_cast<std::int64_t>(points.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i)
        out[static_cast<size_t>(i)] = attention_row(points, owner, norms, static_cast<size_t>(i));
    return out;
}

std::vector<double> kth_neighbor_distance_serial(const Points& points, int k) {
    if (k < 1 || k > static_cast<int>(points.size()))
        throw InsufficientPointsError("k-th neighbor needs 1 <= k <= point count");
    check_uniform_dims(points);
    std::vector<double> out(points.size());
    for (size_t i = 0; i < points.size(); ++i) out[i] = kth_distance_row(points, k, i);
    return out;
}

std::vector<double> kth_neighbor_distance_parallel(const Points& points, int k) {
    if (k < 1 || k > static_cast<int>(points.size()))
        throw InsufficientPointsError("k-th neighbor needs 1 <= k <= point count");
    check_uniform_dims(points);
    std::vector<double> out(points.size());
    const std::int64_t n = static_cast<std::int64_t>(points.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i)
        out[static_cast<size_t>(i)] = kth_distance_row(points, k, static_cast<size_t>(i));
    return out;
}

namespace {

void check_centroid_dims(const Points& points, const Points& centroids) {
    check_uniform_dims(points);
    check_uniform_dims(centroids);
    if (!points.empty() && points[0].size() != centroids[0].size())
        throw ShapeError("centroid dimension " + std::to_string(centroids[0].size()) +
                         " does not match point dimension " + std::to_string(points[0].size()));
}

}  // namespace

std::vector<int> nearest_centroid_serial(const Points& points, const Points& centroids) {
    if (centroids.empty()) throw ShapeError("need at least one centroid");
    check_centroid_dims(points, centroids);
    std::vector<int> out(points.size());
    for (size_t i = 0; i < points.size(); ++i) out[i] = nearest_row(points, centroids, i);
    return out;
}

std::vector<int> nearest_centroid_parallel(const Points& points, const Points& centroids) {
    if (centroids.empty()) throw ShapeError("need at least one centroid");
    check_centroid_dims(points, centroids);
    std::vector<int> out(points.size());
    const std::int64_t n = static_cast<std::int64_t>(points.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i)
        out[static_cast<size_t>(i)] = nearest_row(points, centroids, static_cast<size_t>(i));
    return out;
}

std::vector<std::vector<int>> epsilon_neighbors_serial(const Points& points, double eps) {
    check_uniform_dims(points);
    const double eps2 = eps * eps;
    std::vector<std::vector<int>> out(points.size());
    for (size_t i = 0; i < points.size(); ++i) out[i] = neighbors_row(points, eps2, i);
    return out;
}

std::vector<std::vector<int>> epsilon_neighbors_parallel(const Points& points, double eps) {
    check_uniform_dims(points);
    const double eps2 = eps * eps;
    std::vector<std::vector<int>> out(points.size());
    const std::int64_t n = static_cast<std::int64_t>(points.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i)
        out[static_cast<size_t>(i)] = neighbors_row(points, eps2, static_cast<size_t>(i));
    return out;
}

}  // namespace feddtpt::kernels
