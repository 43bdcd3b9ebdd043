#pragma once

#include <cstdint>
#include <vector>

namespace feddtpt::kernels {

// Dense point sets used by the aggregation pipeline. Every kernel ships in
// two forms: a plain serial reference and an OpenMP variant parallelized over
// points. Each output element is computed independently with a fixed inner
// summation order, so the two forms are bit-identical for any thread count;
// tests assert exact equality and the bench target compares their throughput.

using Point = std::vector<double>;
using Points = std::vector<Point>;

double dot(const Point& a, const Point& b);
double norm(const Point& a);
double squared_distance(const Point& a, const Point& b);

// cos(a, b); throws DegenerateVectorError on a zero vector and ShapeError on
// mismatched dimensions.
double cosine(const Point& a, const Point& b);

// Raw cross-client attention: out[i] = sum over all j with owner[j] != owner[i]
// of cos(points[i], points[j]), accumulated in ascending j order.
std::vector<double> raw_attention_serial(const Points& points, const std::vector<int>& owner);
std::vector<double> raw_attention_parallel(const Points& points, const std::vector<int>& owner);

// Distance from each point to its k-th nearest neighbor, where the point
// itself counts as neighbor number one (so k=2 is the nearest other point).
std::vector<double> kth_neighbor_distance_serial(const Points& points, int k);
std::vector<double> kth_neighbor_distance_parallel(const Points& points, int k);

// Index of the nearest centroid per point; ties go to the lowest index.
std::vector<int> nearest_centroid_serial(const Points& points, const Points& centroids);
std::vector<int> nearest_centroid_parallel(const Points& points, const Points& centroids);

// For each point, the ascending indices of other points within eps
// (Euclidean, inclusive).
std::vector<std::vector<int>> epsilon_neighbors_serial(const Points& points, double eps);
std::vector<std::vector<int>> epsilon_neighbors_parallel(const Points& points, double eps);

}  // namespace feddtpt::kernels
