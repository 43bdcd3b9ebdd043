// Micro-benchmark comparing the serial reference kernels against their
// OpenMP-parallel counterparts on identical random inputs. Besides timing,
// each pair is checked for exact output equality (the kernels promise
// bit-identical results for any thread count); a mismatch fails the run.
#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include <feddtpt/kernels.hpp>

namespace {

using feddtpt::kernels::Points;

Points random_points(std::uint64_t seed, int count, int dim) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> coord(-1.0, 1.0);
    Points points(static_cast<size_t>(count));
    for (auto& point : points) {
        point.resize(static_cast<size_t>(dim));
        for (double& x : point) x = coord(rng);
    }
    return points;
}

template <typename Fn>
double best_seconds(int repeats, Fn&& fn) {
    double best = 1e300;
    for (int i = 0; i < repeats; ++i) {
        auto start = std::chrono::steady_clock::now();
        fn();
        std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
        best = std::min(best, elapsed.count());
    }
    return best;
}

template <typename SerialFn, typename ParallelFn>
bool report(const char* name, int points, int repeats, SerialFn&& serial,
            ParallelFn&& parallel) {
    auto expected = serial();  // warm-up doubling as the reference output
    auto actual = parallel();
    bool match = expected == actual;
    double serial_s = best_seconds(repeats, serial);
    double parallel_s = best_seconds(repeats, parallel);
    std::printf("%-22s %8d %12.3f %12.3f %8.2fx   %s\n", name, points, serial_s * 1e3,
                parallel_s * 1e3, serial_s / parallel_s, match ? "yes" : "NO");
    return match;
}

}  // namespace

int main(int argc, char** argv) {
    int num_points = 3000;
    int dim = 16;
    int num_centroids = 128;
    int repeats = 5;
    std::uint64_t seed = 1;

    CLI::App app{"Serial vs OpenMP kernel comparison"};
    app.add_option("--points", num_points, "Number of points")->check(CLI::PositiveNumber);
    app.add_option("--dim", dim, "Point dimensionality")->check(CLI::PositiveNumber);
    app.add_option("--centroids", num_centroids, "Centroids for nearest_centroid")
        ->check(CLI::PositiveNumber);
    app.add_option("--repeats", repeats, "Timed repetitions (best is reported)")
        ->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "Input generator seed");
    CLI11_PARSE(app, argc, argv);

    Points points = random_points(seed, num_points, dim);
    Points centroids = random_points(seed + 1, num_centroids, dim);
    std::vector<int> owner(points.size());
    for (size_t i = 0; i < owner.size(); ++i) owner[i] = static_cast<int>(i % 10);

    // A density-derived radius keeps epsilon_neighbors workloads moderate for
    // any --points/--dim combination.
    std::vector<double> knn = feddtpt::kernels::kth_neighbor_distance_serial(points, 4);
    std::nth_element(knn.begin(), knn.begin() + static_cast<long>(knn.size() / 2), knn.end());
    double eps = knn[knn.size() / 2];

    std::printf("%-22s %8s %12s %12s %9s   %s\n", "kernel", "points", "serial_ms",
                "parallel_ms", "speedup", "match");
    bool all_match = true;
    all_match &= report("raw_attention", num_points, repeats,
                        [&] { return feddtpt::kernels::raw_attention_serial(points, owner); },
                        [&] { return feddtpt::kernels::raw_attention_parallel(points, owner); });
    all_match &=
        report("kth_neighbor_distance", num_points, repeats,
               [&] { return feddtpt::kernels::kth_neighbor_distance_serial(points, 4); },
               [&] { return feddtpt::kernels::kth_neighbor_distance_parallel(points, 4); });
    all_match &=
        report("nearest_centroid", num_points, repeats,
               [&] { return feddtpt::kernels::nearest_centroid_serial(points, centroids); },
               [&] { return feddtpt::kernels::nearest_centroid_parallel(points, centroids); });
    all_match &=
        report("epsilon_neighbors", num_points, repeats,
               [&] { return feddtpt::kernels::epsilon_neighbors_serial(points, eps); },
               [&] { return feddtpt::kernels::epsilon_neighbors_parallel(points, eps); });

    if (!all_match) {
        std::fprintf(stderr, "error: serial and parallel outputs disagree\n");
        return 1;
    }
    return 0;
}
