#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "spansvm/estimators.hpp"
#include "spansvm/span.hpp"

namespace spansvm {

/// Score-to-weight map C_i = max(C / (1 + exp(-A (q_i - B))), sigma).
WeightVector sigmoid_weights(const std::vector<double>& scores, double a, double b, double c,
                             double sigma = 0.01);

enum class GridMode { class_weights, sigmoid_map };

struct GridSpec {
    GridMode mode = GridMode::class_weights;
    std::vector<double> log2_cpos;  // class_weights axes
    std::vector<double> log2_cneg;
    std::vector<double> sig_a;  // sigmoid_map axes
    std::vector<double> sig_b;
    std::vector<double> log2_c;
    double sigma = 0.01;
    KernelSpec kernel;
    std::size_t kfold_k = 5;
    std::uint64_t seed = 1;

    std::size_t points() const;
    /// log2 C from -6 to 10, step 0.5 on both class axes: 33 x 33 = 1089.
    static GridSpec class_weights_default(KernelSpec kernel);
    /// A in 1..10, B in 0..0.9 step 0.1, log2 C in -6..10 step 1: 1700.
    static GridSpec sigmoid_default(KernelSpec kernel);
};

struct GridPoint {
    std::size_t index = 0;
    double log2_cpos = 0, log2_cneg = 0;       // class_weights mode
    double sig_a = 0, sig_b = 0, log2_c = 0;   // sigmoid mode
    bool failed = false;
    std::string failure;
    std::size_t n = 0, n_star = 0, k_empty = 0;
    std::map<EstimatorMethod, double> estimates;
    std::map<EstimatorMethod, double> times;
    double train_time = 0.0;
    std::optional<double> test_error;
};

struct GridResult {
    GridMode mode = GridMode::class_weights;
    std::vector<GridPoint> points;
    std::map<EstimatorMethod, std::size_t> selected;  // argmin per method, tie rule applied
    double mean_k_empty = 0.0;  // empty-expansion occurrences per model, averaged

    /// Deterministic artifact: hyperparameters, estimates, model summary and
    /// test errors. Wall times deliberately live in times_csv() instead so
    /// reruns with one seed are byte-identical.
    std::string to_csv() const;
    std::string times_csv() const;
    std::string to_json() const;
    /// Estimate + test-error curves along one axis, remaining axes pinned at
    /// the test-error argmin. Only available when test errors were computed.
    std::map<std::string, std::string> curve_files() const;
};

struct GridOptions {
    int workers = 1;
    TrainOptions train;
    bool want_test_error = true;
};

GridResult run_grid(const Dataset& ds, const GridSpec& spec, const std::set<EstimatorMethod>& methods,
                    const Dataset* test_ds = nullptr, const GridOptions& opts = {});

struct ScalingBenchRow {
    int dim = 0;
    std::size_t l = 0;
    std::size_t grid_points = 0;
    double mean_span_time = 0.0;
    double mean_kfold_time = 0.0;
    double mean_train_time = 0.0;
    double mean_n = 0.0;
    double mean_n_star = 0.0;
    double mean_k_empty = 0.0;
};

struct ScalingBenchOptions {
    std::vector<int> dims{20, 40, 80};
    std::vector<std::size_t> sizes{128, 256, 512, 1024, 2048, 4096, 8192, 16384};
    std::uint64_t seed = 1;
    /// Budget knob: keep every stride-th value of the default class-weight
    /// axes (1 = full 33x33 grid).
    std::size_t grid_stride = 8;
    std::size_t kfold_k = 5;
    TrainOptions train;
};

/// Synthetic scaling study: per (d, l) runs the class-weight grid on a
/// ringnorm sample and reports mean per-point span-rule and K-fold times
/// plus SV counts. Timings are measured on a single worker.
std::vector<ScalingBenchRow> scaling_bench(const ScalingBenchOptions& opts);

/// Deterministic columns of the bench table (no wall times).
std::string scaling_bench_csv(const std::vector<ScalingBenchRow>& rows);
/// Timing columns, written separately for the same reason as times_csv().
std::string scaling_bench_times_csv(const std::vector<ScalingBenchRow>& rows);

}  // namespace spansvm
