#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace spansvm {

/// One sparse feature row: parallel index/value views, indices strictly
/// increasing, zero-based internally.
struct RowView {
    std::span<const int> idx;
    std::span<const double> val;
    std::size_t nnz() const { return idx.size(); }
};

struct ParseOptions {
    bool remap01 = false;  // accept 0/1 labels and remap to -1/+1 (explicit opt-in)
    int dim_override = 0;  // when > 0, forces the dimension instead of max index seen
};

/// Immutable training/testing sample collection stored in CSR form.
/// Labels are strictly -1/+1; scores (when present) are one value in [0,1]
/// per instance.
class Dataset {
public:
    int dim = 0;
    std::vector<signed char> labels;
    std::vector<std::size_t> rowptr{0};
    std::vector<int> colidx;
    std::vector<double> values;
    std::optional<std::vector<double>> scores;

    std::size_t size() const { return labels.size(); }
    bool empty() const { return labels.empty(); }
    RowView row(std::size_t i) const {
        std::size_t b = rowptr[i], e = rowptr[i + 1];
        return {std::span<const int>(colidx.data() + b, e - b),
                std::span<const double>(values.data() + b, e - b)};
    }
    void push_row(signed char label, std::span<const int> idx, std::span<const double> val);

    /// True when every row carries all dim features in order; lets the
    /// kernels skip the sparse merge.
    bool fully_dense() const;

    bool has_both_classes() const;
    std::size_t count_label(int y) const;

    /// Canonical sparse text form (1-based indices, shortest float repr).
    std::string serialize() const;
};

/// Per-instance penalty weights C_i, all strictly positive.
struct WeightVector {
    std::vector<double> c;
    std::size_t size() const { return c.size(); }
    double operator[](std::size_t i) const { return c[i]; }
    static WeightVector uniform(std::size_t l, double C) { return {std::vector<double>(l, C)}; }
    /// C_i = cpos for positive instances, cneg for negatives.
    static WeightVector per_class(const Dataset& ds, double cpos, double cneg);
};

/// Affine per-dimension map v -> (v - lo) / width fitted on training data;
/// width == 0 marks a constant column which maps to 0. Applied to test data
/// without clamping.
struct ScalingParams {
    std::vector<double> lo;
    std::vector<double> width;
    double apply(int dim_index, double v) const {
        double w = width[dim_index];
        return w > 0.0 ? (v - lo[dim_index]) / w : 0.0;
    }
};

Dataset parse_dataset(std::string_view text, const ParseOptions& opts = {});

std::pair<Dataset, ScalingParams> scale_features(const Dataset& ds);
Dataset apply_scaling(const Dataset& ds, const ScalingParams& params);

/// Two-gaussian synthetic set: Pr{y=+1} = 0.3 with N((1,...,1), I), negatives
/// N(0, 4I). Deterministic for a fixed seed.
Dataset generate_ringnorm(std::size_t l, int dim, std::uint64_t seed);

WeightVector parse_weights(std::string_view text, std::size_t l);
/// Same one-float-per-line layout as weights, values validated into [0,1].
std::vector<double> parse_scores(std::string_view text, std::size_t l);

}  // namespace spansvm
