#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spansvm/solver.hpp"

namespace spansvm {

enum class EstimatorMethod { span_rule, span_bound, xi_alpha, kfold, loo_exact, sv_count };

const char* method_name(EstimatorMethod m);
bool method_from_name(std::string_view name, EstimatorMethod& out);

struct EstimateReport {
    EstimatorMethod method = EstimatorMethod::sv_count;
    double value = 0.0;
    double wall_time = 0.0;
    /// Per-trial or per-fold detail, meaning depends on the method.
    std::vector<char> flags;        // loo: per-instance error flags
    std::vector<double> fold_errors;  // kfold: per-fold error rates
    bool approximate_range = false;   // xi-alpha with the large-l linear proxy
    std::size_t degenerate_trials = 0;

    std::string to_json() const;
};

/// Exact leave-one-out oracle: trains l reduced models. A removal that
/// leaves a single class falls back to predicting the surviving class.
/// Decision ties (f == 0) count as errors everywhere.
EstimateReport loo_exact(const Dataset& ds, const WeightVector& weights, const KernelSpec& kernel,
                         const TrainOptions& opts = {}, int workers = 1);

/// Stratified seeded K-fold cross-validation; per-fold class counts differ
/// by at most one. K == l reduces to the exact leave-one-out trials.
EstimateReport kfold_cv(const Dataset& ds, const WeightVector& weights, const KernelSpec& kernel,
                        std::size_t k, std::uint64_t seed, const TrainOptions& opts = {},
                        int workers = 1);

/// Counts instances with 2 a_p R^2 + xi_p - 1 >= 0 over a trained model.
/// Pass a precomputed kernel range to share the pair scan across models.
EstimateReport xi_alpha_bound(const TrainedModel& model, const GramView& gram,
                              const KernelRange* precomputed_range = nullptr);

EstimateReport sv_count_bound(const TrainedModel& model);

/// Misclassification rate on a test set; sign(0) counts as an error.
double test_error(const TrainedModel& model, const Dataset& train_ds, const Dataset& test_ds,
                  int workers = 1);

}  // namespace spansvm
