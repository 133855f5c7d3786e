#pragma once

#include <string>
#include <vector>

#include "spansvm/dataset.hpp"
#include "spansvm/kernel.hpp"

namespace spansvm {

struct TrainOptions {
    double tol = 1e-3;                // max KKT violation (maximal-violating-pair gap)
    long long max_iter = 10'000'000;  // pairwise updates before giving up
    std::size_t cache_bytes = 0;      // 0 -> default_cache_bytes()
};

/// Result of maximizing the weighted-SVM dual under per-instance boxes
/// 0 <= alpha_i <= C_i with sum alpha_i y_i = 0.
///
/// Index sets use the boundary band eps_b = 1e-8 * C_i: alpha in
/// (eps_b, C_i - eps_b) is in-bound, alpha >= C_i - eps_b is bounded,
/// anything below eps_b is not a support vector.
struct TrainedModel {
    KernelSpec kernel;
    std::vector<double> alpha;
    std::vector<double> weights;      // the C_i used
    std::vector<signed char> labels;  // copied from the training set
    double bias = 0.0;
    double objective = 0.0;  // dual W(alpha) at the solution
    std::vector<int> inbound_idx;
    std::vector<int> bounded_idx;
    std::vector<double> slacks;   // xi_i = max(0, 1 - y_i f(x_i))
    std::vector<double> margins;  // y_i f(x_i) at training points
    bool stable = true;           // n* > 0
    long long iterations = 0;

    std::size_t l() const { return alpha.size(); }
    std::size_t n_inbound() const { return inbound_idx.size(); }
    std::size_t n_bounded() const { return bounded_idx.size(); }
    std::size_t n_sv() const { return inbound_idx.size() + bounded_idx.size(); }
    /// All support vector indices in increasing order.
    std::vector<int> sv_indices() const;
    bool is_inbound(int i) const;
    bool is_sv(int i) const;
};

TrainedModel train(const Dataset& ds, const WeightVector& weights, const KernelSpec& kernel,
                   const TrainOptions& opts = {});
TrainedModel train(const GramView& gram, const WeightVector& weights, const TrainOptions& opts = {});

/// f(x) = sum_{SV} alpha_i y_i K(x_i, x) + b.
double decision_value(const TrainedModel& model, const Dataset& train_ds, RowView x);

/// Decision values at every row of `points`; parallel over rows.
std::vector<double> decision_values(const TrainedModel& model, const Dataset& train_ds,
                                    const Dataset& points, int workers = 1);

/// Recomputed dual objective W(alpha); the model also carries the value the
/// solver saw, this path exists for cross-checks.
double dual_objective(const TrainedModel& model, const GramView& gram);

std::string serialize_model(const TrainedModel& model);
TrainedModel parse_model(std::string_view text);

}  // namespace spansvm
