#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spansvm/solver.hpp"

namespace spansvm {

/// Existence test for the constrained expansion set of in-bound support
/// vector p: true iff
///   sum_{i != p, y_i = y_p, in-bound} C_i + y_p * sum_{bounded} y_i C_i >= 0
/// evaluated with a sign tolerance of -1e-12 * sum(C) so roundoff cannot
/// flip exact boundary cases.
bool span_feasible(const TrainedModel& model, int p);

/// Constructive witness for a feasible in-bound p: the scaled interpolation
/// lambda_i = mu*(C_i - a_i)/a_p on same-label in-bound SVs and
/// lambda_i = mu*a_i/a_p on opposite-label ones, with
/// mu = a_p / (delta - C_p + a_p). Lies in the expansion set whenever the
/// existence test holds.
struct SpanWitness {
    std::vector<double> lambda;  // ordered like inbound_idx with p skipped
    double mu = 0.0;
    double delta = 0.0;  // the aggregate capacity term; delta - C_p >= 0 for feasible p
};
SpanWitness feasible_witness(const TrainedModel& model, int p);

/// Per-model span computations. Builds the bordered in-bound Gram system
/// once; every per-p solve reuses the factorization. Instances are
/// read-only after construction and usable from several threads.
class SpanEngine {
public:
    SpanEngine(const TrainedModel& model, const GramView& gram);

    /// Box-free span: equality-constrained QP solved through the bordered
    /// system. Empty optional when the equality constraint has no solution
    /// (an in-bound p with no other in-bound SV, or no in-bound SVs at all).
    std::optional<double> relaxed_span_squared(int p) const;

    /// Boxed span of eqs. with the per-instance box constraints kept.
    /// Empty optional when the constraint set is empty.
    std::optional<double> boxed_span_squared(int p) const;

    /// y_p f(x_p) for support vector p (cached from training or recomputed).
    double margin(int p) const;

    bool jittered() const;

private:
    struct Impl;
    std::shared_ptr<const Impl> impl_;
};

struct SpanRecord {
    int sv_index = 0;
    bool inbound = false;
    /// In-bound rows: the Lemma-style existence test. Bounded rows: whether
    /// the boxed problem has any feasible point.
    bool feasible = false;
    std::optional<double> s2_boxed;
    std::optional<double> s2_relaxed;
    double margin_term = 0.0;  // y_p f(x_p)
    bool predicted_error = false;
};

struct SpanReport {
    std::vector<SpanRecord> rows;  // ascending sv_index
    std::size_t k_empty = 0;       // in-bound SVs with empty expansion set
    double s_span = 0.0;           // max feasible boxed span
    double diameter = 0.0;         // enclosing-sphere estimate over the training set
    double span_bound = 0.0;
    double span_rule = 0.0;
    bool gram_jittered = false;

    std::string to_csv() const;
    std::string to_json() const;
};

/// Leave-one-out error estimate: counts SVs with a_p * S_p^2 >= y_p f(x_p)
/// (ties count, and SVs whose relaxed span does not exist count) divided by l.
double span_rule(const TrainedModel& model, const GramView& gram, int workers = 1);
double span_rule(const SpanEngine& engine, const TrainedModel& model, int workers = 1);

/// Upper bound (S * sum_p max(D, 1/sqrt(C_p)) a_p + k + m) / l over feasible
/// in-bound boxed spans; exactly n/l when every in-bound span is infeasible.
/// Pass a precomputed diameter to share it across models on one dataset.
double span_bound(const TrainedModel& model, const GramView& gram, int workers = 1,
                  const double* precomputed_diameter = nullptr);
double span_bound(const SpanEngine& engine, const TrainedModel& model, double diameter,
                  int workers = 1);

/// Number of in-bound SVs whose expansion set is empty.
std::size_t count_infeasible_inbound(const TrainedModel& model);

SpanReport span_report(const TrainedModel& model, const GramView& gram, int workers = 1,
                       const double* precomputed_diameter = nullptr);

/// Leave-p-out probe: retrains without p and reports both sides of the
/// margin-shift identity y_p (f0 - fp)(x_p) = a_p S_p^2 together with the
/// actual held-out outcome. `qualifies` is true when the retrained in-bound
/// and bounded sets equal the original ones minus p.
struct LooProbe {
    bool qualifies = false;
    bool degenerate = false;  // removal left a single-class set
    double lhs = 0.0;         // y_p (f0(x_p) - fp(x_p))
    double rhs = 0.0;         // a_p * relaxed span
    bool rule_predicts_error = false;
    bool loo_error = false;
    TrainedModel retrained;          // empty when degenerate
    std::vector<int> orig_of_reduced;  // index map of the reduced set
};
LooProbe loo_equality_probe(const TrainedModel& model, const Dataset& ds, const GramView& gram,
                            const WeightVector& weights, int p, const TrainOptions& opts = {});

}  // namespace spansvm
