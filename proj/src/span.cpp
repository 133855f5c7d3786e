#include "spansvm/span.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <unordered_map>

#include "json.hpp"
#include "spansvm/common.hpp"
#include "spansvm/parallel.hpp"

namespace spansvm {

namespace {

double ylab(const TrainedModel& m, int i) { return m.labels[i] > 0 ? 1.0 : -1.0; }

double weight_scale(const TrainedModel& m) {
    double s = 0.0;
    for (double c : m.weights) s += std::abs(c);
    return s;
}

}  // namespace

bool span_feasible(const TrainedModel& model, int p) {
    if (!model.is_inbound(p))
        throw std::invalid_argument("span_feasible: p is not an in-bound support vector");
    double acc = 0.0;
    for (int i : model.inbound_idx)
        if (i != p && model.labels[i] == model.labels[p]) acc += model.weights[i];
    double bounded_sum = 0.0;
    for (int i : model.bounded_idx) bounded_sum += ylab(model, i) * model.weights[i];
    acc += ylab(model, p) * bounded_sum;
    return acc >= -1e-12 * weight_scale(model);
}

SpanWitness feasible_witness(const TrainedModel& model, int p) {
    if (!model.is_inbound(p))
        throw std::invalid_argument("feasible_witness: p is not an in-bound support vector");
    const double yp = ylab(model, p);
    const double ap = model.alpha[p];
    double delta = 0.0;
    for (int i : model.inbound_idx) {
        delta += -yp * ylab(model, i) * model.alpha[i];
        if (model.labels[i] == model.labels[p]) delta += model.weights[i];
    }
    SpanWitness w;
    w.delta = delta;
    w.mu = ap / (delta - model.weights[p] + ap);
    w.lambda.reserve(model.inbound_idx.size() ? model.inbound_idx.size() - 1 : 0);
    for (int i : model.inbound_idx) {
        if (i == p) continue;
        double li = model.labels[i] == model.labels[p]
                        ? w.mu * (model.weights[i] - model.alpha[i]) / ap
                        : w.mu * model.alpha[i] / ap;
        w.lambda.push_back(li);
    }
    return w;
}

// ---------------------------------------------------------------------------
// engine

struct SpanEngine::Impl {
    const TrainedModel* model = nullptr;
    const GramView* gram = nullptr;
    std::vector<int> inb, bnd, sv;
    std::unordered_map<int, int> inb_pos;
    Eigen::MatrixXd ktilde;  // bordered in-bound Gram, (q+1)^2
    Eigen::PartialPivLU<Eigen::MatrixXd> lu;
    Eigen::MatrixXd kinv;
    bool jittered = false;
    std::vector<double> margins;  // y_i f(x_i) at SV indices (full-length vector)

    int q() const { return static_cast<int>(inb.size()); }
};

SpanEngine::SpanEngine(const TrainedModel& model, const GramView& gram) {
    auto impl = std::make_shared<Impl>();
    impl->model = &model;
    impl->gram = &gram;
    impl->inb = model.inbound_idx;
    impl->bnd = model.bounded_idx;
    impl->sv = model.sv_indices();
    for (int r = 0; r < static_cast<int>(impl->inb.size()); ++r) impl->inb_pos[impl->inb[r]] = r;

    const int q = impl->q();
    if (q > 0) {
        Eigen::MatrixXd& kt = impl->ktilde;
        kt.resize(q + 1, q + 1);
        for (int a = 0; a < q; ++a) {
            kt(a, a) = gram.at(impl->inb[a], impl->inb[a]);
            for (int b = a + 1; b < q; ++b) kt(a, b) = kt(b, a) = gram.at(impl->inb[a], impl->inb[b]);
        }
        kt.row(q).setOnes();
        kt.col(q).setOnes();
        kt(q, q) = 0.0;
        impl->lu.compute(kt);
        if (impl->lu.rcond() < 1e-14) {
            double jitter = 1e-10 * kt.topLeftCorner(q, q).trace();
            kt.topLeftCorner(q, q).diagonal().array() += jitter;
            impl->lu.compute(kt);
            impl->jittered = true;
        }
        impl->kinv = impl->lu.inverse();
    }

    if (model.margins.size() == model.l()) {
        impl->margins = model.margins;
    } else {
        impl->margins.assign(model.l(), 0.0);
        for (int p : impl->sv) {
            double f = model.bias;
            for (int j : impl->sv) f += model.alpha[j] * ylab(model, j) * gram.at(j, p);
            impl->margins[p] = ylab(model, p) * f;
        }
    }
    impl_ = std::move(impl);
}

double SpanEngine::margin(int p) const { return impl_->margins[p]; }

bool SpanEngine::jittered() const { return impl_->jittered; }

namespace {

// min lambda'K lambda - 2 kp'lambda + kpp over sum(lambda) = 1 via the
// bordered KKT system; returns the objective value.
double relaxed_objective_from_solve(const Eigen::MatrixXd& kvv, const Eigen::VectorXd& kp,
                                    double kpp) {
    const int q = static_cast<int>(kp.size());
    Eigen::MatrixXd sys(q + 1, q + 1);
    sys.topLeftCorner(q, q) = kvv;
    sys.row(q).setOnes();
    sys.col(q).setOnes();
    sys(q, q) = 0.0;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys);
    if (lu.rcond() < 1e-14) {
        double jitter = 1e-10 * kvv.trace();
        sys.topLeftCorner(q, q).diagonal().array() += jitter;
        lu.compute(sys);
    }
    Eigen::VectorXd rhs(q + 1);
    rhs.head(q) = kp;
    rhs(q) = 1.0;
    Eigen::VectorXd z = lu.solve(rhs);
    double s2 = kpp - kp.dot(z.head(q)) - z(q);
    return std::max(0.0, s2);
}

}  // namespace

std::optional<double> SpanEngine::relaxed_span_squared(int p) const {
    const Impl& im = *impl_;
    const TrainedModel& m = *im.model;
    auto it = im.inb_pos.find(p);
    if (it != im.inb_pos.end()) {
        const int q = im.q();
        if (q < 2) return std::nullopt;  // no other in-bound SV to expand over
        double d = im.kinv(it->second, it->second);
        if (d > 0.0) return 1.0 / d;
        // degenerate diagonal (duplicated SVs); fall back to the explicit system
        Eigen::MatrixXd kvv(q - 1, q - 1);
        Eigen::VectorXd kp(q - 1);
        int r = it->second;
        for (int a = 0, aa = 0; a < q; ++a) {
            if (a == r) continue;
            kp(aa) = im.ktilde(a, r);
            for (int b = 0, bb = 0; b < q; ++b) {
                if (b == r) continue;
                kvv(aa, bb) = im.ktilde(a, b);
                ++bb;
            }
            ++aa;
        }
        return relaxed_objective_from_solve(kvv, kp, im.ktilde(r, r));
    }
    if (!m.is_sv(p)) throw std::invalid_argument("relaxed_span_squared: p is not a support vector");
    const int q = im.q();
    if (q < 1) return std::nullopt;
    Eigen::VectorXd rhs(q + 1);
    for (int a = 0; a < q; ++a) rhs(a) = im.gram->at(im.inb[a], p);
    rhs(q) = 1.0;
    Eigen::VectorXd z = im.lu.solve(rhs);
    double s2 = im.gram->at(p, p) - rhs.head(q).dot(z.head(q)) - z(q);
    return std::max(0.0, s2);
}

namespace {

// Primal active-set solver for min lambda'K lambda - 2 kp'lambda + kpp
// s.t. sum(lambda) = 1, lo <= lambda <= hi. K is PSD; kkt_tol mirrors the
// 1e-9 contract of the boxed span.
double active_set_boxed(const Eigen::MatrixXd& K, const Eigen::VectorXd& kp, double kpp,
                        const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
    const int n = static_cast<int>(kp.size());
    const double scale = 1.0 + std::abs(kpp) + K.diagonal().cwiseAbs().maxCoeff();
    const double kkt_tol = 1e-9 * scale;

    double sum_lo = lo.sum(), sum_hi = hi.sum();
    double t = sum_hi > sum_lo ? (1.0 - sum_lo) / (sum_hi - sum_lo) : 0.0;
    t = std::min(1.0, std::max(0.0, t));
    Eigen::VectorXd x = lo + t * (hi - lo);

    // state: 0 free, -1 at lower, +1 at upper
    std::vector<int> state(n, 0);
    for (int i = 0; i < n; ++i) {
        if (x(i) <= lo(i)) state[i] = -1;
        else if (x(i) >= hi(i)) state[i] = +1;
    }

    const int max_pass = 50 + 10 * n;
    for (int pass = 0; pass < max_pass; ++pass) {
        std::vector<int> free_idx;
        for (int i = 0; i < n; ++i)
            if (state[i] == 0) free_idx.push_back(i);
        const int f = static_cast<int>(free_idx.size());

        double nu = 0.0;
        bool at_optimum = true;
        if (f > 0) {
            Eigen::MatrixXd sys(f + 1, f + 1);
            Eigen::VectorXd rhs(f + 1);
            double fixed_sum = 0.0;
            for (int i = 0; i < n; ++i)
                if (state[i] != 0) fixed_sum += x(i);
            for (int a = 0; a < f; ++a) {
                double r = 2.0 * kp(free_idx[a]);
                for (int i = 0; i < n; ++i)
                    if (state[i] != 0) r -= 2.0 * K(free_idx[a], i) * x(i);
                rhs(a) = r;
                for (int b = 0; b < f; ++b) sys(a, b) = 2.0 * K(free_idx[a], free_idx[b]);
            }
            sys.row(f).setOnes();
            sys.col(f).setOnes();
            sys(f, f) = 0.0;
            rhs(f) = 1.0 - fixed_sum;
            Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys);
            if (lu.rcond() < 1e-14) {
                double jitter = 1e-10 * (2.0 * K.trace() + 1.0);
                sys.topLeftCorner(f, f).diagonal().array() += jitter;
                lu.compute(sys);
            }
            Eigen::VectorXd z = lu.solve(rhs);
            nu = z(f);

            // step toward the subproblem optimum, stopping at the first bound
            double beta = 1.0;
            int blocker = -1, blocker_dir = 0;
            for (int a = 0; a < f; ++a) {
                int i = free_idx[a];
                double d = z(a) - x(i);
                if (d > 0.0 && x(i) + beta * d > hi(i)) {
                    double bi = (hi(i) - x(i)) / d;
                    if (bi < beta) {
                        beta = bi;
                        blocker = i;
                        blocker_dir = +1;
                    }
                } else if (d < 0.0 && x(i) + beta * d < lo(i)) {
                    double bi = (lo(i) - x(i)) / d;
                    if (bi < beta) {
                        beta = bi;
                        blocker = i;
                        blocker_dir = -1;
                    }
                }
            }
            double step_norm = 0.0;
            for (int a = 0; a < f; ++a) step_norm = std::max(step_norm, std::abs(z(a) - x(free_idx[a])));
            if (step_norm > 1e-14 * (1.0 + scale)) {
                for (int a = 0; a < f; ++a) {
                    int i = free_idx[a];
                    x(i) += beta * (z(a) - x(i));
                }
                if (blocker >= 0) {
                    x(blocker) = blocker_dir > 0 ? hi(blocker) : lo(blocker);
                    state[blocker] = blocker_dir;
                    at_optimum = false;
                }
            }
        }

        if (!at_optimum) continue;

        // multipliers of the active bounds; release the worst violator
        Eigen::VectorXd grad = 2.0 * (K * x - kp);
        if (f == 0) {
            // nu is free; pick it inside the feasible multiplier interval if one exists
            double lo_nu = -std::numeric_limits<double>::infinity();
            double hi_nu = std::numeric_limits<double>::infinity();
            for (int i = 0; i < n; ++i) {
                if (state[i] == -1) lo_nu = std::max(lo_nu, -grad(i));
                if (state[i] == +1) hi_nu = std::min(hi_nu, -grad(i));
            }
            if (lo_nu <= hi_nu + kkt_tol) return std::max(0.0, x.dot(K * x) - 2.0 * kp.dot(x) + kpp);
            nu = 0.5 * (lo_nu + hi_nu);
        }
        int worst = -1;
        double worst_viol = kkt_tol;
        for (int i = 0; i < n; ++i) {
            if (state[i] == 0) continue;
            double mult = grad(i) + nu;  // >= 0 required at lower bounds, <= 0 at upper
            double viol = state[i] == -1 ? -mult : mult;
            if (viol > worst_viol) {
                worst_viol = viol;
                worst = i;
            }
        }
        if (worst < 0) break;
        state[worst] = 0;
    }
    return std::max(0.0, x.dot(K * x) - 2.0 * kp.dot(x) + kpp);
}

}  // namespace

std::optional<double> SpanEngine::boxed_span_squared(int p) const {
    const Impl& im = *impl_;
    const TrainedModel& m = *im.model;
    const bool p_inbound = im.inb_pos.count(p) > 0;
    if (!p_inbound && !m.is_sv(p))
        throw std::invalid_argument("boxed_span_squared: p is not a support vector");

    std::vector<int> vars;
    vars.reserve(im.inb.size());
    for (int i : im.inb)
        if (i != p) vars.push_back(i);
    const int n = static_cast<int>(vars.size());
    if (n == 0) return std::nullopt;

    const double ap = m.alpha[p];
    Eigen::VectorXd lo(n), hi(n);
    for (int a = 0; a < n; ++a) {
        int i = vars[a];
        double ai = m.alpha[i], ci = m.weights[i];
        if (m.labels[i] == m.labels[p]) {
            lo(a) = -ai / ap;
            hi(a) = (ci - ai) / ap;
        } else {
            lo(a) = -(ci - ai) / ap;
            hi(a) = ai / ap;
        }
    }

    if (p_inbound) {
        if (!span_feasible(m, p)) return std::nullopt;
    } else {
        double tol = 1e-12 * (1.0 + lo.cwiseAbs().sum() + hi.cwiseAbs().sum());
        if (lo.sum() > 1.0 + tol || hi.sum() < 1.0 - tol) return std::nullopt;
    }

    Eigen::MatrixXd K(n, n);
    Eigen::VectorXd kp(n);
    for (int a = 0; a < n; ++a) {
        int ia = im.inb_pos.at(vars[a]);
        kp(a) = p_inbound ? im.ktilde(ia, im.inb_pos.at(p)) : im.gram->at(vars[a], p);
        for (int b = a; b < n; ++b) K(a, b) = K(b, a) = im.ktilde(ia, im.inb_pos.at(vars[b]));
    }
    return active_set_boxed(K, kp, im.gram->at(p, p), lo, hi);
}

// ---------------------------------------------------------------------------
// aggregates

namespace {

struct RulePart {
    std::optional<double> s2;
    bool predicted = false;
};

std::vector<RulePart> rule_parts(const SpanEngine& eng, const TrainedModel& model,
                                 const std::vector<int>& sv, int workers) {
    std::vector<RulePart> parts(sv.size());
    parallel_for(sv.size(), workers, [&](std::size_t k) {
        int p = sv[k];
        auto s2 = eng.relaxed_span_squared(p);
        parts[k].s2 = s2;
        parts[k].predicted = !s2 || model.alpha[p] * *s2 - eng.margin(p) >= 0.0;
    });
    return parts;
}

struct BoundParts {
    std::vector<std::optional<double>> boxed;  // aligned with inbound_idx
    std::vector<char> feasible;
    std::size_t k_empty = 0;
    double s_span = 0.0;
    double weighted_sum = 0.0;  // sum max(D, 1/sqrt(C_p)) a_p over feasible
    double bound = 0.0;
};

BoundParts bound_parts(const SpanEngine& eng, const TrainedModel& model, double diameter,
                       int workers) {
    BoundParts bp;
    const auto& inb = model.inbound_idx;
    bp.boxed.resize(inb.size());
    bp.feasible.assign(inb.size(), 0);
    parallel_for(inb.size(), workers, [&](std::size_t k) {
        int p = inb[k];
        bp.feasible[k] = span_feasible(model, p) ? 1 : 0;
        if (bp.feasible[k]) bp.boxed[k] = eng.boxed_span_squared(p);
    });
    double max_s2 = 0.0;
    for (std::size_t k = 0; k < inb.size(); ++k) {
        if (!bp.feasible[k] || !bp.boxed[k]) {
            ++bp.k_empty;
            continue;
        }
        max_s2 = std::max(max_s2, *bp.boxed[k]);
        bp.weighted_sum += std::max(diameter, 1.0 / std::sqrt(model.weights[inb[k]])) * model.alpha[inb[k]];
    }
    bp.s_span = std::sqrt(max_s2);
    double l = static_cast<double>(model.l());
    bp.bound = (bp.s_span * bp.weighted_sum + static_cast<double>(bp.k_empty) +
                static_cast<double>(model.n_bounded())) /
               l;
    return bp;
}

std::vector<int> all_indices(std::size_t l) {
    std::vector<int> idx(l);
    for (std::size_t i = 0; i < l; ++i) idx[i] = static_cast<int>(i);
    return idx;
}

}  // namespace

double span_rule(const SpanEngine& engine, const TrainedModel& model, int workers) {
    auto sv = model.sv_indices();
    auto parts = rule_parts(engine, model, sv, workers);
    std::size_t errors = 0;
    for (const auto& part : parts) errors += part.predicted;
    return static_cast<double>(errors) / static_cast<double>(model.l());
}

double span_rule(const TrainedModel& model, const GramView& gram, int workers) {
    SpanEngine eng(model, gram);
    return span_rule(eng, model, workers);
}

double span_bound(const SpanEngine& engine, const TrainedModel& model, double diameter,
                  int workers) {
    return bound_parts(engine, model, diameter, workers).bound;
}

double span_bound(const TrainedModel& model, const GramView& gram, int workers,
                  const double* precomputed_diameter) {
    SpanEngine eng(model, gram);
    double d = precomputed_diameter ? *precomputed_diameter
                                    : feature_diameter(gram, all_indices(model.l()));
    return bound_parts(eng, model, d, workers).bound;
}

std::size_t count_infeasible_inbound(const TrainedModel& model) {
    std::size_t k = 0;
    for (int p : model.inbound_idx) k += !span_feasible(model, p);
    return k;
}

SpanReport span_report(const TrainedModel& model, const GramView& gram, int workers,
                       const double* precomputed_diameter) {
    SpanEngine eng(model, gram);
    SpanReport rep;
    rep.gram_jittered = eng.jittered();
    rep.diameter = precomputed_diameter ? *precomputed_diameter
                                        : feature_diameter(gram, all_indices(model.l()));
    auto sv = model.sv_indices();
    auto rparts = rule_parts(eng, model, sv, workers);
    auto bparts = bound_parts(eng, model, rep.diameter, workers);

    std::unordered_map<int, std::size_t> inb_slot;
    for (std::size_t k = 0; k < model.inbound_idx.size(); ++k) inb_slot[model.inbound_idx[k]] = k;

    rep.rows.resize(sv.size());
    std::size_t errors = 0;
    for (std::size_t k = 0; k < sv.size(); ++k) {
        SpanRecord& r = rep.rows[k];
        r.sv_index = sv[k];
        r.margin_term = eng.margin(sv[k]);
        r.s2_relaxed = rparts[k].s2;
        r.predicted_error = rparts[k].predicted;
        errors += r.predicted_error;
        auto it = inb_slot.find(sv[k]);
        if (it != inb_slot.end()) {
            r.inbound = true;
            // matches the k accounting: a span exists when the existence test
            // holds and there is at least one other in-bound SV
            r.feasible = bparts.feasible[it->second] != 0 && bparts.boxed[it->second].has_value();
            r.s2_boxed = bparts.boxed[it->second];
        } else {
            r.inbound = false;
            r.s2_boxed = eng.boxed_span_squared(sv[k]);
            r.feasible = r.s2_boxed.has_value();
        }
    }
    rep.k_empty = bparts.k_empty;
    rep.s_span = bparts.s_span;
    rep.span_bound = bparts.bound;
    rep.span_rule = static_cast<double>(errors) / static_cast<double>(model.l());
    return rep;
}

std::string SpanReport::to_csv() const {
    std::string out = "sv_index,inbound,feasible,s_p_squared,margin_term,predicted_error\n";
    for (const auto& r : rows) {
        out += std::to_string(r.sv_index);
        out += r.inbound ? ",1," : ",0,";
        out += r.feasible ? "1," : "0,";
        if (r.s2_relaxed) out += format_double(*r.s2_relaxed);
        out += ',';
        out += format_double(r.margin_term);
        out += r.predicted_error ? ",1\n" : ",0\n";
    }
    out += "# k " + std::to_string(k_empty) + "\n";
    out += "# s_span " + format_double(s_span) + "\n";
    out += "# diameter " + format_double(diameter) + "\n";
    out += "# span_bound " + format_double(span_bound) + "\n";
    out += "# span_rule " + format_double(span_rule) + "\n";
    out += std::string("# gram_jittered ") + (gram_jittered ? "1" : "0") + "\n";
    return out;
}

std::string SpanReport::to_json() const {
    nlohmann::ordered_json j;
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json row;
        row["sv_index"] = r.sv_index;
        row["inbound"] = r.inbound;
        row["feasible"] = r.feasible;
        if (r.s2_boxed) row["s2_boxed"] = *r.s2_boxed;
        if (r.s2_relaxed) row["s2_relaxed"] = *r.s2_relaxed;
        row["margin_term"] = r.margin_term;
        row["predicted_error"] = r.predicted_error;
        j["rows"].push_back(std::move(row));
    }
    j["k"] = k_empty;
    j["s_span"] = s_span;
    j["diameter"] = diameter;
    j["span_bound"] = span_bound;
    j["span_rule"] = span_rule;
    j["gram_jittered"] = gram_jittered;
    return j.dump(2);
}

LooProbe loo_equality_probe(const TrainedModel& model, const Dataset& ds, const GramView& gram,
                            const WeightVector& weights, int p, const TrainOptions& opts) {
    if (!model.is_sv(p)) throw std::invalid_argument("loo_equality_probe: p is not a support vector");
    LooProbe probe;
    Dataset reduced;
    reduced.dim = ds.dim;
    WeightVector wred;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (static_cast<int>(i) == p) continue;
        RowView r = ds.row(i);
        reduced.push_row(ds.labels[i], r.idx, r.val);
        wred.c.push_back(weights[i]);
        probe.orig_of_reduced.push_back(static_cast<int>(i));
    }
    const double yp = ylab(model, p);
    if (!reduced.has_both_classes()) {
        probe.degenerate = true;
        probe.loo_error = reduced.labels.empty() || reduced.labels[0] != model.labels[p];
        probe.rule_predicts_error = true;
        return probe;
    }
    probe.retrained = train(reduced, wred, model.kernel, opts);

    auto mapped = [&](const std::vector<int>& idx) {
        std::vector<int> out;
        out.reserve(idx.size());
        for (int r : idx) out.push_back(probe.orig_of_reduced[r]);
        std::sort(out.begin(), out.end());
        return out;
    };
    auto minus_p = [&](const std::vector<int>& idx) {
        std::vector<int> out;
        out.reserve(idx.size());
        for (int i : idx)
            if (i != p) out.push_back(i);
        return out;
    };
    probe.qualifies = mapped(probe.retrained.inbound_idx) == minus_p(model.inbound_idx) &&
                      mapped(probe.retrained.bounded_idx) == minus_p(model.bounded_idx);

    double f0 = decision_value(model, ds, ds.row(p));
    double fp = decision_value(probe.retrained, reduced, ds.row(p));
    probe.lhs = yp * (f0 - fp);
    SpanEngine eng(model, gram);
    auto s2 = eng.relaxed_span_squared(p);
    probe.rhs = s2 ? model.alpha[p] * *s2 : std::numeric_limits<double>::quiet_NaN();
    probe.rule_predicts_error = !s2 || model.alpha[p] * *s2 - eng.margin(p) >= 0.0;
    probe.loo_error = yp * fp <= 0.0;
    return probe;
}

}  // namespace spansvm
