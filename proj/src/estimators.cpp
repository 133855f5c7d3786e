#include "spansvm/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "spansvm/common.hpp"
#include "spansvm/parallel.hpp"
#include "spansvm/rng.hpp"

namespace spansvm {

const char* method_name(EstimatorMethod m) {
    switch (m) {
        case EstimatorMethod::span_rule: return "span-rule";
        case EstimatorMethod::span_bound: return "span-bound";
        case EstimatorMethod::xi_alpha: return "xi-alpha";
        case EstimatorMethod::kfold: return "kfold";
        case EstimatorMethod::loo_exact: return "loo";
        case EstimatorMethod::sv_count: return "sv-count";
    }
    return "?";
}

bool method_from_name(std::string_view name, EstimatorMethod& out) {
    for (EstimatorMethod m :
         {EstimatorMethod::span_rule, EstimatorMethod::span_bound, EstimatorMethod::xi_alpha,
          EstimatorMethod::kfold, EstimatorMethod::loo_exact, EstimatorMethod::sv_count}) {
        if (name == method_name(m)) {
            out = m;
            return true;
        }
    }
    return false;
}

std::string EstimateReport::to_json() const {
    nlohmann::ordered_json j;
    j["method"] = method_name(method);
    j["value"] = value;
    j["wall_time"] = wall_time;
    if (!flags.empty()) {
        auto arr = nlohmann::ordered_json::array();
        for (char f : flags) arr.push_back(f != 0);
        j["flags"] = std::move(arr);
    }
    if (!fold_errors.empty()) j["fold_errors"] = fold_errors;
    if (approximate_range) j["approximate_range"] = true;
    if (degenerate_trials) j["degenerate_trials"] = degenerate_trials;
    return j.dump(2);
}

namespace {

struct Holdout {
    Dataset train;
    WeightVector weights;
    std::vector<int> held;  // original indices evaluated on this trial
};

Holdout make_holdout(const Dataset& ds, const WeightVector& w, const std::vector<char>& held_mask) {
    Holdout h;
    h.train.dim = ds.dim;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (held_mask[i]) {
            h.held.push_back(static_cast<int>(i));
            continue;
        }
        RowView r = ds.row(i);
        h.train.push_row(ds.labels[i], r.idx, r.val);
        h.weights.c.push_back(w[i]);
    }
    return h;
}

// Evaluates one holdout trial: trains on the complement (or applies the
// single-class fallback) and flags held-out errors. Returns true when the
// trial hit the degenerate fallback.
bool run_holdout(const Dataset& ds, const Holdout& h, const KernelSpec& kernel,
                 const TrainOptions& opts, std::vector<char>& error_flags) {
    if (!h.train.has_both_classes()) {
        signed char cls = h.train.labels.empty() ? 1 : h.train.labels[0];
        for (int i : h.held) error_flags[i] = ds.labels[i] != cls;
        return true;
    }
    TrainedModel model = train(h.train, h.weights, kernel, opts);
    for (int i : h.held) {
        double f = decision_value(model, h.train, ds.row(i));
        double y = ds.labels[i] > 0 ? 1.0 : -1.0;
        error_flags[i] = y * f <= 0.0;
    }
    return false;
}

}  // namespace

EstimateReport loo_exact(const Dataset& ds, const WeightVector& weights, const KernelSpec& kernel,
                         const TrainOptions& opts, int workers) {
    const std::size_t l = ds.size();
    if (l < 2) throw std::invalid_argument("loo_exact: need at least two instances");
    double t0 = now_seconds();
    EstimateReport rep;
    rep.method = EstimatorMethod::loo_exact;
    rep.flags.assign(l, 0);
    std::vector<char> degenerate(l, 0);
    parallel_for(l, workers, [&](std::size_t i) {
        std::vector<char> mask(l, 0);
        mask[i] = 1;
        Holdout h = make_holdout(ds, weights, mask);
        try {
            degenerate[i] = run_holdout(ds, h, kernel, opts, rep.flags);
        } catch (const train_error& e) {
            throw train_error("loo trial " + std::to_string(i) + ": " + e.what());
        }
    });
    std::size_t errors = 0, degen = 0;
    for (std::size_t i = 0; i < l; ++i) {
        errors += rep.flags[i] != 0;
        degen += degenerate[i] != 0;
    }
    rep.degenerate_trials = degen;
    rep.value = static_cast<double>(errors) / static_cast<double>(l);
    rep.wall_time = now_seconds() - t0;
    return rep;
}

EstimateReport kfold_cv(const Dataset& ds, const WeightVector& weights, const KernelSpec& kernel,
                        std::size_t k, std::uint64_t seed, const TrainOptions& opts, int workers) {
    const std::size_t l = ds.size();
    if (k < 2) throw std::invalid_argument("kfold_cv: K must be at least 2");
    k = std::min(k, l);
    double t0 = now_seconds();

    // stratified fold assignment: shuffle each class, deal round-robin
    std::vector<int> fold_of(l, 0);
    {
        Rng rng(seed);
        std::vector<int> pos, neg;
        for (std::size_t i = 0; i < l; ++i) (ds.labels[i] > 0 ? pos : neg).push_back(static_cast<int>(i));
        rng.shuffle(pos);
        rng.shuffle(neg);
        std::size_t next = 0;
        for (int i : pos) fold_of[i] = static_cast<int>(next++ % k);
        for (int i : neg) fold_of[i] = static_cast<int>(next++ % k);
    }

    EstimateReport rep;
    rep.method = EstimatorMethod::kfold;
    rep.flags.assign(l, 0);
    rep.fold_errors.assign(k, 0.0);
    std::vector<char> degenerate(k, 0);
    parallel_for(k, workers, [&](std::size_t f) {
        std::vector<char> mask(l, 0);
        for (std::size_t i = 0; i < l; ++i) mask[i] = fold_of[i] == static_cast<int>(f);
        Holdout h = make_holdout(ds, weights, mask);
        if (h.held.empty()) return;
        try {
            degenerate[f] = run_holdout(ds, h, kernel, opts, rep.flags);
        } catch (const train_error& e) {
            throw train_error("fold " + std::to_string(f) + ": " + e.what());
        }
        std::size_t fe = 0;
        for (int i : h.held) fe += rep.flags[i] != 0;
        rep.fold_errors[f] = static_cast<double>(fe) / static_cast<double>(h.held.size());
    });
    std::size_t errors = 0;
    for (std::size_t i = 0; i < l; ++i) errors += rep.flags[i] != 0;
    for (char d : degenerate) rep.degenerate_trials += d != 0;
    rep.value = static_cast<double>(errors) / static_cast<double>(l);
    rep.wall_time = now_seconds() - t0;
    return rep;
}

EstimateReport xi_alpha_bound(const TrainedModel& model, const GramView& gram,
                              const KernelRange* precomputed_range) {
    double t0 = now_seconds();
    KernelRange range = precomputed_range ? *precomputed_range : r_delta_squared(gram);
    auto sv = model.sv_indices();
    std::vector<double> slack(sv.size());
    for (std::size_t k = 0; k < sv.size(); ++k) {
        int p = sv[k];
        if (model.slacks.size() == model.l()) {
            slack[k] = model.slacks[p];
        } else {  // model loaded from file: rebuild the margin from the SV expansion
            double f = model.bias;
            for (int j : sv) f += model.alpha[j] * (model.labels[j] > 0 ? 1.0 : -1.0) * gram.at(j, p);
            slack[k] = std::max(0.0, 1.0 - (model.labels[p] > 0 ? 1.0 : -1.0) * f);
        }
    }
    std::size_t count = 0;
    for (std::size_t k = 0; k < sv.size(); ++k)
        count += 2.0 * model.alpha[sv[k]] * range.value + slack[k] - 1.0 >= 0.0;
    EstimateReport rep;
    rep.method = EstimatorMethod::xi_alpha;
    rep.approximate_range = range.approximate;
    rep.value = static_cast<double>(count) / static_cast<double>(model.l());
    rep.wall_time = now_seconds() - t0;
    return rep;
}

EstimateReport sv_count_bound(const TrainedModel& model) {
    EstimateReport rep;
    rep.method = EstimatorMethod::sv_count;
    rep.value = static_cast<double>(model.n_sv()) / static_cast<double>(model.l());
    return rep;
}

double test_error(const TrainedModel& model, const Dataset& train_ds, const Dataset& test_ds,
                  int workers) {
    if (test_ds.dim > train_ds.dim) throw std::invalid_argument("test_error: dimension mismatch");
    std::vector<char> err(test_ds.size());
    parallel_for(test_ds.size(), workers, [&](std::size_t i) {
        double f = decision_value(model, train_ds, test_ds.row(i));
        double y = test_ds.labels[i] > 0 ? 1.0 : -1.0;
        err[i] = y * f <= 0.0;
    });
    std::size_t errors = 0;
    for (char e : err) errors += e != 0;
    return static_cast<double>(errors) / static_cast<double>(test_ds.size());
}

}  // namespace spansvm
