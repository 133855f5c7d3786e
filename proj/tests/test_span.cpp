#include <Eigen/Dense>
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "spansvm/estimators.hpp"
#include "spansvm/span.hpp"

using namespace spansvm;

namespace {

// evaluates the boxed-span objective at a given lambda over inbound\{p}
double span_objective_at(const TrainedModel& m, const GramView& gram, int p,
                         const std::vector<double>& lambda) {
    std::vector<int> vars;
    for (int i : m.inbound_idx)
        if (i != p) vars.push_back(i);
    REQUIRE(vars.size() == lambda.size());
    double quad = 0.0, cross = 0.0;
    for (std::size_t a = 0; a < vars.size(); ++a) {
        cross += lambda[a] * gram.at(vars[a], p);
        for (std::size_t b = 0; b < vars.size(); ++b)
            quad += lambda[a] * lambda[b] * gram.at(vars[a], vars[b]);
    }
    return quad - 2.0 * cross + gram.at(p, p);
}

}  // namespace

TEST_CASE("span_feasible: no bounded SVs means every in-bound span exists") {
    for (std::uint64_t seed = 300; seed < 340; ++seed) {
        auto maybe = oracles::random_sketch_model(seed);
        if (!maybe || !maybe->bounded_idx.empty()) continue;
        for (int p : maybe->inbound_idx) {
            CHECK(span_feasible(*maybe, p));
            CHECK(oracles::lp_expansion_feasible(*maybe, p));
        }
    }
}

TEST_CASE("span_feasible: uniform weights behave like the standard machine") {
    auto prob = oracles::random_problem(41, 80, 4);
    WeightVector w = WeightVector::uniform(prob.ds.size(), 2.0);
    TrainedModel m = train(prob.ds, w, prob.kernel, {1e-7});
    for (int p : m.inbound_idx) {
        CHECK(span_feasible(m, p));
        CHECK(oracles::lp_expansion_feasible(m, p));
    }
}

TEST_CASE("span_feasible: constructed infeasible case, oracle agrees") {
    // single in-bound positive; bounded negatives with large total weight
    TrainedModel m = oracles::sketch_model({
        {+1, 5.0, 10.0, false},  // in-bound p, alpha 5
        {-1, 0.0, 5.0, true},    // bounded, alpha = C = 5
    });
    REQUIRE(m.inbound_idx == std::vector<int>{0});
    CHECK_FALSE(span_feasible(m, 0));
    CHECK_FALSE(oracles::lp_expansion_feasible(m, 0));
}

TEST_CASE("span_feasible: mixed feasibility inside one model") {
    // p has a same-class partner whose capacity covers the bounded negatives;
    // q does not (its partner is p with less capacity than the bounded mass)
    TrainedModel m = oracles::sketch_model({
        {+1, 1.0, 2.0, false},   // p
        {+1, 2.0, 3.0, false},   // q
        {-1, 0.0, 3.0, true},    // bounded negative, C = 3
    });
    REQUIRE(m.inbound_idx.size() == 2);
    CHECK(span_feasible(m, 0));        // C_q - 3 = 0 >= 0 (boundary inclusive)
    CHECK_FALSE(span_feasible(m, 1));  // C_p - 3 = -1 < 0
    CHECK(oracles::lp_expansion_feasible(m, 0));
    CHECK_FALSE(oracles::lp_expansion_feasible(m, 1));
}

TEST_CASE("span_feasible agrees with the LP oracle on random sketches") {
    std::size_t tested = 0;
    for (std::uint64_t seed = 400; seed < 600; ++seed) {
        auto maybe = oracles::random_sketch_model(seed);
        if (!maybe) continue;
        for (int p : maybe->inbound_idx) {
            CHECK(span_feasible(*maybe, p) == oracles::lp_expansion_feasible(*maybe, p));
            ++tested;
        }
    }
    CHECK(tested > 100);
}

TEST_CASE("feasible_witness: lies in the constraint set") {
    for (std::uint64_t seed = 700; seed < 760; ++seed) {
        auto maybe = oracles::random_sketch_model(seed);
        if (!maybe) continue;
        for (int p : maybe->inbound_idx) {
            if (!span_feasible(*maybe, p)) continue;
            SpanWitness w = feasible_witness(*maybe, p);
            CHECK(w.delta - maybe->weights[p] >= -1e-10);
            CHECK(w.mu >= -1e-12);
            CHECK(w.mu <= 1.0 + 1e-12);
            double sum = 0.0;
            std::size_t slot = 0;
            double ap = maybe->alpha[p];
            for (int i : maybe->inbound_idx) {
                if (i == p) continue;
                double li = w.lambda[slot++];
                sum += li;
                double yiyp = maybe->labels[i] == maybe->labels[p] ? 1.0 : -1.0;
                double boxed = maybe->alpha[i] + yiyp * ap * li;
                CHECK(boxed >= -1e-10);
                CHECK(boxed <= maybe->weights[i] + 1e-10);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
        }
    }
}

TEST_CASE("relaxed span: two in-bound SVs give the squared distance") {
    Dataset ds = parse_dataset("+1 1:3\n-1 1:1");
    GramView gram(ds, KernelSpec::linear(), 0);
    TrainedModel m = train(gram, WeightVector::uniform(2, 1.0), {1e-9});
    REQUIRE(m.n_inbound() == 2);
    SpanEngine eng(m, gram);
    // lambda on the single other SV is forced to 1: S^2 = ||x_p - x_o||^2
    auto s0 = eng.relaxed_span_squared(0);
    auto s1 = eng.relaxed_span_squared(1);
    REQUIRE(s0);
    REQUIRE(s1);
    CHECK(*s0 == doctest::Approx(4.0).epsilon(1e-9));
    CHECK(*s1 == doctest::Approx(4.0).epsilon(1e-9));
    // boxed equals relaxed here (a single feasible point)
    auto b0 = eng.boxed_span_squared(0);
    REQUIRE(b0);
    CHECK(*b0 == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("relaxed span: bordered-inverse identity equals the explicit solve") {
    for (std::uint64_t seed : {51u, 52u, 53u, 54u}) {
        auto prob = oracles::random_problem(seed, 60, 4);
        GramView gram(prob.ds, prob.kernel, 0);
        TrainedModel m = train(gram, prob.weights, {1e-7});
        if (m.n_inbound() < 2) continue;
        SpanEngine eng(m, gram);
        const int q = static_cast<int>(m.n_inbound());
        for (int p : m.inbound_idx) {
            auto fast = eng.relaxed_span_squared(p);
            REQUIRE(fast);
            // independent route: equality-constrained QP over inbound\{p}
            std::vector<int> vars;
            for (int i : m.inbound_idx)
                if (i != p) vars.push_back(i);
            const int n = static_cast<int>(vars.size());
            Eigen::MatrixXd sys(n + 1, n + 1);
            Eigen::VectorXd rhs(n + 1);
            for (int a = 0; a < n; ++a) {
                rhs(a) = gram.at(vars[a], p);
                for (int b = 0; b < n; ++b) sys(a, b) = gram.at(vars[a], vars[b]);
            }
            sys.row(n).setOnes();
            sys.col(n).setOnes();
            sys(n, n) = 0.0;
            rhs(n) = 1.0;
            Eigen::VectorXd z = sys.lu().solve(rhs);
            double s2 = gram.at(p, p) - rhs.head(n).dot(z.head(n)) - z(n);
            CHECK(*fast == doctest::Approx(std::max(0.0, s2)).epsilon(1e-8));
        }
        (void)q;
    }
}

TEST_CASE("relaxed span: lone in-bound SV has no span") {
    TrainedModel m = oracles::sketch_model({
        {+1, 2.0, 4.0, false},
        {-1, 0.0, 2.0, true},
    });
    Dataset ds = parse_dataset("+1 1:1\n-1 1:-1");
    GramView gram(ds, KernelSpec::linear(), 0);
    SpanEngine eng(m, gram);
    CHECK_FALSE(eng.relaxed_span_squared(0).has_value());
    // the bounded SV still has one: expansion over the lone in-bound point
    auto s = eng.relaxed_span_squared(1);
    REQUIRE(s);
    CHECK(*s == doctest::Approx(4.0).epsilon(1e-9));
}

TEST_CASE("relaxed <= boxed wherever both exist; boxed matches brute force") {
    std::size_t pairs = 0, brute_checked = 0;
    for (std::uint64_t seed = 900; seed < 925; ++seed) {
        auto prob = oracles::random_problem(seed, 26, 4);  // small: brute-forceable
        GramView gram(prob.ds, prob.kernel, 0);
        TrainedModel m = train(gram, prob.weights, {1e-8});
        SpanEngine eng(m, gram);
        for (int p : m.sv_indices()) {
            auto boxed = eng.boxed_span_squared(p);
            auto relaxed = eng.relaxed_span_squared(p);
            if (boxed && relaxed) {
                CHECK(*relaxed <= *boxed + 1e-9);
                ++pairs;
            }
            if (m.n_sv() <= 15) {
                auto ref = oracles::pg_boxed_span(m, gram, p);
                REQUIRE(boxed.has_value() == ref.has_value());
                if (boxed) {
                    CHECK(*boxed == doctest::Approx(*ref).epsilon(1e-6));
                    ++brute_checked;
                }
            }
        }
    }
    CHECK(pairs > 30);
    CHECK(brute_checked > 10);
}

TEST_CASE("boxed span stays within the in-bound sphere diameter") {
    for (std::uint64_t seed : {61u, 62u, 63u}) {
        auto prob = oracles::random_problem(seed, 60, 4);
        GramView gram(prob.ds, prob.kernel, 0);
        TrainedModel m = train(gram, prob.weights, {1e-7});
        if (m.inbound_idx.empty()) continue;
        double d_sv = feature_diameter(gram, m.inbound_idx);
        SpanEngine eng(m, gram);
        for (int p : m.inbound_idx) {
            auto boxed = eng.boxed_span_squared(p);
            if (boxed) CHECK(std::sqrt(*boxed) <= d_sv + 1e-9);
        }
    }
}

TEST_CASE("witness span value dominates the boxed optimum") {
    for (std::uint64_t seed : {71u, 72u, 73u}) {
        auto prob = oracles::random_problem(seed, 40, 3);
        GramView gram(prob.ds, prob.kernel, 0);
        TrainedModel m = train(gram, prob.weights, {1e-8});
        SpanEngine eng(m, gram);
        for (int p : m.inbound_idx) {
            if (!span_feasible(m, p)) continue;
            auto boxed = eng.boxed_span_squared(p);
            if (!boxed) continue;
            SpanWitness w = feasible_witness(m, p);
            double at_witness = span_objective_at(m, gram, p, w.lambda);
            CHECK(at_witness >= *boxed - 1e-9);
        }
    }
}

TEST_CASE("span_bound: degenerate all-infeasible case equals n/l exactly") {
    Dataset ds = parse_dataset("+1 1:1\n-1 1:-0.5");
    GramView gram(ds, KernelSpec::linear(), 0);
    TrainedModel m = oracles::sketch_model({
        {+1, 5.0, 10.0, false},
        {-1, 0.0, 5.0, true},
    });
    REQUIRE_FALSE(span_feasible(m, 0));
    double bound = span_bound(m, gram);
    CHECK(bound == static_cast<double>(m.n_sv()) / static_cast<double>(m.l()));
    CHECK(bound == 1.0);
}

TEST_CASE("span_bound dominates the exact leave-one-out rate") {
    for (std::uint64_t seed : {81u, 82u, 83u}) {
        auto prob = oracles::random_problem(seed, 40, 3);
        GramView gram(prob.ds, prob.kernel, 0);
        TrainedModel m = train(gram, prob.weights, {1e-7});
        double bound = span_bound(m, gram);
        double loo = loo_exact(prob.ds, prob.weights, prob.kernel, {1e-7}).value;
        CHECK(bound >= loo - 1e-12);
    }
}

TEST_CASE("span_bound halves when duplicating easy points") {
    // adding far-from-margin points must leave the SV terms unchanged
    Dataset ds = parse_dataset("+1 1:3\n-1 1:1\n+1 1:9\n-1 1:-7");
    WeightVector w = WeightVector::uniform(4, 5.0);
    GramView gram(ds, KernelSpec::linear(), 0);
    TrainedModel m = train(gram, w, {1e-9});
    double d = feature_diameter(gram, std::vector<int>{0, 1, 2, 3});

    Dataset twice = parse_dataset("+1 1:3\n-1 1:1\n+1 1:9\n-1 1:-7\n+1 1:9\n-1 1:-7\n+1 1:8\n-1 1:-6");
    WeightVector w2 = WeightVector::uniform(8, 5.0);
    GramView gram2(twice, KernelSpec::linear(), 0);
    TrainedModel m2 = train(gram2, w2, {1e-9});
    REQUIRE(m.sv_indices() == m2.sv_indices());  // the added points stay out of the SV set

    double d2 = feature_diameter(gram2, std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
    (void)d;
    double b1 = span_bound(m, gram, 1, &d2);   // pin D to compare the 1/l scaling cleanly
    double b2 = span_bound(m2, gram2, 1, &d2);
    CHECK(b2 == doctest::Approx(b1 * 4.0 / 8.0).epsilon(1e-9));
}

TEST_CASE("span_rule: no violators means zero") {
    Dataset ds = parse_dataset("+1 1:3\n-1 1:1\n+1 1:5\n-1 1:-2");
    WeightVector w = WeightVector::uniform(4, 100.0);
    GramView gram(ds, KernelSpec::linear(), 0);
    TrainedModel m = train(gram, w, {1e-9});
    // wide margin: every SV satisfies a S^2 < y f
    double rule = span_rule(m, gram);
    double svb = static_cast<double>(m.n_sv()) / 4.0;
    CHECK(rule >= 0.0);
    CHECK(rule <= svb);
}

TEST_CASE("span_rule never exceeds the SV-count rate") {
    for (std::uint64_t seed = 1000; seed < 1012; ++seed) {
        auto prob = oracles::random_problem(seed, 50, 4);
        GramView gram(prob.ds, prob.kernel, 0);
        TrainedModel m = train(gram, prob.weights, {1e-7});
        CHECK(span_rule(m, gram) <=
              static_cast<double>(m.n_sv()) / static_cast<double>(m.l()) + 1e-12);
    }
}

TEST_CASE("theta convention: boundary counts as a predicted error") {
    // engineered check through the report: any SV with margin exactly equal
    // to a*S^2 must be flagged; emulate by asserting >= comparisons via rule
    // parts on a trained model and recomputing by hand.
    auto prob = oracles::random_problem(1101, 30, 3);
    GramView gram(prob.ds, prob.kernel, 0);
    TrainedModel m = train(gram, prob.weights, {1e-8});
    SpanEngine eng(m, gram);
    SpanReport rep = span_report(m, gram);
    for (const auto& row : rep.rows) {
        if (!row.s2_relaxed) {
            CHECK(row.predicted_error);
            continue;
        }
        double lhs = m.alpha[row.sv_index] * *row.s2_relaxed - row.margin_term;
        CHECK(row.predicted_error == (lhs >= 0.0));
    }
}

TEST_CASE("leave-one-out equality (qualifying SVs) and rule exactness") {
    std::size_t qualified = 0, checked = 0;
    for (std::uint64_t seed : {2001u, 2002u, 2003u}) {
        Dataset raw = generate_ringnorm(40, 2, seed);
        auto [ds, params] = scale_features(raw);
        WeightVector w = WeightVector::per_class(ds, 2.0, 1.0);
        KernelSpec kernel = KernelSpec::rbf_for(ds);
        GramView gram(ds, kernel, 0);
        TrainedModel m = train(gram, w, {1e-7});
        for (int p : m.sv_indices()) {
            LooProbe probe = loo_equality_probe(m, ds, gram, w, p, {1e-7});
            ++checked;
            if (!probe.qualifies) continue;
            ++qualified;
            CHECK(std::abs(probe.lhs - probe.rhs) <= 1e-4 * (1.0 + std::abs(probe.rhs)));
            CHECK(probe.rule_predicts_error == probe.loo_error);
        }
    }
    CHECK(checked > 0);
    CHECK(qualified * 2 > checked);  // invariance holds for most SVs here
}

TEST_CASE("leave-one-out multiplier shift satisfies the constraint system") {
    // the retrained multipliers, mapped through lambda'_i = y_i y_p (a^p - a^0)/a_p,
    // land inside the expansion set: sum = 1 and the boxes hold
    for (std::uint64_t seed : {2101u, 2102u}) {
        Dataset raw = generate_ringnorm(36, 2, seed);
        auto [ds, params] = scale_features(raw);
        WeightVector w = WeightVector::per_class(ds, 1.5, 0.8);
        KernelSpec kernel = KernelSpec::rbf_for(ds);
        GramView gram(ds, kernel, 0);
        TrainedModel m = train(gram, w, {1e-8});
        for (int p : m.sv_indices()) {
            LooProbe probe = loo_equality_probe(m, ds, gram, w, p, {1e-8});
            if (!probe.qualifies) continue;
            double ap = m.alpha[p];
            if (ap < 1e-3) continue;  // the quotient map is ill-conditioned for tiny a_p
            double yp = m.labels[p] > 0 ? 1.0 : -1.0;
            // reduced-model alphas back at original indexing
            std::vector<double> alpha_p(m.l(), 0.0);
            for (std::size_t r = 0; r < probe.retrained.l(); ++r)
                alpha_p[probe.orig_of_reduced[r]] = probe.retrained.alpha[r];
            double sum = 0.0;
            bool boxes_ok = true;
            for (int i : m.inbound_idx) {
                if (i == p) continue;
                double yi = m.labels[i] > 0 ? 1.0 : -1.0;
                double li = yi * yp * (alpha_p[i] - m.alpha[i]) / ap;
                sum += li;
                double v = m.alpha[i] + yi * yp * ap * li;  // equals alpha_p[i]
                if (v < -1e-8 || v > m.weights[i] + 1e-8) boxes_ok = false;
            }
            CHECK(boxes_ok);
            CHECK(sum == doctest::Approx(1.0).epsilon(5e-3));
        }
    }
}

TEST_CASE("span report: serialization shape and determinism") {
    auto prob = oracles::random_problem(1201, 40, 3);
    GramView gram(prob.ds, prob.kernel, 0);
    TrainedModel m = train(gram, prob.weights, {1e-7});
    SpanReport rep = span_report(m, gram);
    CHECK(rep.rows.size() == m.n_sv());
    std::size_t k = 0;
    for (const auto& row : rep.rows)
        if (row.inbound && !row.feasible) ++k;
    CHECK(k == rep.k_empty);
    CHECK(rep.span_rule >= 0.0);
    CHECK(rep.span_rule <= 1.0);
    CHECK(rep.to_csv() == span_report(m, gram).to_csv());
    CHECK(rep.to_json() == span_report(m, gram).to_json());
    CHECK(rep.to_csv().find("span_rule") != std::string::npos);
    // rule/bound match the standalone entry points
    CHECK(rep.span_rule == span_rule(m, gram));
    CHECK(rep.span_bound == span_bound(m, gram, 1, &rep.diameter));
}
