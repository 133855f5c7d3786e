// The OpenMP paths must agree with the serial reference implementation
// bit for bit: every parallel kernel writes to per-index slots and reduces
// in index order.

#include "doctest.h"
#include "oracles.hpp"
#include "spansvm/estimators.hpp"
#include "spansvm/parallel.hpp"
#include "spansvm/select.hpp"
#include "spansvm/span.hpp"

using namespace spansvm;

TEST_CASE("parallel_for: covers every index exactly once") {
    std::vector<int> hits(1000, 0);
    parallel_for(hits.size(), 0, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) CHECK(h == 1);
    std::vector<int> serial_hits(1000, 0);
    parallel_for(serial_hits.size(), 1, [&](std::size_t i) { serial_hits[i] += 1; });
    CHECK(hits == serial_hits);
}

TEST_CASE("parallel_for: exceptions propagate") {
    CHECK_THROWS_AS(parallel_for(64, 0,
                                 [&](std::size_t i) {
                                     if (i == 13) throw std::runtime_error("boom");
                                 }),
                    std::runtime_error);
}

TEST_CASE("span evaluation: serial reference equals OpenMP") {
    Dataset raw = generate_ringnorm(120, 3, 17);
    auto [ds, sp] = scale_features(raw);
    WeightVector w = WeightVector::per_class(ds, 2.0, 0.5);
    GramView gram(ds, KernelSpec::rbf_for(ds), 0);
    TrainedModel m = train(gram, w, {1e-6});
    SpanReport serial = span_report(m, gram, 1);
    SpanReport parallel = span_report(m, gram, 0);
    CHECK(serial.to_csv() == parallel.to_csv());
    CHECK(serial.to_json() == parallel.to_json());
    CHECK(serial.span_rule == parallel.span_rule);
    CHECK(serial.span_bound == parallel.span_bound);
}

TEST_CASE("loo and kfold: serial reference equals OpenMP") {
    auto prob = oracles::random_problem(1301, 60, 4);
    EstimateReport l1 = loo_exact(prob.ds, prob.weights, prob.kernel, {1e-6}, 1);
    EstimateReport l2 = loo_exact(prob.ds, prob.weights, prob.kernel, {1e-6}, 0);
    CHECK(l1.value == l2.value);
    CHECK(l1.flags == l2.flags);
    EstimateReport k1 = kfold_cv(prob.ds, prob.weights, prob.kernel, 5, 7, {1e-6}, 1);
    EstimateReport k2 = kfold_cv(prob.ds, prob.weights, prob.kernel, 5, 7, {1e-6}, 0);
    CHECK(k1.value == k2.value);
    CHECK(k1.flags == k2.flags);
    CHECK(k1.fold_errors == k2.fold_errors);
}

TEST_CASE("test_error: serial reference equals OpenMP") {
    auto prob = oracles::random_problem(1401, 80, 4);
    TrainedModel m = train(prob.ds, prob.weights, prob.kernel, {1e-6});
    Dataset test = generate_ringnorm(5000, prob.ds.dim, 3);
    CHECK(test_error(m, prob.ds, test, 1) == test_error(m, prob.ds, test, 0));
}
