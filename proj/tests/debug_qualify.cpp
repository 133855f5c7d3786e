// scratch probe: leave-one-out set-invariance rates across ringnorm configs
#include <cstdio>

#include "spansvm/span.hpp"

using namespace spansvm;

static void probe(int d, std::size_t l, double cpos, double cneg, double tol, bool scale) {
    std::size_t qualified = 0, checked = 0, degen = 0, eq_ok = 0, rule_ok = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Dataset raw = generate_ringnorm(l, d, seed);
        if (!raw.has_both_classes()) continue;
        Dataset ds = raw;
        if (scale) ds = scale_features(raw).first;
        WeightVector w = WeightVector::per_class(ds, cpos, cneg);
        KernelSpec kernel = KernelSpec::rbf_for(ds);
        GramView gram(ds, kernel, 0);
        TrainedModel m = train(gram, w, {tol});
        for (int p : m.sv_indices()) {
            LooProbe probe = loo_equality_probe(m, ds, gram, w, p, {tol});
            ++checked;
            if (probe.degenerate) {
                ++degen;
                continue;
            }
            if (!probe.qualifies) continue;
            ++qualified;
            if (std::abs(probe.lhs - probe.rhs) <= 1e-4 * (1.0 + std::abs(probe.rhs))) ++eq_ok;
            if (probe.rule_predicts_error == probe.loo_error) ++rule_ok;
        }
    }
    std::printf("d=%d l=%zu C=(%g,%g) tol=%g scale=%d: qualified %zu/%zu (%.1f%%), eq_ok %zu, rule_ok %zu, degen %zu\n",
                d, l, cpos, cneg, tol, scale, qualified, checked,
                100.0 * qualified / std::max<std::size_t>(1, checked), eq_ok, rule_ok, degen);
}

int main() {
    probe(2, 40, 2.0, 1.0, 1e-7, true);
    probe(2, 60, 1.0, 1.0, 1e-7, true);
    probe(3, 60, 1.0, 1.0, 1e-7, true);
    probe(5, 60, 1.0, 1.0, 1e-7, true);
    probe(5, 60, 2.0, 1.0, 1e-7, true);
    probe(8, 60, 1.0, 1.0, 1e-7, true);
    probe(5, 60, 1.0, 1.0, 1e-9, true);
    probe(5, 60, 4.0, 2.0, 1e-9, true);
    probe(8, 60, 4.0, 2.0, 1e-9, true);
    probe(8, 60, 8.0, 4.0, 1e-9, true);
    return 0;
}
