#include "spansvm/select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "spansvm/common.hpp"
#include "spansvm/parallel.hpp"

namespace spansvm {

WeightVector sigmoid_weights(const std::vector<double>& scores, double a, double b, double c,
                             double sigma) {
    if (scores.empty()) throw std::invalid_argument("sigmoid_weights: missing scores");
    if (!(c > 0.0) || !(sigma > 0.0))
        throw std::invalid_argument("sigmoid_weights: C and sigma must be positive");
    WeightVector w;
    w.c.reserve(scores.size());
    for (double q : scores) w.c.push_back(std::max(c / (1.0 + std::exp(-a * (q - b))), sigma));
    return w;
}

namespace {

std::vector<double> arange(double first, double last, double step) {
    std::vector<double> v;
    for (int i = 0;; ++i) {
        double x = first + step * i;
        if (x > last + 1e-9) break;
        v.push_back(x);
    }
    return v;
}

}  // namespace

std::size_t GridSpec::points() const {
    if (mode == GridMode::class_weights) return log2_cpos.size() * log2_cneg.size();
    return sig_a.size() * sig_b.size() * log2_c.size();
}

GridSpec GridSpec::class_weights_default(KernelSpec kernel) {
    GridSpec g;
    g.mode = GridMode::class_weights;
    g.log2_cpos = arange(-6.0, 10.0, 0.5);
    g.log2_cneg = g.log2_cpos;
    g.kernel = kernel;
    return g;
}

GridSpec GridSpec::sigmoid_default(KernelSpec kernel) {
    GridSpec g;
    g.mode = GridMode::sigmoid_map;
    g.sig_a = arange(1.0, 10.0, 1.0);
    g.sig_b = arange(0.0, 0.9, 0.1);
    g.log2_c = arange(-6.0, 10.0, 1.0);
    g.kernel = kernel;
    return g;
}

namespace {

GridPoint point_at(const GridSpec& spec, std::size_t j) {
    GridPoint pt;
    pt.index = j;
    if (spec.mode == GridMode::class_weights) {
        std::size_t nneg = spec.log2_cneg.size();
        pt.log2_cpos = spec.log2_cpos[j / nneg];
        pt.log2_cneg = spec.log2_cneg[j % nneg];
    } else {
        std::size_t nb = spec.sig_b.size(), nc = spec.log2_c.size();
        pt.sig_a = spec.sig_a[j / (nb * nc)];
        pt.sig_b = spec.sig_b[(j / nc) % nb];
        pt.log2_c = spec.log2_c[j % nc];
    }
    return pt;
}

WeightVector weights_for(const Dataset& ds, const GridSpec& spec, const GridPoint& pt) {
    if (spec.mode == GridMode::class_weights)
        return WeightVector::per_class(ds, std::exp2(pt.log2_cpos), std::exp2(pt.log2_cneg));
    return sigmoid_weights(*ds.scores, pt.sig_a, pt.sig_b, std::exp2(pt.log2_c), spec.sigma);
}

struct CompactModel {
    std::vector<int> sv;
    std::vector<double> coef;  // alpha_i y_i
    double bias = 0.0;
};

}  // namespace

GridResult run_grid(const Dataset& ds, const GridSpec& spec, const std::set<EstimatorMethod>& methods,
                    const Dataset* test_ds, const GridOptions& opts) {
    if (ds.empty()) throw std::invalid_argument("run_grid: empty dataset");
    if (spec.mode == GridMode::sigmoid_map && (!ds.scores || ds.scores->size() != ds.size()))
        throw std::invalid_argument("run_grid: sigmoid mode requires per-instance scores");
    const std::size_t npoints = spec.points();
    if (npoints == 0) throw std::invalid_argument("run_grid: empty grid");

    const bool want_rule = methods.count(EstimatorMethod::span_rule) > 0;
    const bool want_bound = methods.count(EstimatorMethod::span_bound) > 0;
    const bool want_xi = methods.count(EstimatorMethod::xi_alpha) > 0;
    const bool want_kfold = methods.count(EstimatorMethod::kfold) > 0;
    const bool want_loo = methods.count(EstimatorMethod::loo_exact) > 0;
    const bool want_sv = methods.count(EstimatorMethod::sv_count) > 0;
    const bool want_test = test_ds != nullptr && opts.want_test_error;

    // dataset-level quantities shared by every grid point
    double diameter = 0.0;
    KernelRange krange;
    {
        GramView gram(ds, spec.kernel, 0);
        if (want_bound) {
            std::vector<int> all(ds.size());
            for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
            diameter = feature_diameter(gram, all);
        }
        if (want_xi) krange = r_delta_squared(gram);
    }

    GridResult result;
    result.mode = spec.mode;
    result.points.resize(npoints);
    std::vector<CompactModel> compact(want_test ? npoints : 0);

    parallel_for(npoints, opts.workers, [&](std::size_t j) {
        GridPoint pt = point_at(spec, j);
        try {
            WeightVector w = weights_for(ds, spec, pt);
            GramView gram(ds, spec.kernel, opts.train.cache_bytes ? opts.train.cache_bytes
                                                                  : default_cache_bytes());
            double t0 = now_seconds();
            TrainedModel model = train(gram, w, opts.train);
            pt.train_time = now_seconds() - t0;
            pt.n = model.n_sv();
            pt.n_star = model.n_inbound();
            pt.k_empty = count_infeasible_inbound(model);

            if (want_rule || want_bound) {
                double te0 = now_seconds();
                SpanEngine engine(model, gram);
                double engine_time = now_seconds() - te0;
                if (want_rule) {
                    double t1 = now_seconds();
                    double v = span_rule(engine, model, 1);
                    pt.estimates[EstimatorMethod::span_rule] = v;
                    pt.times[EstimatorMethod::span_rule] = engine_time + (now_seconds() - t1);
                }
                if (want_bound) {
                    double t1 = now_seconds();
                    double v = span_bound(engine, model, diameter, 1);
                    pt.estimates[EstimatorMethod::span_bound] = v;
                    pt.times[EstimatorMethod::span_bound] =
                        (want_rule ? 0.0 : engine_time) + (now_seconds() - t1);
                }
            }
            if (want_xi) {
                double t1 = now_seconds();
                EstimateReport r = xi_alpha_bound(model, gram, &krange);
                pt.estimates[EstimatorMethod::xi_alpha] = r.value;
                pt.times[EstimatorMethod::xi_alpha] = now_seconds() - t1;
            }
            if (want_kfold) {
                EstimateReport r = kfold_cv(ds, w, spec.kernel, spec.kfold_k, spec.seed, opts.train, 1);
                pt.estimates[EstimatorMethod::kfold] = r.value;
                pt.times[EstimatorMethod::kfold] = r.wall_time;
            }
            if (want_loo) {
                EstimateReport r = loo_exact(ds, w, spec.kernel, opts.train, 1);
                pt.estimates[EstimatorMethod::loo_exact] = r.value;
                pt.times[EstimatorMethod::loo_exact] = r.wall_time;
            }
            if (want_sv) {
                EstimateReport r = sv_count_bound(model);
                pt.estimates[EstimatorMethod::sv_count] = r.value;
                pt.times[EstimatorMethod::sv_count] = 0.0;
            }
            if (want_test) {
                CompactModel cm;
                cm.bias = model.bias;
                cm.sv = model.sv_indices();
                cm.coef.reserve(cm.sv.size());
                for (int i : cm.sv)
                    cm.coef.push_back(model.alpha[i] * (model.labels[i] > 0 ? 1.0 : -1.0));
                compact[j] = std::move(cm);
            }
        } catch (const std::exception& e) {
            pt.failed = true;
            pt.failure = e.what();
        }
        result.points[j] = std::move(pt);
    });

    if (want_test) {
        // one pass over the test set, kernel columns shared by all models
        const std::size_t lt = test_ds->size();
        const std::size_t nchunks = static_cast<std::size_t>(resolve_workers(opts.workers)) * 4;
        const std::size_t chunk = (lt + nchunks - 1) / std::max<std::size_t>(nchunks, 1);
        std::vector<std::vector<std::size_t>> errs(nchunks,
                                                   std::vector<std::size_t>(npoints, 0));
        GramView gram(ds, spec.kernel, 0);
        parallel_for(nchunks, opts.workers, [&](std::size_t c) {
            std::vector<double> kcol(ds.size());
            std::size_t b = c * chunk, e = std::min(lt, b + chunk);
            for (std::size_t t = b; t < e; ++t) {
                gram.row_vs(test_ds->row(t), kcol);
                double yt = test_ds->labels[t] > 0 ? 1.0 : -1.0;
                for (std::size_t j = 0; j < npoints; ++j) {
                    if (result.points[j].failed) continue;
                    const CompactModel& cm = compact[j];
                    double f = cm.bias;
                    for (std::size_t s = 0; s < cm.sv.size(); ++s) f += cm.coef[s] * kcol[cm.sv[s]];
                    errs[c][j] += yt * f <= 0.0;
                }
            }
        });
        for (std::size_t j = 0; j < npoints; ++j) {
            if (result.points[j].failed) continue;
            std::size_t total = 0;
            for (std::size_t c = 0; c < nchunks; ++c) total += errs[c][j];
            result.points[j].test_error = static_cast<double>(total) / static_cast<double>(lt);
        }
    }

    // per-method argmin with the worst-case tie rule
    bool any_ok = false;
    double ksum = 0.0;
    std::size_t nok = 0;
    for (const auto& pt : result.points) {
        if (pt.failed) continue;
        any_ok = true;
        ksum += static_cast<double>(pt.k_empty);
        ++nok;
    }
    if (!any_ok) throw train_error("run_grid: every grid point failed");
    result.mean_k_empty = ksum / static_cast<double>(nok);

    for (EstimatorMethod m : methods) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& pt : result.points)
            if (!pt.failed && pt.estimates.count(m)) best = std::min(best, pt.estimates.at(m));
        if (!std::isfinite(best)) continue;
        std::size_t pick = 0;
        bool have = false;
        double pick_te = -std::numeric_limits<double>::infinity();
        for (const auto& pt : result.points) {
            if (pt.failed || !pt.estimates.count(m) || pt.estimates.at(m) != best) continue;
            if (want_test && pt.test_error) {
                // worst case outcome among exact ties; grid order breaks residual ties
                if (!have || *pt.test_error >= pick_te) {
                    pick = pt.index;
                    pick_te = *pt.test_error;
                    have = true;
                }
            } else {
                pick = pt.index;  // highest grid index
                have = true;
            }
        }
        if (have) result.selected[m] = pick;
    }
    return result;
}

namespace {

const EstimatorMethod kCsvMethods[] = {EstimatorMethod::span_rule, EstimatorMethod::span_bound,
                                       EstimatorMethod::xi_alpha,  EstimatorMethod::kfold,
                                       EstimatorMethod::loo_exact, EstimatorMethod::sv_count};

std::string csv_cell(const std::map<EstimatorMethod, double>& m, EstimatorMethod k) {
    auto it = m.find(k);
    return it == m.end() ? std::string() : format_double(it->second);
}

}  // namespace

std::string GridResult::to_csv() const {
    std::string out =
        "index,log2_c_plus,log2_c_minus,sig_a,sig_b,log2_c,failed,n,n_star,k_empty,"
        "span_rule,span_bound,xi_alpha,kfold,loo,sv_count,test_error\n";
    const bool cw = mode == GridMode::class_weights;
    for (const auto& pt : points) {
        out += std::to_string(pt.index);
        out += ',';
        out += cw ? format_double(pt.log2_cpos) : "";
        out += ',';
        out += cw ? format_double(pt.log2_cneg) : "";
        out += ',';
        out += cw ? "" : format_double(pt.sig_a);
        out += ',';
        out += cw ? "" : format_double(pt.sig_b);
        out += ',';
        out += cw ? "" : format_double(pt.log2_c);
        out += pt.failed ? ",1," : ",0,";
        out += std::to_string(pt.n);
        out += ',';
        out += std::to_string(pt.n_star);
        out += ',';
        out += std::to_string(pt.k_empty);
        for (EstimatorMethod m : kCsvMethods) {
            out += ',';
            out += csv_cell(pt.estimates, m);
        }
        out += ',';
        if (pt.test_error) out += format_double(*pt.test_error);
        out += '\n';
    }
    return out;
}

std::string GridResult::times_csv() const {
    std::string out = "index,train_time,span_rule,span_bound,xi_alpha,kfold,loo,sv_count\n";
    for (const auto& pt : points) {
        out += std::to_string(pt.index);
        out += ',';
        out += format_double(pt.train_time);
        for (EstimatorMethod m : kCsvMethods) {
            out += ',';
            out += csv_cell(pt.times, m);
        }
        out += '\n';
    }
    return out;
}

std::string GridResult::to_json() const {
    nlohmann::ordered_json j;
    j["mode"] = mode == GridMode::class_weights ? "class-weights" : "sigmoid";
    j["mean_k_empty"] = mean_k_empty;
    auto sel = nlohmann::ordered_json::object();
    for (const auto& [m, idx] : selected) sel[method_name(m)] = idx;
    j["selected"] = std::move(sel);
    auto pts = nlohmann::ordered_json::array();
    for (const auto& pt : points) {
        nlohmann::ordered_json p;
        p["index"] = pt.index;
        if (mode == GridMode::class_weights) {
            p["log2_c_plus"] = pt.log2_cpos;
            p["log2_c_minus"] = pt.log2_cneg;
        } else {
            p["sig_a"] = pt.sig_a;
            p["sig_b"] = pt.sig_b;
            p["log2_c"] = pt.log2_c;
        }
        if (pt.failed) {
            p["failed"] = pt.failure;
        } else {
            p["n"] = pt.n;
            p["n_star"] = pt.n_star;
            p["k_empty"] = pt.k_empty;
            auto est = nlohmann::ordered_json::object();
            for (const auto& [m, v] : pt.estimates) est[method_name(m)] = v;
            p["estimates"] = std::move(est);
            if (pt.test_error) p["test_error"] = *pt.test_error;
        }
        pts.push_back(std::move(p));
    }
    j["points"] = std::move(pts);
    return j.dump(2);
}

std::map<std::string, std::string> GridResult::curve_files() const {
    std::map<std::string, std::string> files;
    const GridPoint* best = nullptr;
    for (const auto& pt : points) {
        if (pt.failed || !pt.test_error) continue;
        if (!best || *pt.test_error < *best->test_error) best = &pt;
    }
    if (!best) return files;

    struct Axis {
        const char* name;
        double GridPoint::* field;
    };
    std::vector<Axis> axes;
    if (mode == GridMode::class_weights)
        axes = {{"c_plus", &GridPoint::log2_cpos}, {"c_minus", &GridPoint::log2_cneg}};
    else
        axes = {{"a", &GridPoint::sig_a}, {"b", &GridPoint::sig_b}, {"c", &GridPoint::log2_c}};

    std::set<EstimatorMethod> methods;
    for (const auto& pt : points)
        for (const auto& [m, v] : pt.estimates) methods.insert(m);

    for (const Axis& ax : axes) {
        for (EstimatorMethod m : methods) {
            std::string body = "# ";
            body += ax.name;
            body += " estimate test_error\n";
            bool any = false;
            for (const auto& pt : points) {
                if (pt.failed || !pt.estimates.count(m) || !pt.test_error) continue;
                bool on_line = true;  // all other axes pinned at the test-error argmin
                for (const Axis& other : axes)
                    if (&other != &ax && pt.*other.field != best->*other.field) on_line = false;
                if (!on_line) continue;
                body += format_double(pt.*ax.field);
                body += ' ';
                body += format_double(pt.estimates.at(m));
                body += ' ';
                body += format_double(*pt.test_error);
                body += '\n';
                any = true;
            }
            if (any) files[std::string("curve_") + method_name(m) + "_" + ax.name + ".dat"] = body;
        }
    }
    return files;
}

std::vector<ScalingBenchRow> scaling_bench(const ScalingBenchOptions& opts) {
    std::vector<ScalingBenchRow> rows;
    for (int d : opts.dims) {
        for (std::size_t l : opts.sizes) {
            std::uint64_t seed = opts.seed + 1000003ull * static_cast<std::uint64_t>(d) +
                                 7919ull * static_cast<std::uint64_t>(l);
            Dataset raw = generate_ringnorm(l, d, seed);
            auto [ds, params] = scale_features(raw);

            GridSpec spec = GridSpec::class_weights_default(KernelSpec::rbf_for(ds));
            if (opts.grid_stride > 1) {
                auto strided = [&](const std::vector<double>& v) {
                    std::vector<double> out;
                    for (std::size_t i = 0; i < v.size(); i += opts.grid_stride) out.push_back(v[i]);
                    return out;
                };
                spec.log2_cpos = strided(spec.log2_cpos);
                spec.log2_cneg = strided(spec.log2_cneg);
            }
            spec.kfold_k = opts.kfold_k;
            spec.seed = seed;

            GridOptions gopts;
            gopts.workers = 1;  // timing comparability
            gopts.train = opts.train;
            gopts.want_test_error = false;
            GridResult grid = run_grid(ds, spec,
                                       {EstimatorMethod::span_rule, EstimatorMethod::kfold}, nullptr,
                                       gopts);

            ScalingBenchRow row;
            row.dim = d;
            row.l = l;
            double span_t = 0, kfold_t = 0, train_t = 0, n = 0, nstar = 0, kempty = 0;
            for (const auto& pt : grid.points) {
                if (pt.failed) continue;
                ++row.grid_points;
                span_t += pt.times.at(EstimatorMethod::span_rule);
                kfold_t += pt.times.at(EstimatorMethod::kfold);
                train_t += pt.train_time;
                n += static_cast<double>(pt.n);
                nstar += static_cast<double>(pt.n_star);
                kempty += static_cast<double>(pt.k_empty);
            }
            double cnt = std::max<double>(1.0, static_cast<double>(row.grid_points));
            row.mean_span_time = span_t / cnt;
            row.mean_kfold_time = kfold_t / cnt;
            row.mean_train_time = train_t / cnt;
            row.mean_n = n / cnt;
            row.mean_n_star = nstar / cnt;
            row.mean_k_empty = kempty / cnt;
            rows.push_back(row);
        }
    }
    return rows;
}

std::string scaling_bench_csv(const std::vector<ScalingBenchRow>& rows) {
    std::string out = "dim,l,grid_points,mean_n,mean_n_star,mean_k_empty\n";
    for (const auto& r : rows) {
        out += std::to_string(r.dim) + "," + std::to_string(r.l) + "," +
               std::to_string(r.grid_points) + "," + format_double(r.mean_n) + "," +
               format_double(r.mean_n_star) + "," + format_double(r.mean_k_empty) + "\n";
    }
    return out;
}

std::string scaling_bench_times_csv(const std::vector<ScalingBenchRow>& rows) {
    std::string out = "dim,l,mean_train_time,mean_span_time,mean_kfold_time\n";
    for (const auto& r : rows) {
        out += std::to_string(r.dim) + "," + std::to_string(r.l) + "," +
               format_double(r.mean_train_time) + "," + format_double(r.mean_span_time) + "," +
               format_double(r.mean_kfold_time) + "\n";
    }
    return out;
}

}  // namespace spansvm
