#include "spansvm/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "spansvm/common.hpp"
#include "spansvm/parallel.hpp"

namespace spansvm {

std::vector<int> TrainedModel::sv_indices() const {
    std::vector<int> sv;
    sv.reserve(n_sv());
    sv.insert(sv.end(), inbound_idx.begin(), inbound_idx.end());
    sv.insert(sv.end(), bounded_idx.begin(), bounded_idx.end());
    std::sort(sv.begin(), sv.end());
    return sv;
}

bool TrainedModel::is_inbound(int i) const {
    return std::binary_search(inbound_idx.begin(), inbound_idx.end(), i);
}

bool TrainedModel::is_sv(int i) const {
    return is_inbound(i) || std::binary_search(bounded_idx.begin(), bounded_idx.end(), i);
}

namespace {

constexpr double kCurvatureFloor = 1e-12;

// Two-variable subproblem along the equality constraint. The pair moves so
// that sum y_i alpha_i is conserved: equal labels trade mass
// (alpha_i + alpha_j fixed), opposite labels move together
// (alpha_i - alpha_j fixed). When the step clips, the binding variable is
// snapped exactly onto its bound; otherwise a multiplier can land one ulp
// off the box, keep passing the working-set membership tests and stall the
// pair selection with a vanishing feasible window.
void update_pair(double yi, double yj, double Gi, double Gj, double Kii, double Kjj, double Kij,
                 double Ci, double Cj, double& ai, double& aj) {
    double eta = Kii + Kjj - 2.0 * Kij;
    if (eta <= 0.0) eta = kCurvatureFloor;
    enum class Bind { none, i_lo, i_hi, j_lo, j_hi };
    double t, t_lo, t_hi;
    Bind lo_side, hi_side;
    if (yi != yj) {
        t = -(Gi + Gj) / eta;
        if (-ai >= -aj) {
            t_lo = -ai;
            lo_side = Bind::i_lo;
        } else {
            t_lo = -aj;
            lo_side = Bind::j_lo;
        }
        if (Ci - ai <= Cj - aj) {
            t_hi = Ci - ai;
            hi_side = Bind::i_hi;
        } else {
            t_hi = Cj - aj;
            hi_side = Bind::j_hi;
        }
    } else {
        t = (Gj - Gi) / eta;
        if (-ai >= aj - Cj) {
            t_lo = -ai;
            lo_side = Bind::i_lo;
        } else {
            t_lo = aj - Cj;
            lo_side = Bind::j_hi;
        }
        if (Ci - ai <= aj) {
            t_hi = Ci - ai;
            hi_side = Bind::i_hi;
        } else {
            t_hi = aj;
            hi_side = Bind::j_lo;
        }
    }
    Bind bind = Bind::none;
    if (t <= t_lo) {
        t = t_lo;
        bind = lo_side;
    } else if (t >= t_hi) {
        t = t_hi;
        bind = hi_side;
    }
    const double conserved = yi != yj ? ai - aj : ai + aj;
    const bool opposite = yi != yj;
    switch (bind) {
        case Bind::none:
        case Bind::i_lo:
        case Bind::i_hi:
            ai = bind == Bind::i_lo ? 0.0 : bind == Bind::i_hi ? Ci : ai + t;
            aj = opposite ? ai - conserved : conserved - ai;
            aj = std::min(std::max(aj, 0.0), Cj);
            break;
        case Bind::j_lo:
        case Bind::j_hi:
            aj = bind == Bind::j_lo ? 0.0 : Cj;
            ai = opposite ? aj + conserved : conserved - aj;
            ai = std::min(std::max(ai, 0.0), Ci);
            break;
    }
}

}  // namespace

TrainedModel train(const GramView& gram, const WeightVector& weights, const TrainOptions& opts) {
    const Dataset& ds = gram.dataset();
    const std::size_t l = ds.size();
    if (l == 0) throw std::invalid_argument("train: empty dataset");
    if (weights.size() != l) throw std::invalid_argument("train: weight count does not match dataset");
    if (!ds.has_both_classes()) throw train_error("train: dataset contains a single class");
    for (double c : weights.c)
        if (!(c > 0.0)) throw std::invalid_argument("train: non-positive instance weight");

    std::vector<double> alpha(l, 0.0);
    std::vector<double> grad(l, -1.0);  // gradient of (1/2)a'Qa - sum(a)
    std::vector<double> y(l);
    for (std::size_t i = 0; i < l; ++i) y[i] = ds.labels[i] > 0 ? 1.0 : -1.0;
    const std::vector<double>& C = weights.c;

    std::vector<double> row_i(l), row_j(l), diag(l);
    for (std::size_t i = 0; i < l; ++i) diag[i] = gram.at(static_cast<int>(i), static_cast<int>(i));

    long long iter = 0;
    double gap = std::numeric_limits<double>::infinity();
    while (true) {
        // maximal violating pair over -y_t grad_t
        int i = -1, j = -1;
        double up = -std::numeric_limits<double>::infinity();
        double low = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < l; ++t) {
            double v = -y[t] * grad[t];
            bool in_up = y[t] > 0 ? alpha[t] < C[t] : alpha[t] > 0.0;
            bool in_low = y[t] > 0 ? alpha[t] > 0.0 : alpha[t] < C[t];
            if (in_up && v > up) {
                up = v;
                i = static_cast<int>(t);
            }
            if (in_low && v < low) {
                low = v;
                j = static_cast<int>(t);
            }
        }
        gap = up - low;
        if (i < 0 || j < 0 || gap <= opts.tol) break;
        if (iter >= opts.max_iter) {
            std::ostringstream msg;
            msg << "train: no convergence after " << iter << " updates (KKT gap " << gap
                << ", tol " << opts.tol << ")";
            throw train_error(msg.str());
        }
        ++iter;

        gram.row(i, row_i);
        gram.row(j, row_j);
        double old_ai = alpha[i], old_aj = alpha[j];
        update_pair(y[i], y[j], grad[i], grad[j], diag[i], diag[j], row_i[j], C[i], C[j], alpha[i],
                    alpha[j]);
        double dai = alpha[i] - old_ai;
        double daj = alpha[j] - old_aj;
        if (dai == 0.0 && daj == 0.0) {
            std::ostringstream msg;
            msg << "train: stalled at KKT gap " << gap << " after " << iter << " updates (tol "
                << opts.tol << ")";
            throw train_error(msg.str());
        }
        for (std::size_t t = 0; t < l; ++t)
            grad[t] += y[t] * (y[i] * row_i[t] * dai + y[j] * row_j[t] * daj);
    }

    TrainedModel model;
    model.kernel = gram.spec();
    model.alpha = std::move(alpha);
    model.weights = C;
    model.labels = ds.labels;
    model.iterations = iter;

    for (std::size_t t = 0; t < l; ++t) {
        double eps_b = 1e-8 * C[t];
        if (model.alpha[t] >= C[t] - eps_b)
            model.bounded_idx.push_back(static_cast<int>(t));
        else if (model.alpha[t] > eps_b)
            model.inbound_idx.push_back(static_cast<int>(t));
    }
    model.stable = !model.inbound_idx.empty();

    if (model.stable) {
        double sum = 0.0;
        for (int t : model.inbound_idx) sum += -y[t] * grad[t];
        model.bias = sum / static_cast<double>(model.inbound_idx.size());
    } else {
        // midpoint of the KKT-feasible interval for b
        double lo = -std::numeric_limits<double>::infinity();
        double hi = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < l; ++t) {
            double v = -y[t] * grad[t];
            bool in_up = y[t] > 0 ? model.alpha[t] < C[t] : model.alpha[t] > 0.0;
            bool in_low = y[t] > 0 ? model.alpha[t] > 0.0 : model.alpha[t] < C[t];
            if (in_up) lo = std::max(lo, v);
            if (in_low) hi = std::min(hi, v);
        }
        if (std::isfinite(lo) && std::isfinite(hi))
            model.bias = 0.5 * (lo + hi);
        else if (std::isfinite(lo))
            model.bias = lo;
        else if (std::isfinite(hi))
            model.bias = hi;
        else
            model.bias = 0.0;
    }

    model.margins.resize(l);
    model.slacks.resize(l);
    double w_obj = 0.0;
    for (std::size_t t = 0; t < l; ++t) {
        model.margins[t] = grad[t] + 1.0 + y[t] * model.bias;  // y_t f(x_t)
        model.slacks[t] = std::max(0.0, 1.0 - model.margins[t]);
        w_obj += model.alpha[t] * (1.0 - grad[t]);
    }
    model.objective = 0.5 * w_obj;
    return model;
}

TrainedModel train(const Dataset& ds, const WeightVector& weights, const KernelSpec& kernel,
                   const TrainOptions& opts) {
    GramView gram(ds, kernel, opts.cache_bytes ? opts.cache_bytes : default_cache_bytes());
    return train(gram, weights, opts);
}

double decision_value(const TrainedModel& model, const Dataset& train_ds, RowView x) {
    for (std::size_t k = 0; k < x.nnz(); ++k)
        if (x.idx[k] >= train_ds.dim) throw std::invalid_argument("decision_value: dimension mismatch");
    double f = model.bias;
    for (int i : model.inbound_idx)
        f += model.alpha[i] * (model.labels[i] > 0 ? 1.0 : -1.0) *
             kernel_eval(model.kernel, train_ds.row(i), x, train_ds.dim);
    for (int i : model.bounded_idx)
        f += model.alpha[i] * (model.labels[i] > 0 ? 1.0 : -1.0) *
             kernel_eval(model.kernel, train_ds.row(i), x, train_ds.dim);
    return f;
}

std::vector<double> decision_values(const TrainedModel& model, const Dataset& train_ds,
                                    const Dataset& points, int workers) {
    if (points.dim > train_ds.dim) throw std::invalid_argument("decision_values: dimension mismatch");
    std::vector<double> out(points.size());
    parallel_for(points.size(), workers,
                 [&](std::size_t i) { out[i] = decision_value(model, train_ds, points.row(i)); });
    return out;
}

double dual_objective(const TrainedModel& model, const GramView& gram) {
    std::vector<int> nz;
    for (std::size_t i = 0; i < model.l(); ++i)
        if (model.alpha[i] != 0.0) nz.push_back(static_cast<int>(i));
    double lin = 0.0, quad = 0.0;
    for (int i : nz) lin += model.alpha[i];
    for (int i : nz) {
        double yi = model.labels[i] > 0 ? 1.0 : -1.0;
        for (int j : nz) {
            double yj = model.labels[j] > 0 ? 1.0 : -1.0;
            quad += model.alpha[i] * model.alpha[j] * yi * yj * gram.at(i, j);
        }
    }
    return lin - 0.5 * quad;
}

std::string serialize_model(const TrainedModel& model) {
    std::string out = "spansvm-model v1\n";
    if (model.kernel.kind == KernelKind::rbf)
        out += "kernel rbf " + format_double(model.kernel.gamma) + "\n";
    else
        out += "kernel linear\n";
    out += "l " + std::to_string(model.l()) + "\n";
    out += "bias " + format_double(model.bias) + "\n";
    out += "objective " + format_double(model.objective) + "\n";
    out += std::string("stable ") + (model.stable ? "1" : "0") + "\n";
    auto sv = model.sv_indices();
    out += "sv " + std::to_string(sv.size()) + "\n";
    for (int i : sv) {
        out += std::to_string(i) + " " + (model.labels[i] > 0 ? "+1" : "-1") + " " +
               format_double(model.alpha[i]) + " " + format_double(model.weights[i]) + "\n";
    }
    return out;
}

namespace {

std::string_view next_line(std::string_view& text) {
    std::size_t eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text.remove_prefix(eol == std::string_view::npos ? text.size() : eol + 1);
    return line;
}

}  // namespace

TrainedModel parse_model(std::string_view text) {
    std::size_t lineno = 1;
    if (next_line(text) != "spansvm-model v1") throw parse_error("not a spansvm v1 model file", lineno);
    TrainedModel model;
    std::size_t l = 0, nsv = 0;
    {
        ++lineno;
        std::string_view line = next_line(text);
        if (line == "kernel linear") {
            model.kernel = KernelSpec::linear();
        } else if (line.starts_with("kernel rbf ")) {
            double g = 0;
            if (!parse_double_strict(line.substr(11), g) || !(g > 0))
                throw parse_error("bad rbf gamma", lineno);
            model.kernel = KernelSpec::rbf(g);
        } else {
            throw parse_error("bad kernel line", lineno);
        }
    }
    auto read_kv = [&](std::string_view key) {
        ++lineno;
        std::string_view line = next_line(text);
        if (!line.starts_with(key) || line.size() <= key.size() || line[key.size()] != ' ')
            throw parse_error("expected '" + std::string(key) + "' line", lineno);
        return line.substr(key.size() + 1);
    };
    {
        auto v = read_kv("l");
        l = std::stoul(std::string(v));
    }
    if (!parse_double_strict(read_kv("bias"), model.bias)) throw parse_error("bad bias", lineno);
    if (!parse_double_strict(read_kv("objective"), model.objective))
        throw parse_error("bad objective", lineno);
    {
        auto v = read_kv("stable");
        model.stable = v == "1";
    }
    {
        auto v = read_kv("sv");
        nsv = std::stoul(std::string(v));
    }
    model.alpha.assign(l, 0.0);
    model.weights.assign(l, 0.0);
    model.labels.assign(l, 0);
    for (std::size_t k = 0; k < nsv; ++k) {
        ++lineno;
        std::string_view line = next_line(text);
        std::size_t p1 = line.find(' ');
        std::size_t p2 = line.find(' ', p1 + 1);
        std::size_t p3 = line.find(' ', p2 + 1);
        if (p1 == std::string_view::npos || p2 == std::string_view::npos || p3 == std::string_view::npos)
            throw parse_error("bad sv record", lineno);
        int idx = std::stoi(std::string(line.substr(0, p1)));
        if (idx < 0 || static_cast<std::size_t>(idx) >= l) throw parse_error("sv index out of range", lineno);
        std::string_view ys = line.substr(p1 + 1, p2 - p1 - 1);
        if (ys != "+1" && ys != "-1") throw parse_error("bad sv label", lineno);
        double a = 0, c = 0;
        if (!parse_double_strict(line.substr(p2 + 1, p3 - p2 - 1), a) ||
            !parse_double_strict(line.substr(p3 + 1), c))
            throw parse_error("bad sv alpha/weight", lineno);
        if (!(c > 0) || a < 0 || a > c) throw parse_error("sv record violates 0 <= alpha <= C", lineno);
        model.labels[idx] = ys == "+1" ? +1 : -1;
        model.alpha[idx] = a;
        model.weights[idx] = c;
        double eps_b = 1e-8 * c;
        if (a >= c - eps_b)
            model.bounded_idx.push_back(idx);
        else if (a > eps_b)
            model.inbound_idx.push_back(idx);
    }
    std::sort(model.inbound_idx.begin(), model.inbound_idx.end());
    std::sort(model.bounded_idx.begin(), model.bounded_idx.end());
    return model;
}

}  // namespace spansvm
