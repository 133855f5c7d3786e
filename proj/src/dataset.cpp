#include "spansvm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spansvm/common.hpp"
#include "spansvm/rng.hpp"

namespace spansvm {

void Dataset::push_row(signed char label, std::span<const int> idx, std::span<const double> val) {
    labels.push_back(label);
    colidx.insert(colidx.end(), idx.begin(), idx.end());
    values.insert(values.end(), val.begin(), val.end());
    rowptr.push_back(colidx.size());
}

bool Dataset::fully_dense() const {
    for (std::size_t i = 0; i < size(); ++i) {
        RowView r = row(i);
        if (static_cast<int>(r.nnz()) != dim) return false;
        for (std::size_t k = 0; k < r.nnz(); ++k)
            if (r.idx[k] != static_cast<int>(k)) return false;
    }
    return true;
}

bool Dataset::has_both_classes() const {
    bool pos = false, neg = false;
    for (signed char y : labels) (y > 0 ? pos : neg) = true;
    return pos && neg;
}

std::size_t Dataset::count_label(int y) const {
    std::size_t c = 0;
    for (signed char v : labels) c += (v == y);
    return c;
}

std::string Dataset::serialize() const {
    std::string out;
    for (std::size_t i = 0; i < size(); ++i) {
        out += labels[i] > 0 ? "+1" : "-1";
        RowView r = row(i);
        for (std::size_t k = 0; k < r.nnz(); ++k) {
            out += ' ';
            out += std::to_string(r.idx[k] + 1);
            out += ':';
            out += format_double(r.val[k]);
        }
        out += '\n';
    }
    return out;
}

WeightVector WeightVector::per_class(const Dataset& ds, double cpos, double cneg) {
    WeightVector w;
    w.c.reserve(ds.size());
    for (signed char y : ds.labels) w.c.push_back(y > 0 ? cpos : cneg);
    return w;
}

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        std::size_t b = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
        if (i > b) out.push_back(line.substr(b, i - b));
    }
    return out;
}

signed char parse_label(std::string_view tok, bool remap01, std::size_t lineno) {
    if (tok == "+1" || tok == "1") return +1;
    if (tok == "-1") return -1;
    if (tok == "0") {
        if (remap01) return -1;
        throw parse_error("label '0' outside {-1,+1}; pass the 0/1 remap option to accept it", lineno);
    }
    // numeric forms like "1.0" are rejected: labels are integral by contract
    throw parse_error("unparseable label '" + std::string(tok) + "'", lineno);
}

}  // namespace

Dataset parse_dataset(std::string_view text, const ParseOptions& opts) {
    Dataset ds;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    int max_index = 0;
    std::vector<int> idx;
    std::vector<double> val;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() : eol + 1;
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        auto toks = split_ws(line);
        if (toks.empty()) continue;
        signed char y = parse_label(toks[0], opts.remap01, lineno);
        idx.clear();
        val.clear();
        int prev = 0;
        for (std::size_t t = 1; t < toks.size(); ++t) {
            std::string_view tok = toks[t];
            std::size_t colon = tok.find(':');
            if (colon == std::string_view::npos)
                throw parse_error("expected index:value, got '" + std::string(tok) + "'", lineno);
            int index = 0;
            {
                auto sub = tok.substr(0, colon);
                auto res = std::from_chars(sub.data(), sub.data() + sub.size(), index);
                if (res.ec != std::errc{} || res.ptr != sub.data() + sub.size() || index < 1)
                    throw parse_error("bad feature index '" + std::string(sub) + "'", lineno);
            }
            if (index <= prev) throw parse_error("non-increasing feature index " + std::to_string(index), lineno);
            prev = index;
            double v = 0;
            if (!parse_double_strict(tok.substr(colon + 1), v))
                throw parse_error("bad feature value '" + std::string(tok.substr(colon + 1)) + "'", lineno);
            idx.push_back(index - 1);
            val.push_back(v);
            max_index = std::max(max_index, index);
        }
        ds.push_row(y, idx, val);
    }
    if (ds.empty()) throw parse_error("empty dataset", lineno);
    ds.dim = opts.dim_override > 0 ? opts.dim_override : std::max(max_index, 1);
    if (opts.dim_override > 0 && max_index > opts.dim_override)
        throw parse_error("feature index " + std::to_string(max_index) + " exceeds forced dimension", lineno);
    return ds;
}

std::pair<Dataset, ScalingParams> scale_features(const Dataset& ds) {
    const std::size_t l = ds.size();
    const int d = ds.dim;
    std::vector<double> lo(d, std::numeric_limits<double>::infinity());
    std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
    std::vector<std::size_t> present(d, 0);
    for (std::size_t i = 0; i < l; ++i) {
        RowView r = ds.row(i);
        for (std::size_t k = 0; k < r.nnz(); ++k) {
            lo[r.idx[k]] = std::min(lo[r.idx[k]], r.val[k]);
            hi[r.idx[k]] = std::max(hi[r.idx[k]], r.val[k]);
            ++present[r.idx[k]];
        }
    }
    ScalingParams params;
    params.lo.resize(d);
    params.width.resize(d);
    for (int j = 0; j < d; ++j) {
        double mn = lo[j], mx = hi[j];
        if (present[j] == 0) {
            mn = mx = 0.0;  // feature never observed
        } else if (present[j] < l) {
            mn = std::min(mn, 0.0);  // implicit zeros count toward the range
            mx = std::max(mx, 0.0);
        }
        params.lo[j] = mn;
        params.width[j] = mx > mn ? mx - mn : 0.0;
    }
    return {apply_scaling(ds, params), params};
}

Dataset apply_scaling(const Dataset& ds, const ScalingParams& params) {
    Dataset out;
    out.dim = ds.dim;
    out.scores = ds.scores;
    std::vector<int> idx;
    std::vector<double> val;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        RowView r = ds.row(i);
        idx.clear();
        val.clear();
        std::size_t k = 0;
        for (int j = 0; j < ds.dim; ++j) {
            double v = 0.0;
            if (k < r.nnz() && r.idx[k] == j) v = r.val[k++];
            double s = params.apply(j, v);
            if (s != 0.0) {
                idx.push_back(j);
                val.push_back(s);
            }
        }
        out.push_row(ds.labels[i], idx, val);
    }
    return out;
}

Dataset generate_ringnorm(std::size_t l, int dim, std::uint64_t seed) {
    Rng rng(seed);
    Dataset ds;
    ds.dim = dim;
    std::vector<int> idx(dim);
    for (int j = 0; j < dim; ++j) idx[j] = j;
    std::vector<double> val(dim);
    for (std::size_t i = 0; i < l; ++i) {
        signed char y = rng.uniform01() < 0.3 ? +1 : -1;
        for (int j = 0; j < dim; ++j) {
            double g = rng.gaussian();
            val[j] = y > 0 ? 1.0 + g : 2.0 * g;
        }
        ds.push_row(y, idx, val);
    }
    return ds;
}

namespace {

std::vector<double> parse_float_lines(std::string_view text, std::size_t l, const char* what) {
    std::vector<double> out;
    std::size_t pos = 0, lineno = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() : eol + 1;
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        auto toks = split_ws(line);
        if (toks.empty()) continue;
        if (toks.size() != 1) throw parse_error(std::string("expected a single ") + what + " per line", lineno);
        double v = 0;
        if (!parse_double_strict(toks[0], v) || !std::isfinite(v))
            throw parse_error(std::string("bad ") + what + " '" + std::string(toks[0]) + "'", lineno);
        out.push_back(v);
    }
    if (out.size() != l)
        throw parse_error(std::string(what) + " count " + std::to_string(out.size()) +
                              " does not match dataset size " + std::to_string(l),
                          lineno);
    return out;
}

}  // namespace

WeightVector parse_weights(std::string_view text, std::size_t l) {
    WeightVector w{parse_float_lines(text, l, "weight")};
    for (std::size_t i = 0; i < w.c.size(); ++i)
        if (!(w.c[i] > 0.0)) throw parse_error("non-positive weight at line " + std::to_string(i + 1), i + 1);
    return w;
}

std::vector<double> parse_scores(std::string_view text, std::size_t l) {
    auto q = parse_float_lines(text, l, "score");
    for (std::size_t i = 0; i < q.size(); ++i)
        if (q[i] < 0.0 || q[i] > 1.0)
            throw parse_error("score outside [0,1] at line " + std::to_string(i + 1), i + 1);
    return q;
}

}  // namespace spansvm
