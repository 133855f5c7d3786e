#include "spansvm/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <stdexcept>

namespace spansvm {

std::size_t default_cache_bytes() {
    if (const char* env = std::getenv("SPANSVM_CACHE_MB")) {
        char* end = nullptr;
        double mb = std::strtod(env, &end);
        if (end != env && mb > 0) return static_cast<std::size_t>(mb * 1024.0 * 1024.0);
    }
    return 100u * 1024u * 1024u;
}

namespace {

double sparse_dot(RowView a, RowView b) {
    double s = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.nnz() && j < b.nnz()) {
        int ai = a.idx[i], bj = b.idx[j];
        if (ai == bj) {
            s += a.val[i] * b.val[j];
            ++i;
            ++j;
        } else if (ai < bj) {
            ++i;
        } else {
            ++j;
        }
    }
    return s;
}

double dense_dot(RowView a, RowView b) {
    double s = 0.0;
    const double* x = a.val.data();
    const double* y = b.val.data();
    for (std::size_t k = 0; k < a.nnz(); ++k) s += x[k] * y[k];
    return s;
}

double sqnorm_of(RowView a) {
    double s = 0.0;
    for (double v : a.val) s += v * v;
    return s;
}

double kernel_from_parts(const KernelSpec& spec, double dot, double na, double nb) {
    if (spec.kind == KernelKind::linear) return dot;
    double d2 = na + nb - 2.0 * dot;
    if (d2 < 0.0) d2 = 0.0;
    return std::exp(-spec.gamma * d2);
}

}  // namespace

double kernel_eval(const KernelSpec& spec, RowView a, RowView b, int dim) {
    for (std::size_t k = 0; k < a.nnz(); ++k)
        if (a.idx[k] >= dim) throw std::invalid_argument("kernel_eval: dimension mismatch");
    for (std::size_t k = 0; k < b.nnz(); ++k)
        if (b.idx[k] >= dim) throw std::invalid_argument("kernel_eval: dimension mismatch");
    return kernel_from_parts(spec, sparse_dot(a, b), sqnorm_of(a), sqnorm_of(b));
}

GramCache::GramCache(std::size_t l, std::size_t capacity_bytes) : l_(l) {
    std::size_t row_bytes = l * sizeof(double);
    capacity_rows_ = row_bytes ? capacity_bytes / row_bytes : 0;
}

bool GramCache::fetch(int i, std::span<double> out) const {
    std::shared_lock lk(mu_);
    auto it = rows_.find(i);
    if (it == rows_.end()) return false;
    it->second->last_used.store(tick_.fetch_add(1) + 1, std::memory_order_relaxed);
    std::copy(it->second->data.begin(), it->second->data.end(), out.begin());
    return true;
}

void GramCache::store(int i, std::span<const double> row) {
    if (capacity_rows_ == 0) return;
    std::unique_lock lk(mu_);
    if (rows_.find(i) != rows_.end()) return;
    auto entry = std::make_unique<Entry>();
    entry->data.assign(row.begin(), row.end());
    entry->last_used.store(tick_.fetch_add(1) + 1, std::memory_order_relaxed);
    rows_[i] = std::move(entry);
    evict_locked();
}

void GramCache::evict_locked() {
    while (rows_.size() > capacity_rows_) {
        auto victim = rows_.begin();
        for (auto it = rows_.begin(); it != rows_.end(); ++it)
            if (it->second->last_used.load(std::memory_order_relaxed) <
                victim->second->last_used.load(std::memory_order_relaxed))
                victim = it;
        rows_.erase(victim);
    }
}

std::size_t GramCache::rows_cached() const {
    std::shared_lock lk(mu_);
    return rows_.size();
}

GramView::GramView(const Dataset& ds, KernelSpec spec, std::size_t cache_bytes)
    : ds_(&ds), spec_(spec), dense_(ds.fully_dense()) {
    sqnorm_.resize(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) sqnorm_[i] = sqnorm_of(ds.row(i));
    if (cache_bytes > 0 && ds.size() > 0) cache_ = std::make_unique<GramCache>(ds.size(), cache_bytes);
}

double GramView::dot_rows(int i, int j) const {
    RowView a = ds_->row(i), b = ds_->row(j);
    return dense_ ? dense_dot(a, b) : sparse_dot(a, b);
}

double GramView::pair_value(int i, int j) const {
    return kernel_from_parts(spec_, dot_rows(i, j), sqnorm_[i], sqnorm_[j]);
}

double GramView::at(int i, int j) const { return pair_value(i, j); }

void GramView::row(int i, std::span<double> out) const {
    if (cache_ && cache_->fetch(i, out)) return;
    const std::size_t l = ds_->size();
    for (std::size_t j = 0; j < l; ++j) out[j] = pair_value(i, static_cast<int>(j));
    if (cache_) cache_->store(i, out);
}

void GramView::row_vs(RowView x, std::span<double> out) const {
    double nx = sqnorm_of(x);
    for (std::size_t j = 0; j < ds_->size(); ++j) {
        RowView b = ds_->row(j);
        double dot = dense_ && x.nnz() == b.nnz() ? dense_dot(x, b) : sparse_dot(x, b);
        out[j] = kernel_from_parts(spec_, dot, nx, sqnorm_[j]);
    }
}

double GramView::eval_vs(RowView x, int j) const {
    RowView b = ds_->row(j);
    double dot = dense_ && x.nnz() == b.nnz() ? dense_dot(x, b) : sparse_dot(x, b);
    return kernel_from_parts(spec_, dot, sqnorm_of(x), sqnorm_[j]);
}

double feature_diameter(const GramView& gram, std::span<const int> subset) {
    if (subset.empty()) throw std::invalid_argument("feature_diameter: empty subset");
    const std::size_t s = subset.size();
    std::vector<double> rowsum(s, 0.0);
    double total = 0.0;
    for (std::size_t a = 0; a < s; ++a) {
        double acc = 0.0;
        for (std::size_t b = 0; b < s; ++b) acc += gram.at(subset[a], subset[b]);
        rowsum[a] = acc;
        total += acc;
    }
    double inv_s = 1.0 / static_cast<double>(s);
    double centroid_norm2 = total * inv_s * inv_s;
    double max_d2 = 0.0;
    for (std::size_t a = 0; a < s; ++a) {
        double d2 = gram.at(subset[a], subset[a]) - 2.0 * inv_s * rowsum[a] + centroid_norm2;
        max_d2 = std::max(max_d2, d2);
    }
    return 2.0 * std::sqrt(std::max(0.0, max_d2));
}

KernelRange r_delta_squared(const GramView& gram) {
    if (gram.spec().kind == KernelKind::rbf) return {1.0, false};
    const std::size_t l = gram.size();
    if (l <= 4096) {
        double lo = gram.at(0, 0), hi = lo;
        for (std::size_t i = 0; i < l; ++i)
            for (std::size_t j = i; j < l; ++j) {
                double v = gram.at(static_cast<int>(i), static_cast<int>(j));
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        return {hi - lo, false};
    }
    // norm-extremes proxy: max K <= max ||x||^2, min K >= -max||x||*max||x||
    double max_n2 = 0.0;
    for (std::size_t i = 0; i < l; ++i)
        max_n2 = std::max(max_n2, gram.at(static_cast<int>(i), static_cast<int>(i)));
    return {2.0 * max_n2, true};
}

}  // namespace spansvm
