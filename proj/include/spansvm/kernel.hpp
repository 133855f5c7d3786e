#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <shared_mutex>
#include <span>
#include <unordered_map>
#include <vector>

#include "spansvm/dataset.hpp"

namespace spansvm {

enum class KernelKind { linear, rbf };

struct KernelSpec {
    KernelKind kind = KernelKind::linear;
    double gamma = 0.0;  // rbf only, > 0

    static KernelSpec linear() { return {KernelKind::linear, 0.0}; }
    static KernelSpec rbf(double gamma) { return {KernelKind::rbf, gamma}; }
    /// The 1/d heuristic used with [0,1]-scaled features.
    static KernelSpec rbf_for(const Dataset& ds) { return rbf(1.0 / ds.dim); }
};

std::size_t default_cache_bytes();  // 100 MB unless overridden via SPANSVM_CACHE_MB

/// K(x, x') on raw sparse rows; throws on dimension mismatch against `dim`.
double kernel_eval(const KernelSpec& spec, RowView a, RowView b, int dim);

/// Bounded memoization of kernel rows, keyed by index pair through the row
/// interface. Values are pure recomputations, so hits and misses are
/// bit-identical; eviction is LRU at row granularity. Concurrent readers are
/// allowed, insertion is exclusive.
class GramCache {
public:
    GramCache(std::size_t l, std::size_t capacity_bytes);

    /// Copies row i into out if cached; returns false on miss.
    bool fetch(int i, std::span<double> out) const;
    /// Inserts a computed row (no-op if the row would exceed capacity alone
    /// or is already present).
    void store(int i, std::span<const double> row);

    std::size_t rows_cached() const;

private:
    void evict_locked();

    std::size_t l_;
    std::size_t capacity_rows_;
    mutable std::shared_mutex mu_;
    mutable std::atomic<std::uint64_t> tick_{0};
    struct Entry {
        std::vector<double> data;
        std::atomic<std::uint64_t> last_used{0};
    };
    std::unordered_map<int, std::unique_ptr<Entry>> rows_;
};

/// Read-only view of the Gram matrix of a dataset under a kernel spec, with
/// optional caching. Shareable across threads.
class GramView {
public:
    GramView(const Dataset& ds, KernelSpec spec, std::size_t cache_bytes = default_cache_bytes());

    const Dataset& dataset() const { return *ds_; }
    const KernelSpec& spec() const { return spec_; }
    std::size_t size() const { return ds_->size(); }

    double at(int i, int j) const;
    /// Full Gram row (length l), served from cache when possible.
    void row(int i, std::span<double> out) const;
    /// Kernel values of an external point against every training row.
    void row_vs(RowView x, std::span<double> out) const;
    double eval_vs(RowView x, int j) const;

    bool cache_enabled() const { return cache_ != nullptr; }

private:
    double pair_value(int i, int j) const;
    double dot_rows(int i, int j) const;

    const Dataset* ds_;
    KernelSpec spec_;
    std::vector<double> sqnorm_;
    bool dense_;
    std::unique_ptr<GramCache> cache_;
};

/// Upper estimate of the smallest enclosing sphere diameter of `subset` in
/// feature space: twice the largest distance to the kernel-space centroid.
/// Sandwiched between the max pairwise distance and itself by construction.
double feature_diameter(const GramView& gram, std::span<const int> subset);

struct KernelRange {
    double value = 0.0;
    bool approximate = false;  // large linear-kernel sets use the norm-extremes proxy
};

/// Width of the kernel value range over the training set: exactly 1 for rbf,
/// max-min over all pairs for the linear kernel (proxy beyond 4096 rows).
KernelRange r_delta_squared(const GramView& gram);

}  // namespace spansvm
