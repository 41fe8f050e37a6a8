#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "stdtrack/ops.hpp"

namespace stdtrack {

enum class EvictionPolicy { quality, fifo };

inline const char* to_string(EvictionPolicy p) { return p == EvictionPolicy::quality ? "quality" : "fifo"; }

inline EvictionPolicy parse_policy(const std::string& s) {
    if (s == "quality") return EvictionPolicy::quality;
    if (s == "fifo") return EvictionPolicy::fifo;
    throw ConfigError("unknown policy '" + s + "' (expected quality|fifo)");
}

/// Target saliency of a score map: max / sum. Requires a positive sum.
template <typename T>
double quality(const Tensor<T>& score) {
    if (score.empty()) throw ContractError("quality: empty score map");
    double mx = score[0], total = 0;
    for (T v : score.values()) {
        mx = std::max<double>(mx, v);
        total += v;
    }
    if (total <= 0) throw ContractError("quality: score map sum is not positive");
    return mx / total;
}

template <typename Payload>
struct MaintainerEntry {
    Payload token;
    double quality = 0;
    std::size_t frame = 0;
};

/// Fixed-capacity token store. Entries stay in insertion (= frame) order.
///
/// When full, an insert always keeps the new entry. Under the quality policy
/// the victim is the lowest-quality entry among those stored before the call
/// (oldest first on ties), so a weak newcomer survives at least one step.
/// Under FIFO the victim is the oldest entry.
template <typename Payload>
class TokenMaintainer {
public:
    using Entry = MaintainerEntry<Payload>;

    explicit TokenMaintainer(std::size_t capacity = 6, EvictionPolicy policy = EvictionPolicy::quality)
        : capacity_(capacity), policy_(policy) {
        if (capacity == 0) throw ConfigError("token maintainer: capacity must be at least 1");
        entries_.reserve(capacity + 1);
    }

    std::size_t capacity() const noexcept { return capacity_; }
    EvictionPolicy policy() const noexcept { return policy_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    bool full() const noexcept { return entries_.size() >= capacity_; }
    const std::vector<Entry>& entries() const noexcept { return entries_; }

    /// Returns the evicted entry, if any.
    std::optional<Entry> insert(Entry e) {
        if (!entries_.empty() && e.frame <= entries_.back().frame)
            throw ContractError("token maintainer: frame " + std::to_string(e.frame) +
                                " not after last stored frame " + std::to_string(entries_.back().frame));
        std::optional<Entry> evicted;
        if (entries_.size() >= capacity_) {
            std::size_t victim = 0;
            if (policy_ == EvictionPolicy::quality)
                for (std::size_t i = 1; i < entries_.size(); ++i)
                    if (entries_[i].quality < entries_[victim].quality) victim = i;
            evicted = std::move(entries_[victim]);
            entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(victim));
        }
        entries_.push_back(std::move(e));
        return evicted;
    }

    /// Entries ordered oldest first.
    std::vector<Entry> snapshot() const { return entries_; }

    std::vector<std::size_t> frames() const {
        std::vector<std::size_t> f;
        for (const auto& e : entries_) f.push_back(e.frame);
        return f;
    }

    void reset() { entries_.clear(); }

private:
    std::size_t capacity_;
    EvictionPolicy policy_;
    std::vector<Entry> entries_;
};

template <typename T>
using Stm = TokenMaintainer<Var<T>>;

/// Stored tokens stacked oldest first into [M×D]; M = 0 gives a 0×D tensor.
template <typename T>
Var<T> snapshot_tokens(const Stm<T>& stm, std::size_t d) {
    if (stm.empty()) return constant(Tensor<T>({0, d}));
    std::vector<Var<T>> rows;
    for (const auto& e : stm.entries()) rows.push_back(e.token);
    return concat_rows(rows);
}

}  // namespace stdtrack
