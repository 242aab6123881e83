#pragma once

// Reliable class-balanced memory: admission filters, capacity-bounded
// insertion with eviction from the most frequent class, and the moving-average
// class frequency that drives eviction.

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "stamp/common.hpp"
#include "stamp/datagen.hpp"
#include "stamp/losses.hpp"

namespace stamp {

struct FilterVerdict {
  bool consistent = false;  // adapted argmax == source argmax
  bool confident = false;   // entropy strictly below the threshold
  double entropy = 0.0;

  bool admitted() const { return consistent && confident; }
};

inline FilterVerdict filter_masks(const Vector& p_hat, const Vector& source_probs, double entropy_threshold) {
  if (p_hat.size() != source_probs.size()) throw std::invalid_argument("filter_masks: class count mismatch");
  FilterVerdict v;
  v.entropy = entropy(p_hat);
  v.consistent = argmax(p_hat) == argmax(source_probs);
  v.confident = v.entropy < entropy_threshold;
  return v;
}

struct MemoryEntry {
  Vector features;
  int label = 0;  // pseudo-label
  std::uint64_t tick = 0;
};

struct MemoryContents {
  Matrix features;
  std::vector<int> labels;
};

class MemoryBank {
 public:
  MemoryBank(std::size_t capacity, std::size_t classes)
      : capacity_(capacity), frequency_(Vector::Zero(static_cast<Eigen::Index>(classes))) {
    if (capacity == 0) throw ConfigError("memory capacity must be positive");
    if (classes == 0) throw ConfigError("memory needs at least one class");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t classes() const { return static_cast<std::size_t>(frequency_.size()); }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  bool full() const { return entries_.size() >= capacity_; }
  const Vector& frequency() const { return frequency_; }
  /// Entries in insertion order.
  const std::vector<MemoryEntry>& entries() const { return entries_; }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(classes(), 0);
    for (const auto& e : entries_) ++counts[static_cast<std::size_t>(e.label)];
    return counts;
  }

  /// Adds an admitted sample. When full, first evicts the oldest entry of the
  /// present class with the largest frequency (lowest class index on ties).
  std::optional<MemoryEntry> insert(const FilterVerdict& verdict, Vector features, int label) {
    assert(verdict.admitted() && "memory insertion without passing both filters");
    (void)verdict;
    if (label < 0 || static_cast<std::size_t>(label) >= classes())
      throw std::out_of_range("memory: pseudo-label out of range");
    std::optional<MemoryEntry> evicted;
    if (full()) {
      const auto counts = class_counts();
      int victim_class = -1;
      for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) continue;
        if (victim_class < 0 || frequency_(static_cast<Eigen::Index>(c)) > frequency_(victim_class))
          victim_class = static_cast<int>(c);
      }
      // entries_ is tick-ordered, so the first match is the oldest.
      const auto it = std::find_if(entries_.begin(), entries_.end(),
                                   [&](const MemoryEntry& e) { return e.label == victim_class; });
      evicted = std::move(*it);
      entries_.erase(it);
    }
    entries_.push_back({std::move(features), label, tick_++});
    return evicted;
  }

  /// xi_c <- (1 - beta) xi_c + beta * (count of class c in memory).
  const Vector& update_class_frequency(double beta) {
    if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in (0, 1]");
    const auto counts = class_counts();
    for (std::size_t c = 0; c < counts.size(); ++c) {
      auto& xi = frequency_(static_cast<Eigen::Index>(c));
      xi = (1.0 - beta) * xi + beta * static_cast<double>(counts[c]);
    }
    return frequency_;
  }

  MemoryContents contents() const {
    MemoryContents out;
    if (entries_.empty()) return out;
    out.features.resize(static_cast<Eigen::Index>(entries_.size()), entries_.front().features.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      out.features.row(static_cast<Eigen::Index>(i)) = entries_[i].features.transpose();
      out.labels.push_back(entries_[i].label);
    }
    return out;
  }

  /// Dataset CSV of the resident entries (pseudo-labels) followed by an
  /// `xi,...` line holding the class frequencies.
  void dump(std::ostream& os, std::size_t dim) const {
    Dataset ds;
    ds.features.resize(static_cast<Eigen::Index>(entries_.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      ds.features.row(static_cast<Eigen::Index>(i)) = entries_[i].features.transpose();
      ds.truth.push_back({entries_[i].label, false});
    }
    write_dataset(os, ds);
    std::string line = "xi";
    for (Eigen::Index c = 0; c < frequency_.size(); ++c) {
      line += ',';
      detail::append_double(line, frequency_(c));
    }
    os << line << '\n';
  }

 private:
  std::size_t capacity_;
  Vector frequency_;
  std::vector<MemoryEntry> entries_;
  std::uint64_t tick_ = 0;
};

}  // namespace stamp
