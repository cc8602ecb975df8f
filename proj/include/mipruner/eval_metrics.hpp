#pragma once

// Compression and quality metrics: relative FLOPs, the KL proxy between
// original and pruned outputs, and classification accuracy.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mipruner/gram_kernel.hpp"
#include "mipruner/prune_mask.hpp"

namespace mipruner {

/// One FFN block: FC1 (d_in x hidden) and FC2 (hidden x d_out). `other_flops`
/// is the per-sample cost of everything else in the block, counted only in
/// whole-model scope.
struct LayerShape {
  std::int64_t d_in = 0;
  std::int64_t hidden = 0;
  std::int64_t d_out = 0;
  std::int64_t other_flops = 0;

  std::int64_t ffn_flops(std::int64_t width) const { return 2 * d_in * width + 2 * width * d_out; }
};

enum class FlopsScope { ffn_only, whole_model };

struct FlopsReport {
  struct Layer {
    std::int64_t original = 0;
    std::int64_t pruned = 0;
  };
  std::int64_t original_flops = 0;
  std::int64_t pruned_flops = 0;
  double relative = 1.0;
  std::vector<Layer> per_layer;
};

inline FlopsReport relative_flops(const std::vector<PruneMask>& masks, const std::vector<LayerShape>& arch,
                                  FlopsScope scope = FlopsScope::ffn_only) {
  if (masks.size() != arch.size()) throw InvalidParameter("mask count differs from FFN layer count");
  FlopsReport r;
  for (std::size_t i = 0; i < arch.size(); ++i) {
    const LayerShape& layer = arch[i];
    if (masks[i].size() != static_cast<std::size_t>(layer.hidden)) {
      std::ostringstream os;
      os << "mask " << i << " has " << masks[i].size() << " entries, layer hidden width is " << layer.hidden;
      throw InvalidParameter(os.str());
    }
    FlopsReport::Layer l;
    l.original = layer.ffn_flops(layer.hidden);
    l.pruned = layer.ffn_flops(static_cast<std::int64_t>(masks[i].kept()));
    if (scope == FlopsScope::whole_model) {
      l.original += layer.other_flops;
      l.pruned += layer.other_flops;
    }
    r.original_flops += l.original;
    r.pruned_flops += l.pruned;
    r.per_layer.push_back(l);
  }
  if (r.original_flops <= 0) throw InvalidParameter("architecture has zero FLOPs");
  r.relative = static_cast<double>(r.pruned_flops) / static_cast<double>(r.original_flops);
  return r;
}

/// Neurons to keep in a layer of width `hidden` for a uniform FFN FLOPs fraction.
inline int keep_for_relative_flops(std::int64_t hidden, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidParameter("relative FLOPs target must lie in (0, 1]");
  const auto k = std::llround(fraction * static_cast<double>(hidden));
  return static_cast<int>(std::clamp<long long>(k, 1, hidden));
}

/// Throws InvalidData unless every row is nonnegative and sums to 1 within 1e-6.
inline void check_probability_rows(const Matrix& p, const char* what) {
  for (Index r = 0; r < p.rows(); ++r) {
    const auto row = p.row(r);
    if (!row.allFinite() || (row.array() < 0.0).any() || std::abs(row.sum() - 1.0) > 1e-6) {
      std::ostringstream os;
      os << what << " row " << r << " is not a probability vector";
      throw InvalidData(os.str());
    }
  }
}

/// Mean over rows of KL(p || q) in bits, with q floored at 1e-12.
inline double kl_proxy(const Matrix& p_orig, const Matrix& p_masked) {
  if (p_orig.rows() != p_masked.rows() || p_orig.cols() != p_masked.cols())
    throw InvalidParameter("kl_proxy inputs differ in shape");
  if (p_orig.rows() == 0) throw InvalidParameter("kl_proxy of empty inputs");
  double total = 0.0;
  for (Index r = 0; r < p_orig.rows(); ++r) {
    double row = 0.0;
    for (Index c = 0; c < p_orig.cols(); ++c) {
      const double p = p_orig(r, c);
      if (p <= 0.0) continue;
      const double q = std::max(p_masked(r, c), 1e-12);
      row += p * std::log2(p / q);
    }
    total += std::max(row, 0.0);  // rounding in the softmax can push an exact match below zero
  }
  return total / static_cast<double>(p_orig.rows());
}

/// Index of the largest entry; ties go to the lowest index.
inline Index argmax_row(const Matrix& m, Index r) {
  Index best = 0;
  for (Index c = 1; c < m.cols(); ++c)
    if (m(r, c) > m(r, best)) best = c;
  return best;
}

inline double accuracy(const Matrix& outputs, const std::vector<int>& labels) {
  if (outputs.rows() == 0 || labels.empty()) throw InvalidParameter("accuracy of empty input");
  if (static_cast<std::size_t>(outputs.rows()) != labels.size())
    throw InvalidParameter("accuracy: output and label counts differ");
  std::size_t correct = 0;
  for (Index r = 0; r < outputs.rows(); ++r)
    if (argmax_row(outputs, r) == labels[static_cast<std::size_t>(r)]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

/// One line of a metrics report.
struct MetricsRow {
  std::string method;
  double relative_flops = 1.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double kl_proxy = 0.0;
  std::string parameter;  // ablation axis, empty for plain runs
  std::string value;
};

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << "parameter,value,method,relative_flops,seed,accuracy,kl_proxy\n";
  for (const auto& r : rows) {
    os << r.parameter << ',' << r.value << ',' << r.method << ',' << r.relative_flops << ',' << r.seed << ','
       << r.accuracy << ',' << r.kl_proxy << '\n';
  }
}

inline void write_metrics_table(std::ostream& os, const std::vector<MetricsRow>& rows) {
  char line[160];
  std::snprintf(line, sizeof line, "%-14s %-8s %-18s %8s %6s %9s %10s\n", "parameter", "value", "method",
                "rel_flops", "seed", "accuracy", "kl_bits");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-14s %-8s %-18s %8.4f %6llu %9.4f %10.6f\n", r.parameter.c_str(),
                  r.value.c_str(), r.method.c_str(), r.relative_flops, static_cast<unsigned long long>(r.seed),
                  r.accuracy, r.kl_proxy);
    os << line;
  }
}

}  // namespace mipruner
