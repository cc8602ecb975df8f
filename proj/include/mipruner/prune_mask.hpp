#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mipruner/error.hpp"

namespace mipruner {

enum class PruneMethod { pairwise_mi, cluster_mi, random, weight_magnitude, pairwise_pcc, none };

inline std::string_view to_string(PruneMethod m) {
  switch (m) {
    case PruneMethod::pairwise_mi: return "pairwise_mi";
    case PruneMethod::cluster_mi: return "cluster_mi";
    case PruneMethod::random: return "random";
    case PruneMethod::weight_magnitude: return "weight_magnitude";
    case PruneMethod::pairwise_pcc: return "pairwise_pcc";
    case PruneMethod::none: return "none";
  }
  return "none";
}

inline PruneMethod parse_prune_method(std::string_view s) {
  for (auto m : {PruneMethod::pairwise_mi, PruneMethod::cluster_mi, PruneMethod::random,
                 PruneMethod::weight_magnitude, PruneMethod::pairwise_pcc, PruneMethod::none})
    if (to_string(m) == s) return m;
  throw InvalidData("unknown prune method '" + std::string(s) + "'");
}

/// Keep/drop decision per neuron of one layer, with provenance.
struct PruneMask {
  std::vector<bool> keep;
  PruneMethod method = PruneMethod::none;
  std::uint64_t seed = 0;
  std::optional<double> threshold;  // bits for MI, |rho| for PCC
  std::optional<int> target_keep;
  int iterations_used = 0;
  std::string layer_id;

  static PruneMask all_keep(std::size_t k, PruneMethod method = PruneMethod::none) {
    PruneMask m;
    m.keep.assign(k, true);
    m.method = method;
    return m;
  }

  std::size_t size() const { return keep.size(); }
  std::size_t kept() const { return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true)); }

  std::vector<std::size_t> kept_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < keep.size(); ++i)
      if (keep[i]) out.push_back(i);
    return out;
  }

  void validate() const {
    if (keep.empty()) throw InvalidData("mask is empty");
    if (kept() == 0) throw InvalidData("mask drops every neuron");
  }
};

inline void check_target_keep(std::size_t k, int target_keep) {
  if (target_keep < 1 || static_cast<std::size_t>(target_keep) > k) {
    std::ostringstream os;
    os << "target keep count " << target_keep << " outside [1, " << k << "]";
    throw InvalidParameter(os.str());
  }
}

}  // namespace mipruner
