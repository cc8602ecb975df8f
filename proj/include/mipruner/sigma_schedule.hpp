#pragma once

#include <cmath>
#include <sstream>
#include <utility>
#include <vector>

#include "mipruner/error.hpp"

namespace mipruner {

/// Log-spaced candidate widths for one neuron: `count` points spanning
/// [lo_factor * s, hi_factor * s] around the neuron's 1-D Scott width s.
struct GridSpec {
  int count = 50;
  double lo_factor = 0.1;
  double hi_factor = 10.0;

  void validate() const {
    if (count < 1) throw InvalidParameter("sigma grid needs at least one candidate");
    if (!(lo_factor > 0.0) || !(hi_factor >= lo_factor))
      throw InvalidParameter("sigma grid factors must satisfy 0 < lo <= hi");
  }

  std::vector<double> around(double center) const {
    validate();
    std::vector<double> grid(static_cast<std::size_t>(count));
    const double lo = std::log(lo_factor * center);
    const double hi = std::log(hi_factor * center);
    for (int i = 0; i < count; ++i) {
      const double t = count == 1 ? 0.5 : static_cast<double>(i) / (count - 1);
      grid[static_cast<std::size_t>(i)] = std::exp(lo + t * (hi - lo));
    }
    return grid;
  }
};

/// Tuned kernel widths for one layer.
struct SigmaSchedule {
  double layer_sigma = 1.0;
  std::vector<double> neuron_sigmas;
  double gamma = 1.0;
  double beta = 0.9;
  double alpha = 1.01;
  int batch_size = 100;
  GridSpec grid;
  /// Closed range [lo, hi] of the candidates each neuron was searched over.
  std::vector<std::pair<double, double>> neuron_ranges;

  std::size_t neurons() const { return neuron_sigmas.size(); }

  void validate() const {
    if (!(layer_sigma > 0.0) || !std::isfinite(layer_sigma))
      throw InvalidData("layer sigma must be positive and finite");
    for (std::size_t i = 0; i < neuron_sigmas.size(); ++i) {
      const double s = neuron_sigmas[i];
      if (!(s > 0.0) || !std::isfinite(s)) {
        std::ostringstream os;
        os << "neuron sigma " << i << " must be positive and finite, got " << s;
        throw InvalidData(os.str());
      }
    }
  }
};

}  // namespace mipruner
