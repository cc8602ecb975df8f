#pragma once

// File formats: AMX activation containers (also used for toy checkpoints),
// JSON masks and sigma schedules, and the square MI CSV.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mipruner/entropy_mi.hpp"
#include "mipruner/prune_mask.hpp"
#include "mipruner/sigma_schedule.hpp"
#include "mipruner/toy_model.hpp"

namespace mipruner {

using json = nlohmann::json;

inline constexpr const char* kToolkitVersion = "0.1.0";

namespace io {

inline constexpr char kAmxMagic[4] = {'A', 'M', 'X', '1'};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  return v;
}

}  // namespace detail

/// Writes `contents` to a sibling temp file and renames it over `path`.
inline void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw InvalidData("cannot open '" + tmp.string() + "' for writing");
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!f) throw InvalidData("short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw InvalidData("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidData("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

/// Contents of an AMX container: N x K single-precision values plus optional metadata.
struct Amx {
  Matrix values;
  std::optional<json> metadata;
};

inline std::string encode_amx(const Matrix& values, const std::optional<json>& metadata = std::nullopt) {
  if (values.rows() > UINT32_MAX || values.cols() > UINT32_MAX) throw InvalidParameter("matrix too large for AMX");
  std::string out(kAmxMagic, 4);
  detail::put_u32(out, static_cast<std::uint32_t>(values.rows()));
  detail::put_u32(out, static_cast<std::uint32_t>(values.cols()));
  out.reserve(out.size() + 4 * static_cast<std::size_t>(values.size()));
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index c = 0; c < values.cols(); ++c) {
      const float f = static_cast<float>(values(r, c));
      detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
    }
  }
  if (metadata) {
    const std::string text = metadata->dump();
    detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
    out += text;
  }
  return out;
}

inline Amx decode_amx(const std::string& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kAmxMagic, 4) != 0)
    throw InvalidData("not an AMX file (bad magic or truncated header)");
  const std::uint64_t n = detail::get_u32(bytes, 4);
  const std::uint64_t k = detail::get_u32(bytes, 8);
  const std::uint64_t payload = 4 * n * k;
  if (bytes.size() < 12 + payload) {
    std::ostringstream os;
    os << "AMX payload truncated: header declares " << n << "x" << k << " values, file holds "
       << (bytes.size() - 12) / 4;
    throw InvalidData(os.str());
  }
  Amx out;
  out.values.resize(static_cast<Index>(n), static_cast<Index>(k));
  std::size_t pos = 12;
  for (std::uint64_t r = 0; r < n; ++r) {
    for (std::uint64_t c = 0; c < k; ++c, pos += 4)
      out.values(static_cast<Index>(r), static_cast<Index>(c)) = std::bit_cast<float>(detail::get_u32(bytes, pos));
  }
  if (pos == bytes.size()) return out;
  if (bytes.size() - pos < 4) throw InvalidData("AMX trailing bytes do not form a metadata block");
  const std::uint32_t len = detail::get_u32(bytes, pos);
  pos += 4;
  if (bytes.size() - pos != len) throw InvalidData("AMX metadata length does not match the remaining bytes");
  try {
    out.metadata = json::parse(bytes.substr(pos));
  } catch (const json::exception& e) {
    throw InvalidData(std::string("AMX metadata is not valid JSON: ") + e.what());
  }
  return out;
}

inline Amx read_amx(const std::filesystem::path& path) { return decode_amx(read_file(path)); }

inline void write_amx(const std::filesystem::path& path, const Matrix& values,
                      const std::optional<json>& metadata = std::nullopt) {
  write_atomic(path, encode_amx(values, metadata));
}

inline void write_activations(const std::filesystem::path& path, const ActivationMatrix& x,
                              const std::string& source = "mipruner") {
  json meta = {{"layer_id", x.layer_id}, {"sample_fraction", x.sample_fraction}, {"source", source}};
  write_amx(path, x.values, meta);
}

inline ActivationMatrix read_activations(const std::filesystem::path& path) {
  Amx amx = read_amx(path);
  ActivationMatrix x;
  x.values = std::move(amx.values);
  if (amx.metadata) {
    const json& m = *amx.metadata;
    x.layer_id = m.value("layer_id", std::string{});
    x.sample_fraction = m.value("sample_fraction", 1.0);
  }
  x.validate();
  return x;
}

// ---------------------------------------------------------------- masks

inline json mask_to_json(const PruneMask& mask, double relative_flops) {
  json keep = json::array();
  for (bool b : mask.keep) keep.push_back(b ? 1 : 0);
  json j = {{"layer_id", mask.layer_id},
            {"K", mask.size()},
            {"keep", keep},
            {"method", std::string(to_string(mask.method))},
            {"seed", mask.seed},
            {"iterations_used", mask.iterations_used},
            {"relative_flops", relative_flops},
            {"toolkit_version", kToolkitVersion}};
  if (mask.threshold) {
    if (mask.method == PruneMethod::pairwise_pcc)
      j["threshold_abs_pearson"] = *mask.threshold;
    else
      j["threshold_bits"] = *mask.threshold;
  }
  if (mask.target_keep) j["target_keep"] = *mask.target_keep;
  return j;
}

inline PruneMask mask_from_json(const json& j) {
  try {
    PruneMask m;
    const auto k = j.at("K").get<std::size_t>();
    const json& keep = j.at("keep");
    if (!keep.is_array() || keep.size() != k) throw InvalidData("mask 'keep' length differs from 'K'");
    for (const auto& v : keep) {
      const int b = v.get<int>();
      if (b != 0 && b != 1) throw InvalidData("mask 'keep' entries must be 0 or 1");
      m.keep.push_back(b == 1);
    }
    m.layer_id = j.value("layer_id", std::string{});
    m.method = parse_prune_method(j.value("method", std::string("none")));
    m.seed = j.value("seed", std::uint64_t{0});
    m.iterations_used = j.value("iterations_used", 0);
    if (j.contains("threshold_bits")) m.threshold = j["threshold_bits"].get<double>();
    if (j.contains("threshold_abs_pearson")) m.threshold = j["threshold_abs_pearson"].get<double>();
    if (j.contains("target_keep")) m.target_keep = j["target_keep"].get<int>();
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw InvalidData(std::string("malformed mask file: ") + e.what());
  }
}

inline void write_mask(const std::filesystem::path& path, const PruneMask& mask, double relative_flops) {
  write_atomic(path, mask_to_json(mask, relative_flops).dump(2) + "\n");
}

inline PruneMask read_mask(const std::filesystem::path& path) {
  try {
    return mask_from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw InvalidData("malformed mask file '" + path.string() + "': " + e.what());
  }
}

// ---------------------------------------------------------------- sigmas

inline json sigmas_to_json(const SigmaSchedule& s, const std::string& layer_id) {
  json ranges = json::array();
  for (const auto& [lo, hi] : s.neuron_ranges) ranges.push_back({lo, hi});
  return {{"layer_id", layer_id},
          {"layer_sigma", s.layer_sigma},
          {"neuron_sigmas", s.neuron_sigmas},
          {"gamma", s.gamma},
          {"beta", s.beta},
          {"alpha", s.alpha},
          {"batch_size", s.batch_size},
          {"grid", {{"count", s.grid.count}, {"lo_factor", s.grid.lo_factor}, {"hi_factor", s.grid.hi_factor}}},
          {"neuron_ranges", ranges},
          {"toolkit_version", kToolkitVersion}};
}

inline SigmaSchedule sigmas_from_json(const json& j) {
  try {
    SigmaSchedule s;
    s.layer_sigma = j.at("layer_sigma").get<double>();
    s.neuron_sigmas = j.at("neuron_sigmas").get<std::vector<double>>();
    s.gamma = j.value("gamma", 1.0);
    s.beta = j.value("beta", 0.9);
    s.alpha = j.value("alpha", kDefaultAlpha);
    s.batch_size = j.value("batch_size", 100);
    if (j.contains("grid")) {
      s.grid.count = j["grid"].value("count", 50);
      s.grid.lo_factor = j["grid"].value("lo_factor", 0.1);
      s.grid.hi_factor = j["grid"].value("hi_factor", 10.0);
    }
    if (j.contains("neuron_ranges"))
      for (const auto& r : j["neuron_ranges"]) s.neuron_ranges.emplace_back(r.at(0).get<double>(), r.at(1).get<double>());
    s.validate();
    return s;
  } catch (const json::exception& e) {
    throw InvalidData(std::string("malformed sigma file: ") + e.what());
  }
}

inline void write_sigmas(const std::filesystem::path& path, const SigmaSchedule& s, const std::string& layer_id) {
  write_atomic(path, sigmas_to_json(s, layer_id).dump(2) + "\n");
}

inline SigmaSchedule read_sigmas(const std::filesystem::path& path) {
  try {
    return sigmas_from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw InvalidData("malformed sigma file '" + path.string() + "': " + e.what());
  }
}

// ---------------------------------------------------------------- MI CSV

/// Square K x K CSV with a header row; pairs that were not computed are empty.
inline std::string encode_mi_csv(const MIMatrix& mi) {
  std::ostringstream os;
  os.precision(17);
  const Index k = mi.neurons();
  for (Index c = 0; c < k; ++c) os << (c ? "," : "") << "n" << c;
  os << '\n';
  for (Index r = 0; r < k; ++r) {
    for (Index c = 0; c < k; ++c) {
      if (c) os << ',';
      if (r == c)
        os << 0;
      else if (mi.has(r, c))
        os << mi.values()(r, c);
    }
    os << '\n';
  }
  return os.str();
}

inline MIMatrix decode_mi_csv(const std::string& text, double alpha) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InvalidData("MI CSV is empty");
  const Index k = static_cast<Index>(std::count(line.begin(), line.end(), ',')) + 1;
  MIMatrix mi(k, alpha);
  for (Index r = 0; r < k; ++r) {
    if (!std::getline(in, line)) throw InvalidData("MI CSV has fewer rows than columns");
    std::istringstream row(line);
    std::string cell;
    for (Index c = 0; c < k; ++c) {
      cell.clear();
      if (!std::getline(row, cell, ',')) {
        if (c != k - 1) throw InvalidData("MI CSV row is short");
        cell.clear();
      }
      if (cell.empty() || r == c) continue;
      double v = 0.0;
      try {
        std::size_t used = 0;
        v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw InvalidData("MI CSV cell '" + cell + "' is not a number");
      }
      if (r < c) mi.set(r, c, v);
    }
  }
  return mi;
}

inline void write_mi_csv(const std::filesystem::path& path, const MIMatrix& mi) { write_atomic(path, encode_mi_csv(mi)); }

inline MIMatrix read_mi_csv(const std::filesystem::path& path, double alpha) {
  return decode_mi_csv(read_file(path), alpha);
}

// ---------------------------------------------------------------- toy checkpoints

/// Parameters flattened as w1 (row-major), b1, w2 (row-major), b2 into a 1 x P AMX.
inline std::string encode_toy_checkpoint(const ToyFFN& m, json extra = json::object()) {
  m.validate();
  const Index p = m.w1.size() + m.b1.size() + m.w2.size() + m.b2.size();
  Matrix flat(1, p);
  Index i = 0;
  for (Index r = 0; r < m.w1.rows(); ++r)
    for (Index c = 0; c < m.w1.cols(); ++c) flat(0, i++) = m.w1(r, c);
  for (Index c = 0; c < m.b1.size(); ++c) flat(0, i++) = m.b1(c);
  for (Index r = 0; r < m.w2.rows(); ++r)
    for (Index c = 0; c < m.w2.cols(); ++c) flat(0, i++) = m.w2(r, c);
  for (Index c = 0; c < m.b2.size(); ++c) flat(0, i++) = m.b2(c);
  extra["kind"] = "toy_ffn";
  extra["d_in"] = m.d_in();
  extra["hidden"] = m.hidden();
  extra["classes"] = m.classes();
  return encode_amx(flat, extra);
}

struct ToyCheckpoint {
  ToyFFN model;
  json metadata;
};

inline ToyCheckpoint decode_toy_checkpoint(const std::string& bytes) {
  Amx amx = decode_amx(bytes);
  if (!amx.metadata || amx.metadata->value("kind", std::string{}) != "toy_ffn")
    throw InvalidData("AMX file is not a toy_ffn checkpoint");
  const json& meta = *amx.metadata;
  const Index d = meta.at("d_in").get<Index>();
  const Index k = meta.at("hidden").get<Index>();
  const Index c = meta.at("classes").get<Index>();
  if (amx.values.rows() != 1 || amx.values.cols() != d * k + k + k * c + c)
    throw InvalidData("toy checkpoint payload size does not match its declared shape");
  ToyCheckpoint out;
  out.metadata = meta;
  ToyFFN& m = out.model;
  m.w1.resize(d, k);
  m.b1.resize(k);
  m.w2.resize(k, c);
  m.b2.resize(c);
  Index i = 0;
  for (Index r = 0; r < d; ++r)
    for (Index q = 0; q < k; ++q) m.w1(r, q) = amx.values(0, i++);
  for (Index q = 0; q < k; ++q) m.b1(q) = amx.values(0, i++);
  for (Index r = 0; r < k; ++r)
    for (Index q = 0; q < c; ++q) m.w2(r, q) = amx.values(0, i++);
  for (Index q = 0; q < c; ++q) m.b2(q) = amx.values(0, i++);
  m.validate();
  return out;
}

inline void write_toy_checkpoint(const std::filesystem::path& path, const ToyFFN& m, json extra = json::object()) {
  write_atomic(path, encode_toy_checkpoint(m, std::move(extra)));
}

inline ToyCheckpoint read_toy_checkpoint(const std::filesystem::path& path) {
  return decode_toy_checkpoint(read_file(path));
}

}  // namespace io
}  // namespace mipruner
