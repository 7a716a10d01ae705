#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "pocusiq/core/error.hpp"
#include "pocusiq/metrics/niqe.hpp"
#include "pocusiq/neural/adam.hpp"
#include "pocusiq/neural/network.hpp"

// PQWT tensor container: "PQWT", u32 version, u32 count, then per tensor
// u32 name length, name bytes, u8 dtype (0 = f32, 1 = f64), u8 rank,
// rank x u64 dims, raw little-endian values.
namespace pocusiq::nn {

inline constexpr std::uint32_t kPqwtVersion = 1;

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  DType dtype = DType::F32;
  std::vector<double> values;  ///< f32 entries are stored exactly

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto d : dims) n *= static_cast<std::size_t>(d);
    return n;
  }
};

namespace pqwt_detail {

template <typename U>
void put(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string origin) : b_(bytes), origin_(std::move(origin)) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) throw DataError(origin_ + ": truncated weight file");
  }
  const std::string& b_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace pqwt_detail

inline std::string encode_pqwt(const std::vector<NamedTensor>& tensors) {
  std::string out = "PQWT";
  pqwt_detail::put<std::uint32_t>(out, kPqwtVersion);
  pqwt_detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    if (t.values.size() != t.numel()) throw UsageError("tensor '" + t.name + "' has inconsistent length");
    pqwt_detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    out.push_back(static_cast<char>(t.dtype));
    out.push_back(static_cast<char>(t.dims.size()));
    for (auto d : t.dims) pqwt_detail::put<std::uint64_t>(out, d);
    for (double v : t.values) {
      if (t.dtype == DType::F32) {
        pqwt_detail::put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        pqwt_detail::put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
      }
    }
  }
  return out;
}

inline std::vector<NamedTensor> decode_pqwt(const std::string& bytes, const std::string& origin = "weights") {
  if (bytes.size() < 4 || bytes.compare(0, 4, "PQWT") != 0) {
    throw DataError(origin + ": not a PQWT weight file (bad magic)");
  }
  pqwt_detail::Reader r(bytes, origin);
  r.str(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kPqwtVersion) {
    throw DataError(origin + ": unsupported PQWT version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedTensor> out;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str(r.get<std::uint32_t>());
    if (!seen.insert(t.name).second) throw DataError(origin + ": duplicate tensor '" + t.name + "'");
    const auto dtype = r.get<std::uint8_t>();
    if (dtype > 1) throw DataError(origin + ": tensor '" + t.name + "' has unknown dtype " + std::to_string(dtype));
    t.dtype = static_cast<DType>(dtype);
    const auto rank = r.get<std::uint8_t>();
    for (int d = 0; d < rank; ++d) t.dims.push_back(r.get<std::uint64_t>());
    const std::size_t n = t.numel();
    if (n > bytes.size()) throw DataError(origin + ": truncated weight file");
    t.values.resize(n);
    for (auto& v : t.values) {
      v = t.dtype == DType::F32 ? static_cast<double>(std::bit_cast<float>(r.get<std::uint32_t>()))
                                : std::bit_cast<double>(r.get<std::uint64_t>());
    }
    out.push_back(std::move(t));
  }
  if (!r.done()) throw DataError(origin + ": trailing bytes after the last tensor");
  return out;
}

inline void write_pqwt(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  const std::string bytes = encode_pqwt(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("failed writing " + path.string());
}

inline std::vector<NamedTensor> read_pqwt(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open weight file " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_pqwt(bytes, path.string());
}

inline NamedTensor scalar_tensor(std::string name, double v) {
  return NamedTensor{std::move(name), {1}, DType::F64, {v}};
}

template <typename T>
void append_params(std::vector<NamedTensor>& out, const std::string& prefix, const ParameterSet<T>& ps) {
  for (const auto& e : ps.entries()) {
    NamedTensor t{prefix + e.name, {}, DType::F32, {}};
    for (int d : e.tensor.shape()) t.dims.push_back(static_cast<std::uint64_t>(d));
    t.values.assign(e.tensor.data().begin(), e.tensor.data().end());
    out.push_back(std::move(t));
  }
}

namespace pqwt_detail {

inline std::map<std::string, const NamedTensor*> index(const std::vector<NamedTensor>& ts) {
  std::map<std::string, const NamedTensor*> m;
  for (const auto& t : ts) m[t.name] = &t;
  return m;
}

inline const NamedTensor& require(const std::map<std::string, const NamedTensor*>& m, const std::string& name,
                                  std::size_t numel, const std::string& origin) {
  auto it = m.find(name);
  if (it == m.end()) throw DataError(origin + ": missing tensor '" + name + "'");
  if (it->second->numel() != numel) {
    throw DataError(origin + ": tensor '" + name + "' has " + std::to_string(it->second->numel()) +
                    " values, expected " + std::to_string(numel));
  }
  return *it->second;
}

inline void reject_unknown(const std::vector<NamedTensor>& ts, const std::set<std::string>& known,
                           const std::vector<std::string>& ignored_prefixes, const std::string& origin) {
  std::string unknown;
  for (const auto& t : ts) {
    if (known.count(t.name)) continue;
    bool skip = false;
    for (const auto& p : ignored_prefixes) skip = skip || t.name.rfind(p, 0) == 0;
    if (!skip) unknown += (unknown.empty() ? "" : ", ") + t.name;
  }
  if (!unknown.empty()) throw DataError(origin + ": unknown tensor name(s): " + unknown);
}

}  // namespace pqwt_detail

template <typename T>
void load_params(const std::vector<NamedTensor>& ts, const std::string& prefix, ParameterSet<T>& ps,
                 std::set<std::string>& known, const std::string& origin) {
  auto idx = pqwt_detail::index(ts);
  for (auto& e : ps.entries()) {
    const std::string name = prefix + e.name;
    const auto& t = pqwt_detail::require(idx, name, e.tensor.numel(), origin);
    if (t.dims.size() != e.tensor.shape().size()) throw DataError(origin + ": tensor '" + name + "' has wrong rank");
    for (std::size_t d = 0; d < t.dims.size(); ++d) {
      if (t.dims[d] != static_cast<std::uint64_t>(e.tensor.shape()[d])) {
        throw DataError(origin + ": tensor '" + name + "' has shape mismatch");
      }
    }
    for (std::size_t k = 0; k < t.values.size(); ++k) e.tensor[k] = static_cast<T>(t.values[k]);
    known.insert(name);
  }
}

/// Generator-only weight file (names prefixed "G.").
inline void save_weights(const std::filesystem::path& path, const UNetGenerator<float>& G) {
  std::vector<NamedTensor> ts;
  append_params(ts, "G.", G.params());
  write_pqwt(path, ts);
}

/// Loads generator weights from a weight file or a training checkpoint.
inline void load_weights(const std::filesystem::path& path, UNetGenerator<float>& G) {
  const auto ts = read_pqwt(path);
  std::set<std::string> known;
  load_params(ts, "G.", G.params(), known, path.string());
  pqwt_detail::reject_unknown(ts, known, {"D.", "adamG.", "adamD.", "train."}, path.string());
}

/// Full training state: both networks, both optimizers and loop counters.
struct Checkpoint {
  UNetGenerator<float> G;
  PatchDiscriminator<float> D;
  AdamState<float> adam_g;
  AdamState<float> adam_d;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double best_val_ssim = -1.0;

  Checkpoint() : adam_g(G.params(), AdamConfig{}), adam_d(D.params(), AdamConfig{}) {}
};

namespace pqwt_detail {

inline void append_adam(std::vector<NamedTensor>& out, const std::string& prefix, const ParameterSet<float>& ps,
                        const AdamState<float>& st) {
  out.push_back(scalar_tensor(prefix + "step", static_cast<double>(st.step)));
  out.push_back(scalar_tensor(prefix + "lr", st.cfg.lr));
  out.push_back(scalar_tensor(prefix + "beta1", st.cfg.beta1));
  out.push_back(scalar_tensor(prefix + "beta2", st.cfg.beta2));
  out.push_back(scalar_tensor(prefix + "eps", st.cfg.eps));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& name = ps.entries()[i].name;
    const std::uint64_t n = st.m[i].size();
    out.push_back(NamedTensor{prefix + name + ".m", {n}, DType::F32, {st.m[i].begin(), st.m[i].end()}});
    out.push_back(NamedTensor{prefix + name + ".v", {n}, DType::F32, {st.v[i].begin(), st.v[i].end()}});
  }
}

inline double scalar(const std::map<std::string, const NamedTensor*>& idx, const std::string& name,
                     std::set<std::string>& known, const std::string& origin) {
  known.insert(name);
  return require(idx, name, 1, origin).values[0];
}

inline void load_adam(const std::vector<NamedTensor>& ts, const std::string& prefix, const ParameterSet<float>& ps,
                      AdamState<float>& st, std::set<std::string>& known, const std::string& origin) {
  auto idx = index(ts);
  st.reset(ps);
  st.step = static_cast<std::uint64_t>(scalar(idx, prefix + "step", known, origin));
  st.cfg.lr = scalar(idx, prefix + "lr", known, origin);
  st.cfg.beta1 = scalar(idx, prefix + "beta1", known, origin);
  st.cfg.beta2 = scalar(idx, prefix + "beta2", known, origin);
  st.cfg.eps = scalar(idx, prefix + "eps", known, origin);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& name = ps.entries()[i].name;
    for (auto [suffix, buf] : {std::pair{".m", &st.m[i]}, std::pair{".v", &st.v[i]}}) {
      const auto& t = require(idx, prefix + name + suffix, buf->size(), origin);
      for (std::size_t k = 0; k < buf->size(); ++k) (*buf)[k] = static_cast<float>(t.values[k]);
      known.insert(prefix + name + suffix);
    }
  }
}

}  // namespace pqwt_detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::vector<NamedTensor> ts;
  append_params(ts, "G.", ck.G.params());
  append_params(ts, "D.", ck.D.params());
  pqwt_detail::append_adam(ts, "adamG.", ck.G.params(), ck.adam_g);
  pqwt_detail::append_adam(ts, "adamD.", ck.D.params(), ck.adam_d);
  ts.push_back(scalar_tensor("train.step", static_cast<double>(ck.step)));
  ts.push_back(scalar_tensor("train.epoch", static_cast<double>(ck.epoch)));
  ts.push_back(scalar_tensor("train.best_val_ssim", ck.best_val_ssim));
  write_pqwt(path, ts);
}

/// Reads a checkpoint. A generator-only weight file is accepted too: the
/// discriminator and optimizer state are then left freshly constructed.
inline void load_checkpoint(const std::filesystem::path& path, Checkpoint& ck) {
  const auto ts = read_pqwt(path);
  const std::string origin = path.string();
  std::set<std::string> known;
  load_params(ts, "G.", ck.G.params(), known, origin);
  auto idx = pqwt_detail::index(ts);
  if (idx.count("train.step")) {
    load_params(ts, "D.", ck.D.params(), known, origin);
    pqwt_detail::load_adam(ts, "adamG.", ck.G.params(), ck.adam_g, known, origin);
    pqwt_detail::load_adam(ts, "adamD.", ck.D.params(), ck.adam_d, known, origin);
    ck.step = static_cast<std::uint64_t>(pqwt_detail::scalar(idx, "train.step", known, origin));
    ck.epoch = static_cast<std::uint64_t>(pqwt_detail::scalar(idx, "train.epoch", known, origin));
    ck.best_val_ssim = pqwt_detail::scalar(idx, "train.best_val_ssim", known, origin);
  }
  pqwt_detail::reject_unknown(ts, known, {}, origin);
}

inline void save_niqe_model(const std::filesystem::path& path, const NiqeModel& m) {
  m.validate();
  std::vector<NamedTensor> ts;
  const auto k = static_cast<std::uint64_t>(kNiqeFeatureCount);
  ts.push_back(NamedTensor{"niqe.mu", {k}, DType::F64, {m.mu.data(), m.mu.data() + m.mu.size()}});
  NamedTensor s{"niqe.sigma", {k, k}, DType::F64, {}};
  for (int r = 0; r < kNiqeFeatureCount; ++r)
    for (int c = 0; c < kNiqeFeatureCount; ++c) s.values.push_back(m.sigma(r, c));
  ts.push_back(std::move(s));
  ts.push_back(scalar_tensor("niqe.patch_size", m.patch_size));
  ts.push_back(scalar_tensor("niqe.sharpness_threshold", m.sharpness_threshold));
  ts.push_back(scalar_tensor("niqe.patch_count", m.patch_count));
  write_pqwt(path, ts);
}

inline NiqeModel load_niqe_model(const std::filesystem::path& path) {
  const auto ts = read_pqwt(path);
  const std::string origin = path.string();
  auto idx = pqwt_detail::index(ts);
  std::set<std::string> known{"niqe.mu", "niqe.sigma"};
  NiqeModel m;
  const auto& mu = pqwt_detail::require(idx, "niqe.mu", kNiqeFeatureCount, origin);
  const auto& sg = pqwt_detail::require(idx, "niqe.sigma", kNiqeFeatureCount * kNiqeFeatureCount, origin);
  for (int i = 0; i < kNiqeFeatureCount; ++i) m.mu(i) = mu.values[i];
  for (int r = 0; r < kNiqeFeatureCount; ++r)
    for (int c = 0; c < kNiqeFeatureCount; ++c) m.sigma(r, c) = sg.values[r * kNiqeFeatureCount + c];
  m.patch_size = static_cast<int>(pqwt_detail::scalar(idx, "niqe.patch_size", known, origin));
  m.sharpness_threshold = pqwt_detail::scalar(idx, "niqe.sharpness_threshold", known, origin);
  m.patch_count = static_cast<int>(pqwt_detail::scalar(idx, "niqe.patch_count", known, origin));
  pqwt_detail::reject_unknown(ts, known, {}, origin);
  m.validate();
  return m;
}

}  // namespace pocusiq::nn
