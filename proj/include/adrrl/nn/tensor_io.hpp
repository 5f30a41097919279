#pragma once

// Named-tensor checkpoint format (all integers little-endian):
//   "ADRL" | u32 version | { u32 name_len | name | u32 rank | u64 dims[rank] | f64 payload } ...
// Tensors are read until end of stream. Payload is stored in the order of
// `Tensor::data` (column-major for matrices).

#include "adrrl/nn/mlp.hpp"

#include <bit>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace adrrl::nn {

inline constexpr char kCheckpointMagic[4] = {'A', 'D', 'R', 'L'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Tensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;

  std::uint64_t numel() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

using TensorList = std::vector<Tensor>;

namespace detail {

template <class U>
void put_le(std::ostream& os, U value) {
  char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  os.write(bytes, sizeof(U));
}

template <class U>
bool get_le(std::istream& is, U& value) {
  unsigned char bytes[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U))) return false;
  value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return true;
}

}  // namespace detail

inline void write_tensors(std::ostream& os, const TensorList& tensors) {
  os.write(kCheckpointMagic, 4);
  detail::put_le<std::uint32_t>(os, kCheckpointVersion);
  for (const auto& t : tensors) {
    if (t.numel() != t.data.size()) throw FormatError("tensor " + t.name + ": dims do not match payload");
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.name.size()));
    os.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.dims.size()));
    for (auto d : t.dims) detail::put_le<std::uint64_t>(os, d);
    for (double x : t.data) detail::put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(x));
  }
  if (!os) throw FormatError("checkpoint: write failed");
}

inline TensorList read_tensors(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::string_view(magic, 4) != std::string_view(kCheckpointMagic, 4))
    throw FormatError("checkpoint: bad magic");
  std::uint32_t version = 0;
  if (!detail::get_le(is, version)) throw FormatError("checkpoint: truncated header");
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported format version " + std::to_string(version));
  TensorList out;
  std::uint32_t name_len = 0;
  while (detail::get_le(is, name_len)) {
    Tensor t;
    t.name.resize(name_len);
    std::uint32_t rank = 0;
    if (!is.read(t.name.data(), name_len) || !detail::get_le(is, rank))
      throw FormatError("checkpoint: truncated tensor header");
    t.dims.resize(rank);
    for (auto& d : t.dims)
      if (!detail::get_le(is, d)) throw FormatError("checkpoint: truncated dims of " + t.name);
    t.data.resize(t.numel());
    for (auto& x : t.data) {
      std::uint64_t bits = 0;
      if (!detail::get_le(is, bits)) throw FormatError("checkpoint: truncated payload of " + t.name);
      x = std::bit_cast<double>(bits);
    }
    out.push_back(std::move(t));
  }
  return out;
}

inline void save_tensors(const std::string& path, const TensorList& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_tensors(os, tensors);
}

inline TensorList load_tensors(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open checkpoint " + path);
  return read_tensors(is);
}

inline const Tensor& find_tensor(const TensorList& list, std::string_view name) {
  for (const auto& t : list)
    if (t.name == name) return t;
  throw FormatError("checkpoint: missing tensor " + std::string(name));
}

inline bool has_tensor(const TensorList& list, std::string_view name) {
  for (const auto& t : list)
    if (t.name == name) return true;
  return false;
}

inline Tensor make_tensor(std::string name, const Matrix& m) {
  Tensor t{std::move(name), {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, {}};
  t.data.assign(m.data(), m.data() + m.size());
  return t;
}

inline Tensor make_tensor(std::string name, const Vector& v) {
  Tensor t{std::move(name), {static_cast<std::uint64_t>(v.size())}, {}};
  t.data.assign(v.data(), v.data() + v.size());
  return t;
}

inline Tensor make_scalar(std::string name, double x) { return Tensor{std::move(name), {}, {x}}; }

// Arbitrary bytes, one per f64 element.
inline Tensor make_bytes(std::string name, std::string_view bytes) {
  Tensor t{std::move(name), {bytes.size()}, {}};
  for (unsigned char c : bytes) t.data.push_back(static_cast<double>(c));
  return t;
}

inline std::string tensor_bytes(const Tensor& t) {
  std::string s;
  for (double x : t.data) s.push_back(static_cast<char>(static_cast<unsigned char>(x)));
  return s;
}

// 64-bit words split into exact 32-bit halves.
inline Tensor make_words(std::string name, std::span<const std::uint64_t> words) {
  Tensor t{std::move(name), {words.size(), 2}, {}};
  for (auto w : words) t.data.push_back(static_cast<double>(w >> 32));
  for (auto w : words) t.data.push_back(static_cast<double>(w & 0xFFFFFFFFULL));
  return t;
}

inline std::vector<std::uint64_t> tensor_words(const Tensor& t) {
  const std::size_t n = t.data.size() / 2;
  std::vector<std::uint64_t> words(n);
  for (std::size_t i = 0; i < n; ++i)
    words[i] = (static_cast<std::uint64_t>(t.data[i]) << 32) | static_cast<std::uint64_t>(t.data[n + i]);
  return words;
}

inline Vector tensor_vector(const Tensor& t) {
  return Eigen::Map<const Vector>(t.data.data(), static_cast<Eigen::Index>(t.data.size()));
}

inline Matrix tensor_matrix(const Tensor& t) {
  if (t.dims.size() != 2) throw FormatError("tensor " + t.name + " is not rank 2");
  return Eigen::Map<const Matrix>(t.data.data(), static_cast<Eigen::Index>(t.dims[0]),
                                  static_cast<Eigen::Index>(t.dims[1]));
}

inline void append_model(TensorList& out, const std::string& prefix, const MlpModel& m) {
  const auto& spec = m.spec();
  Vector sizes(static_cast<Eigen::Index>(spec.layer_sizes.size()));
  for (std::size_t k = 0; k < spec.layer_sizes.size(); ++k) sizes[static_cast<Eigen::Index>(k)] = spec.layer_sizes[k];
  Vector acts(static_cast<Eigen::Index>(spec.activations.size()));
  for (std::size_t k = 0; k < spec.activations.size(); ++k)
    acts[static_cast<Eigen::Index>(k)] = static_cast<double>(spec.activations[k]);
  out.push_back(make_tensor(prefix + ".layer_sizes", sizes));
  out.push_back(make_tensor(prefix + ".activations", acts));
  out.push_back(make_scalar(prefix + ".skip", spec.skip_connections ? 1.0 : 0.0));
  if (const auto& e = spec.step_embedding) {
    Vector emb(3);
    emb << e->dim, static_cast<double>(e->kind), e->max_steps;
    out.push_back(make_tensor(prefix + ".step_embedding", emb));
  }
  for (const auto& slot : m.slots())
    out.push_back(make_tensor(prefix + "." + slot.name, Matrix(MlpModel::view(m.parameters(), slot))));
}

inline MlpModel read_model(const TensorList& in, const std::string& prefix) {
  MlpSpec spec;
  for (double s : find_tensor(in, prefix + ".layer_sizes").data) spec.layer_sizes.push_back(static_cast<int>(s));
  for (double a : find_tensor(in, prefix + ".activations").data)
    spec.activations.push_back(static_cast<Activation>(static_cast<int>(a)));
  spec.skip_connections = find_tensor(in, prefix + ".skip").data.at(0) != 0.0;
  if (has_tensor(in, prefix + ".step_embedding")) {
    const auto& e = find_tensor(in, prefix + ".step_embedding").data;
    spec.step_embedding = StepEmbedding{static_cast<int>(e.at(0)), static_cast<EmbeddingKind>(static_cast<int>(e.at(1))),
                                        static_cast<int>(e.at(2))};
  }
  MlpModel m(std::move(spec));
  Vector params(m.num_parameters());
  for (const auto& slot : m.slots()) {
    const auto& t = find_tensor(in, prefix + "." + slot.name);
    if (t.data.size() != static_cast<std::size_t>(slot.size()))
      throw FormatError("checkpoint: shape mismatch for " + t.name);
    std::copy(t.data.begin(), t.data.end(), params.data() + slot.offset);
  }
  m.set_parameters(params);
  return m;
}

}  // namespace adrrl::nn
