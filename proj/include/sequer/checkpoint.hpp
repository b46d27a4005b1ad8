#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include <json.hpp>

#include "sequer/error.hpp"
#include "sequer/transducer.hpp"

namespace sequer {

// Layout: 8-byte magic, u64 header length, JSON header, then each tensor in
// header order as little-endian row-major scalars.
inline constexpr char kCheckpointMagic[8] = {'S', 'E', 'Q', 'C', 'K', 'P', 'T', '1'};

namespace detail {

template <class U>
void put_le(std::ostream& out, U v) {
  static_assert(std::is_trivially_copyable_v<U>);
  unsigned char bytes[sizeof(U)];
  std::memcpy(bytes, &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

template <class U>
U get_le(std::istream& in) {
  unsigned char bytes[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(U))) throw Error(Errc::CorruptCheckpoint, "truncated checkpoint");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(U));
  U v;
  std::memcpy(&v, bytes, sizeof(U));
  return v;
}

template <class T>
constexpr const char* scalar_name() {
  return std::is_same_v<T, float> ? "f32" : "f64";
}

}  // namespace detail

template <class T>
void save_checkpoint(std::ostream& out, const Transducer<T>& model, const nlohmann::json& extra = {}) {
  nlohmann::json header;
  header["format"] = 1;
  header["scalar"] = detail::scalar_name<T>();
  header["config"] = config_to_json(model.config());
  if (!extra.is_null()) header["meta"] = extra;
  auto tensors = nlohmann::json::array();
  for (const auto& p : model.params()) tensors.push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  header["tensors"] = tensors;
  const std::string text = header.dump();
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : model.params()) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) detail::put_le<T>(out, p.value.data()[i]);
  }
  if (!out) throw Error(Errc::Io, "checkpoint write failed");
}

template <class T>
void save_checkpoint(const std::filesystem::path& path, const Transducer<T>& model, const nlohmann::json& extra = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  save_checkpoint(out, model, extra);
}

struct CheckpointHeader {
  ModelConfig config;
  std::string scalar;
  nlohmann::json meta;
  nlohmann::json tensors;
};

inline CheckpointHeader read_checkpoint_header(std::istream& in) {
  char magic[sizeof kCheckpointMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw Error(Errc::CorruptCheckpoint, "bad checkpoint magic");
  }
  const auto len = detail::get_le<std::uint64_t>(in);
  if (len > (1u << 26)) throw Error(Errc::CorruptCheckpoint, "implausible header length");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw Error(Errc::CorruptCheckpoint, "truncated header");
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format").get<int>() != 1) throw Error(Errc::CorruptCheckpoint, "unsupported checkpoint format");
    CheckpointHeader h;
    h.config = config_from_json(j.at("config"));
    h.scalar = j.at("scalar").get<std::string>();
    if (h.scalar != "f32" && h.scalar != "f64") throw Error(Errc::CorruptCheckpoint, "unknown scalar type " + h.scalar);
    h.meta = j.value("meta", nlohmann::json{});
    h.tensors = j.at("tensors");
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::CorruptCheckpoint, std::string("bad checkpoint header: ") + e.what());
  }
}

/// Loads into scalar type T, converting when the file holds the other width.
template <class T>
Transducer<T> load_checkpoint(std::istream& in, nlohmann::json* meta = nullptr) {
  const auto h = read_checkpoint_header(in);
  Transducer<T> model(h.config, 0);
  auto& params = model.params();
  if (h.tensors.size() != params.size()) throw Error(Errc::CorruptCheckpoint, "tensor count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& t = h.tensors[k];
    auto& p = params[k];
    if (t.at("name").get<std::string>() != p.name || t.at("rows").get<Eigen::Index>() != p.value.rows() ||
        t.at("cols").get<Eigen::Index>() != p.value.cols()) {
      throw Error(Errc::CorruptCheckpoint, "tensor " + p.name + " does not match the configuration");
    }
  }
  for (auto& p : params) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      p.value.data()[i] = h.scalar == "f32" ? static_cast<T>(detail::get_le<float>(in))
                                            : static_cast<T>(detail::get_le<double>(in));
      if (!std::isfinite(p.value.data()[i])) throw Error(Errc::CorruptCheckpoint, "non-finite weight in " + p.name);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error(Errc::CorruptCheckpoint, "trailing bytes");
  if (meta) *meta = h.meta;
  return model;
}

template <class T>
Transducer<T> load_checkpoint(const std::filesystem::path& path, nlohmann::json* meta = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  return load_checkpoint<T>(in, meta);
}

}  // namespace sequer
