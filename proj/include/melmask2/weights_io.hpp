#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "melmask2/errors.hpp"
#include "melmask2/nn.hpp"

namespace melmask2 {

// Container: magic "MSE2", u16 version, length-prefixed JSON layer table,
// then per-tensor records (length-prefixed name, u8 rank, u32 dims, raw
// float32 little-endian payload) until end of file.
inline constexpr char kWeightMagic[4] = {'M', 'S', 'E', '2'};
inline constexpr std::uint16_t kWeightVersion = 1;

namespace weights_detail {

inline const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kTConv: return "tconv";
    case LayerKind::kBatchNorm: return "batchnorm";
    case LayerKind::kGru: return "gru";
    case LayerKind::kReshape: return "reshape";
    case LayerKind::kConcatSkip: return "concat-skip";
    case LayerKind::kActivation: return "activation";
  }
  return "conv";
}

inline LayerKind kind_from(const std::string& s) {
  if (s == "conv") return LayerKind::kConv;
  if (s == "tconv") return LayerKind::kTConv;
  if (s == "batchnorm") return LayerKind::kBatchNorm;
  if (s == "gru") return LayerKind::kGru;
  if (s == "reshape") return LayerKind::kReshape;
  if (s == "concat-skip") return LayerKind::kConcatSkip;
  if (s == "activation") return LayerKind::kActivation;
  throw FormatError("unknown layer kind: " + s);
}

template <typename T>
void write_u(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i)
    b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T read_u(std::istream& in, std::size_t& off) {
  unsigned char b[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(T)))
    throw FormatError("truncated weight file", off);
  off += sizeof(T);
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
  return v;
}

inline nlohmann::json layer_to_json(const LayerSpec& l) {
  nlohmann::json j;
  j["kind"] = kind_name(l.kind);
  j["name"] = l.name;
  j["in_ch"] = l.in_ch;
  j["out_ch"] = l.out_ch;
  j["kernel"] = l.kernel;
  j["stride"] = l.stride;
  j["input_size"] = l.input_size;
  j["units"] = l.units;
  j["reshape"] = l.reshape == ReshapeMode::kFlatten ? "flatten" : "unflatten";
  j["reshape_ch"] = l.reshape_ch;
  j["reshape_bands"] = l.reshape_bands;
  j["skip_source"] = l.skip_source;
  j["act"] = l.act == Activation::kRelu ? "relu" : "sigmoid";
  return j;
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
  LayerSpec l;
  l.kind = kind_from(j.at("kind").get<std::string>());
  l.name = j.at("name").get<std::string>();
  l.in_ch = j.at("in_ch").get<int>();
  l.out_ch = j.at("out_ch").get<int>();
  l.kernel = j.at("kernel").get<int>();
  l.stride = j.at("stride").get<int>();
  l.input_size = j.at("input_size").get<int>();
  l.units = j.at("units").get<int>();
  l.reshape = j.at("reshape").get<std::string>() == "flatten"
                  ? ReshapeMode::kFlatten
                  : ReshapeMode::kUnflatten;
  l.reshape_ch = j.at("reshape_ch").get<int>();
  l.reshape_bands = j.at("reshape_bands").get<int>();
  l.skip_source = j.at("skip_source").get<int>();
  l.act = j.at("act").get<std::string>() == "relu" ? Activation::kRelu
                                                   : Activation::kSigmoid;
  return l;
}

}  // namespace weights_detail

template <typename T>
void save_weights(const ModelGraph<T>& g, const std::string& path) {
  using namespace weights_detail;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path + " for writing");

  out.write(kWeightMagic, 4);
  write_u<std::uint16_t>(out, kWeightVersion);

  nlohmann::json meta;
  meta["stage"] = g.stage;
  meta["in_bands"] = g.in_bands;
  meta["in_channels"] = g.in_channels;
  meta["width_mult"] = g.width_mult;
  meta["weight_order"] = g.weight_order;
  meta["non_trainable"] =
      std::vector<std::string>(g.non_trainable.begin(), g.non_trainable.end());
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerSpec& l : g.layers) layers.push_back(layer_to_json(l));
  meta["layers"] = layers;
  const std::string blob = meta.dump();
  write_u<std::uint32_t>(out, static_cast<std::uint32_t>(blob.size()));
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));

  for (const std::string& name : g.weight_order) {
    const Tensor<T>& w = g.weight(name);
    write_u<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u<std::uint8_t>(out, static_cast<std::uint8_t>(w.rank()));
    for (int d = 0; d < w.rank(); ++d)
      write_u<std::uint32_t>(out, static_cast<std::uint32_t>(w.dim(d)));
    for (std::size_t i = 0; i < w.size(); ++i) {
      const float f = static_cast<float>(w[i]);
      std::uint32_t u;
      std::memcpy(&u, &f, sizeof(u));
      write_u<std::uint32_t>(out, u);
    }
  }
  if (!out) throw FormatError("write failed for " + path);
}

template <typename T = float>
ModelGraph<T> load_weights(const std::string& path) {
  using namespace weights_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::size_t off = 0;

  char magic[4];
  if (!in.read(magic, 4)) throw FormatError("truncated weight file", 0);
  off += 4;
  if (std::memcmp(magic, kWeightMagic, 4) != 0)
    throw FormatError("bad magic in " + path, 0);
  const auto version = read_u<std::uint16_t>(in, off);
  if (version != kWeightVersion)
    throw FormatError("unsupported weight file version " + std::to_string(version),
                      4);

  const auto blob_len = read_u<std::uint32_t>(in, off);
  std::string blob(blob_len, '\0');
  if (!in.read(blob.data(), blob_len)) throw FormatError("truncated layer table", off);
  off += blob_len;

  ModelGraph<T> g;
  try {
    const nlohmann::json meta = nlohmann::json::parse(blob);
    g.stage = meta.at("stage").get<int>();
    g.in_bands = meta.at("in_bands").get<int>();
    g.in_channels = meta.at("in_channels").get<int>();
    g.width_mult = meta.value("width_mult", 1);
    g.weight_order = meta.at("weight_order").get<std::vector<std::string>>();
    for (const auto& n : meta.at("non_trainable"))
      g.non_trainable.insert(n.get<std::string>());
    for (const auto& jl : meta.at("layers"))
      g.layers.push_back(layer_from_json(jl));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad layer table: ") + e.what(), off);
  }

  while (in.peek() != EOF) {
    const auto name_len = read_u<std::uint32_t>(in, off);
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len))
      throw FormatError("truncated tensor name", off);
    off += name_len;
    const auto rank = read_u<std::uint8_t>(in, off);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(read_u<std::uint32_t>(in, off));
    Tensor<T> w(shape);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const auto u = read_u<std::uint32_t>(in, off);
      float f;
      std::memcpy(&f, &u, sizeof(f));
      w[i] = static_cast<T>(f);
    }
    if (g.weights.count(name)) throw FormatError("duplicate tensor " + name, off);
    g.weights[name] = std::move(w);
  }

  for (const std::string& name : g.weight_order)
    if (!g.weights.count(name))
      throw FormatError("missing tensor " + name + " in " + path, off);
  if (g.weights.size() != g.weight_order.size())
    throw FormatError("unexpected extra tensors in " + path, off);
  return g;
}

}  // namespace melmask2
