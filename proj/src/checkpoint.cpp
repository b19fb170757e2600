#include "hydrocorr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "hydrocorr/error.hpp"

namespace hydrocorr {

namespace {

using nlohmann::json;

std::string stem_of(const std::string& path) {
  std::string s = path;
  if (s.size() > 5 && s.ends_with(".json")) return s.substr(0, s.size() - 5);
  if (s.size() > 4 && s.ends_with(".bin")) return s.substr(0, s.size() - 4);
  return s;
}

ad::LayerKind kind_from(const std::string& s) {
  if (s == "conv") return ad::LayerKind::conv;
  if (s == "transposed_conv") return ad::LayerKind::transposed_conv;
  if (s == "dense") return ad::LayerKind::dense;
  throw InvalidInput("checkpoint: unknown layer kind '" + s + "'");
}

void append_f32(std::vector<std::uint8_t>& out, const std::vector<float>& v) {
  const std::size_t base = out.size();
  out.resize(base + v.size() * 4);
  std::memcpy(out.data() + base, v.data(), v.size() * 4);
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::swap(out[base + 4 * i + 0], out[base + 4 * i + 3]);
      std::swap(out[base + 4 * i + 1], out[base + 4 * i + 2]);
    }
}

}  // namespace

void save_checkpoint(const FpgnnModel& model, const ad::AdamState<float>& adam,
                     const std::string& path) {
  const std::string stem = stem_of(path);
  json manifest;
  manifest["format"] = "hydrocorr-checkpoint-v1";
  manifest["input_bands"] = {kBandVV, kBandVH};
  manifest["normalization"] = {
      {"VV", {{"mean", model.vv_stats.mean}, {"std", model.vv_stats.stddev}}},
      {"VH", {{"mean", model.vh_stats.mean}, {"std", model.vh_stats.stddev}}}};
  manifest["trained_height"] = model.trained_height;
  manifest["trained_width"] = model.trained_width;
  manifest["adam"] = {{"step_count", adam.step_count},
                      {"lr", adam.lr},
                      {"beta1", adam.beta1},
                      {"beta2", adam.beta2},
                      {"eps", adam.eps}};

  std::vector<std::uint8_t> blob;
  json layers = json::array();
  for (const auto& l : model.layers) {
    json jl;
    jl["name"] = l.name;
    jl["kind"] = ad::to_string(l.kind);
    jl["constraint"] =
        l.constraint == ad::Constraint::nonnegative ? "nonnegative" : "none";
    jl["weight_shape"] = l.weights.shape();
    jl["bias_shape"] = l.bias.shape();
    jl["weight_offset"] = blob.size();
    append_f32(blob, l.weights.value());
    jl["bias_offset"] = blob.size();
    append_f32(blob, l.bias.value());
    layers.push_back(std::move(jl));
  }
  manifest["layers"] = std::move(layers);

  std::ofstream out(stem + ".json", std::ios::trunc);
  if (!out) throw IoError("cannot write " + stem + ".json");
  out << manifest.dump(2) << "\n";
  std::ofstream bin(stem + ".bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw IoError("cannot write " + stem + ".bin");
  bin.write(reinterpret_cast<const char*>(blob.data()),
            static_cast<std::streamsize>(blob.size()));
  if (!bin) throw IoError("write failed for " + stem + ".bin");
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string stem = stem_of(path);
  json manifest;
  try {
    std::ifstream in(stem + ".json");
    if (!in) throw IoError("cannot open " + stem + ".json");
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidInput("corrupted checkpoint manifest: " +
                       std::string(e.what()));
  }

  std::ifstream bin(stem + ".bin", std::ios::binary);
  if (!bin) throw IoError("cannot open " + stem + ".bin");
  std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(bin)),
                                 std::istreambuf_iterator<char>());

  Checkpoint ck;
  try {
    if (manifest.at("format").get<std::string>() != "hydrocorr-checkpoint-v1")
      throw InvalidInput("checkpoint: unsupported format");
    ck.model.vv_stats = {manifest["normalization"]["VV"]["mean"].get<double>(),
                         manifest["normalization"]["VV"]["std"].get<double>()};
    ck.model.vh_stats = {manifest["normalization"]["VH"]["mean"].get<double>(),
                         manifest["normalization"]["VH"]["std"].get<double>()};
    ck.model.trained_height = manifest.value("trained_height", 0);
    ck.model.trained_width = manifest.value("trained_width", 0);
    ck.adam.step_count = manifest["adam"]["step_count"].get<long>();
    ck.adam.lr = manifest["adam"]["lr"].get<double>();
    ck.adam.beta1 = manifest["adam"]["beta1"].get<double>();
    ck.adam.beta2 = manifest["adam"]["beta2"].get<double>();
    ck.adam.eps = manifest["adam"]["eps"].get<double>();

    for (const auto& jl : manifest.at("layers")) {
      ad::LayerParams<float> l;
      l.name = jl.at("name").get<std::string>();
      l.kind = kind_from(jl.at("kind").get<std::string>());
      l.constraint = jl.at("constraint").get<std::string>() == "nonnegative"
                         ? ad::Constraint::nonnegative
                         : ad::Constraint::none;
      const auto wshape = jl.at("weight_shape").get<std::vector<int>>();
      const auto bshape = jl.at("bias_shape").get<std::vector<int>>();
      std::int64_t wn = 1, bn = 1;
      for (int d : wshape) wn *= d;
      for (int d : bshape) bn *= d;
      const std::size_t woff = jl.at("weight_offset").get<std::size_t>();
      const std::size_t boff = jl.at("bias_offset").get<std::size_t>();
      if (woff + wn * 4 > blob.size() || boff + bn * 4 > blob.size())
        throw InvalidInput("corrupted checkpoint: blob too short");
      std::vector<float> w(wn), b(bn);
      std::memcpy(w.data(), blob.data() + woff, wn * 4);
      std::memcpy(b.data(), blob.data() + boff, bn * 4);
      if constexpr (std::endian::native == std::endian::big) {
        auto bswap = [](std::vector<float>& v) {
          auto* p = reinterpret_cast<std::uint8_t*>(v.data());
          for (std::size_t i = 0; i < v.size(); ++i) {
            std::swap(p[4 * i + 0], p[4 * i + 3]);
            std::swap(p[4 * i + 1], p[4 * i + 2]);
          }
        };
        bswap(w);
        bswap(b);
      }
      l.weights = ad::Tensor<float>::leaf(wshape, std::move(w), true);
      l.bias = ad::Tensor<float>::leaf(bshape, std::move(b), true);
      ck.model.layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw InvalidInput("corrupted checkpoint manifest: " +
                       std::string(e.what()));
  }
  if (ck.model.layers.empty())
    throw InvalidInput("corrupted checkpoint: no layers");
  return ck;
}

}  // namespace hydrocorr
