#include "gnnr/model_io.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>

#include "gnnr/graph_io.hpp"
#include "json_util.hpp"

namespace gnnr {

using detail::json;

namespace {

constexpr int kFormatVersion = 1;

json body_object(const ModelParams& p) {
  json layers = json::array();
  for (const auto& l : p.layers) {
    layers.push_back({{"weight", detail::tensor_to_json(l.weight)},
                      {"bias", detail::tensor_to_json(l.bias)},
                      {"activation", std::string(to_string(l.activation))},
                      {"propagate", l.propagate},
                      {"attention", l.attention.empty() ? json(nullptr)
                                                        : detail::tensor_to_json(l.attention)}});
  }
  return json{{"format_version", kFormatVersion},
              {"aggregator", std::string(to_string(p.aggregator))},
              {"readout", std::string(to_string(p.readout))},
              {"self_loops", p.self_loops},
              {"in_dim", p.in_dim()},
              {"out_dim", p.out_dim()},
              {"layers", std::move(layers)}};
}

ModelParams params_from_object(const json& j) {
  ModelParams p;
  p.aggregator = parse_aggregator(detail::field<std::string>(j, "aggregator"));
  p.readout = parse_readout(detail::field<std::string>(j, "readout"));
  p.self_loops = detail::field<bool>(j, "self_loops");
  const auto it = j.find("layers");
  if (it == j.end() || !it->is_array()) throw ValidationError("layers: expected an array");
  for (const auto& lj : *it) {
    Layer l;
    l.weight = detail::tensor_from_json(lj.at("weight"), "weight");
    l.bias = detail::tensor_from_json(lj.at("bias"), "bias");
    l.activation = parse_activation(detail::field<std::string>(lj, "activation"));
    l.propagate = detail::field<bool>(lj, "propagate");
    if (lj.contains("attention") && !lj["attention"].is_null()) {
      l.attention = detail::tensor_from_json(lj["attention"], "attention");
    }
    p.layers.push_back(std::move(l));
  }
  p.validate();
  if (detail::field<std::size_t>(j, "in_dim") != p.in_dim() ||
      detail::field<std::size_t>(j, "out_dim") != p.out_dim()) {
    throw ValidationError("in_dim/out_dim: do not match the layer shapes");
  }
  return p;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
    throw RuntimeFailure("sha256: digest failed");
  }
  std::string hex;
  hex.reserve(2 * length);
  char buf[3];
  for (unsigned int i = 0; i < length; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

std::string canonical_model_body(const ModelParams& params) { return body_object(params).dump(); }

std::string compute_param_hash(const ModelParams& params) {
  return sha256_hex(canonical_model_body(params));
}

std::string model_to_json(const FrozenModel& model) {
  json j = body_object(model.params());
  j["param_hash"] = model.frozen() ? model.param_hash() : model.current_hash();
  j["frozen"] = model.frozen();
  return j.dump();
}

FrozenModel model_from_json(std::string_view text) {
  json j = detail::parse_json(text);
  if (!j.is_object()) throw ValidationError("model: expected a JSON object");
  const auto stored = detail::field<std::string>(j, "param_hash");
  const bool frozen = detail::field_or<bool>(j, "frozen", true);
  j.erase("param_hash");
  j.erase("frozen");
  const std::string actual = sha256_hex(j.dump());
  if (actual != stored) {
    throw IntegrityError("param_hash mismatch: file claims " + stored + ", content hashes to " + actual);
  }
  ModelParams params = params_from_object(j);
  return frozen ? FrozenModel::freeze(std::move(params)) : FrozenModel::unfrozen(std::move(params));
}

void save_model(const FrozenModel& model, const std::filesystem::path& path) {
  write_text_file(path, model_to_json(model) + "\n");
}

FrozenModel load_model(const std::filesystem::path& path) { return model_from_json(read_text_file(path)); }

}  // namespace gnnr
