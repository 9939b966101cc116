#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "gnnr/model.hpp"

namespace gnnr {

/// Lowercase hex SHA-256 of `bytes`.
std::string sha256_hex(std::string_view bytes);

/// Canonical body: compact JSON with sorted keys and shortest round-trip
/// floats. It holds everything but `param_hash` and `frozen`.
std::string canonical_model_body(const ModelParams& params);

/// sha256_hex(canonical_model_body(params)).
std::string compute_param_hash(const ModelParams& params);

/// The body's fields plus top-level `param_hash` and `frozen`.
std::string model_to_json(const FrozenModel& model);
/// Throws IntegrityError when the stored hash does not describe the body.
FrozenModel model_from_json(std::string_view text);

void save_model(const FrozenModel& model, const std::filesystem::path& path);
FrozenModel load_model(const std::filesystem::path& path);

}  // namespace gnnr
