#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include <json.hpp>

#include "w2s/head.hpp"
#include "w2s/mlp.hpp"

namespace w2s {

// Exact text form of a double, e.g. "0x1.8p+1". Locale independent.
std::string hex_double(double v);
double parse_hex_double(std::string_view text);

// {"format": "w2s-mlp", "version": 1, "input_dim", "output_dim", "dims",
//  "layers": [{"rows", "cols", "activation", "weights", "biases"}]}
// with every parameter stored as a hex float string (row-major weights).
nlohmann::json mlp_to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& doc);

// {"kind", "weights", "bias", "bias_enabled", "origin"}, hex floats.
nlohmann::json head_to_json(const Head& head);
Head head_from_json(const nlohmann::json& doc);

void save_mlp(const Mlp& net, const std::filesystem::path& path);
Mlp load_mlp(const std::filesystem::path& path);

}  // namespace w2s
