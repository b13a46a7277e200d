#include "w2s/serialize.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "w2s/errors.hpp"

namespace w2s {

using nlohmann::json;

std::string hex_double(double v) {
  char buf[64];
  const bool negative = std::signbit(v);
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, negative ? -v : v, std::chars_format::hex);
  if (ec != std::errc()) throw std::runtime_error("hex_double: formatting failed");
  std::string out = negative ? "-0x" : "0x";
  out.append(buf, ptr);
  return out;
}

double parse_hex_double(std::string_view text) {
  bool negative = false;
  if (!text.empty() && (text.front() == '-' || text.front() == '+')) {
    negative = text.front() == '-';
    text.remove_prefix(1);
  }
  if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) text.remove_prefix(2);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v, std::chars_format::hex);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument("invalid hex float '" + std::string(text) + "'");
  }
  return negative ? -v : v;
}

namespace {

json hex_array(std::span<const double> values) {
  json arr = json::array();
  for (double v : values) arr.push_back(hex_double(v));
  return arr;
}

Vector from_hex_array(const json& arr) {
  Vector out;
  out.reserve(arr.size());
  for (const auto& v : arr) out.push_back(parse_hex_double(v.get<std::string>()));
  return out;
}

}  // namespace

json mlp_to_json(const Mlp& net) {
  json doc;
  doc["format"] = "w2s-mlp";
  doc["version"] = 1;
  doc["input_dim"] = net.input_dim();
  doc["output_dim"] = net.output_dim();
  std::vector<std::size_t> dims{net.input_dim()};
  for (const auto& layer : net.layers()) dims.push_back(layer.out_dim());
  doc["dims"] = dims;
  json layers = json::array();
  for (const auto& layer : net.layers()) {
    layers.push_back({
        {"rows", layer.weight.rows()},
        {"cols", layer.weight.cols()},
        {"activation", std::string(to_string(layer.activation))},
        {"weights", hex_array(layer.weight.data())},
        {"biases", hex_array(layer.bias)},
    });
  }
  doc["layers"] = std::move(layers);
  return doc;
}

Mlp mlp_from_json(const json& doc) {
  if (doc.value("format", "") != "w2s-mlp") throw std::invalid_argument("mlp document: unexpected format tag");
  if (doc.value("version", 0) != 1) throw std::invalid_argument("mlp document: unsupported version");
  std::vector<Layer> layers;
  for (const auto& l : doc.at("layers")) {
    Layer layer;
    const auto rows = l.at("rows").get<std::size_t>();
    const auto cols = l.at("cols").get<std::size_t>();
    layer.weight = Matrix(rows, cols, from_hex_array(l.at("weights")));
    layer.bias = from_hex_array(l.at("biases"));
    layer.activation = parse_activation(l.at("activation").get<std::string>());
    layers.push_back(std::move(layer));
  }
  Mlp net(std::move(layers));
  if (net.input_dim() != doc.at("input_dim").get<std::size_t>() ||
      net.output_dim() != doc.at("output_dim").get<std::size_t>()) {
    throw DimensionError("mlp document: declared dims do not match layers");
  }
  return net;
}

json head_to_json(const Head& head) {
  return json{
      {"kind", std::string(to_string(head.kind))},
      {"weights", hex_array(head.weights)},
      {"bias", hex_double(head.bias)},
      {"bias_enabled", head.bias_enabled},
      {"origin", std::string(to_string(head.origin))},
  };
}

Head head_from_json(const json& doc) {
  Head head;
  head.kind = parse_head_kind(doc.at("kind").get<std::string>());
  head.weights = from_hex_array(doc.at("weights"));
  head.bias = parse_hex_double(doc.at("bias").get<std::string>());
  head.bias_enabled = doc.at("bias_enabled").get<bool>();
  head.origin = parse_head_origin(doc.value("origin", "manual"));
  return head;
}

void save_mlp(const Mlp& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << mlp_to_json(net).dump(1) << "\n";
}

Mlp load_mlp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return mlp_from_json(json::parse(in));
}

}  // namespace w2s
