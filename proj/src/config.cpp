#include "ucolor/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

#include "ucolor/error.hpp"

namespace ucolor::config {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

ordered_json model_block(const net::ModelConfig& m) {
  return {{"base_width", m.base_width},
          {"levels", m.levels},
          {"attention_reduction", m.attention_reduction},
          {"leaky_slope", m.leaky_slope},
          {"use_hsv", m.use_hsv},
          {"use_lab", m.use_lab},
          {"triplicate_rgb", m.triplicate_rgb},
          {"use_mtgm", m.use_mtgm},
          {"use_cam", m.use_cam},
          {"transmission_patch", m.transmission_patch},
          {"init_std", m.init_std},
          {"output_bias", m.output_bias}};
}

// Collects every problem instead of stopping at the first.
class Reader {
 public:
  std::vector<std::string> errors;

  bool object(const json& j, const std::string& where) {
    if (j.is_object()) return true;
    errors.push_back(where + ": expected an object");
    return false;
  }

  void only(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : obj.items()) {
      bool known = false;
      for (const char* a : allowed) known = known || key == a;
      if (!known) errors.push_back(where + key + ": unknown key");
    }
  }

  template <typename T>
  void get(const json& obj, const std::string& where, const char* key, T& out) {
    auto it = obj.find(key);
    if (it == obj.end()) return;
    const std::string name = where + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) return type_error(name, "a boolean");
      out = it->template get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer() || (it->is_number_integer() && !it->is_number_unsigned() && it->template get<long long>() < 0)) {
        return type_error(name, "a non-negative integer");
      }
      out = it->template get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) return type_error(name, "a number");
      out = it->template get<T>();
    } else {
      if (!it->is_string()) return type_error(name, "a string");
      out = it->template get<std::string>();
    }
  }

  template <typename E, typename Parse>
  void get_enum(const json& obj, const std::string& where, const char* key, E& out, Parse parse) {
    std::string s;
    const std::size_t before = errors.size();
    get(obj, where, key, s);
    if (errors.size() != before || !obj.contains(key)) return;
    try {
      out = parse(s);
    } catch (const Error& e) {
      errors.push_back(where + key + ": " + e.what());
    }
  }

 private:
  void type_error(const std::string& name, const char* expected) { errors.push_back(name + ": expected " + expected); }
};

void read_model(Reader& r, const json& j, const std::string& where, net::ModelConfig& m, bool with_prior) {
  if (!r.object(j, where.substr(0, where.size() - 1))) return;
  if (with_prior) {
    r.only(j, where,
           {"base_width", "levels", "attention_reduction", "leaky_slope", "use_hsv", "use_lab", "triplicate_rgb",
            "use_mtgm", "use_cam", "transmission_patch", "init_std", "output_bias", "prior"});
    r.get_enum(j, where, "prior", m.prior, physics::prior_from_string);
  } else {
    r.only(j, where,
           {"base_width", "levels", "attention_reduction", "leaky_slope", "use_hsv", "use_lab", "triplicate_rgb",
            "use_mtgm", "use_cam", "transmission_patch", "init_std", "output_bias"});
  }
  r.get(j, where, "base_width", m.base_width);
  r.get(j, where, "levels", m.levels);
  r.get(j, where, "attention_reduction", m.attention_reduction);
  r.get(j, where, "leaky_slope", m.leaky_slope);
  r.get(j, where, "use_hsv", m.use_hsv);
  r.get(j, where, "use_lab", m.use_lab);
  r.get(j, where, "triplicate_rgb", m.triplicate_rgb);
  r.get(j, where, "use_mtgm", m.use_mtgm);
  r.get(j, where, "use_cam", m.use_cam);
  r.get(j, where, "transmission_patch", m.transmission_patch);
  r.get(j, where, "init_std", m.init_std);
  r.get(j, where, "output_bias", m.output_bias);
}

struct Parsed {
  RunConfig cfg;
  std::vector<std::string> errors;
};

Parsed read(const std::string& text) {
  Parsed out;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    out.errors.push_back(std::string("malformed JSON: ") + e.what());
    return out;
  }
  Reader r;
  RunConfig& c = out.cfg;
  if (r.object(j, "config")) {
    r.only(j, "", {"seed", "prior", "model", "train", "paths"});
    r.get(j, "", "seed", c.seed);
    r.get_enum(j, "", "prior", c.model.prior, physics::prior_from_string);
    if (j.contains("model")) read_model(r, j["model"], "model.", c.model, false);
    if (j.contains("train") && r.object(j["train"], "train")) {
      const json& t = j["train"];
      r.only(t, "train.",
             {"learning_rate", "batch_size", "patch", "lambda", "recon_loss", "reduction", "use_perceptual", "steps",
              "extractor_seed"});
      r.get(t, "train.", "learning_rate", c.train.learning_rate);
      r.get(t, "train.", "batch_size", c.train.batch_size);
      r.get(t, "train.", "patch", c.train.patch);
      r.get(t, "train.", "lambda", c.train.lambda);
      r.get_enum(t, "train.", "recon_loss", c.train.recon_loss, train::recon_loss_from_string);
      r.get_enum(t, "train.", "reduction", c.train.reduction, train::reduction_from_string);
      r.get(t, "train.", "use_perceptual", c.train.use_perceptual);
      r.get(t, "train.", "steps", c.train.steps);
      r.get(t, "train.", "extractor_seed", c.train.extractor_seed);
    }
    if (j.contains("paths") && r.object(j["paths"], "paths")) {
      const json& p = j["paths"];
      r.only(p, "paths.", {"manifest", "weights", "output", "trace"});
      r.get(p, "paths.", "manifest", c.paths.manifest);
      r.get(p, "paths.", "weights", c.paths.weights);
      r.get(p, "paths.", "output", c.paths.output);
      r.get(p, "paths.", "trace", c.paths.trace);
    }
  }
  c.train.seed = c.seed;
  out.errors = std::move(r.errors);
  // Range checks only make sense once every value has the right type.
  if (out.errors.empty()) {
    for (const auto& v : c.model.violations()) out.errors.push_back(v);
    for (const auto& v : c.train.violations()) out.errors.push_back(v);
    if (c.model.levels >= 1 && c.model.levels < 16) {
      const std::size_t mult = std::size_t{1} << (c.model.levels - 1);
      if (c.train.patch % mult != 0) {
        out.errors.push_back("train.patch must be a multiple of " + std::to_string(mult) + " for " +
                             std::to_string(c.model.levels) + " levels");
      }
    }
  }
  return out;
}

}  // namespace

std::string dump(const RunConfig& cfg) {
  const auto& t = cfg.train;
  ordered_json j;
  j["seed"] = cfg.seed;
  j["prior"] = physics::to_string(cfg.model.prior);
  j["model"] = model_block(cfg.model);
  j["train"] = {{"learning_rate", t.learning_rate},
                {"batch_size", t.batch_size},
                {"patch", t.patch},
                {"lambda", t.lambda},
                {"recon_loss", train::to_string(t.recon_loss)},
                {"reduction", train::to_string(t.reduction)},
                {"use_perceptual", t.use_perceptual},
                {"steps", t.steps},
                {"extractor_seed", t.extractor_seed}};
  j["paths"] = {{"manifest", cfg.paths.manifest},
                {"weights", cfg.paths.weights},
                {"output", cfg.paths.output},
                {"trace", cfg.paths.trace}};
  return j.dump(2) + "\n";
}

std::vector<std::string> check(const std::string& json_text) { return read(json_text).errors; }

RunConfig parse(const std::string& json_text) {
  Parsed p = read(json_text);
  if (!p.errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : p.errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  return p.cfg;
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string model_json(const net::ModelConfig& m) {
  ordered_json j = model_block(m);
  j["prior"] = physics::to_string(m.prior);
  return j.dump();
}

net::ModelConfig parse_model_json(const std::string& json_text) {
  net::ModelConfig m;
  Reader r;
  try {
    read_model(r, json::parse(json_text), "model.", m, true);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("weights file: malformed config echo: ") + e.what());
  }
  if (r.errors.empty()) r.errors = m.violations();
  if (!r.errors.empty()) {
    std::string msg = "weights file: invalid config echo:";
    for (const auto& e : r.errors) msg += "\n  " + e;
    throw FormatError(msg);
  }
  return m;
}

}  // namespace ucolor::config
