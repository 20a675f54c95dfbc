#include "umafd/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "umafd/errors.hpp"

namespace umafd {

void TrainConfig::validate() const {
  if (!(tau > 0.5 && tau <= 1.0)) throw ConfigError("tau must lie in (0.5, 1]");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor < 1.0)) throw ConfigError("lr_decay_factor must lie in (0, 1)");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(base_lr >= 0.0)) throw ConfigError("base_lr must be >= 0");
  if (!(margin > 0.0)) throw ConfigError("margin must be > 0");
  if (xbm_capacity == 0) throw ConfigError("xbm_capacity must be > 0");
  if (!(grl_lambda > 0.0)) throw ConfigError("grl_lambda must be > 0");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
  if (!uses(LossTerm::Cls)) throw ConfigError("the cls loss cannot be disabled");
  LossWeights{weight_mode, lambdas}.validate();
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
  if (epoch >= cfg.epochs) {
    throw ConfigError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + ")");
  }
  return epoch < cfg.lr_decay_epoch ? cfg.base_lr : cfg.base_lr * cfg.lr_decay_factor;
}

void RunConfig::set_seed(std::uint64_t seed) {
  synth.seed = seed;
  train.seed = seed;
}

void RunConfig::validate() const {
  synth.validate();
  backbone.validate();
  train.validate();
  if (train.uses(LossTerm::Bridge) && !backbone.idm_enabled) {
    throw ConfigError("the bridge loss requires idm_enabled=true");
  }
}

bool RunConfig::operator==(const RunConfig& o) const { return echo_run_config(*this) == echo_run_config(o); }

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not a number");
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("config key '" + key + "': '" + v + "' is not a non-negative integer");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

struct Field {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field size_field(std::string key, T RunConfig::*section, std::size_t T::*member) {
  return {key, [key, section, member](RunConfig& c, const std::string& v) { (c.*section).*member = parse_uint(key, v); },
          [section, member](const RunConfig& c) { return std::to_string((c.*section).*member); }};
}

template <typename T>
Field double_field(std::string key, T RunConfig::*section, double T::*member) {
  return {key, [key, section, member](RunConfig& c, const std::string& v) { (c.*section).*member = parse_double(key, v); },
          [section, member](const RunConfig& c) { return format_double((c.*section).*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"seed", [](RunConfig& c, const std::string& v) { c.set_seed(parse_uint("seed", v)); },
                 [](const RunConfig& c) { return std::to_string(c.train.seed); }});
    // dataset / synthetic generator
    f.push_back(size_field("n_train_pairs", &RunConfig::synth, &synth::SynthConfig::n_train_pairs));
    f.push_back(size_field("n_test_depth", &RunConfig::synth, &synth::SynthConfig::n_test_depth));
    f.push_back(size_field("frames", &RunConfig::synth, &synth::SynthConfig::frames));
    f.push_back(size_field("height", &RunConfig::synth, &synth::SynthConfig::height));
    f.push_back(size_field("width", &RunConfig::synth, &synth::SynthConfig::width));
    f.push_back(double_field("noise_level", &RunConfig::synth, &synth::SynthConfig::noise_level));
    // backbone
    f.push_back(size_field("stage1_channels", &RunConfig::backbone, &BackboneConfig::stage1_channels));
    f.push_back(size_field("embedding_dim", &RunConfig::backbone, &BackboneConfig::embedding_dim));
    f.push_back(size_field("n_stages", &RunConfig::backbone, &BackboneConfig::n_stages));
    f.push_back({"idm_enabled",
                 [](RunConfig& c, const std::string& v) { c.backbone.idm_enabled = parse_bool("idm_enabled", v); },
                 [](const RunConfig& c) { return std::string(c.backbone.idm_enabled ? "true" : "false"); }});
    // training
    f.push_back(size_field("epochs", &RunConfig::train, &TrainConfig::epochs));
    f.push_back(double_field("base_lr", &RunConfig::train, &TrainConfig::base_lr));
    f.push_back(size_field("lr_decay_epoch", &RunConfig::train, &TrainConfig::lr_decay_epoch));
    f.push_back(double_field("lr_decay_factor", &RunConfig::train, &TrainConfig::lr_decay_factor));
    f.push_back(double_field("momentum", &RunConfig::train, &TrainConfig::momentum));
    f.push_back(double_field("tau", &RunConfig::train, &TrainConfig::tau));
    f.push_back(double_field("margin", &RunConfig::train, &TrainConfig::margin));
    f.push_back(size_field("xbm_capacity", &RunConfig::train, &TrainConfig::xbm_capacity));
    f.push_back({"weight_mode",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "fixed") {
                     c.train.weight_mode = WeightMode::Fixed;
                   } else if (v == "adaptive") {
                     c.train.weight_mode = WeightMode::Adaptive;
                   } else {
                     throw ConfigError("config key 'weight_mode': expected fixed or adaptive, got '" + v + "'");
                   }
                 },
                 [](const RunConfig& c) {
                   return std::string(c.train.weight_mode == WeightMode::Fixed ? "fixed" : "adaptive");
                 }});
    f.push_back({"enabled_losses",
                 [](RunConfig& c, const std::string& v) {
                   c.train.enabled.fill(false);
                   for (const auto& name : split(v, ',')) {
                     if (name.empty()) continue;
                     const auto term = loss_term_from_name(name);
                     if (!term) throw ConfigError("config key 'enabled_losses': unknown loss '" + name + "'");
                     c.train.enabled[static_cast<std::size_t>(*term)] = true;
                   }
                 },
                 [](const RunConfig& c) {
                   std::string out;
                   for (std::size_t i = 0; i < kLossTerms; ++i) {
                     if (!c.train.enabled[i]) continue;
                     if (!out.empty()) out += ',';
                     out += kLossNames[i];
                   }
                   return out;
                 }});
    f.push_back({"lambdas",
                 [](RunConfig& c, const std::string& v) {
                   const auto parts = split(v, ',');
                   if (parts.size() != kLossTerms) throw ConfigError("config key 'lambdas': expected 5 values");
                   for (std::size_t i = 0; i < kLossTerms; ++i) c.train.lambdas[i] = parse_double("lambdas", parts[i]);
                 },
                 [](const RunConfig& c) {
                   std::string out;
                   for (std::size_t i = 0; i < kLossTerms; ++i) {
                     if (i) out += ',';
                     out += format_double(c.train.lambdas[i]);
                   }
                   return out;
                 }});
    f.push_back(double_field("grl_lambda", &RunConfig::train, &TrainConfig::grl_lambda));
    f.push_back(double_field("val_fraction", &RunConfig::train, &TrainConfig::val_fraction));
    f.push_back({"supervised_depth",
                 [](RunConfig& c, const std::string& v) { c.train.supervised_depth = parse_bool("supervised_depth", v); },
                 [](const RunConfig& c) { return std::string(c.train.supervised_depth ? "true" : "false"); }});
    return f;
  }();
  return table;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool known = false;
    for (const auto& f : fields()) {
      if (f.key == key) {
        f.set(cfg, value);
        known = true;
        break;
      }
    }
    if (!known) throw ConfigError("unknown config key '" + key + "'");
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string echo_run_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + "=" + f.get(cfg) + "\n";
  return out;
}

}  // namespace umafd
