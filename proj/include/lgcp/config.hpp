#pragma once

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lgcp/correlation.hpp"
#include "lgcp/grid.hpp"
#include "lgcp/hmc.hpp"
#include "lgcp/mincontrast.hpp"
#include "lgcp/posterior.hpp"
#include "lgcp/vb.hpp"

namespace lgcp {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

enum class KeyType { Int, Double, Bool, String, Enum };

struct KeySpec {
  KeyType type;
  std::string default_value;
  std::vector<std::string> choices;  // Enum only
};

inline const std::map<std::string, KeySpec>& config_registry() {
  static const std::map<std::string, KeySpec> registry = {
      {"grid.n", {KeyType::Int, "32", {}}},
      {"domain.x0", {KeyType::Double, "0", {}}},
      {"domain.y0", {KeyType::Double, "0", {}}},
      {"domain.side", {KeyType::Double, "1", {}}},
      {"corr.family", {KeyType::Enum, "power", {"power", "matern"}}},
      {"corr.rho", {KeyType::Double, "20", {}}},
      {"corr.delta", {KeyType::Double, "1", {}}},
      {"corr.phi", {KeyType::Double, "0.02", {}}},
      {"corr.nu", {KeyType::Double, "1", {}}},
      {"truth.mu", {KeyType::Double, "5", {}}},
      {"truth.sigma2", {KeyType::Double, "3.5", {}}},
      {"sim.replicates", {KeyType::Int, "1", {}}},
      {"sim.redraw_field", {KeyType::Bool, "false", {}}},
      {"sim.match_delta", {KeyType::Bool, "true", {}}},
      {"hmc.iterations", {KeyType::Int, "1500", {}}},
      {"hmc.burn_in", {KeyType::Int, "500", {}}},
      {"hmc.thin", {KeyType::Int, "1", {}}},
      {"hmc.epsilon0", {KeyType::Double, "0.005", {}}},
      {"hmc.target_accept", {KeyType::Double, "0.65", {}}},
      {"hmc.l_mean", {KeyType::Double, "100", {}}},
      {"hmc.adapt", {KeyType::Bool, "true", {}}},
      {"hmc.adapt_mass", {KeyType::Bool, "true", {}}},
      {"hmc.mass_gamma", {KeyType::Double, "1", {}}},
      {"hmc.mass_mu", {KeyType::Double, "1", {}}},
      {"hmc.mass_sigma", {KeyType::Double, "1", {}}},
      {"hmc.mass_rho", {KeyType::Double, "1", {}}},
      {"hmc.init_mu", {KeyType::Double, "nan", {}}},
      {"hmc.init_sigma2", {KeyType::Double, "1", {}}},
      {"hmc.init_rho", {KeyType::Double, "nan", {}}},
      {"hmc.mask_likelihood", {KeyType::Bool, "true", {}}},
      {"prior.mu", {KeyType::Enum, "flat", {"flat", "normal"}}},
      {"prior.mu_mean", {KeyType::Double, "0", {}}},
      {"prior.mu_var", {KeyType::Double, "625", {}}},
      {"prior.sigma2", {KeyType::Enum, "flat", {"flat", "invgamma"}}},
      {"prior.sigma2_alpha", {KeyType::Double, "1", {}}},
      {"prior.sigma2_beta", {KeyType::Double, "1", {}}},
      {"vb.max_iterations", {KeyType::Int, "2000", {}}},
      {"vb.tol", {KeyType::Double, "1e-8", {}}},
      {"vb.rho", {KeyType::Double, "0", {}}},  // 0: estimate by minimum contrast
      {"vb.allow_large_grid", {KeyType::Bool, "false", {}}},
      {"vb.draws", {KeyType::Int, "500", {}}},
      {"mincontrast.family", {KeyType::Enum, "rho", {"rho", "rho_delta", "phi", "phi_nu"}}},
      {"mincontrast.fit_sigma2", {KeyType::Bool, "true", {}}},
      {"mincontrast.rmax", {KeyType::Double, "0.25", {}}},
      {"mincontrast.exponent", {KeyType::Double, "0.25", {}}},
      {"mincontrast.grid", {KeyType::Int, "100", {}}},
      {"kfunc.rmax", {KeyType::Double, "0.25", {}}},
      {"kfunc.count", {KeyType::Int, "20", {}}},
      {"ppc.thin", {KeyType::Int, "1", {}}},
      {"study.replicates", {KeyType::Int, "20", {}}},
      {"seed", {KeyType::Int, "1", {}}},
      {"threads", {KeyType::Int, "0", {}}},
      {"out", {KeyType::String, "out", {}}},
  };
  return registry;
}

}  // namespace detail

/// Flat key-value run configuration with a fixed registry: unknown keys and
/// unparsable values are errors, every field is validated before any compute.
class RunConfig {
 public:
  RunConfig() = default;

  void set(const std::string& key, const std::string& value) {
    const auto& registry = detail::config_registry();
    const auto it = registry.find(key);
    if (it == registry.end()) throw ConfigError("unknown configuration key: " + key);
    check_value(key, it->second, value);
    values_[key] = value;
  }

  /// Load `key = value` lines ('#' comments). A .json file is treated as a
  /// run manifest and its "config" object is loaded instead.
  void load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    if (path.extension() == ".json") {
      nlohmann::json manifest = nlohmann::json::parse(in);
      const nlohmann::json& config =
          manifest.contains("config") ? manifest.at("config") : manifest;
      for (const auto& [key, value] : config.items()) set(key, value.get<std::string>());
      return;
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw ConfigError("config line " + std::to_string(line_no) + " is not 'key = value': " +
                          trimmed);
      set(trim(trimmed.substr(0, eq)), trim(trimmed.substr(eq + 1)));
    }
  }

  long get_int(const std::string& key) const { return std::stol(raw(key)); }
  double get_double(const std::string& key) const { return std::stod(raw(key)); }
  bool get_bool(const std::string& key) const {
    const std::string v = raw(key);
    return v == "true" || v == "1" || v == "on";
  }
  std::string get_string(const std::string& key) const { return raw(key); }

  /// All keys with their effective (set or default) values.
  std::map<std::string, std::string> resolved() const {
    std::map<std::string, std::string> out;
    for (const auto& [key, spec] : detail::config_registry())
      out[key] = values_.count(key) ? values_.at(key) : spec.default_value;
    return out;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [key, value] : resolved()) j[key] = value;
    return j;
  }

 private:
  std::string raw(const std::string& key) const {
    const auto it = values_.find(key);
    if (it != values_.end()) return it->second;
    const auto& registry = detail::config_registry();
    const auto spec = registry.find(key);
    if (spec == registry.end()) throw ConfigError("unknown configuration key: " + key);
    return spec->second.default_value;
  }

  static void check_value(const std::string& key, const detail::KeySpec& spec,
                          const std::string& value) {
    try {
      std::size_t used = 0;
      switch (spec.type) {
        case detail::KeyType::Int:
          std::stol(value, &used);
          if (used != value.size()) throw std::invalid_argument("trailing characters");
          break;
        case detail::KeyType::Double:
          std::stod(value, &used);
          if (used != value.size()) throw std::invalid_argument("trailing characters");
          break;
        case detail::KeyType::Bool:
          if (value != "true" && value != "false" && value != "1" && value != "0" &&
              value != "on" && value != "off")
            throw std::invalid_argument("expected a boolean");
          break;
        case detail::KeyType::String:
          break;
        case detail::KeyType::Enum:
          if (std::find(spec.choices.begin(), spec.choices.end(), value) == spec.choices.end()) {
            std::ostringstream msg;
            msg << "expected one of {";
            for (std::size_t i = 0; i < spec.choices.size(); ++i)
              msg << (i ? ", " : "") << spec.choices[i];
            msg << "}";
            throw std::invalid_argument(msg.str());
          }
          break;
      }
    } catch (const std::exception& e) {
      throw ConfigError("invalid value '" + value + "' for key '" + key + "': " + e.what());
    }
  }

  std::map<std::string, std::string> values_;
};

/// Builders mapping the flat configuration onto module configs.

inline GridSpec make_grid(const RunConfig& cfg) {
  return GridSpec(static_cast<int>(cfg.get_int("grid.n")),
                  Domain{cfg.get_double("domain.x0"), cfg.get_double("domain.y0"),
                         cfg.get_double("domain.side")});
}

inline CorrelationModel make_correlation(const RunConfig& cfg) {
  CorrelationModel model;
  if (cfg.get_string("corr.family") == "power")
    model = PowerExponential{cfg.get_double("corr.rho"), cfg.get_double("corr.delta")};
  else
    model = Matern{cfg.get_double("corr.phi"), cfg.get_double("corr.nu")};
  validate(model);
  return model;
}

inline PriorSpec make_priors(const RunConfig& cfg) {
  PriorSpec priors;
  if (cfg.get_string("prior.mu") == "normal")
    priors.mu = NormalPrior{cfg.get_double("prior.mu_mean"), cfg.get_double("prior.mu_var")};
  if (cfg.get_string("prior.sigma2") == "invgamma")
    priors.sigma2 =
        InvGammaPrior{cfg.get_double("prior.sigma2_alpha"), cfg.get_double("prior.sigma2_beta")};
  priors.validate();
  return priors;
}

/// The conditionally conjugate priors VB requires; flat entries fall back to
/// the diffuse defaults used throughout the studies.
inline PriorSpec make_vb_priors(const RunConfig& cfg) {
  PriorSpec priors = make_priors(cfg);
  if (!priors.mu)
    priors.mu = NormalPrior{cfg.get_double("prior.mu_mean"), cfg.get_double("prior.mu_var")};
  if (!priors.sigma2)
    priors.sigma2 =
        InvGammaPrior{cfg.get_double("prior.sigma2_alpha"), cfg.get_double("prior.sigma2_beta")};
  return priors;
}

inline HmcConfig make_hmc_config(const RunConfig& cfg) {
  HmcConfig out;
  out.epsilon0 = cfg.get_double("hmc.epsilon0");
  out.target_accept = cfg.get_double("hmc.target_accept");
  out.l_mean = cfg.get_double("hmc.l_mean");
  out.mass_gamma = cfg.get_double("hmc.mass_gamma");
  out.mass_mu = cfg.get_double("hmc.mass_mu");
  out.mass_sigma = cfg.get_double("hmc.mass_sigma");
  out.mass_rho = cfg.get_double("hmc.mass_rho");
  out.iterations = cfg.get_int("hmc.iterations");
  out.burn_in = cfg.get_int("hmc.burn_in");
  out.thin = cfg.get_int("hmc.thin");
  out.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  out.adapt = cfg.get_bool("hmc.adapt");
  out.adapt_mass = cfg.get_bool("hmc.adapt_mass");
  out.init_mu = cfg.get_double("hmc.init_mu");
  out.init_sigma2 = cfg.get_double("hmc.init_sigma2");
  out.init_rho = cfg.get_double("hmc.init_rho");
  out.validate();
  return out;
}

inline VbConfig make_vb_config(const RunConfig& cfg) {
  VbConfig out;
  out.max_iterations = cfg.get_int("vb.max_iterations");
  out.tol = cfg.get_double("vb.tol");
  out.allow_large_grid = cfg.get_bool("vb.allow_large_grid");
  return out;
}

inline MinContrastOptions make_mincontrast_options(const RunConfig& cfg) {
  MinContrastOptions opt;
  const std::string family = cfg.get_string("mincontrast.family");
  if (family == "rho") opt.family = ContrastFamily::Rho;
  else if (family == "rho_delta") opt.family = ContrastFamily::RhoDelta;
  else if (family == "phi") opt.family = ContrastFamily::Phi;
  else opt.family = ContrastFamily::PhiNu;
  opt.fit_sigma2 = cfg.get_bool("mincontrast.fit_sigma2");
  opt.fit_max = cfg.get_double("mincontrast.rmax");
  opt.exponent = cfg.get_double("mincontrast.exponent");
  opt.grid_points = static_cast<int>(cfg.get_int("mincontrast.grid"));
  if (opt.family == ContrastFamily::Rho || opt.family == ContrastFamily::RhoDelta) {
    double rho0 = cfg.get_double("corr.rho");
    opt.init_model = PowerExponential{rho0 > 0 ? rho0 : 20.0, cfg.get_double("corr.delta")};
  } else {
    opt.init_model = Matern{cfg.get_double("corr.phi"), cfg.get_double("corr.nu")};
  }
  opt.init_sigma2 = cfg.get_double("truth.sigma2");
  return opt;
}

}  // namespace lgcp
