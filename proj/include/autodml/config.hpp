#pragma once

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "autodml/core.hpp"
#include "autodml/csv.hpp"
#include "autodml/dgp.hpp"
#include "autodml/error.hpp"
#include "autodml/features.hpp"
#include "autodml/functional.hpp"
#include "autodml/nuisance.hpp"
#include "autodml/surrogate.hpp"

namespace autodml::config {

// Grammar, one entry per line:
//   key = value      value is a scalar, a comma list, or ';'-separated rows
//   # comment        also allowed after a value
// A document whose first non-blank character is '{' is read as JSON and
// flattened: nested objects join keys with '.', arrays become comma lists,
// arrays of arrays become ';'-separated rows.
// Any key can be overridden by the environment variable AUTODML_<KEY>,
// upper-cased with '.' replaced by '_' (propensity.2 -> AUTODML_PROPENSITY_2).
class ConfigFile {
 public:
  static constexpr const char* kEnvPrefix = "AUTODML_";

  static ConfigFile parse(const std::string& text, const std::string& source) {
    ConfigFile cfg;
    cfg.source_ = source;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
      nlohmann::ordered_json doc;
      try {
        doc = nlohmann::ordered_json::parse(text);
      } catch (const nlohmann::json::exception& e) {
        throw ValidationError(source + ": invalid JSON: " + e.what());
      }
      cfg.flatten(doc, "");
      return cfg;
    }
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      const auto eq = trimmed.find('=');
      const std::string where = source + " line " + std::to_string(lineno);
      if (eq == std::string::npos) throw ValidationError(where + ": expected 'key = value'");
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty()) throw ValidationError(where + ": empty key");
      cfg.insert(key, value, where);
    }
    return cfg;
  }

  static ConfigFile load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path);
  }

  const std::string& source() const { return source_; }

  static std::string env_name(const std::string& key) {
    std::string out = kEnvPrefix;
    for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
  }

  std::optional<std::string> get(const std::string& key) const {
    if (const char* env = std::getenv(env_name(key).c_str())) return trim(env);
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  bool has(const std::string& key) const { return get(key).has_value(); }

  std::string require(const std::string& key) const {
    auto v = get(key);
    if (!v) throw ValidationError(source_ + ": missing key '" + key + "'");
    return *v;
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) out.push_back(k);
    return out;
  }

  // Rejects keys outside `exact` and outside `<prefix>.<positive integer>`.
  void check_keys(const std::set<std::string>& exact, const std::set<std::string>& indexed = {}) const {
    for (const auto& [k, v] : values_) {
      if (exact.count(k)) continue;
      const auto dot = k.rfind('.');
      if (dot != std::string::npos && indexed.count(k.substr(0, dot)) && is_index(k.substr(dot + 1))) continue;
      throw ValidationError(source_ + ": unknown key '" + k + "'");
    }
  }

  double number(const std::string& key) const { return to_number(require(key), key); }
  double number(const std::string& key, double fallback) const {
    const auto v = get(key);
    return v ? to_number(*v, key) : fallback;
  }
  long long integer(const std::string& key) const { return to_integer(require(key), key); }
  long long integer(const std::string& key, long long fallback) const {
    const auto v = get(key);
    return v ? to_integer(*v, key) : fallback;
  }
  bool boolean(const std::string& key, bool fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw ValidationError(source_ + ": key '" + key + "' expects true or false, got '" + *v + "'");
  }
  std::vector<double> numbers(const std::string& key) const {
    std::vector<double> out;
    for (const auto& cell : split(require(key), ',')) out.push_back(to_number(cell, key));
    return out;
  }
  std::vector<int> integers(const std::string& key) const {
    std::vector<int> out;
    for (const auto& cell : split(require(key), ',')) out.push_back(static_cast<int>(to_integer(cell, key)));
    return out;
  }
  Table table(const std::string& key) const {
    Table out;
    for (const auto& row : split(require(key), ';')) {
      std::vector<double> r;
      for (const auto& cell : split(row, ',')) r.push_back(to_number(cell, key));
      out.push_back(std::move(r));
    }
    return out;
  }

  static std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(trim(cur));
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
  }

  static std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }

 private:
  static bool is_index(const std::string& s) {
    return !s.empty() && s.size() < 6 && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(c); }) &&
           s != "0" && s[0] != '0';
  }

  void insert(const std::string& key, const std::string& value, const std::string& where) {
    if (!values_.emplace(key, value).second) throw ValidationError(where + ": duplicate key '" + key + "'");
  }

  void flatten(const nlohmann::ordered_json& node, const std::string& prefix) {
    if (node.is_object()) {
      for (const auto& [k, v] : node.items()) flatten(v, prefix.empty() ? k : prefix + "." + k);
      return;
    }
    if (prefix.empty()) throw ValidationError(source_ + ": JSON config must be an object");
    insert(prefix, scalar_text(node), source_);
  }

  std::string scalar_text(const nlohmann::ordered_json& v) const {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number()) return csv::format_double(v.get<double>());
    if (v.is_array()) {
      std::string out;
      const bool rows = !v.empty() && v.front().is_array();
      for (std::size_t i = 0; i < v.size(); ++i) out += (i ? (rows ? ";" : ",") : "") + scalar_text(v[i]);
      return out;
    }
    throw ValidationError(source_ + ": unsupported JSON value");
  }

  double to_number(const std::string& s, const std::string& key) const {
    return csv::parse_double(trim(s), source_ + ": key '" + key + "'");
  }
  long long to_integer(const std::string& s, const std::string& key) const {
    const double v = to_number(s, key);
    if (v != static_cast<double>(static_cast<long long>(v)))
      throw ValidationError(source_ + ": key '" + key + "' expects an integer, got '" + s + "'");
    return static_cast<long long>(v);
  }

  std::string source_;
  std::map<std::string, std::string> values_;
};

namespace detail {

// A scalar broadcasts to every period; otherwise one entry per period.
inline std::vector<int> per_period_ints(const ConfigFile& cfg, const std::string& key, int periods) {
  std::vector<int> v = cfg.integers(key);
  if (v.size() == 1) v.assign(static_cast<std::size_t>(periods), v.front());
  if (static_cast<int>(v.size()) != periods)
    throw ValidationError(cfg.source() + ": key '" + key + "' needs 1 or " + std::to_string(periods) + " entries");
  return v;
}

}  // namespace detail

// DGP file keys: periods, state_arity, treatment_arity, initial,
// propensity.t (rows per state), transition.t (rows per (s, k), s major),
// outcome (rows per final state), sigma_y, seed.
inline DiscreteDGP build_dgp(const ConfigFile& cfg) {
  cfg.check_keys({"periods", "state_arity", "treatment_arity", "initial", "outcome", "sigma_y", "seed"},
                 {"propensity", "transition"});
  DiscreteDGP::Spec s;
  s.periods = static_cast<int>(cfg.integer("periods"));
  if (s.periods < 1) throw ValidationError(cfg.source() + ": periods must be >= 1");
  s.state_arity = detail::per_period_ints(cfg, "state_arity", s.periods);
  s.treatment_arity = detail::per_period_ints(cfg, "treatment_arity", s.periods);
  s.initial = cfg.numbers("initial");
  for (int t = 1; t <= s.periods; ++t) s.propensity.push_back(cfg.table("propensity." + std::to_string(t)));
  for (int t = 1; t < s.periods; ++t) s.transition.push_back(cfg.table("transition." + std::to_string(t)));
  s.outcome_mean = cfg.table("outcome");
  s.sigma_y = cfg.number("sigma_y", 0.0);
  const long long seed = cfg.integer("seed", 0);
  if (seed < 0) throw ValidationError(cfg.source() + ": seed must be >= 0");
  s.seed = static_cast<std::uint64_t>(seed);
  return DiscreteDGP(std::move(s));
}

// Plan file keys by kind:
//   kind = fixed       tau = 1, 1
//   kind = policy      policy.t = state:code, state:code, ...   (1-dim integer states)
//   kind = contrast    arm.N = coefficient : code, code, ...
//   kind = randomized  prob.t = rows of P(code | state), one row per state value
inline TreatmentFunctional build_plan(const ConfigFile& cfg) {
  const std::string kind = cfg.require("kind");
  if (kind == "fixed") {
    cfg.check_keys({"kind", "tau"});
    return TreatmentFunctional::fixed_sequence(cfg.integers("tau"));
  }
  if (kind == "policy") {
    cfg.check_keys({"kind"}, {"policy"});
    std::vector<TreatmentFunctional::PolicyRule> rules;
    std::ostringstream desc;
    desc << "policy(";
    for (int t = 1; cfg.has("policy." + std::to_string(t)); ++t) {
      const std::string key = "policy." + std::to_string(t);
      auto table = std::make_shared<std::map<long long, int>>();
      for (const auto& entry : ConfigFile::split(cfg.require(key), ',')) {
        const auto colon = entry.find(':');
        if (colon == std::string::npos) throw ValidationError(cfg.source() + ": key '" + key + "' expects state:code");
        const double sv = csv::parse_double(ConfigFile::trim(entry.substr(0, colon)), cfg.source() + ": " + key);
        const int code = csv::parse_code(ConfigFile::trim(entry.substr(colon + 1)), cfg.source() + ": " + key);
        (*table)[static_cast<long long>(sv)] = code;
      }
      desc << (t > 1 ? ";" : "") << cfg.require(key);
      rules.push_back([table, t](const Prefix& p) {
        const double v = p.current_state()[0];
        const auto it = table->find(static_cast<long long>(v));
        if (it == table->end() || static_cast<double>(it->first) != v)
          throw ValidationError("policy." + std::to_string(t) + " has no entry for state " + std::to_string(v));
        return it->second;
      });
    }
    if (rules.empty()) throw ValidationError(cfg.source() + ": policy plan needs policy.1");
    desc << ")";
    return TreatmentFunctional::dynamic_policy(std::move(rules), desc.str());
  }
  if (kind == "contrast") {
    cfg.check_keys({"kind"}, {"arm"});
    std::vector<TreatmentFunctional::Arm> arms;
    for (int j = 1; cfg.has("arm." + std::to_string(j)); ++j) {
      const std::string key = "arm." + std::to_string(j);
      const std::string v = cfg.require(key);
      const auto colon = v.find(':');
      if (colon == std::string::npos)
        throw ValidationError(cfg.source() + ": key '" + key + "' expects 'coefficient : codes'");
      TreatmentFunctional::Arm arm;
      arm.coefficient = csv::parse_double(ConfigFile::trim(v.substr(0, colon)), cfg.source() + ": " + key);
      for (const auto& c : ConfigFile::split(v.substr(colon + 1), ','))
        arm.sequence.push_back(csv::parse_code(c, cfg.source() + ": " + key));
      arms.push_back(std::move(arm));
    }
    if (arms.empty()) throw ValidationError(cfg.source() + ": contrast plan needs arm.1");
    return TreatmentFunctional::sequence_contrast(std::move(arms));
  }
  if (kind == "randomized") {
    cfg.check_keys({"kind"}, {"prob"});
    std::vector<TreatmentFunctional::ProbabilityRule> rules;
    std::vector<int> arities;
    for (int t = 1; cfg.has("prob." + std::to_string(t)); ++t) {
      const std::string key = "prob." + std::to_string(t);
      auto rows = std::make_shared<Table>(cfg.table(key));
      const std::size_t width = rows->front().size();
      for (const auto& r : *rows) {
        if (r.size() != width) throw ValidationError(cfg.source() + ": key '" + key + "' rows differ in length");
        double sum = 0.0;
        for (double p : r) {
          if (!(p >= 0.0)) throw ValidationError(cfg.source() + ": key '" + key + "' has a negative probability");
          sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-12) throw ValidationError(cfg.source() + ": key '" + key + "' row does not sum to 1");
      }
      arities.push_back(static_cast<int>(width));
      rules.push_back([rows, t](const Prefix& p) {
        const double v = p.current_state()[0];
        if (v < 0 || v != std::floor(v) || v >= static_cast<double>(rows->size()))
          throw ValidationError("prob." + std::to_string(t) + " has no row for state " + std::to_string(v));
        return (*rows)[static_cast<std::size_t>(v)];
      });
    }
    if (rules.empty()) throw ValidationError(cfg.source() + ": randomized plan needs prob.1");
    return TreatmentFunctional::randomized_policy(std::move(rules), std::move(arities));
  }
  throw ValidationError(cfg.source() + ": unknown plan kind '" + kind + "' (fixed, policy, contrast, randomized)");
}

// Resolved estimator settings. Every field has a default; `echo()` lists
// them all for reports.
struct EstimatorSettings {
  std::vector<std::string> features;  // per period: tabular | polynomial | fourier; empty = tabular
  std::map<int, std::vector<int>> state_arity;  // tabular, per period; missing = inferred from the data
  int degree = 2;
  int fourier_features = 50;
  double fourier_bandwidth = 1.0;
  std::uint64_t fourier_seed = 0;
  std::vector<std::optional<double>> lambda_regression;  // empty = auto
  std::vector<std::optional<double>> lambda_riesz;
  std::optional<double> clip;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  bool clever_covariate = false;
  std::vector<int> treatment_arity;  // empty = inferred from the data
  double level = 0.95;

  static std::set<std::string> keys() {
    return {"features",          "state_arity",  "degree", "fourier_features", "fourier_bandwidth",
            "fourier_seed",      "lambda",       "lambda_regression",          "lambda_riesz",
            "clip",              "folds",        "seed",   "clever_covariate", "treatment_arity",
            "level"};
  }

  static EstimatorSettings from(const ConfigFile& cfg) {
    cfg.check_keys(keys(), {"features", "state_arity"});
    EstimatorSettings s;
    if (cfg.has("features")) s.features = ConfigFile::split(cfg.require("features"), ',');
    for (int t = 1; t <= 64; ++t)
      if (const auto v = cfg.get("features." + std::to_string(t))) {
        if (s.features.size() < static_cast<std::size_t>(t)) s.features.resize(static_cast<std::size_t>(t));
        s.features[static_cast<std::size_t>(t - 1)] = *v;
      }
    if (cfg.has("state_arity")) {
      const auto v = cfg.integers("state_arity");
      for (std::size_t t = 0; t < v.size(); ++t) s.state_arity[static_cast<int>(t + 1)] = {v[t]};
      if (v.size() == 1) s.state_arity[0] = {v[0]};
    }
    for (int t = 1; t <= 64; ++t)
      if (cfg.has("state_arity." + std::to_string(t))) s.state_arity[t] = cfg.integers("state_arity." + std::to_string(t));
    s.degree = static_cast<int>(cfg.integer("degree", 2));
    s.fourier_features = static_cast<int>(cfg.integer("fourier_features", 50));
    s.fourier_bandwidth = cfg.number("fourier_bandwidth", 1.0);
    s.fourier_seed = static_cast<std::uint64_t>(cfg.integer("fourier_seed", 0));
    auto lambdas = [&](const std::string& key) {
      std::vector<std::optional<double>> out;
      for (const auto& cell : ConfigFile::split(cfg.require(key), ',')) {
        if (cell == "auto") out.emplace_back();
        else out.emplace_back(csv::parse_double(cell, cfg.source() + ": key '" + key + "'"));
      }
      return out;
    };
    if (cfg.has("lambda")) s.lambda_regression = s.lambda_riesz = lambdas("lambda");
    if (cfg.has("lambda_regression")) s.lambda_regression = lambdas("lambda_regression");
    if (cfg.has("lambda_riesz")) s.lambda_riesz = lambdas("lambda_riesz");
    for (const auto* v : {&s.lambda_regression, &s.lambda_riesz})
      for (const auto& l : *v)
        if (l && !(*l >= 0.0)) throw ValidationError(cfg.source() + ": ridge penalty must be >= 0");
    if (cfg.has("clip") && cfg.require("clip") != "none") {
      s.clip = cfg.number("clip");
      if (!(*s.clip > 0.0)) throw ValidationError(cfg.source() + ": clip must be > 0");
    }
    const long long folds = cfg.integer("folds", 5);
    if (folds < 2) throw ValidationError(cfg.source() + ": folds must be >= 2");
    s.folds = static_cast<std::size_t>(folds);
    const long long seed = cfg.integer("seed", 0);
    if (seed < 0) throw ValidationError(cfg.source() + ": seed must be >= 0");
    s.seed = static_cast<std::uint64_t>(seed);
    s.clever_covariate = cfg.boolean("clever_covariate", false);
    if (cfg.has("treatment_arity")) s.treatment_arity = cfg.integers("treatment_arity");
    s.level = cfg.number("level", 0.95);
    if (!(s.level > 0.0 && s.level < 1.0)) throw ValidationError(cfg.source() + ": level must lie in (0, 1)");
    for (const auto& f : s.features)
      if (!f.empty() && f != "tabular" && f != "polynomial" && f != "fourier")
        throw ValidationError(cfg.source() + ": unknown feature kind '" + f + "' (tabular, polynomial, fourier)");
    if (s.degree < 0) throw ValidationError(cfg.source() + ": degree must be >= 0");
    if (s.fourier_features < 1) throw ValidationError(cfg.source() + ": fourier_features must be >= 1");
    if (!(s.fourier_bandwidth > 0.0)) throw ValidationError(cfg.source() + ": fourier_bandwidth must be > 0");
    return s;
  }

  std::string feature_kind(int t) const {
    const auto i = static_cast<std::size_t>(t - 1);
    if (i < features.size() && !features[i].empty()) return features[i];
    if (features.size() == 1 && !features[0].empty()) return features[0];
    return "tabular";
  }

  static std::vector<std::optional<double>> broadcast(const std::vector<std::optional<double>>& v, int periods) {
    if (v.size() == 1) return std::vector<std::optional<double>>(static_cast<std::size_t>(periods), v.front());
    return v;
  }

  // Feature maps fixed before any fold split; tabular arities not given in
  // the config are max(observed) + 1 over the full sample.
  FitConfig fit_config(const PanelDataset& data) const {
    const int m = data.periods();
    FitConfig cfg;
    for (int t = 1; t <= m; ++t) {
      const std::string kind = feature_kind(t);
      const int d = data.state_dim(t);
      const int k = data.treatment_arity(t);
      if (kind == "polynomial") {
        cfg.features.push_back(share(FeatureMap::polynomial(d, degree, k)));
      } else if (kind == "fourier") {
        cfg.features.push_back(share(FeatureMap::random_fourier(d, fourier_features, fourier_bandwidth,
                                                                mix_seed(fourier_seed, static_cast<std::uint64_t>(t)), k)));
      } else {
        std::vector<int> arity;
        if (auto it = state_arity.find(t); it != state_arity.end()) arity = it->second;
        else if (auto it0 = state_arity.find(0); it0 != state_arity.end()) arity = it0->second;
        if (arity.empty()) {
          arity.assign(static_cast<std::size_t>(d), 1);
          for (const auto& z : data.trajectories())
            for (int j = 0; j < d; ++j) arity[j] = std::max(arity[j], static_cast<int>(z.state(t)[j]) + 1);
        }
        if (static_cast<int>(arity.size()) != d)
          throw ValidationError("state_arity for period " + std::to_string(t) + " must list " + std::to_string(d) +
                                " components");
        cfg.features.push_back(share(FeatureMap::tabular(arity, k)));
      }
    }
    cfg.lambda_regression = broadcast(lambda_regression, m);
    cfg.lambda_riesz = broadcast(lambda_riesz, m);
    if ((!cfg.lambda_regression.empty() && static_cast<int>(cfg.lambda_regression.size()) != m) ||
        (!cfg.lambda_riesz.empty() && static_cast<int>(cfg.lambda_riesz.size()) != m))
      throw ValidationError("lambda lists need 1 or " + std::to_string(m) + " entries");
    cfg.clip = clip;
    return cfg;
  }

  csv::PanelSchema schema(int periods) const {
    csv::PanelSchema s;
    s.periods = periods;
    if (!treatment_arity.empty()) {
      s.treatment_arities = treatment_arity;
      if (s.treatment_arities.size() == 1)
        s.treatment_arities.assign(static_cast<std::size_t>(periods), s.treatment_arities.front());
    }
    return s;
  }
};

// Surrogate estimator keys: features (tabular | polynomial | fourier) for
// both maps, x_arity and s_arity (tabular; inferred when absent), degree,
// fourier_*, lambda and lambda_h / lambda_g / lambda_a1 / lambda_a2, clip,
// folds, seed, level.
struct SurrogateSettings {
  std::string features = "tabular";
  std::vector<int> x_arity, s_arity;
  int degree = 2;
  int fourier_features = 50;
  double fourier_bandwidth = 1.0;
  std::uint64_t fourier_seed = 0;
  std::optional<double> lambda_h, lambda_g, lambda_a1, lambda_a2;
  std::optional<double> clip;
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  double level = 0.95;

  static SurrogateSettings from(const ConfigFile& cfg) {
    cfg.check_keys({"features", "x_arity", "s_arity", "degree", "fourier_features", "fourier_bandwidth",
                    "fourier_seed", "lambda", "lambda_h", "lambda_g", "lambda_a1", "lambda_a2", "clip", "folds",
                    "seed", "level"});
    SurrogateSettings s;
    if (cfg.has("features")) s.features = cfg.require("features");
    if (s.features != "tabular" && s.features != "polynomial" && s.features != "fourier")
      throw ValidationError(cfg.source() + ": unknown feature kind '" + s.features + "'");
    if (cfg.has("x_arity")) s.x_arity = cfg.integers("x_arity");
    if (cfg.has("s_arity")) s.s_arity = cfg.integers("s_arity");
    s.degree = static_cast<int>(cfg.integer("degree", 2));
    s.fourier_features = static_cast<int>(cfg.integer("fourier_features", 50));
    s.fourier_bandwidth = cfg.number("fourier_bandwidth", 1.0);
    s.fourier_seed = static_cast<std::uint64_t>(cfg.integer("fourier_seed", 0));
    auto opt = [&](const std::string& key, std::optional<double> fallback) -> std::optional<double> {
      if (!cfg.has(key) || cfg.require(key) == "auto") return fallback;
      const double v = cfg.number(key);
      if (!(v >= 0.0)) throw ValidationError(cfg.source() + ": ridge penalty must be >= 0");
      return v;
    };
    const auto base = opt("lambda", std::nullopt);
    s.lambda_h = opt("lambda_h", base);
    s.lambda_g = opt("lambda_g", base);
    s.lambda_a1 = opt("lambda_a1", base);
    s.lambda_a2 = opt("lambda_a2", base);
    if (cfg.has("clip") && cfg.require("clip") != "none") {
      s.clip = cfg.number("clip");
      if (!(*s.clip > 0.0)) throw ValidationError(cfg.source() + ": clip must be > 0");
    }
    const long long folds = cfg.integer("folds", 5);
    if (folds < 2) throw ValidationError(cfg.source() + ": folds must be >= 2");
    s.folds = static_cast<std::size_t>(folds);
    const long long seed = cfg.integer("seed", 0);
    if (seed < 0) throw ValidationError(cfg.source() + ": seed must be >= 0");
    s.seed = static_cast<std::uint64_t>(seed);
    s.level = cfg.number("level", 0.95);
    if (!(s.level > 0.0 && s.level < 1.0)) throw ValidationError(cfg.source() + ": level must lie in (0, 1)");
    return s;
  }

  SurrogateConfig surrogate_config(const SurrogatePair& data) const {
    SurrogateConfig cfg;
    const int p = data.x_dim(), q = data.s_dim();
    if (features == "polynomial") {
      cfg.treatment_features = share(FeatureMap::polynomial(p, degree, 2));
      cfg.surrogate_features = share(FeatureMap::polynomial(p + q, degree, 1));
    } else if (features == "fourier") {
      cfg.treatment_features =
          share(FeatureMap::random_fourier(p, fourier_features, fourier_bandwidth, mix_seed(fourier_seed, 0), 2));
      cfg.surrogate_features =
          share(FeatureMap::random_fourier(p + q, fourier_features, fourier_bandwidth, mix_seed(fourier_seed, 1), 1));
    } else {
      auto infer = [](std::vector<int> given, int dim, auto&& values) {
        if (!given.empty()) {
          if (given.size() == 1) given.assign(static_cast<std::size_t>(dim), given.front());
          if (static_cast<int>(given.size()) != dim) throw ValidationError("tabular arity list has the wrong length");
          return given;
        }
        std::vector<int> a(static_cast<std::size_t>(dim), 1);
        values([&](std::span<const double> v) {
          for (int j = 0; j < dim; ++j) a[j] = std::max(a[j], static_cast<int>(v[j]) + 1);
        });
        return a;
      };
      const auto xa = infer(x_arity, p, [&](auto&& visit) {
        for (const auto& r : data.short_sample()) visit(r.x);
        for (const auto& r : data.long_sample()) visit(r.x);
      });
      const auto sa = infer(s_arity, q, [&](auto&& visit) {
        for (const auto& r : data.short_sample()) visit(r.s);
        for (const auto& r : data.long_sample()) visit(r.s);
      });
      std::vector<int> both = sa;
      both.insert(both.end(), xa.begin(), xa.end());
      cfg.treatment_features = share(FeatureMap::tabular(xa, 2));
      cfg.surrogate_features = share(FeatureMap::tabular(both, 1));
    }
    cfg.lambda_h = lambda_h;
    cfg.lambda_g = lambda_g;
    cfg.lambda_a1 = lambda_a1;
    cfg.lambda_a2 = lambda_a2;
    cfg.clip = clip;
    return cfg;
  }
};

}  // namespace autodml::config
