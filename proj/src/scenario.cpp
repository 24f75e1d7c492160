#include "drcrt/scenario.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "drcrt/error.hpp"

namespace drcrt {

void ScenarioSpec::validate() const {
  if (clusters < 2) fail(ErrorKind::InvalidConfig, "a scenario needs at least 2 clusters");
  if (size_min < 1 || size_max < size_min)
    fail(ErrorKind::InvalidConfig, fmt::format("invalid cluster size range [{}, {}]", size_min, size_max));
  if (!(frailty_shape_arm1 > 0.0 && frailty_shape_arm0 > 0.0 && frailty_shape_censoring > 0.0))
    fail(ErrorKind::InvalidConfig, "frailty shapes must be positive");
  if (!(baseline_event(0, size_min) > 0.0 && baseline_event(1, size_min) > 0.0))
    fail(ErrorKind::InvalidConfig, "baseline event hazards must be positive");
  if (!(delta0 > 0.0)) fail(ErrorKind::InvalidConfig, "baseline censoring hazard must be positive");
  if (!(admin_cap > 0.0)) fail(ErrorKind::InvalidConfig, "administrative censoring time must be positive");
  if (!(w2_sd >= 0.0 && z1_sd >= 0.0)) fail(ErrorKind::InvalidConfig, "covariate SDs must be non-negative");
  if (!(w1_prob >= 0.0 && w1_prob <= 1.0 && z2_prob >= 0.0 && z2_prob <= 1.0))
    fail(ErrorKind::InvalidConfig, "Bernoulli probabilities must lie in [0, 1]");
  if (!(pi1 > 0.0 && pi1 < 1.0)) fail(ErrorKind::InvalidConfig, "randomization probability must lie in (0, 1)");
}

double ScenarioSpec::baseline_event(int arm, int n) const {
  return (rho0 - rho1 * (1 - arm)) * (g_lambda_size ? n / 100.0 : 1.0);
}

double ScenarioSpec::baseline_censoring(int n) const { return delta0 * (g_h_size ? n / 100.0 : 1.0); }

namespace {

ModelFormula build_formula(const ScenarioSpec& s, Role role, bool correct) {
  const auto& coef = role == Role::Outcome ? s.beta : s.alpha;
  std::string rhs = "W1 + W2 + Z1 + Z2";
  if (correct) {
    if (coef[4] != 0.0) rhs += " + Z1*Z2";
    const bool linear_n = coef[5] != 0.0 || (role == Role::Outcome && s.beta_aN != 0.0);
    if (linear_n) rhs += " + N/50";
    if (role == Role::Outcome ? s.g_lambda_size : s.g_h_size) rhs += " + log(N)";
  }
  return ModelFormula::parse(rhs, role);
}

}  // namespace

ModelFormula ScenarioSpec::correct_formula(Role role) const { return build_formula(*this, role, true); }
ModelFormula ScenarioSpec::misspecified_formula(Role role) const { return build_formula(*this, role, false); }

ScenarioSpec ScenarioSpec::preset(const std::string& name) {
  ScenarioSpec s;
  s.name = name;
  if (name == "1") {
    s.w2_size_mean = false;
    s.w2_mean = 1.0;
    s.z1_size_mean = false;
    s.z1_mean = 1.0;
    s.beta_a = -1.5;
    s.beta = {0.5, 0.8, 0.4, 0.3, 1.0, 0.0};
    s.beta_aN = 0.0;
    s.alpha = {0.5, 0.3, 0.3, 0.5, 0.5, 0.0};
    s.rho0 = 0.5;
    s.rho1 = 0.2;
    s.delta0 = 0.2;
    return s;
  }
  if (name == "2" || name == "3" || name == "3a" || name == "3b" || name == "3c") {
    s.beta_a = 0.5;
    s.beta = {0.5, -0.2, 0.4, 0.3, 1.0, 0.4};
    s.beta_aN = -1.5;
    s.rho0 = 0.6;
    s.rho1 = 0.2;
    s.delta0 = 0.001;
    s.g_lambda_size = true;
    if (name == "2") {
      s.alpha = {0.3, 1.0, 1.0, 0.5, 1.0, 0.0};
      return s;
    }
    s.alpha = {0.3, 0.8, 0.6, 0.5, 1.0, 0.4};
    s.g_h_size = true;
    if (name == "3a") s.clusters = 26;
    if (name == "3b") {
      s.rho0 = 0.8;
      s.delta0 = 0.0005;
    }
    if (name == "3c") s.delta0 = 0.04;
    return s;
  }
  fail(ErrorKind::InvalidConfig, fmt::format("unknown scenario '{}' (expected 1, 2, 3, 3a, 3b or 3c)", name));
}

namespace {

std::string real(double v) { return fmt::format("{:.17g}", v); }

std::string vec(const std::array<double, 6>& v) {
  return fmt::format("{}, {}, {}, {}, {}, {}", real(v[0]), real(v[1]), real(v[2]), real(v[3]), real(v[4]),
                     real(v[5]));
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size() || v.empty()) fail(ErrorKind::InvalidConfig, fmt::format("'{}' expects a number, got '{}'", key, v));
  return out;
}

std::array<double, 6> to_vec(const std::string& key, const std::string& v) {
  std::array<double, 6> out{};
  std::stringstream ss(v);
  std::string item;
  std::size_t k = 0;
  while (std::getline(ss, item, ',')) {
    if (k == 6) fail(ErrorKind::InvalidConfig, fmt::format("'{}' expects 6 values", key));
    out[k++] = to_real(key, trim(item));
  }
  if (k != 6) fail(ErrorKind::InvalidConfig, fmt::format("'{}' expects 6 values, got {}", key, k));
  return out;
}

bool to_size_switch(const std::string& key, const std::string& v, const char* size_form) {
  if (v == size_form) return true;
  if (v == "1") return false;
  fail(ErrorKind::InvalidConfig, fmt::format("'{}' expects 1 or {}, got '{}'", key, size_form, v));
}

}  // namespace

std::string ScenarioSpec::to_config() const {
  std::string out;
  auto put = [&](const char* key, const std::string& value) { out += fmt::format("{} = {}\n", key, value); };
  put("name", name);
  put("clusters", std::to_string(clusters));
  put("size_min", std::to_string(size_min));
  put("size_max", std::to_string(size_max));
  put("w1_prob", real(w1_prob));
  put("w2_mean", w2_size_mean ? "N/50" : real(w2_mean));
  put("w2_sd", real(w2_sd));
  put("z1_mean", z1_size_mean ? "log(N)/5" : real(z1_mean));
  put("z1_sd", real(z1_sd));
  put("z2_prob", real(z2_prob));
  put("beta_a", real(beta_a));
  put("beta", vec(beta));
  put("beta_aN", real(beta_aN));
  put("alpha", vec(alpha));
  put("rho0", real(rho0));
  put("rho1", real(rho1));
  put("delta0", real(delta0));
  put("g_lambda", g_lambda_size ? "N/100" : "1");
  put("g_h", g_h_size ? "N/100" : "1");
  put("frailty_shape_arm1", real(frailty_shape_arm1));
  put("frailty_shape_arm0", real(frailty_shape_arm0));
  put("frailty_shape_censoring", real(frailty_shape_censoring));
  put("admin_cap", real(admin_cap));
  put("pi1", real(pi1));
  put("seed", std::to_string(seed));
  return out;
}

ScenarioSpec ScenarioSpec::from_config(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::InvalidConfig, fmt::format("scenario line {}: expected key = value", lineno));
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }

  ScenarioSpec s;
  if (auto it = kv.find("preset"); it != kv.end()) {
    s = preset(it->second);
    kv.erase(it);
  }
  for (const auto& [key, v] : kv) {
    if (key == "name") s.name = v;
    else if (key == "clusters") s.clusters = static_cast<std::size_t>(to_real(key, v));
    else if (key == "size_min") s.size_min = static_cast<int>(to_real(key, v));
    else if (key == "size_max") s.size_max = static_cast<int>(to_real(key, v));
    else if (key == "w1_prob") s.w1_prob = to_real(key, v);
    else if (key == "w2_mean") {
      s.w2_size_mean = v == "N/50";
      if (!s.w2_size_mean) s.w2_mean = to_real(key, v);
    } else if (key == "w2_sd") s.w2_sd = to_real(key, v);
    else if (key == "z1_mean") {
      s.z1_size_mean = v == "log(N)/5";
      if (!s.z1_size_mean) s.z1_mean = to_real(key, v);
    } else if (key == "z1_sd") s.z1_sd = to_real(key, v);
    else if (key == "z2_prob") s.z2_prob = to_real(key, v);
    else if (key == "beta_a") s.beta_a = to_real(key, v);
    else if (key == "beta") s.beta = to_vec(key, v);
    else if (key == "beta_aN") s.beta_aN = to_real(key, v);
    else if (key == "alpha") s.alpha = to_vec(key, v);
    else if (key == "rho0") s.rho0 = to_real(key, v);
    else if (key == "rho1") s.rho1 = to_real(key, v);
    else if (key == "delta0") s.delta0 = to_real(key, v);
    else if (key == "g_lambda") s.g_lambda_size = to_size_switch(key, v, "N/100");
    else if (key == "g_h") s.g_h_size = to_size_switch(key, v, "N/100");
    else if (key == "frailty_shape_arm1") s.frailty_shape_arm1 = to_real(key, v);
    else if (key == "frailty_shape_arm0") s.frailty_shape_arm0 = to_real(key, v);
    else if (key == "frailty_shape_censoring") s.frailty_shape_censoring = to_real(key, v);
    else if (key == "admin_cap") s.admin_cap = to_real(key, v);
    else if (key == "pi1") s.pi1 = to_real(key, v);
    else if (key == "seed") s.seed = std::stoull(v);
    else fail(ErrorKind::InvalidConfig, fmt::format("unknown scenario key '{}'", key));
  }
  s.validate();
  return s;
}

ScenarioSpec ScenarioSpec::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, fmt::format("cannot open scenario file '{}'", path));
  return from_config(in);
}

void ScenarioSpec::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, fmt::format("cannot write scenario file '{}'", path));
  out << to_config();
}

std::uint64_t ScenarioSpec::population_hash() const {
  ScenarioSpec canonical = *this;
  canonical.name.clear();
  canonical.clusters = 0;
  canonical.seed = 0;
  return fnv1a(canonical.to_config());
}

std::uint64_t fnv1a(const std::string& text, std::uint64_t h) {
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace drcrt
