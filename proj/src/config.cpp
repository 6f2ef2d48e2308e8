#include "chardec/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "chardec/error.hpp"

namespace chardec {

namespace {

double parse_double(const std::string& value, const std::string& key) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(value, &used);
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' has non-numeric value '" + value + "'");
  }
  if (used != value.size()) {
    throw ConfigError("config: key '" + key + "' has trailing characters in '" + value + "'");
  }
  return v;
}

int parse_int(const std::string& value, const std::string& key) {
  const double v = parse_double(value, key);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) {
    throw ConfigError("config: key '" + key + "' must be an integer, got '" + value + "'");
  }
  return i;
}

std::vector<double> parse_list(const std::string& value, const std::string& key) {
  std::vector<double> out;
  std::istringstream in(value);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_double(item, key));
  if (out.empty()) throw ConfigError("config: key '" + key + "' has an empty list");
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::validate() const {
  if (lr <= 0.0) throw ConfigError("config: lr must be positive");
  if (batch < 1) throw ConfigError("config: batch must be at least 1");
  if (epochs < 0) throw ConfigError("config: epochs must be non-negative");
  if (beta < 0.0) throw ConfigError("config: beta must be non-negative");
  if (kl_scale < 0.0) throw ConfigError("config: kl_scale must be non-negative");
  if (clip <= 0.0) throw ConfigError("config: clip must be positive");
  if (k < 1) throw ConfigError("config: beam width k must be at least 1");
  if (rho <= 0.0 || rho > 1.0) throw ConfigError("config: rho must be in (0, 1]");
  if (eta <= 0.0 || eta > 1.0) throw ConfigError("config: eta must be in (0, 1]");
  if (tr <= 0.0) throw ConfigError("config: tr must be positive");
  if (delays < 1) throw ConfigError("config: delays must be at least 1");
  if (static_cast<int>(weights.size()) != delays) {
    throw ConfigError("config: weights must list exactly 'delays' values");
  }
  if (window <= 0.0) throw ConfigError("config: window must be positive");
  if (stride <= 0.0) throw ConfigError("config: stride must be positive");
  if (nulls < 1) throw ConfigError("config: nulls must be at least 1");
  if (runs < 1) throw ConfigError("config: runs must be at least 1");
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::size_t begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) continue;
    const std::size_t end = line.find_last_not_of(" \t\r");
    line = line.substr(begin, end - begin + 1);

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("config: line " + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    const std::size_t vb = value.find_first_not_of(" \t");
    value = vb == std::string::npos ? "" : value.substr(vb);
    if (value.empty()) {
      throw ConfigError("config: line " + std::to_string(lineno) + ": key '" + key +
                        "' has no value");
    }
    if (!seen.insert(key).second) {
      throw ConfigError("config: line " + std::to_string(lineno) + ": duplicate key '" + key +
                        "'");
    }

    if (key == "lr") {
      cfg.lr = parse_double(value, key);
    } else if (key == "batch") {
      cfg.batch = parse_int(value, key);
    } else if (key == "epochs") {
      cfg.epochs = parse_int(value, key);
    } else if (key == "beta") {
      cfg.beta = parse_double(value, key);
    } else if (key == "kl_scale") {
      cfg.kl_scale = parse_double(value, key);
    } else if (key == "clip") {
      cfg.clip = parse_double(value, key);
    } else if (key == "k") {
      cfg.k = parse_int(value, key);
    } else if (key == "rho") {
      cfg.rho = parse_double(value, key);
    } else if (key == "eta") {
      cfg.eta = parse_double(value, key);
    } else if (key == "tr") {
      cfg.tr = parse_double(value, key);
    } else if (key == "delays") {
      cfg.delays = parse_int(value, key);
    } else if (key == "weights") {
      cfg.weights = parse_list(value, key);
    } else if (key == "window") {
      cfg.window = parse_double(value, key);
    } else if (key == "stride") {
      cfg.stride = parse_double(value, key);
    } else if (key == "nulls") {
      cfg.nulls = parse_int(value, key);
    } else if (key == "runs") {
      cfg.runs = parse_int(value, key);
    } else {
      throw ConfigError("config: line " + std::to_string(lineno) + ": unknown key '" + key +
                        "'");
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_run_config(text.str());
}

std::string serialize_run_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "batch=" << cfg.batch << '\n';
  out << "beta=" << format_double(cfg.beta) << '\n';
  out << "clip=" << format_double(cfg.clip) << '\n';
  out << "delays=" << cfg.delays << '\n';
  out << "epochs=" << cfg.epochs << '\n';
  out << "eta=" << format_double(cfg.eta) << '\n';
  out << "k=" << cfg.k << '\n';
  out << "kl_scale=" << format_double(cfg.kl_scale) << '\n';
  out << "lr=" << format_double(cfg.lr) << '\n';
  out << "nulls=" << cfg.nulls << '\n';
  out << "rho=" << format_double(cfg.rho) << '\n';
  out << "runs=" << cfg.runs << '\n';
  out << "stride=" << format_double(cfg.stride) << '\n';
  out << "tr=" << format_double(cfg.tr) << '\n';
  out << "weights=";
  for (std::size_t i = 0; i < cfg.weights.size(); ++i) {
    if (i > 0) out << ',';
    out << format_double(cfg.weights[i]);
  }
  out << '\n';
  out << "window=" << format_double(cfg.window) << '\n';
  return out.str();
}

}  // namespace chardec
