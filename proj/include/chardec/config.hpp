#pragma once

#include <string>
#include <vector>

namespace chardec {

// Run-wide hyper-parameters, read from a key=value file. Unknown keys are
// rejected so typos cannot silently fall back to defaults.
struct RunConfig {
  double lr = 1e-5;
  int batch = 128;
  int epochs = 100;
  double beta = 1.0;
  double kl_scale = 0.01;
  double clip = 1.0;  // gradient clip magnitude
  int k = 200;        // beam width
  double rho = 0.9;
  double eta = 0.1;
  double tr = 1.5;
  int delays = 5;
  std::vector<double> weights = {1.0, 0.7, 0.5, 0.3, 0.1};
  double window = 20.0;
  double stride = 1.0;
  int nulls = 200;
  int runs = 5;

  void validate() const;
};

// '#' starts a comment; blank lines are skipped; duplicate keys are errors.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Every field in key=value form, one per line, keys sorted; parsing the
// result reproduces the config exactly.
std::string serialize_run_config(const RunConfig& cfg);

}  // namespace chardec
