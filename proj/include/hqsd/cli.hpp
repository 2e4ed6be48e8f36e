#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hqsd/error.hpp"
#include "hqsd/qsd.hpp"
#include "hqsd/sde.hpp"

namespace hqsd {

inline constexpr const char* kToolVersion = "0.1.0";

enum class ExperimentKind { check, flow, simulate, lln, qsd, spectral, scaling, beta, convergence };

std::string to_string(ExperimentKind k);

/// Stochastic experiments whose verdicts depend on the seed; these require one.
bool needs_seed(ExperimentKind k);

/// A config problem, reported with the offending line when there is one.
class ConfigError : public InvalidArgument {
 public:
  ConfigError(int line, const std::string& what);
  int line() const { return line_; }

 private:
  int line_;
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::check;
  std::string model = "logistic1d";
  /// Constant d x d rate table (row-major); replaces `model` when given.
  std::vector<double> rates;
  int n_size = 1;
  Scheme scheme = Scheme::euler_clamp;
  double dt = 1e-3;
  double horizon = 10.0;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  std::string output = "out";
  /// Initial point; barycenter when empty.
  std::vector<double> start;

  std::size_t paths = 1000;
  std::vector<int> n_values = {16, 32, 64, 128};
  std::vector<double> deltas = {0.25, 0.5};
  double absorb_target = 0.999;

  std::size_t particles = 1000;
  double burn_in = 5.0;
  double eps = 0.0;
  std::vector<double> eps_list = {0.05, 0.02, 0.01};
  std::size_t tau_samples = 2000;
  double tau_horizon = 1e4;

  int grid_resolution = 20;
  double margin = 0.05;
  double lyapunov_delta = 0.02;

  std::size_t grid_size = 4000;
  double lambda_lo = 0.5;
  double lambda_hi = 2.0;
  SpectralMethod spectral_method = SpectralMethod::finite_difference;

  /// Attractor candidate point; the model preset's hint when empty.
  std::vector<double> attractor;
  double radius = 0.2;
  std::vector<double> probe_eps = {0.05, 0.01};

  double k_margin = 0.1;
  double delta = 0.1;
  std::size_t trials = 2000;
  bool attach_theta = true;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Parses line-oriented "key = value" text. '#' starts a comment; list values
/// are comma separated. Unknown or repeated keys, malformed values and bound
/// violations raise ConfigError naming the line.
ExperimentConfig parse_config(const std::string& text);

/// Every key with its effective value, in a form parse_config reads back to an
/// equal config.
std::string echo_config(const ExperimentConfig& config);

/// One line per key: "key (default): description".
std::string config_reference();

/// Runs the experiment, writing CSVs, verdicts.txt, config.txt and
/// manifest.txt under config.output. Progress and errors go to `log`.
/// Exit status: 0 ok, 1 config or refused precondition, 2 numerical failure,
/// 3 a claim failed.
int run(const ExperimentConfig& config, std::ostream& log);

}  // namespace hqsd
