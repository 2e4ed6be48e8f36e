#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hqsd/simplex.hpp"

namespace hqsd {

/// F(x): writes d per-capita rates into `out`.
using VectorField = std::function<void(std::span<const double> x, std::span<double> out)>;
/// sigma(x): writes the d x l matrix into `out`, row-major.
using MatrixField = std::function<void(std::span<const double> x, std::span<double> out)>;

/// dX = X∘F(X) dt + N^{-1/2} √X∘σ(X) dB on the d-simplex with l noise channels.
///
/// Evaluation is pure: drift and sigma capture only immutable state, so one
/// ModelSpec may be shared by any number of workers.
struct ModelSpec {
  std::string name;
  std::size_t d = 0;
  std::size_t l = 0;
  VectorField drift;
  MatrixField sigma;
  int n_size = 1;
  double lipschitz_bound = 0.0;
  double ellipticity_floor = 0.0;
  /// Min coordinate at or below this marks absorption.
  double absorption_threshold = 0.0;
  /// Candidate interior attractor points known for the preset, if any.
  std::vector<std::vector<double>> attractor_hint;

  std::vector<double> eval_drift(std::span<const double> x) const;
  std::vector<double> eval_sigma(std::span<const double> x) const;

  /// Effective drift x∘F(x).
  std::vector<double> effective_drift(std::span<const double> x) const;

  /// Σ(x) = (√x∘σ)(√x∘σ)^T, d x d row-major, without the 1/N factor.
  std::vector<double> covariance(std::span<const double> x) const;

  /// diag(σσ*) (no √x weighting).
  std::vector<double> sigma_diag(std::span<const double> x) const;

  ModelSpec with_size(int n) const;
};

/// Pairwise imitation intensities λ_ij(x): rate at which an i-player adopts j,
/// scaled by x_i x_j to give the jump rate p_ij.
struct RateSpec {
  std::string name = "custom";
  std::size_t d = 0;
  std::function<double(std::size_t i, std::size_t j, std::span<const double> x)> lambda;
  /// Set for state-independent rates; enables a closed-form Lipschitz bound.
  std::optional<std::vector<double>> constant;
  std::optional<double> lipschitz_bound;
};

/// Constant rate table (d x d row-major, diagonal ignored).
RateSpec constant_rates(std::size_t d, std::vector<double> table, std::string name = "custom");

/// Builds F and the pair-channel σ (one channel per unordered pair {i,j}).
ModelSpec from_rates(const RateSpec& rates, int n_size = 1);

/// Channel index of the unordered pair {i, j}, i < j, in lexicographic order.
std::size_t pair_channel(std::size_t d, std::size_t i, std::size_t j);

enum class HypothesisStatus { pass, partial, fail };

std::string to_string(HypothesisStatus s);

struct HypothesisEntry {
  int index = 0;  // 1..5
  HypothesisStatus status = HypothesisStatus::fail;
  double residual = 0.0;
  std::vector<double> witness;
  std::string note;
};

struct HypothesisReport {
  std::array<HypothesisEntry, 5> entries;
  int grid_resolution = 0;
  double interior_margin = 0.0;
  double lipschitz_estimate = 0.0;
  double max_residual_tangent_drift = 0.0;  // (ii)
  double max_residual_tangent_noise = 0.0;  // (iv)
  double min_sigma_diag_interior = 0.0;     // (v) on the margin grid
  double min_sigma_diag_full = 0.0;         // (v) on the whole lattice
  double smoothness_ratio_full = 0.0;       // (iii)
  double smoothness_ratio_interior = 0.0;

  const HypothesisEntry& operator[](int k) const { return entries.at(k - 1); }

  /// "H<k>: PASS|PARTIAL|FAIL residual=<float> witness=<coords>", one per line.
  std::string to_text() const;
};

/// Audits the standing hypotheses (i)-(v) on a barycentric lattice.
///
/// (i) finite-difference Lipschitz estimate over lattice neighbours against the
///     declared bound; (ii),(iv) residuals of the tangency identities; (iii)
///     one-sided difference quotients at two step sizes: a C^1 field keeps the
///     largest quotient stable, a √x-type entry makes it grow like h^{-1/2};
/// (v) min of diag(σσ*). (iii) and (v) report PARTIAL when they only hold on
///     the margin-restricted lattice.
HypothesisReport check_hypotheses(const ModelSpec& model, int grid_resolution,
                                  double interior_margin);

/// Presets: logistic1d, hawk_dove, rps, neutral2.
ModelSpec builtin(const std::string& name, int n_size = 1);
std::vector<std::string> builtin_names();

/// Replicator rates F_i = (Ax)_i - x^T A x.
VectorField replicator_drift(std::size_t d, std::vector<double> payoff);

/// Pair-channel σ for constant pair intensities c_ij = λ_ij + λ_ji (d x d table).
MatrixField pair_channel_sigma(std::size_t d, std::vector<double> pair_intensity);

}  // namespace hqsd
