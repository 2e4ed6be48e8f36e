#include "hqsd/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hqsd/csv.hpp"
#include "hqsd/error.hpp"
#include "hqsd/linalg.hpp"

namespace hqsd {

std::vector<double> ModelSpec::eval_drift(std::span<const double> x) const {
  std::vector<double> f(d, 0.0);
  drift(x, f);
  return f;
}

std::vector<double> ModelSpec::eval_sigma(std::span<const double> x) const {
  std::vector<double> s(d * l, 0.0);
  if (l > 0) sigma(x, s);
  return s;
}

std::vector<double> ModelSpec::effective_drift(std::span<const double> x) const {
  auto f = eval_drift(x);
  for (std::size_t i = 0; i < d; ++i) f[i] *= x[i];
  return f;
}

std::vector<double> ModelSpec::covariance(std::span<const double> x) const {
  auto s = eval_sigma(x);
  for (std::size_t i = 0; i < d; ++i) {
    const double r = std::sqrt(std::max(x[i], 0.0));
    for (std::size_t c = 0; c < l; ++c) s[i * l + c] *= r;
  }
  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < l; ++c) acc += s[i * l + c] * s[j * l + c];
      cov[i * d + j] = acc;
    }
  }
  return cov;
}

std::vector<double> ModelSpec::sigma_diag(std::span<const double> x) const {
  const auto s = eval_sigma(x);
  std::vector<double> diag(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t c = 0; c < l; ++c) diag[i] += s[i * l + c] * s[i * l + c];
  }
  return diag;
}

ModelSpec ModelSpec::with_size(int n) const {
  if (n < 1) throw InvalidArgument("system size N must be positive");
  ModelSpec copy = *this;
  copy.n_size = n;
  return copy;
}

std::size_t pair_channel(std::size_t d, std::size_t i, std::size_t j) {
  if (i > j) std::swap(i, j);
  // Pairs (0,1),(0,2),...,(0,d-1),(1,2),...
  return i * d - i * (i + 1) / 2 + (j - i - 1);
}

RateSpec constant_rates(std::size_t d, std::vector<double> table, std::string name) {
  if (table.size() != d * d) throw InvalidArgument("rate table must be d x d");
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double v = table[i * d + j];
      if (i != j && (!std::isfinite(v) || v < 0.0)) {
        throw InvalidArgument("rates must be finite and nonnegative");
      }
    }
  }
  RateSpec r;
  r.name = std::move(name);
  r.d = d;
  r.constant = table;
  r.lambda = [d, table = std::move(table)](std::size_t i, std::size_t j,
                                           std::span<const double>) { return table[i * d + j]; };
  return r;
}

namespace {

double lattice_lipschitz(const VectorField& f, std::size_t d, int resolution,
                         std::vector<double>* witness);

}  // namespace

ModelSpec from_rates(const RateSpec& rates, int n_size) {
  const std::size_t d = rates.d;
  if (d < 2) throw InvalidArgument("from_rates: need d >= 2 strategies");
  if (!rates.lambda) throw InvalidArgument("from_rates: missing rate function");
  if (n_size < 1) throw InvalidArgument("from_rates: N must be positive");

  ModelSpec m;
  m.name = rates.name;
  m.d = d;
  m.l = d * (d - 1) / 2;
  m.n_size = n_size;

  if (rates.constant) {
    const std::vector<double> t = *rates.constant;
    // F = M x with M_ij = λ_ji - λ_ij.
    std::vector<double> lin(d * d, 0.0);
    std::vector<double> pair(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        if (i == j) continue;
        lin[i * d + j] = t[j * d + i] - t[i * d + j];
        pair[i * d + j] = t[i * d + j] + t[j * d + i];
      }
    }
    m.drift = [d, lin](std::span<const double> x, std::span<double> out) {
      for (std::size_t i = 0; i < d; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += lin[i * d + j] * x[j];
        out[i] = acc;
      }
    };
    m.sigma = pair_channel_sigma(d, pair);
    m.lipschitz_bound = operator_norm(lin, d, d);
  } else {
    auto lambda = rates.lambda;
    m.drift = [d, lambda](std::span<const double> x, std::span<double> out) {
      for (std::size_t i = 0; i < d; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          if (j == i) continue;
          acc += x[j] * (lambda(j, i, x) - lambda(i, j, x));
        }
        out[i] = acc;
      }
    };
    const std::size_t l = m.l;
    m.sigma = [d, l, lambda](std::span<const double> x, std::span<double> out) {
      std::fill(out.begin(), out.end(), 0.0);
      std::size_t c = 0;
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i + 1; j < d; ++j, ++c) {
          const double root = std::sqrt(lambda(i, j, x) + lambda(j, i, x));
          out[i * l + c] = -std::sqrt(std::max(x[j], 0.0)) * root;
          out[j * l + c] = std::sqrt(std::max(x[i], 0.0)) * root;
        }
      }
    };
    if (rates.lipschitz_bound) {
      m.lipschitz_bound = *rates.lipschitz_bound;
    } else {
      m.lipschitz_bound = 1.1 * lattice_lipschitz(m.drift, d, 40, nullptr);
    }
  }
  return m;
}

VectorField replicator_drift(std::size_t d, std::vector<double> payoff) {
  if (payoff.size() != d * d) throw InvalidArgument("payoff matrix must be d x d");
  return [d, a = std::move(payoff)](std::span<const double> x, std::span<double> out) {
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) acc += a[i * d + j] * x[j];
      out[i] = acc;
      mean += x[i] * acc;
    }
    for (std::size_t i = 0; i < d; ++i) out[i] -= mean;
  };
}

MatrixField pair_channel_sigma(std::size_t d, std::vector<double> pair_intensity) {
  const std::size_t l = d * (d - 1) / 2;
  std::vector<double> roots(d * d, 0.0);
  for (std::size_t i = 0; i < d * d; ++i) roots[i] = std::sqrt(pair_intensity[i]);
  return [d, l, roots = std::move(roots)](std::span<const double> x, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    std::size_t c = 0;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i + 1; j < d; ++j, ++c) {
        const double root = roots[i * d + j];
        out[i * l + c] = -std::sqrt(std::max(x[j], 0.0)) * root;
        out[j * l + c] = std::sqrt(std::max(x[i], 0.0)) * root;
      }
    }
  };
}

// ---------------------------------------------------------------------------
// Hypothesis audit

std::string to_string(HypothesisStatus s) {
  switch (s) {
    case HypothesisStatus::pass: return "PASS";
    case HypothesisStatus::partial: return "PARTIAL";
    case HypothesisStatus::fail: return "FAIL";
  }
  return "FAIL";
}

std::string HypothesisReport::to_text() const {
  std::string out;
  for (const auto& e : entries) {
    out += "H" + std::to_string(e.index) + ": " + to_string(e.status) +
           " residual=" + format_double(e.residual) + " witness=" + format_coords(e.witness) +
           "\n";
  }
  return out;
}

namespace {

constexpr double kTangentTol = 1e-9;

std::vector<int> counts_of(const SimplexPoint& p, int resolution) {
  std::vector<int> k(p.dim());
  for (std::size_t i = 0; i < p.dim(); ++i) {
    k[i] = static_cast<int>(std::lround(p[i] * resolution));
  }
  return k;
}

std::vector<double> point_of(const std::vector<int>& k, int resolution) {
  std::vector<double> x(k.size());
  for (std::size_t i = 0; i < k.size(); ++i) x[i] = static_cast<double>(k[i]) / resolution;
  return x;
}

double lattice_lipschitz(const VectorField& f, std::size_t d, int resolution,
                         std::vector<double>* witness) {
  double best = 0.0;
  std::vector<double> fx(d), fy(d);
  for (const auto& p : simplex_lattice(d, resolution)) {
    const auto k = counts_of(p, resolution);
    f(p.coords(), fx);
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) {
        if (a == b || k[b] == 0) continue;
        auto kn = k;
        ++kn[a];
        --kn[b];
        const auto y = point_of(kn, resolution);
        f(y, fy);
        const double num = euclidean_distance(fx, fy);
        const double den = euclidean_distance(p.coords(), y);
        const double ratio = num / den;
        if (ratio > best) {
          best = ratio;
          if (witness) *witness = p.vec();
        }
      }
    }
  }
  return best;
}

struct QuotientMax {
  double value = 0.0;
  std::vector<double> witness;
};

// Largest one-sided difference quotient ‖σ(x+hv) - σ(x)‖_F / h over lattice
// points and unit tangent directions v = (e_a - e_b)/√2 that stay in Δ.
QuotientMax max_sigma_quotient(const ModelSpec& m, const std::vector<SimplexPoint>& grid,
                               double h) {
  QuotientMax out;
  const std::size_t d = m.d;
  const double step = h / std::sqrt(2.0);
  std::vector<double> y(d);
  for (const auto& p : grid) {
    const auto s0 = m.eval_sigma(p.coords());
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) {
        if (a == b || p[b] < step) continue;
        std::copy(p.coords().begin(), p.coords().end(), y.begin());
        y[a] += step;
        y[b] -= step;
        const auto s1 = m.eval_sigma(y);
        double acc = 0.0;
        for (std::size_t i = 0; i < s0.size(); ++i) acc += (s1[i] - s0[i]) * (s1[i] - s0[i]);
        const double q = std::sqrt(acc) / h;
        if (q > out.value) {
          out.value = q;
          out.witness = p.vec();
        }
      }
    }
  }
  return out;
}

struct SmoothnessProbe {
  double ratio = 1.0;
  std::vector<double> witness;
};

SmoothnessProbe smoothness_probe(const ModelSpec& m, const std::vector<SimplexPoint>& grid) {
  constexpr double kCoarse = 1e-3;
  const auto coarse = max_sigma_quotient(m, grid, kCoarse);
  const auto fine = max_sigma_quotient(m, grid, kCoarse / 4.0);
  SmoothnessProbe probe;
  probe.witness = fine.witness.empty() ? (grid.empty() ? std::vector<double>{} : grid[0].vec())
                                       : fine.witness;
  if (coarse.value > 1e-300) probe.ratio = fine.value / coarse.value;
  return probe;
}

}  // namespace

HypothesisReport check_hypotheses(const ModelSpec& m, int grid_resolution,
                                  double interior_margin) {
  if (grid_resolution < 2) throw InvalidArgument("check_hypotheses: grid_resolution must be >= 2");
  if (interior_margin < 0.0 || interior_margin >= 1.0 / static_cast<double>(m.d)) {
    throw InvalidArgument("check_hypotheses: interior_margin must lie in [0, 1/d)");
  }
  const std::size_t d = m.d;
  const std::size_t l = m.l;
  const auto full = simplex_lattice(d, grid_resolution);
  const auto interior = simplex_lattice_with_margin(d, grid_resolution, interior_margin);

  HypothesisReport rep;
  rep.grid_resolution = grid_resolution;
  rep.interior_margin = interior_margin;
  for (int k = 0; k < 5; ++k) rep.entries[k].index = k + 1;

  // (i)
  {
    auto& e = rep.entries[0];
    rep.lipschitz_estimate = lattice_lipschitz(m.drift, d, grid_resolution, &e.witness);
    e.residual = rep.lipschitz_estimate;
    e.status = rep.lipschitz_estimate <= m.lipschitz_bound * (1.0 + 1e-6) + 1e-12
                   ? HypothesisStatus::pass
                   : HypothesisStatus::fail;
    if (e.witness.empty()) e.witness = full.front().vec();
    e.note = "declared L=" + format_double(m.lipschitz_bound);
  }

  // (ii) and (iv)
  {
    auto& e2 = rep.entries[1];
    auto& e4 = rep.entries[3];
    e2.witness = full.front().vec();
    e4.witness = full.front().vec();
    for (const auto& p : full) {
      const auto f = m.eval_drift(p.coords());
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += p[i] * f[i];
      if (!std::isfinite(dot)) dot = std::numeric_limits<double>::infinity();
      if (std::abs(dot) > e2.residual) {
        e2.residual = std::abs(dot);
        e2.witness = p.vec();
      }
      const auto s = m.eval_sigma(p.coords());
      for (std::size_t c = 0; c < l; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < d; ++i) acc += std::sqrt(p[i]) * s[i * l + c];
        if (!std::isfinite(acc)) acc = std::numeric_limits<double>::infinity();
        if (std::abs(acc) > e4.residual) {
          e4.residual = std::abs(acc);
          e4.witness = p.vec();
        }
      }
    }
    rep.max_residual_tangent_drift = e2.residual;
    rep.max_residual_tangent_noise = e4.residual;
    e2.status = e2.residual < kTangentTol ? HypothesisStatus::pass : HypothesisStatus::fail;
    e4.status = e4.residual < kTangentTol ? HypothesisStatus::pass : HypothesisStatus::fail;
  }

  // (iii)
  {
    auto& e = rep.entries[2];
    constexpr double kBlowUp = 1.25;
    const auto on_full = smoothness_probe(m, full);
    const auto on_interior = smoothness_probe(m, interior);
    rep.smoothness_ratio_full = on_full.ratio;
    rep.smoothness_ratio_interior = on_interior.ratio;
    if (on_full.ratio <= kBlowUp) {
      e.status = HypothesisStatus::pass;
      e.residual = on_full.ratio;
      e.witness = on_full.witness;
    } else if (!interior.empty() && on_interior.ratio <= kBlowUp) {
      e.status = HypothesisStatus::partial;
      e.residual = on_full.ratio;
      e.witness = on_full.witness;
      e.note = "holds only on interior margin " + format_double(interior_margin);
    } else {
      e.status = HypothesisStatus::fail;
      e.residual = interior.empty() ? on_full.ratio : on_interior.ratio;
      e.witness = interior.empty() ? on_full.witness : on_interior.witness;
    }
  }

  // (v)
  {
    auto& e = rep.entries[4];
    auto min_diag = [&](const std::vector<SimplexPoint>& grid, std::vector<double>& where) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& p : grid) {
        const auto diag = m.sigma_diag(p.coords());
        const double v = *std::min_element(diag.begin(), diag.end());
        if (v < best) {
          best = v;
          where = p.vec();
        }
      }
      return best;
    };
    std::vector<double> w_full, w_interior;
    rep.min_sigma_diag_full = min_diag(full, w_full);
    rep.min_sigma_diag_interior =
        interior.empty() ? rep.min_sigma_diag_full : min_diag(interior, w_interior);
    if (interior.empty()) w_interior = w_full;
    const double eps = m.ellipticity_floor;
    if (rep.min_sigma_diag_full > eps) {
      e.status = HypothesisStatus::pass;
      e.residual = rep.min_sigma_diag_full;
      e.witness = w_full;
    } else if (rep.min_sigma_diag_interior > eps) {
      e.status = HypothesisStatus::partial;
      e.residual = rep.min_sigma_diag_interior;
      e.witness = w_interior;
      e.note = "holds only on interior margin " + format_double(interior_margin);
    } else {
      e.status = HypothesisStatus::fail;
      e.residual = rep.min_sigma_diag_interior;
      e.witness = w_interior;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Presets

std::vector<std::string> builtin_names() { return {"logistic1d", "hawk_dove", "rps", "neutral2"}; }

ModelSpec builtin(const std::string& name, int n_size) {
  if (n_size < 1) throw InvalidArgument("system size N must be positive");
  if (name == "logistic1d") {
    // λ_21 = 1: strategy-2 players imitate strategy 1; x1 follows
    // dX = X(1-X)dt + √(X(1-X)) dB for N = 1.
    auto m = from_rates(constant_rates(2, {0.0, 0.0, 1.0, 0.0}, "logistic1d"), n_size);
    m.attractor_hint = {{1.0, 0.0}};
    return m;
  }
  if (name == "hawk_dove") {
    std::vector<double> payoff = {0.0, 2.0, 1.0, 0.0};
    ModelSpec m;
    m.name = "hawk_dove";
    m.d = 2;
    m.l = 1;
    m.n_size = n_size;
    m.drift = replicator_drift(2, payoff);
    // λ_12 = λ_21 = 6.
    m.sigma = pair_channel_sigma(2, {0.0, 12.0, 12.0, 0.0});
    m.lipschitz_bound = 2.0 + std::sqrt(2.0) * 3.0;
    m.attractor_hint = {{2.0 / 3.0, 1.0 / 3.0}};
    return m;
  }
  if (name == "rps") {
    std::vector<double> payoff = {0.0, -1.0, 1.0, 1.0, 0.0, -1.0, -1.0, 1.0, 0.0};
    ModelSpec m;
    m.name = "rps";
    m.d = 3;
    m.l = 3;
    m.n_size = n_size;
    m.drift = replicator_drift(3, payoff);
    // λ_ij = 1/2 for every ordered pair.
    std::vector<double> pair(9, 1.0);
    for (std::size_t i = 0; i < 3; ++i) pair[i * 3 + i] = 0.0;
    m.sigma = pair_channel_sigma(3, pair);
    m.lipschitz_bound = std::sqrt(3.0);
    m.attractor_hint = {{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}};
    return m;
  }
  if (name == "neutral2") {
    // Symmetric imitation: F ≡ 0, neutral Wright-Fisher noise.
    return from_rates(constant_rates(2, {0.0, 1.0, 1.0, 0.0}, "neutral2"), n_size);
  }
  throw InvalidArgument("unknown model '" + name + "'");
}

}  // namespace hqsd
