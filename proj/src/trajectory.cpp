#include "nexus/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "nexus/errors.hpp"

namespace nexus {

StateVector state_of(const AlignmentSnapshot& s) { return {s.up_pct, s.noc_pct, s.perf_pct}; }

PcaModel pca_fit(std::span<const StateVector> states, bool center) {
  if (states.size() < 3) {
    throw ValidationError("pca_fit: need at least 3 states, got " + std::to_string(states.size()));
  }
  PcaModel model;
  model.centered = center;
  const double n = static_cast<double>(states.size());
  for (const auto& s : states) {
    const auto x = s.as_array();
    for (std::size_t j = 0; j < 3; ++j) {
      if (!std::isfinite(x[j])) throw ValidationError("pca_fit: non-finite state");
      if (center) model.mean[j] += x[j];
    }
  }
  if (center)
    for (double& m : model.mean) m /= n;

  Matrix cov(3, 3);
  for (const auto& s : states) {
    const auto x = s.as_array();
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) cov(i, j) += (x[i] - model.mean[i]) * (x[j] - model.mean[j]);
  }
  const double divisor = center ? n - 1.0 : n;
  for (double& v : cov.values()) v /= divisor;

  const auto eig = eig_sym3(cov);
  model.vectors = eig.vectors;
  double total = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    model.values[i] = std::max(0.0, eig.values[i]);
    total += model.values[i];
  }
  if (total > 0.0) {
    for (std::size_t i = 0; i < 3; ++i) model.explained[i] = model.values[i] / total;
  } else {
    model.degenerate = true;
    model.explained = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
  }
  return model;
}

std::array<double, 2> pca_project(const PcaModel& model, const StateVector& state) {
  const auto x = state.as_array();
  std::array<double, 2> z{};
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t j = 0; j < 3; ++j) z[c] += model.vectors(j, c) * (x[j] - model.mean[j]);
  return z;
}

SubspacePoint lift_subspace(std::array<double, 2> z) {
  SubspacePoint p;
  p.z = z;
  Matrix m{{z[0], 0.0}, {z[1], 0.0}, {0.0, 1.0}};
  if (std::hypot(z[0], z[1]) < 1e-10) {
    p.fallback = true;
    m(0, 0) = 1.0;
    m(1, 0) = 0.0;
  }
  p.basis = qr_thin(m).q;
  return p;
}

std::vector<double> principal_angles(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValidationError("principal_angles: bases " + a.shape_string() + " and " +
                          b.shape_string() + " differ in shape");
  }
  const std::size_t k = a.cols();
  auto cosines = svd_small(matmul_at_b(a, b)).singular_values;  // descending
  // Residual of b after projecting onto span(a); its singular values are the sines.
  Matrix resid = sub(b, matmul(a, matmul_at_b(a, b)));
  auto sines = svd_small(resid).singular_values;  // descending
  std::vector<double> theta(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double c = std::clamp(cosines[i], 0.0, 1.0);
    const double s = std::clamp(sines[k - 1 - i], 0.0, 1.0);
    theta[i] = std::atan2(s, c);
  }
  std::sort(theta.begin(), theta.end());
  return theta;
}

double grassmann_distance(const Matrix& a, const Matrix& b) {
  if (a == b) return 0.0;
  auto dist = [](const Matrix& x, const Matrix& y) {
    double s = 0.0;
    for (double t : principal_angles(x, y)) s += t * t;
    return std::sqrt(s);
  };
  // Average of both orders: floating-point addition commutes, so this is exactly symmetric.
  return 0.5 * (dist(a, b) + dist(b, a));
}

double grassmann_distance(const SubspacePoint& a, const SubspacePoint& b) {
  return grassmann_distance(a.basis, b.basis);
}

std::vector<TrajectoryRecord> trajectory_series(const PcaModel& model,
                                                std::span<const AlignmentSnapshot> snapshots) {
  if (snapshots.empty()) throw ValidationError("trajectory_series: empty series");
  std::vector<TrajectoryRecord> out;
  out.reserve(snapshots.size());
  const auto z0 = pca_project(model, state_of(snapshots.front()));
  const auto s0 = lift_subspace(z0);
  for (const auto& snap : snapshots) {
    TrajectoryRecord rec;
    rec.t = snap.tokens;
    rec.z = pca_project(model, state_of(snap));
    rec.r_g = grassmann_distance(s0, lift_subspace(rec.z));
    rec.r_e = std::hypot(rec.z[0] - z0[0], rec.z[1] - z0[1]);
    out.push_back(rec);
  }
  return out;
}

std::string format_loadings(const PcaModel& model) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-6s %9s %9s %14s\n", "", "U_P%", "NOC%", "Performance%");
  out += line;
  for (std::size_t c = 0; c < 2; ++c) {
    std::snprintf(line, sizeof line, "PC%-4zu %9.3f %9.3f %14.3f\n", c + 1, model.vectors(0, c),
                  model.vectors(1, c), model.vectors(2, c));
    out += line;
  }
  std::snprintf(line, sizeof line, "PC1+PC2 explain %.2f%% of the total variance\n",
                100.0 * (model.explained[0] + model.explained[1]));
  out += line;
  return out;
}

}  // namespace nexus
