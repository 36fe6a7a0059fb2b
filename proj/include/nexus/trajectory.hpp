#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "nexus/align.hpp"
#include "nexus/tensor.hpp"

namespace nexus {

/// (U_P%, NOC%, Performance%) at one snapshot.
struct StateVector {
  double up_pct = 0.0;
  double noc_pct = 0.0;
  double perf_pct = 0.0;

  std::array<double, 3> as_array() const { return {up_pct, noc_pct, perf_pct}; }
};

StateVector state_of(const AlignmentSnapshot& s);

struct PcaModel {
  std::array<double, 3> mean{};
  Matrix vectors;                   // 3x3, column i is the i-th principal direction
  std::array<double, 3> values{};   // descending, >= 0
  std::array<double, 3> explained{};  // values / sum; uniform when the spread is zero
  bool centered = true;
  bool degenerate = false;  // all states identical (zero covariance)
};

/// Eigendecomposition of the 3x3 sample covariance (divisor n-1) of at
/// least three states. Uncentered mode uses the raw second moment (divisor n).
PcaModel pca_fit(std::span<const StateVector> states, bool center = true);

/// z = V[:, 0:2]ᵀ (x - mean).
std::array<double, 2> pca_project(const PcaModel& model, const StateVector& state);

struct SubspacePoint {
  Matrix basis;  // 3x2, orthonormal columns
  std::array<double, 2> z{};
  bool fallback = false;  // |z| < 1e-10, e1 used in place of (z1, z2, 0)
};

/// Span of (z1, z2, 0) and e3, orthonormalized by QR.
SubspacePoint lift_subspace(std::array<double, 2> z);

/// Principal angles between the column spans of two orthonormal bases,
/// ascending. Uses cosines and sines together for accuracy near 0 and pi/2.
std::vector<double> principal_angles(const Matrix& a, const Matrix& b);
/// sqrt(sum theta_i^2); exactly symmetric and exactly 0 for identical bases.
double grassmann_distance(const Matrix& a, const Matrix& b);
double grassmann_distance(const SubspacePoint& a, const SubspacePoint& b);

struct TrajectoryRecord {
  double t = 0.0;
  std::array<double, 2> z{};
  double r_g = 0.0;  // geodesic distance to the first snapshot's subspace
  double r_e = 0.0;  // Euclidean distance to the first embedding
};

/// The first snapshot is the reference.
std::vector<TrajectoryRecord> trajectory_series(const PcaModel& model,
                                                std::span<const AlignmentSnapshot> snapshots);

/// Loadings of the three statistics on PC1 and PC2 plus the variance share
/// of the first two components, as a fixed-width text table.
std::string format_loadings(const PcaModel& model);

}  // namespace nexus
