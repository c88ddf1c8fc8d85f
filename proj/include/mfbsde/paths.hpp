#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace mfbsde {

using Index = Eigen::Index;

/// Uniform partition t_k = kT/M of [0, T].
class TimeGrid {
public:
  TimeGrid(double T, Index M);

  double horizon() const { return T_; }
  Index steps() const { return M_; }
  double dt() const { return T_ / static_cast<double>(M_); }
  double node(Index k) const;
  std::vector<double> nodes() const;

private:
  double T_;
  Index M_;
};

TimeGrid build_grid(double T, Index M);

struct SamplingOptions {
  /// Particles 2j and 2j+1 share a stream with opposite signs.
  bool antithetic = true;
  /// Width of the optional initial randomization channel (0 = off).
  Index initial_dim = 0;
};

/// N Brownian paths in R^d on a grid. Immutable once built.
///
/// Particle p draws from its own stream keyed by (seed, p) (or (seed, p/2)
/// with antithetic pairing), so its path does not depend on N.
class PathEnsemble {
public:
  PathEnsemble(TimeGrid grid, Index N, Index d, std::uint64_t seed,
               std::vector<Eigen::MatrixXd> positions,
               Eigen::MatrixXd initial = {});

  const TimeGrid& grid() const { return grid_; }
  Index particles() const { return N_; }
  Index dim() const { return d_; }
  std::uint64_t seed() const { return seed_; }

  /// ΔW_k, N × d.
  const Eigen::MatrixXd& increment(Index k) const;
  /// W_{t_k}, N × d.
  const Eigen::MatrixXd& position(Index k) const;
  /// Initial randomization channel, N × initial_dim (may be empty).
  const Eigen::MatrixXd& initial() const { return initial_; }

  /// Every factor-th node of this ensemble; same particles, same noise.
  PathEnsemble coarsen(Index factor) const;
  /// Ensemble restricted to the listed particle rows (repeats allowed).
  PathEnsemble select(const std::vector<Index>& rows) const;

private:
  TimeGrid grid_;
  Index N_;
  Index d_;
  std::uint64_t seed_;
  std::vector<Eigen::MatrixXd> positions_;
  std::vector<Eigen::MatrixXd> increments_;
  Eigen::MatrixXd initial_;
};

PathEnsemble sample_brownian(const TimeGrid& grid, Index N, Index d, std::uint64_t seed,
                             const SamplingOptions& opts = {});

const Eigen::MatrixXd& brownian_at(const PathEnsemble& ensemble, Index k);

/// Little-endian: u64 header {N, M, d, seed}, then increments as f64 in
/// [k][particle][coordinate] order. T is not stored and must be supplied.
void dump_ensemble(const PathEnsemble& ensemble, const std::string& path);
PathEnsemble load_ensemble(const std::string& path, double T);

}  // namespace mfbsde
