#pragma once

#include "mfbsde/paths.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace mfbsde {

/// Discrete (Y, Z) on a full grid. Y[k] is N × n for k = 0..M; Z[k] is
/// N × (n·d) for k = 0..M−1, with row i of the n × d matrix of particle p
/// stored in columns [i·d, (i+1)·d) of row p.
struct Solution {
  Solution(TimeGrid grid, Index N, Index n, Index d, std::uint64_t seed = 0);

  TimeGrid grid;
  Index N;
  Index n;
  Index d;
  std::uint64_t seed;
  std::vector<Eigen::MatrixXd> Y;
  std::vector<Eigen::MatrixXd> Z;

  /// Z at step k for particle p as an n × d matrix.
  Eigen::MatrixXd z_matrix(Index k, Index p) const;
  /// Columns of Z[k] belonging to component i (N × d).
  auto z_rows(Index k, Index i) { return Z[static_cast<std::size_t>(k)].middleCols(i * d, d); }
  auto z_rows(Index k, Index i) const { return Z[static_cast<std::size_t>(k)].middleCols(i * d, d); }
};

/// Little-endian: u64 header {N, M, n, d, seed}, then Y as f64 in
/// [k][particle][component] order for k = 0..M, then Z in
/// [k][particle][component·d + coordinate] order for k = 0..M−1.
void dump_solution(const Solution& sol, const std::string& path);
Solution load_solution(const std::string& path, double T);

}  // namespace mfbsde
