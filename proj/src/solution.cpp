#include "mfbsde/solution.hpp"

#include "binary_io.hpp"

#include <fstream>
#include <stdexcept>

namespace mfbsde {

Solution::Solution(TimeGrid g, Index particles, Index components, Index noise, std::uint64_t s)
    : grid(g), N(particles), n(components), d(noise), seed(s) {
  if (N < 1 || n < 1 || d < 1) throw std::invalid_argument("Solution: N, n and d must be positive");
  const Index M = grid.steps();
  Y.assign(static_cast<std::size_t>(M + 1), Eigen::MatrixXd::Zero(N, n));
  Z.assign(static_cast<std::size_t>(M), Eigen::MatrixXd::Zero(N, n * d));
}

Eigen::MatrixXd Solution::z_matrix(Index k, Index p) const {
  if (k < 0 || k >= grid.steps()) throw std::out_of_range("Solution: Z node out of range");
  if (p < 0 || p >= N) throw std::out_of_range("Solution: particle out of range");
  Eigen::MatrixXd z(n, d);
  const auto& Zk = Z[static_cast<std::size_t>(k)];
  for (Index i = 0; i < n; ++i) z.row(i) = Zk.block(p, i * d, 1, d);
  return z;
}

void dump_solution(const Solution& sol, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("dump_solution: cannot open " + path);
  for (Index v : {sol.N, sol.grid.steps(), sol.n, sol.d}) detail::write_u64(out, static_cast<std::uint64_t>(v));
  detail::write_u64(out, sol.seed);
  for (const auto& Y : sol.Y)
    for (Index p = 0; p < sol.N; ++p)
      for (Index i = 0; i < sol.n; ++i) detail::write_f64(out, Y(p, i));
  for (const auto& Z : sol.Z)
    for (Index p = 0; p < sol.N; ++p)
      for (Index c = 0; c < sol.n * sol.d; ++c) detail::write_f64(out, Z(p, c));
  if (!out) throw std::runtime_error("dump_solution: write failed for " + path);
}

Solution load_solution(const std::string& path, double T) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_solution: cannot open " + path);
  const auto N = static_cast<Index>(detail::read_u64(in));
  const auto M = static_cast<Index>(detail::read_u64(in));
  const auto n = static_cast<Index>(detail::read_u64(in));
  const auto d = static_cast<Index>(detail::read_u64(in));
  const std::uint64_t seed = detail::read_u64(in);
  if (N < 1 || M < 1 || n < 1 || d < 1) throw std::runtime_error("load_solution: bad header in " + path);
  Solution sol(TimeGrid(T, M), N, n, d, seed);
  for (auto& Y : sol.Y)
    for (Index p = 0; p < N; ++p)
      for (Index i = 0; i < n; ++i) Y(p, i) = detail::read_f64(in);
  for (auto& Z : sol.Z)
    for (Index p = 0; p < N; ++p)
      for (Index c = 0; c < n * d; ++c) Z(p, c) = detail::read_f64(in);
  return sol;
}

}  // namespace mfbsde
