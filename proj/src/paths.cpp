#include "mfbsde/paths.hpp"

#include "binary_io.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace mfbsde {

TimeGrid::TimeGrid(double T, Index M) : T_(T), M_(M) {
  if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("TimeGrid: horizon must be positive");
  if (M < 1) throw std::invalid_argument("TimeGrid: need at least one step");
}

double TimeGrid::node(Index k) const {
  if (k < 0 || k > M_) throw std::out_of_range("TimeGrid: node index out of range");
  if (k == M_) return T_;
  return T_ * static_cast<double>(k) / static_cast<double>(M_);
}

std::vector<double> TimeGrid::nodes() const {
  std::vector<double> out(static_cast<std::size_t>(M_ + 1));
  for (Index k = 0; k <= M_; ++k) out[static_cast<std::size_t>(k)] = node(k);
  return out;
}

TimeGrid build_grid(double T, Index M) { return TimeGrid(T, M); }

PathEnsemble::PathEnsemble(TimeGrid grid, Index N, Index d, std::uint64_t seed,
                           std::vector<Eigen::MatrixXd> positions, Eigen::MatrixXd initial)
    : grid_(grid), N_(N), d_(d), seed_(seed), positions_(std::move(positions)), initial_(std::move(initial)) {
  if (N < 1 || d < 1) throw std::invalid_argument("PathEnsemble: N and d must be positive");
  if (static_cast<Index>(positions_.size()) != grid_.steps() + 1)
    throw std::invalid_argument("PathEnsemble: need M+1 position slices");
  for (const auto& w : positions_)
    if (w.rows() != N || w.cols() != d) throw std::invalid_argument("PathEnsemble: slice shape mismatch");
  if (initial_.size() > 0 && initial_.rows() != N)
    throw std::invalid_argument("PathEnsemble: initial channel row mismatch");
  // Increments are stored as differences of positions so that
  // position(k+1) - position(k) reproduces them exactly.
  increments_.reserve(static_cast<std::size_t>(grid_.steps()));
  for (Index k = 0; k < grid_.steps(); ++k)
    increments_.push_back(positions_[static_cast<std::size_t>(k + 1)] - positions_[static_cast<std::size_t>(k)]);
}

const Eigen::MatrixXd& PathEnsemble::increment(Index k) const {
  if (k < 0 || k >= grid_.steps()) throw std::out_of_range("PathEnsemble: step index out of range");
  return increments_[static_cast<std::size_t>(k)];
}

const Eigen::MatrixXd& PathEnsemble::position(Index k) const {
  if (k < 0 || k > grid_.steps()) throw std::out_of_range("PathEnsemble: node index out of range");
  return positions_[static_cast<std::size_t>(k)];
}

PathEnsemble PathEnsemble::coarsen(Index factor) const {
  if (factor < 1 || grid_.steps() % factor != 0)
    throw std::invalid_argument("coarsen: factor must divide the step count");
  std::vector<Eigen::MatrixXd> pos;
  for (Index k = 0; k <= grid_.steps(); k += factor) pos.push_back(positions_[static_cast<std::size_t>(k)]);
  return PathEnsemble(TimeGrid(grid_.horizon(), grid_.steps() / factor), N_, d_, seed_, std::move(pos), initial_);
}

PathEnsemble PathEnsemble::select(const std::vector<Index>& rows) const {
  if (rows.empty()) throw std::invalid_argument("select: empty row list");
  const Index n = static_cast<Index>(rows.size());
  std::vector<Eigen::MatrixXd> pos;
  for (const auto& w : positions_) {
    Eigen::MatrixXd s(n, d_);
    for (Index r = 0; r < n; ++r) s.row(r) = w.row(rows[static_cast<std::size_t>(r)]);
    pos.push_back(std::move(s));
  }
  Eigen::MatrixXd init;
  if (initial_.size() > 0) {
    init.resize(n, initial_.cols());
    for (Index r = 0; r < n; ++r) init.row(r) = initial_.row(rows[static_cast<std::size_t>(r)]);
  }
  return PathEnsemble(grid_, n, d_, seed_, std::move(pos), std::move(init));
}

namespace {

std::mt19937_64 particle_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(seq);
}

}  // namespace

PathEnsemble sample_brownian(const TimeGrid& grid, Index N, Index d, std::uint64_t seed,
                             const SamplingOptions& opts) {
  if (N < 1 || d < 1) throw std::invalid_argument("sample_brownian: N and d must be positive");
  if (opts.initial_dim < 0) throw std::invalid_argument("sample_brownian: negative initial_dim");
  const Index M = grid.steps();
  const double sd = std::sqrt(grid.dt());

  std::vector<Eigen::MatrixXd> pos(static_cast<std::size_t>(M + 1), Eigen::MatrixXd::Zero(N, d));
  Eigen::MatrixXd init;
  if (opts.initial_dim > 0) init.resize(N, opts.initial_dim);

  Eigen::VectorXd draws(M * d);
  Eigen::VectorXd init_draws(opts.initial_dim);
  for (Index p = 0; p < N; ++p) {
    const bool mirror = opts.antithetic && (p % 2 == 1);
    if (!mirror) {
      const std::uint64_t stream = opts.antithetic ? static_cast<std::uint64_t>(p / 2) : static_cast<std::uint64_t>(p);
      auto gen = particle_stream(seed, stream, 0);
      std::normal_distribution<double> normal;
      for (Index i = 0; i < draws.size(); ++i) draws[i] = sd * normal(gen);
      if (opts.initial_dim > 0) {
        auto gen0 = particle_stream(seed, stream, 1);
        std::normal_distribution<double> normal0;
        for (Index i = 0; i < opts.initial_dim; ++i) init_draws[i] = normal0(gen0);
      }
    }
    const double sign = mirror ? -1.0 : 1.0;
    for (Index k = 0; k < M; ++k)
      for (Index j = 0; j < d; ++j)
        pos[static_cast<std::size_t>(k + 1)](p, j) = pos[static_cast<std::size_t>(k)](p, j) + sign * draws[k * d + j];
    if (opts.initial_dim > 0) init.row(p) = sign * init_draws.transpose();
  }
  return PathEnsemble(grid, N, d, seed, std::move(pos), std::move(init));
}

const Eigen::MatrixXd& brownian_at(const PathEnsemble& ensemble, Index k) { return ensemble.position(k); }

void dump_ensemble(const PathEnsemble& ensemble, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("dump_ensemble: cannot open " + path);
  const Index N = ensemble.particles(), M = ensemble.grid().steps(), d = ensemble.dim();
  detail::write_u64(out, static_cast<std::uint64_t>(N));
  detail::write_u64(out, static_cast<std::uint64_t>(M));
  detail::write_u64(out, static_cast<std::uint64_t>(d));
  detail::write_u64(out, ensemble.seed());
  for (Index k = 0; k < M; ++k) {
    const auto& inc = ensemble.increment(k);
    for (Index p = 0; p < N; ++p)
      for (Index j = 0; j < d; ++j) detail::write_f64(out, inc(p, j));
  }
  if (!out) throw std::runtime_error("dump_ensemble: write failed for " + path);
}

PathEnsemble load_ensemble(const std::string& path, double T) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_ensemble: cannot open " + path);
  const auto N = static_cast<Index>(detail::read_u64(in));
  const auto M = static_cast<Index>(detail::read_u64(in));
  const auto d = static_cast<Index>(detail::read_u64(in));
  const std::uint64_t seed = detail::read_u64(in);
  if (N < 1 || M < 1 || d < 1) throw std::runtime_error("load_ensemble: bad header in " + path);
  TimeGrid grid(T, M);
  std::vector<Eigen::MatrixXd> pos(static_cast<std::size_t>(M + 1), Eigen::MatrixXd::Zero(N, d));
  for (Index k = 0; k < M; ++k)
    for (Index p = 0; p < N; ++p)
      for (Index j = 0; j < d; ++j)
        pos[static_cast<std::size_t>(k + 1)](p, j) = pos[static_cast<std::size_t>(k)](p, j) + detail::read_f64(in);
  return PathEnsemble(grid, N, d, seed, std::move(pos));
}

}  // namespace mfbsde
