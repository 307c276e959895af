#pragma once

#include <string>
#include <vector>

#include "curepinn/physics.hpp"

namespace curepinn {

/// Space/time discretization for the reference solver.
struct Grid {
  int nx = 101;               // nodes over [0, L]
  double dt = 0.1;            // s
  double t_end = 18000.0;     // s
  double snapshot_every = 5.0;  // s between stored states

  /// Rejects grids that violate the RK4 diffusion stability bound for the
  /// given material (4 kappa dt / dx^2 must stay below ~2.785; we require
  /// <= 2.7 to leave margin for the reaction coupling).
  void validate(const TaskSpec& task) const;
};

/// Gridded (t, x) -> (T, alpha) field. Row-major: value(it, ix) at
/// times[it], positions[ix].
struct SolutionField {
  std::vector<double> times;      // s
  std::vector<double> positions;  // m
  std::vector<double> T;          // degC, times.size() x positions.size()
  std::vector<double> alpha;

  int nt() const { return static_cast<int>(times.size()); }
  int nx() const { return static_cast<int>(positions.size()); }
  double t_at(int it, int ix) const { return T[it * nx() + ix]; }
  double a_at(int it, int ix) const { return alpha[it * nx() + ix]; }
};

/// Method-of-lines solve of the coupled heat/cure system: second-order
/// central differences with ghost-node Robin boundaries, explicit RK4 on
/// (T, alpha) jointly. Throws naming the first bad step if the state goes
/// non-finite.
SolutionField solve(const TaskSpec& task, const Grid& grid);

/// Bilinear interpolation; (t, x) outside the stored domain is rejected.
struct Sample {
  double T;
  double alpha;
};
Sample sample(const SolutionField& field, double t, double x);

/// CSV export, columns t,x,T,alpha (one row per grid entry).
void export_csv(const SolutionField& field, const std::string& path);

/// Binary cache keyed by a hash of (task, grid): solve_cached returns the
/// stored field when the key matches, otherwise solves and stores.
std::string field_cache_key(const TaskSpec& task, const Grid& grid);
SolutionField solve_cached(const TaskSpec& task, const Grid& grid,
                           const std::string& cache_dir);

void save_field(const SolutionField& field, const std::string& path);
SolutionField load_field(const std::string& path);

}  // namespace curepinn
