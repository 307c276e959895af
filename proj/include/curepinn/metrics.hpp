#pragma once

#include <functional>
#include <span>
#include <vector>

#include "curepinn/fd_solver.hpp"
#include "curepinn/sequential.hpp"

namespace curepinn {

/// Rectangular evaluation mesh. Sampled values are stored row-major over
/// (times, xs), matching SolutionField.
struct EvalGrid {
  std::vector<double> times;  // s
  std::vector<double> xs;     // m

  /// nt x nx mesh spanning [0, t_end] x [0, L] inclusive.
  static EvalGrid dense(double t_end, double L, int nt = 200, int nx = 50);

  /// Trajectory at the part mid-plane: nt times at the single x = L/2.
  static EvalGrid midline(double t_end, double L, int nt = 200);

  size_t size() const { return times.size() * xs.size(); }
};

/// Temperature and degree-of-cure values over an EvalGrid.
struct FieldValues {
  std::vector<double> T;      // degC
  std::vector<double> alpha;
};

using PointPredictor = std::function<Prediction(double t, double x)>;

FieldValues evaluate_on(const EvalGrid& grid, const PointPredictor& predict);

/// Reference values on the grid, bilinearly interpolated from a stored
/// solver field. Grid nodes outside the field's domain are rejected.
FieldValues reference_on(const EvalGrid& grid, const SolutionField& field);

/// ||pred - ref||_2 / ||ref||_2 over the flattened grid. Rejects size
/// mismatches and a zero-norm reference.
double relative_l2(std::span<const double> pred, std::span<const double> ref);

/// Largest |pred - ref| entry; 0 for empty input.
double max_abs_error(std::span<const double> pred, std::span<const double> ref);

/// The four error figures reported per method: relative L2 and maximum
/// absolute error, for temperature and degree of cure.
struct ErrorSummary {
  double rel_l2_T = 0.0;
  double rel_l2_alpha = 0.0;
  double max_abs_T = 0.0;    // degC
  double max_abs_alpha = 0.0;
};

ErrorSummary compare(const FieldValues& pred, const FieldValues& ref);

}  // namespace curepinn
