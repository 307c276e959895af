#include "curepinn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace curepinn {

EvalGrid EvalGrid::dense(double t_end, double L, int nt, int nx) {
  if (t_end <= 0 || L <= 0)
    throw std::invalid_argument("EvalGrid: domain extents must be > 0");
  if (nt < 2 || nx < 2)
    throw std::invalid_argument("EvalGrid: need at least 2 points per axis");
  EvalGrid g;
  g.times.reserve(nt);
  g.xs.reserve(nx);
  for (int i = 0; i < nt; ++i)
    g.times.push_back(t_end * (static_cast<double>(i) / (nt - 1)));
  for (int j = 0; j < nx; ++j)
    g.xs.push_back(L * (static_cast<double>(j) / (nx - 1)));
  return g;
}

EvalGrid EvalGrid::midline(double t_end, double L, int nt) {
  if (t_end <= 0 || L <= 0)
    throw std::invalid_argument("EvalGrid: domain extents must be > 0");
  if (nt < 2)
    throw std::invalid_argument("EvalGrid: need at least 2 time points");
  EvalGrid g;
  g.times.reserve(nt);
  for (int i = 0; i < nt; ++i)
    g.times.push_back(t_end * (static_cast<double>(i) / (nt - 1)));
  g.xs = {L / 2.0};
  return g;
}

FieldValues evaluate_on(const EvalGrid& grid, const PointPredictor& predict) {
  FieldValues vals;
  vals.T.reserve(grid.size());
  vals.alpha.reserve(grid.size());
  for (double t : grid.times)
    for (double x : grid.xs) {
      const Prediction p = predict(t, x);
      vals.T.push_back(p.T);
      vals.alpha.push_back(p.alpha);
    }
  return vals;
}

FieldValues reference_on(const EvalGrid& grid, const SolutionField& field) {
  FieldValues vals;
  vals.T.reserve(grid.size());
  vals.alpha.reserve(grid.size());
  for (double t : grid.times)
    for (double x : grid.xs) {
      const Sample s = sample(field, t, x);
      vals.T.push_back(s.T);
      vals.alpha.push_back(s.alpha);
    }
  return vals;
}

double relative_l2(std::span<const double> pred, std::span<const double> ref) {
  if (pred.size() != ref.size())
    throw std::invalid_argument("relative_l2: size mismatch");
  double diff2 = 0.0, ref2 = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    const double d = pred[i] - ref[i];
    diff2 += d * d;
    ref2 += ref[i] * ref[i];
  }
  if (ref2 == 0.0)
    throw std::invalid_argument("relative_l2: reference norm is zero");
  return std::sqrt(diff2) / std::sqrt(ref2);
}

double max_abs_error(std::span<const double> pred,
                     std::span<const double> ref) {
  if (pred.size() != ref.size())
    throw std::invalid_argument("max_abs_error: size mismatch");
  double worst = 0.0;
  for (size_t i = 0; i < ref.size(); ++i)
    worst = std::max(worst, std::abs(pred[i] - ref[i]));
  return worst;
}

ErrorSummary compare(const FieldValues& pred, const FieldValues& ref) {
  ErrorSummary s;
  s.rel_l2_T = relative_l2(pred.T, ref.T);
  s.rel_l2_alpha = relative_l2(pred.alpha, ref.alpha);
  s.max_abs_T = max_abs_error(pred.T, ref.T);
  s.max_abs_alpha = max_abs_error(pred.alpha, ref.alpha);
  return s;
}

}  // namespace curepinn
