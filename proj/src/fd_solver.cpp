#include "curepinn/fd_solver.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "curepinn/hash.hpp"

namespace curepinn {

void Grid::validate(const TaskSpec& task) const {
  if (nx < 3) throw std::invalid_argument("Grid: nx must be >= 3");
  if (dt <= 0.0) throw std::invalid_argument("Grid: dt must be > 0");
  if (t_end <= 0.0 || t_end > task.cycle.t_end)
    throw std::invalid_argument("Grid: t_end must lie in (0, cycle.t_end]");
  const double dx = task.material.L / (nx - 1);
  const double kappa =
      task.material.kxx / (task.material.rho * task.material.Cp);
  const double stability = 4.0 * kappa * dt / (dx * dx);
  if (stability > 2.7)
    throw std::invalid_argument(
        "Grid: diffusion stability factor " + std::to_string(stability) +
        " exceeds the RK4 bound; reduce dt or coarsen the grid");
}

namespace {

struct Rhs {
  const TaskSpec& task;
  double dx;
  double kappa;        // kxx / (rho Cp)
  double source_coef;  // (1 - vf) rho_r H_R / (rho Cp)

  /// dT/dt and dalpha/dt for the full node vector at time t.
  void operator()(double t, const std::vector<double>& temp,
                  const std::vector<double>& alpha, std::vector<double>& dtemp,
                  std::vector<double>& dalpha) const {
    const int nx = static_cast<int>(temp.size());
    const double ta = air_temperature(t, task.cycle);
    const double kxx = task.material.kxx;

    for (int i = 0; i < nx; ++i) {
      double a = alpha[i];
      if (a < 0.0) a = 0.0;
      if (a > 1.0) a = 1.0;
      dalpha[i] = cure_rate_eval(a, temp[i] + kCelsiusToKelvin, task.kinetics);
    }

    // Interior Laplacian; boundary nodes use the ghost values implied by the
    // Robin balances k dT/dx = h_b (T - T_a) at x=0 and k dT/dx = h_t (T_a - T)
    // at x=L, which keeps the scheme second order at the walls.
    for (int i = 1; i < nx - 1; ++i) {
      const double lap = (temp[i - 1] - 2.0 * temp[i] + temp[i + 1]) / (dx * dx);
      dtemp[i] = kappa * lap + source_coef * dalpha[i];
    }
    {
      const double ghost =
          temp[1] - 2.0 * dx * task.h_bottom * (temp[0] - ta) / kxx;
      const double lap = (ghost - 2.0 * temp[0] + temp[1]) / (dx * dx);
      dtemp[0] = kappa * lap + source_coef * dalpha[0];
    }
    {
      const double ghost =
          temp[nx - 2] + 2.0 * dx * task.h_top * (ta - temp[nx - 1]) / kxx;
      const double lap = (temp[nx - 2] - 2.0 * temp[nx - 1] + ghost) / (dx * dx);
      dtemp[nx - 1] = kappa * lap + source_coef * dalpha[nx - 1];
    }
  }
};

}  // namespace

SolutionField solve(const TaskSpec& task, const Grid& grid) {
  task.validate();
  grid.validate(task);

  const int nx = grid.nx;
  const double dx = task.material.L / (nx - 1);
  const long long n_steps = std::llround(grid.t_end / grid.dt);
  const double dt = grid.t_end / static_cast<double>(n_steps);
  const long long snap_stride =
      std::max(1LL, std::llround(grid.snapshot_every / dt));

  Rhs rhs{task, dx,
          task.material.kxx / (task.material.rho * task.material.Cp),
          (1.0 - task.material.vf) * task.material.rho_r * task.material.H_R /
              (task.material.rho * task.material.Cp)};

  std::vector<double> temp(nx, task.T0), alpha(nx, task.alpha0);
  std::vector<double> t1(nx), a1(nx), t2(nx), a2(nx), t3(nx), a3(nx), t4(nx),
      a4(nx), ts(nx), as(nx);

  SolutionField field;
  field.positions.resize(nx);
  for (int i = 0; i < nx; ++i) field.positions[i] = i * dx;

  auto snapshot = [&](double t) {
    field.times.push_back(t);
    field.T.insert(field.T.end(), temp.begin(), temp.end());
    field.alpha.insert(field.alpha.end(), alpha.begin(), alpha.end());
  };
  snapshot(0.0);

  for (long long step = 0; step < n_steps; ++step) {
    const double t = step * dt;
    rhs(t, temp, alpha, t1, a1);
    for (int i = 0; i < nx; ++i) {
      ts[i] = temp[i] + 0.5 * dt * t1[i];
      as[i] = alpha[i] + 0.5 * dt * a1[i];
    }
    rhs(t + 0.5 * dt, ts, as, t2, a2);
    for (int i = 0; i < nx; ++i) {
      ts[i] = temp[i] + 0.5 * dt * t2[i];
      as[i] = alpha[i] + 0.5 * dt * a2[i];
    }
    rhs(t + 0.5 * dt, ts, as, t3, a3);
    for (int i = 0; i < nx; ++i) {
      ts[i] = temp[i] + dt * t3[i];
      as[i] = alpha[i] + dt * a3[i];
    }
    rhs(std::min(t + dt, grid.t_end), ts, as, t4, a4);
    bool finite = true;
    for (int i = 0; i < nx; ++i) {
      temp[i] += dt / 6.0 * (t1[i] + 2.0 * t2[i] + 2.0 * t3[i] + t4[i]);
      alpha[i] += dt / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]);
      if (alpha[i] > 1.0) alpha[i] = 1.0;
      finite = finite && std::isfinite(temp[i]) && std::isfinite(alpha[i]);
    }
    if (!finite)
      throw std::runtime_error("solve: non-finite state at step " +
                               std::to_string(step + 1) + " (t=" +
                               std::to_string((step + 1) * dt) + " s)");
    if ((step + 1) % snap_stride == 0 || step + 1 == n_steps)
      snapshot((step + 1) * dt);
  }
  return field;
}

Sample sample(const SolutionField& field, double t, double x) {
  const auto& ts = field.times;
  const auto& xs = field.positions;
  if (ts.empty() || xs.empty())
    throw std::invalid_argument("sample: empty field");
  if (!(t >= ts.front() && t <= ts.back()))
    throw std::domain_error("sample: t=" + std::to_string(t) +
                            " outside stored range");
  if (!(x >= xs.front() && x <= xs.back()))
    throw std::domain_error("sample: x=" + std::to_string(x) +
                            " outside stored range");

  auto bracket = [](const std::vector<double>& v, double q) {
    int lo = 0, hi = static_cast<int>(v.size()) - 1;
    while (hi - lo > 1) {
      int mid = (lo + hi) / 2;
      (v[mid] <= q ? lo : hi) = mid;
    }
    return lo;
  };
  const int it = bracket(ts, t);
  const int ix = bracket(xs, x);
  const double ft = ts[it + 1] > ts[it] ? (t - ts[it]) / (ts[it + 1] - ts[it]) : 0.0;
  const double fx = xs[ix + 1] > xs[ix] ? (x - xs[ix]) / (xs[ix + 1] - xs[ix]) : 0.0;

  auto lerp2 = [&](const std::vector<double>& v) {
    const int n = field.nx();
    const double v00 = v[it * n + ix], v01 = v[it * n + ix + 1];
    const double v10 = v[(it + 1) * n + ix], v11 = v[(it + 1) * n + ix + 1];
    return (1 - ft) * ((1 - fx) * v00 + fx * v01) +
           ft * ((1 - fx) * v10 + fx * v11);
  };
  return Sample{lerp2(field.T), lerp2(field.alpha)};
}

void export_csv(const SolutionField& field, const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("export_csv: cannot open " + path);
  std::fprintf(f, "t,x,T,alpha\n");
  for (int it = 0; it < field.nt(); ++it)
    for (int ix = 0; ix < field.nx(); ++ix)
      std::fprintf(f, "%.9g,%.9g,%.9g,%.9g\n", field.times[it],
                   field.positions[ix], field.t_at(it, ix), field.a_at(it, ix));
  std::fclose(f);
}

std::string field_cache_key(const TaskSpec& task, const Grid& grid) {
  Fnv1a h;
  h.add(task_to_json(task));
  char buf[128];
  std::snprintf(buf, sizeof buf, "grid %d %a %a %a", grid.nx, grid.dt,
                grid.t_end, grid.snapshot_every);
  h.add(buf);
  return h.hex();
}

namespace {
constexpr std::uint64_t kFieldMagic = 0x6375726566696c64ULL;  // "curefild"
}

void save_field(const SolutionField& field, const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("save_field: cannot open " + path);
  const std::uint64_t nt = field.times.size(), nx = field.positions.size();
  std::fwrite(&kFieldMagic, sizeof kFieldMagic, 1, f);
  std::fwrite(&nt, sizeof nt, 1, f);
  std::fwrite(&nx, sizeof nx, 1, f);
  std::fwrite(field.times.data(), sizeof(double), nt, f);
  std::fwrite(field.positions.data(), sizeof(double), nx, f);
  std::fwrite(field.T.data(), sizeof(double), nt * nx, f);
  std::fwrite(field.alpha.data(), sizeof(double), nt * nx, f);
  if (std::fclose(f) != 0)
    throw std::runtime_error("save_field: write failed for " + path);
}

SolutionField load_field(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("load_field: cannot open " + path);
  auto fail = [&](const char* why) {
    std::fclose(f);
    throw std::runtime_error(std::string("load_field: ") + why + " in " + path);
  };
  std::uint64_t magic = 0, nt = 0, nx = 0;
  if (std::fread(&magic, sizeof magic, 1, f) != 1 || magic != kFieldMagic)
    fail("bad magic");
  if (std::fread(&nt, sizeof nt, 1, f) != 1 ||
      std::fread(&nx, sizeof nx, 1, f) != 1)
    fail("truncated header");
  SolutionField field;
  field.times.resize(nt);
  field.positions.resize(nx);
  field.T.resize(nt * nx);
  field.alpha.resize(nt * nx);
  if (std::fread(field.times.data(), sizeof(double), nt, f) != nt ||
      std::fread(field.positions.data(), sizeof(double), nx, f) != nx ||
      std::fread(field.T.data(), sizeof(double), nt * nx, f) != nt * nx ||
      std::fread(field.alpha.data(), sizeof(double), nt * nx, f) != nt * nx)
    fail("truncated data");
  std::fclose(f);
  return field;
}

SolutionField solve_cached(const TaskSpec& task, const Grid& grid,
                           const std::string& cache_dir) {
  std::filesystem::create_directories(cache_dir);
  const std::string path =
      cache_dir + "/oracle_" + field_cache_key(task, grid) + ".bin";
  if (std::filesystem::exists(path)) return load_field(path);
  SolutionField field = solve(task, grid);
  save_field(field, path);
  return field;
}

}  // namespace curepinn
