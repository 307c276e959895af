#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace curepinn {

/// Reverse-mode tape for scalar objectives. This is the generic autodiff
/// surface: it handles any loss expressible with the operators below, at the
/// cost of one tape node per operation. Training loops use the structured
/// backward in net.hpp instead; the tape's role is the grad_params entry
/// point and exactness cross-checks at small scale.
class Tape {
public:
  struct Var {
    double v = 0.0;
    int id = -1;  // -1: constant, lives off the tape

    Var() = default;
    Var(double value) : v(value) {}
    Var(double value, int node) : v(value), id(node) {}
  };

  Tape() {
    if (current_) throw std::logic_error("Tape: nesting tapes is not supported");
    current_ = this;
  }
  ~Tape() { current_ = nullptr; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape& current() {
    if (!current_) throw std::logic_error("Tape: no active tape");
    return *current_;
  }

  Var input(double v) { return push(v, -1, -1, 0.0, 0.0); }

  Var push(double v, int a, int b, double da, double db) {
    nodes_.push_back(Node{a, b, da, db});
    return Var{v, static_cast<int>(nodes_.size()) - 1};
  }

  size_t size() const { return nodes_.size(); }

  /// Adjoints of the first n_inputs tape entries with respect to `output`.
  std::vector<double> gradient(const Var& output, int n_inputs) const {
    if (output.id < 0) return std::vector<double>(n_inputs, 0.0);
    std::vector<double> adj(nodes_.size(), 0.0);
    adj[output.id] = 1.0;
    for (int k = static_cast<int>(nodes_.size()) - 1; k >= 0; --k) {
      const double g = adj[k];
      if (g == 0.0) continue;
      const Node& n = nodes_[k];
      if (n.a >= 0) adj[n.a] += n.da * g;
      if (n.b >= 0) adj[n.b] += n.db * g;
    }
    adj.resize(n_inputs);
    return adj;
  }

private:
  struct Node {
    int a, b;
    double da, db;
  };
  std::vector<Node> nodes_;
  static thread_local Tape* current_;
};

inline thread_local Tape* Tape::current_ = nullptr;

using TapeVar = Tape::Var;

inline double value_of(const TapeVar& x) { return x.v; }

inline TapeVar operator+(const TapeVar& a, const TapeVar& b) {
  return Tape::current().push(a.v + b.v, a.id, b.id, 1.0, 1.0);
}
inline TapeVar operator-(const TapeVar& a, const TapeVar& b) {
  return Tape::current().push(a.v - b.v, a.id, b.id, 1.0, -1.0);
}
inline TapeVar operator*(const TapeVar& a, const TapeVar& b) {
  return Tape::current().push(a.v * b.v, a.id, b.id, b.v, a.v);
}
inline TapeVar operator/(const TapeVar& a, const TapeVar& b) {
  return Tape::current().push(a.v / b.v, a.id, b.id, 1.0 / b.v,
                              -a.v / (b.v * b.v));
}
inline TapeVar operator-(const TapeVar& a) {
  return Tape::current().push(-a.v, a.id, -1, -1.0, 0.0);
}

inline TapeVar operator+(const TapeVar& a, double c) {
  return Tape::current().push(a.v + c, a.id, -1, 1.0, 0.0);
}
inline TapeVar operator+(double c, const TapeVar& a) { return a + c; }
inline TapeVar operator-(const TapeVar& a, double c) { return a + (-c); }
inline TapeVar operator-(double c, const TapeVar& a) {
  return Tape::current().push(c - a.v, a.id, -1, -1.0, 0.0);
}
inline TapeVar operator*(const TapeVar& a, double c) {
  return Tape::current().push(a.v * c, a.id, -1, c, 0.0);
}
inline TapeVar operator*(double c, const TapeVar& a) { return a * c; }
inline TapeVar operator/(const TapeVar& a, double c) { return a * (1.0 / c); }
inline TapeVar operator/(double c, const TapeVar& a) {
  return Tape::current().push(c / a.v, a.id, -1, -c / (a.v * a.v), 0.0);
}

inline TapeVar& operator+=(TapeVar& a, const TapeVar& b) { return a = a + b; }
inline TapeVar& operator-=(TapeVar& a, const TapeVar& b) { return a = a - b; }
inline TapeVar& operator*=(TapeVar& a, const TapeVar& b) { return a = a * b; }

inline bool operator<(const TapeVar& a, const TapeVar& b) { return a.v < b.v; }
inline bool operator<(const TapeVar& a, double b) { return a.v < b; }
inline bool operator<(double a, const TapeVar& b) { return a < b.v; }
inline bool operator>(const TapeVar& a, double b) { return a.v > b; }
inline bool operator>(double a, const TapeVar& b) { return a > b.v; }

inline TapeVar tanh(const TapeVar& a) {
  double u = std::tanh(a.v);
  return Tape::current().push(u, a.id, -1, 1.0 - u * u, 0.0);
}
inline TapeVar exp(const TapeVar& a) {
  double e = std::exp(a.v);
  return Tape::current().push(e, a.id, -1, e, 0.0);
}
inline TapeVar log(const TapeVar& a) {
  return Tape::current().push(std::log(a.v), a.id, -1, 1.0 / a.v, 0.0);
}
inline TapeVar sqrt(const TapeVar& a) {
  double r = std::sqrt(a.v);
  return Tape::current().push(r, a.id, -1, 0.5 / r, 0.0);
}
inline TapeVar pow(const TapeVar& a, double e) {
  return Tape::current().push(std::pow(a.v, e), a.id, -1,
                              e * std::pow(a.v, e - 1.0), 0.0);
}

/// Gradient of a generic scalar objective with respect to `params`.
/// The callable must be generic over its scalar type: it receives a span of
/// tape variables and returns the objective as one. Throws if the objective
/// evaluates non-finite, reporting the value so the caller can bisect.
template <class F>
std::pair<double, std::vector<double>> value_and_grad_params(
    F&& objective, std::span<const double> params) {
  Tape tape;
  std::vector<TapeVar> vars;
  vars.reserve(params.size());
  for (double p : params) vars.push_back(tape.input(p));
  TapeVar out = objective(std::span<const TapeVar>(vars));
  if (!std::isfinite(out.v))
    throw std::runtime_error("grad_params: objective evaluated to " +
                             std::to_string(out.v));
  return {out.v, tape.gradient(out, static_cast<int>(params.size()))};
}

template <class F>
std::vector<double> grad_params(F&& objective, std::span<const double> params) {
  return value_and_grad_params(std::forward<F>(objective), params).second;
}

}  // namespace curepinn
