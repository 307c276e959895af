#pragma once

#include <cmath>

namespace curepinn {

/// Forward-mode dual number: carries a value and one directional derivative.
///
/// The scalar type T may itself be a Dual, which yields second derivatives;
/// see input_derivatives() in net.hpp for the nesting convention. All
/// arithmetic is defined so generic numeric code written against `double`
/// compiles unchanged against Dual<double> or Dual<Dual<double>>.
template <class T>
struct Dual {
  T v{};  ///< value
  T d{};  ///< tangent

  Dual() = default;
  Dual(T value) : v(value) {}  // NOLINT: implicit on purpose
  Dual(T value, T tangent) : v(value), d(tangent) {}

  Dual& operator+=(const Dual& o) { v += o.v; d += o.d; return *this; }
  Dual& operator-=(const Dual& o) { v -= o.v; d -= o.d; return *this; }
  Dual& operator*=(const Dual& o) { d = d * o.v + v * o.d; v = v * o.v; return *this; }
};

template <class T> Dual<T> operator+(Dual<T> a, const Dual<T>& b) { return a += b; }
template <class T> Dual<T> operator-(Dual<T> a, const Dual<T>& b) { return a -= b; }
template <class T> Dual<T> operator*(Dual<T> a, const Dual<T>& b) { return a *= b; }
template <class T> Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  T inv = T(1) / b.v;
  return {a.v * inv, (a.d - a.v * inv * b.d) * inv};
}
template <class T> Dual<T> operator-(const Dual<T>& a) { return {-a.v, -a.d}; }

// Mixed double/Dual arithmetic (double promotes to a constant).
template <class T> Dual<T> operator+(double a, const Dual<T>& b) { return Dual<T>(T(a)) + b; }
template <class T> Dual<T> operator+(const Dual<T>& a, double b) { return a + Dual<T>(T(b)); }
template <class T> Dual<T> operator-(double a, const Dual<T>& b) { return Dual<T>(T(a)) - b; }
template <class T> Dual<T> operator-(const Dual<T>& a, double b) { return a - Dual<T>(T(b)); }
template <class T> Dual<T> operator*(double a, const Dual<T>& b) { return Dual<T>(T(a)) * b; }
template <class T> Dual<T> operator*(const Dual<T>& a, double b) { return a * Dual<T>(T(b)); }
template <class T> Dual<T> operator/(double a, const Dual<T>& b) { return Dual<T>(T(a)) / b; }
template <class T> Dual<T> operator/(const Dual<T>& a, double b) { return a / Dual<T>(T(b)); }

/// Extracts the underlying double value, recursing through Dual nesting.
/// Used for branch decisions (clamps, overflow guards) and diagnostics.
inline double value_of(double x) { return x; }
template <class T> double value_of(const Dual<T>& x) { return value_of(x.v); }

template <class T> bool operator<(const Dual<T>& a, const Dual<T>& b) { return value_of(a) < value_of(b); }
template <class T> bool operator<(const Dual<T>& a, double b) { return value_of(a) < b; }
template <class T> bool operator<(double a, const Dual<T>& b) { return a < value_of(b); }
template <class T> bool operator>(const Dual<T>& a, double b) { return value_of(a) > b; }
template <class T> bool operator>(double a, const Dual<T>& b) { return a > value_of(b); }

template <class T> Dual<T> tanh(const Dual<T>& x) {
  using std::tanh;
  T u = tanh(x.v);
  return {u, (T(1) - u * u) * x.d};
}

template <class T> Dual<T> exp(const Dual<T>& x) {
  using std::exp;
  T e = exp(x.v);
  return {e, e * x.d};
}

template <class T> Dual<T> log(const Dual<T>& x) {
  using std::log;
  return {log(x.v), x.d / x.v};
}

template <class T> Dual<T> sqrt(const Dual<T>& x) {
  using std::sqrt;
  T r = sqrt(x.v);
  return {r, x.d / (T(2) * r)};
}

/// pow with a constant real exponent. The base must be positive; callers that
/// can hit base == 0 must branch on value_of() first (see cure_rate).
template <class T> Dual<T> pow(const Dual<T>& x, double e) {
  using std::pow;
  T p = pow(x.v, e);
  return {p, T(e) * pow(x.v, e - 1.0) * x.d};
}

}  // namespace curepinn
