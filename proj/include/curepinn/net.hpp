#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "curepinn/dual.hpp"

namespace curepinn {

/// Fully connected architecture: input -> hidden_layers x hidden_width -> output,
/// tanh on hidden layers, linear output layer.
struct NetworkArch {
  int input_dim = 2;
  int output_dim = 2;
  int hidden_layers = 5;
  int hidden_width = 64;

  bool operator==(const NetworkArch&) const = default;

  int layer_count() const { return hidden_layers + 1; }

  int fan_in(int layer) const { return layer == 0 ? input_dim : hidden_width; }

  int fan_out(int layer) const {
    return layer == layer_count() - 1 ? output_dim : hidden_width;
  }

  /// Total number of weights and biases across all layers.
  int parameter_count() const {
    int n = 0;
    for (int l = 0; l < layer_count(); ++l) n += (fan_in(l) + 1) * fan_out(l);
    return n;
  }

  /// Offset of layer l's block in the flat parameter vector. Each block is
  /// the row-major weight matrix [fan_out x fan_in] followed by the biases.
  int layer_offset(int layer) const {
    int off = 0;
    for (int l = 0; l < layer; ++l) off += (fan_in(l) + 1) * fan_out(l);
    return off;
  }

  void validate() const {
    if (input_dim < 1 || output_dim < 1 || hidden_layers < 1 || hidden_width < 1)
      throw std::invalid_argument("NetworkArch: all dimensions must be positive");
  }
};

struct NetworkParams {
  NetworkArch arch;
  std::vector<double> values;
};

/// Glorot-uniform weights, zero biases. Draw order is layer-major, weights
/// row-major, so a given (arch, seed) pair always produces the same vector.
NetworkParams init_params(const NetworkArch& arch, std::uint64_t seed);

/// Per-neuron jet: value plus the derivatives tracked through the network,
/// d/dt, d/dx and d2/dx2 with respect to the (normalized) inputs.
template <class S>
struct JetT {
  S v{}, dt{}, dx{}, dxx{};
};
using Jet = JetT<double>;

/// Forward state retained for backward_jet. Reuse one workspace across
/// points; resize() is a no-op once sized for the arch.
template <class S>
struct JetWorkspace {
  std::vector<JetT<S>> a;   // activation jets, level 0 = inputs
  std::vector<JetT<S>> z;   // pre-activation jets per layer
  std::vector<int> a_off, z_off;
  std::vector<JetT<S>> bar_a, bar_z;  // backward scratch

  void resize(const NetworkArch& arch) {
    const int layers = arch.layer_count();
    if (static_cast<int>(a_off.size()) == layers + 1 && !a.empty()) return;
    a_off.assign(layers + 1, 0);
    z_off.assign(layers + 1, 0);
    for (int l = 0; l < layers; ++l) {
      a_off[l + 1] = a_off[l] + arch.fan_in(l);
      z_off[l + 1] = z_off[l] + arch.fan_out(l);
    }
    a.assign(a_off[layers], JetT<S>{});
    z.assign(z_off[layers], JetT<S>{});
    int widest = arch.input_dim;
    for (int l = 0; l < layers; ++l)
      if (arch.fan_out(l) > widest) widest = arch.fan_out(l);
    bar_a.assign(widest, JetT<S>{});
    bar_z.assign(widest, JetT<S>{});
  }
};

/// Propagates (value, d/dt, d/dx, d2/dx2) jets through the network. t and x
/// are the normalized inputs; out receives one jet per output neuron. Only
/// input_dim == 2 is supported on this path.
template <class S>
void forward_jet(const NetworkArch& arch, std::span<const S> params, const S& t,
                 const S& x, std::span<JetT<S>> out, JetWorkspace<S>& ws) {
  const int layers = arch.layer_count();
  ws.resize(arch);

  ws.a[0] = JetT<S>{t, S(1), S(0), S(0)};
  ws.a[1] = JetT<S>{x, S(0), S(1), S(0)};

  for (int l = 0; l < layers; ++l) {
    const int nin = arch.fan_in(l), nout = arch.fan_out(l);
    const S* w = params.data() + arch.layer_offset(l);
    const S* b = w + nin * nout;
    const JetT<S>* ain = ws.a.data() + ws.a_off[l];
    JetT<S>* zout = ws.z.data() + ws.z_off[l];
    for (int j = 0; j < nout; ++j) {
      S v = b[j], dt = S(0), dx = S(0), dxx = S(0);
      const S* wrow = w + j * nin;
      for (int i = 0; i < nin; ++i) {
        v += wrow[i] * ain[i].v;
        dt += wrow[i] * ain[i].dt;
        dx += wrow[i] * ain[i].dx;
        dxx += wrow[i] * ain[i].dxx;
      }
      zout[j] = JetT<S>{v, dt, dx, dxx};
    }
    if (l < layers - 1) {
      JetT<S>* anext = ws.a.data() + ws.a_off[l + 1];
      for (int j = 0; j < nout; ++j) {
        using std::tanh;
        const JetT<S>& zj = zout[j];
        S u = tanh(zj.v);
        S u1 = S(1) - u * u;
        S u2 = S(-2) * u * u1;
        anext[j] = JetT<S>{u, u1 * zj.dt, u1 * zj.dx, u1 * zj.dxx + u2 * zj.dx * zj.dx};
      }
    }
  }
  const JetT<S>* zlast = ws.z.data() + ws.z_off[layers - 1];
  for (int j = 0; j < arch.output_dim; ++j) out[j] = zlast[j];
}

/// Accumulates the gradient of a scalar objective into grad, given the
/// adjoints of the output jets. Requires the workspace state produced by
/// forward_jet on the same (params, t, x).
template <class S>
void backward_jet(const NetworkArch& arch, std::span<const S> params,
                  JetWorkspace<S>& ws, std::span<const JetT<S>> out_adjoint,
                  std::span<S> grad) {
  const int layers = arch.layer_count();
  for (int j = 0; j < arch.output_dim; ++j) ws.bar_z[j] = out_adjoint[j];

  for (int l = layers - 1; l >= 0; --l) {
    const int nin = arch.fan_in(l), nout = arch.fan_out(l);
    const S* w = params.data() + arch.layer_offset(l);
    S* gw = grad.data() + arch.layer_offset(l);
    S* gb = gw + nin * nout;
    const JetT<S>* ain = ws.a.data() + ws.a_off[l];

    for (int j = 0; j < nout; ++j) {
      const JetT<S>& zb = ws.bar_z[j];
      gb[j] += zb.v;
      S* gwrow = gw + j * nin;
      for (int i = 0; i < nin; ++i) {
        const JetT<S>& ai = ain[i];
        gwrow[i] += zb.v * ai.v + zb.dt * ai.dt + zb.dx * ai.dx + zb.dxx * ai.dxx;
      }
    }
    if (l == 0) break;

    // bar_a over this layer's inputs, then back through the tanh that
    // produced them. u is read from the stored activation, z-jets from the
    // stored pre-activations of layer l-1.
    for (int i = 0; i < nin; ++i) ws.bar_a[i] = JetT<S>{};
    for (int j = 0; j < nout; ++j) {
      const S* wrow = w + j * nin;
      const JetT<S>& zb = ws.bar_z[j];
      for (int i = 0; i < nin; ++i) {
        JetT<S>& ab = ws.bar_a[i];
        ab.v += wrow[i] * zb.v;
        ab.dt += wrow[i] * zb.dt;
        ab.dx += wrow[i] * zb.dx;
        ab.dxx += wrow[i] * zb.dxx;
      }
    }
    const JetT<S>* zprev = ws.z.data() + ws.z_off[l - 1];
    const JetT<S>* aprev = ws.a.data() + ws.a_off[l];
    for (int i = 0; i < nin; ++i) {
      const JetT<S>& ab = ws.bar_a[i];
      const JetT<S>& zj = zprev[i];
      S u = aprev[i].v;
      S u1 = S(1) - u * u;
      S u2 = S(-2) * u * u1;
      S u3 = S(-2) * u1 * (S(1) - S(3) * u * u);
      JetT<S>& zb = ws.bar_z[i];
      zb.v = ab.v * u1 + u2 * (ab.dt * zj.dt + ab.dx * zj.dx) +
             ab.dxx * (u2 * zj.dxx + u3 * zj.dx * zj.dx);
      zb.dt = ab.dt * u1;
      zb.dx = ab.dx * u1 + ab.dxx * S(2) * u2 * zj.dx;
      zb.dxx = ab.dxx * u1;
    }
  }
}

/// Plain forward pass on arbitrary input dimension; no derivative tracking.
/// scratch is reused between calls.
template <class S>
void forward_values(const NetworkArch& arch, std::span<const S> params,
                    std::span<const S> in, std::span<S> out, std::vector<S>& scratch) {
  const int layers = arch.layer_count();
  int widest = arch.input_dim;
  for (int l = 0; l < layers; ++l)
    if (arch.fan_out(l) > widest) widest = arch.fan_out(l);
  scratch.resize(2 * widest);
  S* cur = scratch.data();
  S* nxt = scratch.data() + widest;
  for (int i = 0; i < arch.input_dim; ++i) cur[i] = in[i];

  for (int l = 0; l < layers; ++l) {
    const int nin = arch.fan_in(l), nout = arch.fan_out(l);
    const S* w = params.data() + arch.layer_offset(l);
    const S* b = w + nin * nout;
    for (int j = 0; j < nout; ++j) {
      S v = b[j];
      const S* wrow = w + j * nin;
      for (int i = 0; i < nin; ++i) v += wrow[i] * cur[i];
      if (l < layers - 1) {
        using std::tanh;
        v = tanh(v);
      }
      nxt[j] = v;
    }
    std::swap(cur, nxt);
  }
  for (int j = 0; j < arch.output_dim; ++j) out[j] = cur[j];
}

/// Convenience wrapper: normalized outputs at one (t, x) point.
std::vector<double> forward(const NetworkParams& net, double t, double x);

/// Values and input derivatives of every output at one point, computed with
/// nested dual numbers. Cross-checks the jet path; not used in training loops.
std::vector<Jet> input_derivatives(const NetworkParams& net, double t, double x);

/// Text checkpoint, hexfloat values, bit-exact round trip.
void save_checkpoint(const NetworkParams& net, const std::string& path);
NetworkParams load_checkpoint(const std::string& path);
NetworkParams load_checkpoint(const std::string& path, const NetworkArch& expected);

}  // namespace curepinn
