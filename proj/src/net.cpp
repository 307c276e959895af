#include "curepinn/net.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>

#include "curepinn/rng.hpp"

namespace curepinn {

NetworkParams init_params(const NetworkArch& arch, std::uint64_t seed) {
  arch.validate();
  NetworkParams net{arch, std::vector<double>(arch.parameter_count(), 0.0)};
  Rng rng(seed);
  for (int l = 0; l < arch.layer_count(); ++l) {
    const int nin = arch.fan_in(l), nout = arch.fan_out(l);
    const double limit = std::sqrt(6.0 / (nin + nout));
    double* w = net.values.data() + arch.layer_offset(l);
    for (int k = 0; k < nin * nout; ++k) w[k] = rng.uniform(-limit, limit);
    // biases follow the weights and stay zero
  }
  return net;
}

std::vector<double> forward(const NetworkParams& net, double t, double x) {
  std::vector<double> out(net.arch.output_dim), scratch;
  const double in[2] = {t, x};
  forward_values<double>(net.arch, net.values, std::span<const double>(in, 2), out,
                         scratch);
  return out;
}

std::vector<Jet> input_derivatives(const NetworkParams& net, double t, double x) {
  const NetworkArch& arch = net.arch;
  if (arch.input_dim != 2)
    throw std::invalid_argument("input_derivatives: expects input_dim == 2");

  using D1 = Dual<double>;
  using D2 = Dual<Dual<double>>;

  // Pass 1: seed t, first derivatives in t.
  std::vector<D1> p1(net.values.begin(), net.values.end());
  std::vector<D1> out1(arch.output_dim), scratch1;
  const D1 in1[2] = {D1(t, 1.0), D1(x, 0.0)};
  forward_values<D1>(arch, p1, std::span<const D1>(in1, 2), out1, scratch1);

  // Pass 2: seed x at both nesting levels; out.v.d and out.d.v carry d/dx,
  // out.d.d carries d2/dx2.
  std::vector<D2> p2(net.values.size());
  for (size_t i = 0; i < net.values.size(); ++i) p2[i] = D2(D1(net.values[i]));
  std::vector<D2> out2(arch.output_dim), scratch2;
  const D2 in2[2] = {D2(D1(t)), D2(D1(x, 1.0), D1(1.0, 0.0))};
  forward_values<D2>(arch, p2, std::span<const D2>(in2, 2), out2, scratch2);

  std::vector<Jet> jets(arch.output_dim);
  for (int j = 0; j < arch.output_dim; ++j)
    jets[j] = Jet{out2[j].v.v, out1[j].d, out2[j].v.d, out2[j].d.d};
  return jets;
}

namespace {

constexpr const char* kMagic = "curepinn-net";
constexpr int kVersion = 1;

}  // namespace

void save_checkpoint(const NetworkParams& net, const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  const NetworkArch& a = net.arch;
  std::fprintf(f, "%s %d\n", kMagic, kVersion);
  std::fprintf(f, "arch %d %d %d %d\n", a.input_dim, a.output_dim, a.hidden_layers,
               a.hidden_width);
  std::fprintf(f, "count %zu\n", net.values.size());
  for (double v : net.values) std::fprintf(f, "%a\n", v);
  if (std::fclose(f) != 0)
    throw std::runtime_error("save_checkpoint: write failed for " + path);
}

NetworkParams load_checkpoint(const std::string& path) {
  FILE* f = std::fopen(path.c_str(), "r");
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  auto fail = [&](const std::string& why) {
    std::fclose(f);
    throw std::runtime_error("load_checkpoint: " + why + " in " + path);
  };

  char magic[32];
  int version = 0;
  if (std::fscanf(f, "%31s %d", magic, &version) != 2 ||
      std::strcmp(magic, kMagic) != 0)
    fail("not a network checkpoint");
  if (version != kVersion) fail("unsupported version " + std::to_string(version));

  char tag[16];
  NetworkArch arch;
  if (std::fscanf(f, "%15s %d %d %d %d", tag, &arch.input_dim, &arch.output_dim,
                  &arch.hidden_layers, &arch.hidden_width) != 5 ||
      std::strcmp(tag, "arch") != 0)
    fail("malformed arch line");
  arch.validate();

  size_t count = 0;
  if (std::fscanf(f, "%15s %zu", tag, &count) != 2 || std::strcmp(tag, "count") != 0)
    fail("malformed count line");
  if (count != static_cast<size_t>(arch.parameter_count()))
    fail("count does not match arch");

  NetworkParams net{arch, std::vector<double>(count)};
  char token[64];
  for (size_t i = 0; i < count; ++i) {
    if (std::fscanf(f, "%63s", token) != 1) fail("truncated value list");
    char* end = nullptr;
    net.values[i] = std::strtod(token, &end);
    if (end == token) fail("unparsable value at index " + std::to_string(i));
  }
  std::fclose(f);
  return net;
}

NetworkParams load_checkpoint(const std::string& path, const NetworkArch& expected) {
  NetworkParams net = load_checkpoint(path);
  if (!(net.arch == expected))
    throw std::runtime_error("load_checkpoint: architecture mismatch in " + path);
  return net;
}

}  // namespace curepinn
