#include "seqnet/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>

#include "seqnet/error.hpp"
#include "seqnet/io_util.hpp"

namespace seqnet {

namespace {

constexpr std::array<char, 4> kModelMagic{'S', 'Q', 'N', 'M'};
constexpr std::uint32_t kModelVersion = 1;
constexpr double kMinNorm = 1e-12;

void check_input(const SeqNetModel& m, const MatrixD& x) {
  if (x.rows() != m.L_d || x.cols() != m.d_in) {
    throw Error(ErrorCode::ShapeMismatch, "input is " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                                              ", model expects " + std::to_string(m.L_d) + "x" +
                                              std::to_string(m.d_in));
  }
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "non-finite input entry");
  }
}

std::vector<double> normalized(std::vector<double> s, double* norm_out = nullptr) {
  double sq = 0.0;
  for (double v : s) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm < kMinNorm) throw Error(ErrorCode::DegenerateNorm, "pooled descriptor norm below 1e-12");
  for (double& v : s) v /= norm;
  if (norm_out) *norm_out = norm;
  return s;
}

SeqDescriptor to_descriptor(const std::vector<double>& v, const WindowIndex& window) {
  SeqDescriptor out;
  out.values.assign(v.begin(), v.end());
  out.source_window = window;
  return out;
}

}  // namespace

void validate(const SeqNetModel& m) {
  if (m.d_in == 0 || m.d_out == 0 || m.w == 0 || m.L_d == 0) {
    throw Error(ErrorCode::InvalidSpec, "model dimensions must be positive");
  }
  if (m.w > m.L_d) throw Error(ErrorCode::InvalidSpec, "kernel width exceeds sequence length");
  if (m.kernel.size() != m.d_out * m.w * m.d_in || m.bias.size() != m.d_out) {
    throw Error(ErrorCode::ShapeMismatch, "parameter sizes do not match model dimensions");
  }
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::ranges::all_of(m.kernel, finite) || !std::ranges::all_of(m.bias, finite)) {
    throw Error(ErrorCode::NonFinite, "model parameter is not finite");
  }
}

SeqNetModel init_model(std::size_t d_in, std::size_t d_out, std::size_t w, std::size_t L_d, std::uint64_t seed,
                       bool identity_init) {
  if (d_in == 0 || d_out == 0 || w == 0 || L_d == 0) {
    throw Error(ErrorCode::InvalidSpec, "model dimensions must be positive");
  }
  if (w > L_d) throw Error(ErrorCode::InvalidSpec, "kernel width must not exceed L_d");
  SeqNetModel m{d_in, d_out, w, L_d, std::vector<double>(d_out * w * d_in, 0.0), std::vector<double>(d_out, 0.0)};
  if (identity_init) {
    if (w != 1 || d_in != d_out) throw Error(ErrorCode::InvalidSpec, "identity init needs w = 1 and d_in = d_out");
    for (std::size_t o = 0; o < d_out; ++o) m.k(o, 0, o) = 1.0;
    return m;
  }
  std::mt19937_64 rng(seed);
  const double a = 1.0 / std::sqrt(static_cast<double>(w * d_in));
  std::uniform_real_distribution<double> uniform(-a, a);
  for (auto& v : m.kernel) v = uniform(rng);
  return m;
}

void save_model(const std::filesystem::path& path, const SeqNetModel& m) {
  validate(m);
  std::vector<unsigned char> bytes(kModelMagic.begin(), kModelMagic.end());
  io::append_u32_le(bytes, kModelVersion);
  for (auto dim : {m.d_in, m.d_out, m.w, m.L_d}) io::append_u32_le(bytes, static_cast<std::uint32_t>(dim));
  for (double v : m.kernel) io::append_u64_le(bytes, std::bit_cast<std::uint64_t>(v));
  for (double v : m.bias) io::append_u64_le(bytes, std::bit_cast<std::uint64_t>(v));
  io::write_file(path, bytes);
}

SeqNetModel load_model(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  constexpr std::size_t header = 24;
  if (bytes.size() < header || std::memcmp(bytes.data(), kModelMagic.data(), 4) != 0) {
    throw Error(ErrorCode::MalformedHeader, path.string() + ": bad magic");
  }
  if (io::read_u32_le(bytes.data() + 4) != kModelVersion) {
    throw Error(ErrorCode::MalformedHeader, path.string() + ": unsupported version");
  }
  SeqNetModel m;
  m.d_in = io::read_u32_le(bytes.data() + 8);
  m.d_out = io::read_u32_le(bytes.data() + 12);
  m.w = io::read_u32_le(bytes.data() + 16);
  m.L_d = io::read_u32_le(bytes.data() + 20);
  const std::size_t n_kernel = m.d_out * m.w * m.d_in;
  if (bytes.size() != header + 8 * (n_kernel + m.d_out)) {
    throw Error(ErrorCode::TruncatedData, path.string() + ": payload size does not match header");
  }
  const unsigned char* p = bytes.data() + header;
  m.kernel.resize(n_kernel);
  m.bias.resize(m.d_out);
  for (auto& v : m.kernel) {
    v = std::bit_cast<double>(io::read_u64_le(p));
    p += 8;
  }
  for (auto& v : m.bias) {
    v = std::bit_cast<double>(io::read_u64_le(p));
    p += 8;
  }
  validate(m);
  return m;
}

std::vector<double> forward(const SeqNetModel& m, const MatrixD& x) {
  check_input(m, x);
  const std::size_t steps = m.steps();
  std::vector<double> s(m.d_out, 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t o = 0; o < m.d_out; ++o) {
      double y = m.bias[o];
      for (std::size_t j = 0; j < m.w; ++j) {
        const auto row = x.row(t + j);
        for (std::size_t c = 0; c < m.d_in; ++c) y += m.k(o, j, c) * row[c];
      }
      s[o] += y;
    }
  }
  for (double& v : s) v /= static_cast<double>(steps);
  return normalized(std::move(s));
}

ForwardState forward_state(const SeqNetModel& m, const MatrixD& x) {
  check_input(m, x);
  const std::size_t steps = m.steps();
  ForwardState st;
  st.window_means = MatrixD(m.w, m.d_in);
  for (std::size_t j = 0; j < m.w; ++j) {
    auto mu = st.window_means.row(j);
    for (std::size_t t = 0; t < steps; ++t) {
      const auto row = x.row(t + j);
      for (std::size_t c = 0; c < m.d_in; ++c) mu[c] += row[c];
    }
    for (double& v : mu) v /= static_cast<double>(steps);
  }
  st.pooled = m.bias;
  for (std::size_t o = 0; o < m.d_out; ++o) {
    double acc = 0.0;
    const double* k = &m.kernel[o * m.w * m.d_in];
    const double* mu = st.window_means.data().data();
    for (std::size_t i = 0, n = m.w * m.d_in; i < n; ++i) acc += k[i] * mu[i];
    st.pooled[o] += acc;
  }
  st.output = normalized(st.pooled, &st.norm);
  return st;
}

std::vector<double> forward_collapsed(const SeqNetModel& m, const MatrixD& x) {
  return forward_state(m, x).output;
}

GradientBundle zero_gradients(const SeqNetModel& m, bool with_input) {
  GradientBundle g;
  g.d_kernel.assign(m.kernel.size(), 0.0);
  g.d_bias.assign(m.bias.size(), 0.0);
  if (with_input) g.d_input = MatrixD(m.L_d, m.d_in);
  return g;
}

namespace {

// Gradient w.r.t. the pooled (pre-normalization) vector.
std::vector<double> pooled_gradient(const ForwardState& st, std::span<const double> upstream) {
  double radial = 0.0;
  for (std::size_t o = 0; o < st.output.size(); ++o) radial += st.output[o] * upstream[o];
  std::vector<double> g(st.output.size());
  for (std::size_t o = 0; o < g.size(); ++o) g[o] = (upstream[o] - st.output[o] * radial) / st.norm;
  return g;
}

void check_upstream(const SeqNetModel& m, std::span<const double> upstream) {
  if (upstream.size() != m.d_out) throw Error(ErrorCode::ShapeMismatch, "upstream length differs from d_out");
  for (double v : upstream) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "non-finite upstream gradient");
  }
}

}  // namespace

void accumulate_parameter_gradients(const SeqNetModel& m, const ForwardState& st, std::span<const double> upstream,
                                    GradientBundle& acc) {
  check_upstream(m, upstream);
  const auto g = pooled_gradient(st, upstream);
  const std::size_t row = m.w * m.d_in;
  const double* mu = st.window_means.data().data();
  for (std::size_t o = 0; o < m.d_out; ++o) {
    acc.d_bias[o] += g[o];
    if (g[o] == 0.0) continue;
    double* dk = &acc.d_kernel[o * row];
    for (std::size_t i = 0; i < row; ++i) dk[i] += g[o] * mu[i];
  }
}

GradientBundle backward(const SeqNetModel& m, const MatrixD& x, std::span<const double> upstream) {
  check_upstream(m, upstream);
  const auto st = forward_state(m, x);
  auto out = zero_gradients(m, true);
  accumulate_parameter_gradients(m, st, upstream, out);

  const auto g = pooled_gradient(st, upstream);
  const std::size_t steps = m.steps();
  for (std::size_t j = 0; j < m.w; ++j) {
    std::vector<double> d_mu(m.d_in, 0.0);
    for (std::size_t o = 0; o < m.d_out; ++o) {
      for (std::size_t c = 0; c < m.d_in; ++c) d_mu[c] += m.k(o, j, c) * g[o];
    }
    for (std::size_t t = 0; t < steps; ++t) {
      auto dx = out.d_input.row(t + j);
      for (std::size_t c = 0; c < m.d_in; ++c) dx[c] += d_mu[c] / static_cast<double>(steps);
    }
  }
  return out;
}

MatrixD window_rows(const DescriptorSet& set, const WindowIndex& window) {
  if (window.last() >= set.n()) throw Error(ErrorCode::WindowOutOfRange, "window exceeds traverse");
  MatrixD x(window.span, set.d());
  for (std::size_t r = 0; r < window.span; ++r) {
    const auto src = set.data.row(window.start + r);
    std::ranges::copy(src, x.row(r).begin());
  }
  return x;
}

SeqDescriptor forward_window(const SeqNetModel& m, const DescriptorSet& set, const WindowIndex& window) {
  return to_descriptor(forward(m, window_rows(set, window)), window);
}

std::vector<WindowIndex> sequence_windows(std::size_t n, std::size_t L) {
  return L % 2 == 1 ? valid_windows(n, L) : training_windows(n, L);
}

std::vector<SeqDescriptor> forward_batch(const SeqNetModel& m, const Traverse& t, std::size_t L) {
  validate(m);
  if (L != m.L_d) throw Error(ErrorCode::ShapeMismatch, "L differs from the model's L_d");
  if (t.descriptors.d() != m.d_in) throw Error(ErrorCode::ShapeMismatch, "descriptor dimension differs from d_in");
  std::vector<SeqDescriptor> out;
  for (const auto& win : sequence_windows(t.size(), L)) out.push_back(forward_window(m, t.descriptors, win));
  return out;
}

std::vector<SeqDescriptor> smoothing_descriptor(const Traverse& t, std::size_t L) {
  std::vector<SeqDescriptor> out;
  const std::size_t d = t.descriptors.d();
  for (const auto& win : valid_windows(t.size(), L)) {
    std::vector<double> s(d, 0.0);
    for (std::size_t f = win.start; f <= win.last(); ++f) {
      const auto row = t.descriptors.data.row(f);
      for (std::size_t c = 0; c < d; ++c) s[c] += row[c];
    }
    for (double& v : s) v /= static_cast<double>(L);
    out.push_back(to_descriptor(normalized(std::move(s)), win));
  }
  return out;
}

std::vector<SeqDescriptor> delta_descriptor(const Traverse& t, std::size_t L) {
  if (L < 2) throw Error(ErrorCode::InvalidSpec, "delta descriptors need L >= 2");
  const std::size_t half = L / 2;
  const std::size_t d = t.descriptors.d();
  std::vector<SeqDescriptor> out;
  for (const auto& win : sequence_windows(t.size(), L)) {
    std::vector<double> diff(d, 0.0);
    for (std::size_t r = 0; r < half; ++r) {
      const auto earlier = t.descriptors.data.row(win.start + r);
      const auto later = t.descriptors.data.row(win.last() - r);
      for (std::size_t c = 0; c < d; ++c) diff[c] += double{later[c]} - double{earlier[c]};
    }
    for (double& v : diff) v /= static_cast<double>(half);
    out.push_back(to_descriptor(normalized(std::move(diff)), win));
  }
  return out;
}

}  // namespace seqnet
