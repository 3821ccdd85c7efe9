#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "seqnet/corpus.hpp"
#include "seqnet/matrix.hpp"

namespace seqnet {

/// Temporal convolution (stride 1, no padding, with bias) followed by sequence
/// average pooling and L2 normalization. L_d = w = 1 is the single-image
/// linear transform S_1.
struct SeqNetModel {
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  std::size_t w = 1;
  std::size_t L_d = 1;
  std::vector<double> kernel;  // d_out x w x d_in, row-major (o, j, c)
  std::vector<double> bias;    // d_out

  double& k(std::size_t o, std::size_t j, std::size_t c) { return kernel[(o * w + j) * d_in + c]; }
  double k(std::size_t o, std::size_t j, std::size_t c) const { return kernel[(o * w + j) * d_in + c]; }

  /// Output steps per sequence after the unpadded convolution.
  std::size_t steps() const noexcept { return L_d - w + 1; }

  bool operator==(const SeqNetModel&) const = default;
};

/// Throws InvalidSpec if dimensions are inconsistent or a parameter is not finite.
void validate(const SeqNetModel& m);

/// Kernel entries i.i.d. uniform in [-a, a], a = 1/sqrt(w * d_in); zero bias.
/// identity_init (w = 1, d_in = d_out only) sets the kernel to the identity.
SeqNetModel init_model(std::size_t d_in, std::size_t d_out, std::size_t w, std::size_t L_d,
                       std::uint64_t seed, bool identity_init = false);

void save_model(const std::filesystem::path& path, const SeqNetModel& m);
SeqNetModel load_model(const std::filesystem::path& path);

struct SeqDescriptor {
  std::vector<float> values;
  WindowIndex source_window;
};

/// Intermediate values of one forward pass, kept for backward.
struct ForwardState {
  MatrixD window_means;       // w x d_in; row j is the mean of x[t + j] over t
  std::vector<double> pooled; // s, pre-normalization
  double norm = 0.0;
  std::vector<double> output; // s / |s|
};

/// Direct route: convolve every step, average, normalize.
std::vector<double> forward(const SeqNetModel& m, const MatrixD& x);

/// Algebraic route: normalize(sum_j W_j mu_j + b) with mu_j the shifted window means.
std::vector<double> forward_collapsed(const SeqNetModel& m, const MatrixD& x);
ForwardState forward_state(const SeqNetModel& m, const MatrixD& x);

struct GradientBundle {
  std::vector<double> d_kernel;
  std::vector<double> d_bias;
  MatrixD d_input;
};

/// Gradients of <upstream, forward(m, x)>.
GradientBundle backward(const SeqNetModel& m, const MatrixD& x, std::span<const double> upstream);

/// Adds the kernel and bias gradients of <upstream, output> to `acc`, skipping
/// the input gradient. `acc` must already be sized for the model.
void accumulate_parameter_gradients(const SeqNetModel& m, const ForwardState& state,
                                    std::span<const double> upstream, GradientBundle& acc);

GradientBundle zero_gradients(const SeqNetModel& m, bool with_input = false);

/// Gathers the window's rows of `set` as 64-bit values.
MatrixD window_rows(const DescriptorSet& set, const WindowIndex& window);

SeqDescriptor forward_window(const SeqNetModel& m, const DescriptorSet& set, const WindowIndex& window);

/// One descriptor per window of length L in center order. Odd L uses the
/// centered windows; even L uses [start, start + L).
std::vector<SeqDescriptor> forward_batch(const SeqNetModel& m, const Traverse& t, std::size_t L);

/// Sequence average of the window rows, normalized.
std::vector<SeqDescriptor> smoothing_descriptor(const Traverse& t, std::size_t L);

/// normalize(mean(later half) - mean(earlier half)); the center frame of an
/// odd window belongs to neither half.
std::vector<SeqDescriptor> delta_descriptor(const Traverse& t, std::size_t L);

/// Windows used by forward_batch and the baselines for a given L.
std::vector<WindowIndex> sequence_windows(std::size_t n, std::size_t L);

}  // namespace seqnet
