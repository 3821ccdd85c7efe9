#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "seqnet/matrix.hpp"

namespace seqnet {

/// N x D matrix of single-image descriptors, one row per frame.
struct DescriptorSet {
  MatrixF data;
  bool normalized = false;

  DescriptorSet() = default;
  /// Validates shape (n >= 1, d >= 1) and finiteness.
  explicit DescriptorSet(MatrixF m, bool is_normalized = false);

  std::size_t n() const noexcept { return data.rows(); }
  std::size_t d() const noexcept { return data.cols(); }
};

DescriptorSet load_descriptors(const std::filesystem::path& path);
void write_descriptors(const std::filesystem::path& path, const DescriptorSet& set);

/// Row-wise L2 normalization; fails with DegenerateNorm on a zero row.
DescriptorSet normalize_rows(const DescriptorSet& set);

enum class GeometryKind { Planar, FrameIndexed };

/// Planar positions carry meters in (x, y). Frame-indexed positions carry the
/// index in x and y = 0.
struct Position {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Position&) const = default;
};

double geometric_distance(GeometryKind kind, const Position& a, const Position& b);

struct PoseTable {
  GeometryKind kind = GeometryKind::Planar;
  std::vector<Position> positions;
  std::vector<double> timestamps;  // empty when the CSV has no t_s column
};

PoseTable load_poses(const std::filesystem::path& path, GeometryKind kind);
void write_poses(const std::filesystem::path& path, const PoseTable& poses);

struct Traverse {
  DescriptorSet descriptors;
  GeometryKind kind = GeometryKind::Planar;
  std::vector<Position> positions;
  std::vector<double> timestamps;

  std::size_t size() const noexcept { return descriptors.n(); }
};

/// Binds descriptors to poses; RowCountMismatch when the counts differ.
Traverse make_traverse(DescriptorSet descriptors, PoseTable poses);

/// Frames in reverse order (descriptors, positions and timestamps).
Traverse reverse_traverse(const Traverse& t);

/// Keeps the listed frames, in the given order.
Traverse select_frames(const Traverse& t, const std::vector<std::size_t>& frames);

struct GroundTruth {
  double radius = 0.0;
  /// pairs[i] lists reference indices within radius of query i, ascending.
  std::vector<std::vector<std::size_t>> pairs;
};

GroundTruth associate(const Traverse& reference, const Traverse& query, double radius);

Traverse resample_fixed_distance(const Traverse& t, double spacing_m);
Traverse resample_fixed_time(const Traverse& t, std::size_t stride);

/// L consecutive frames [start, start + span). The center is start + span / 2,
/// which for odd span is the middle frame.
struct WindowIndex {
  std::size_t start = 0;
  std::size_t span = 1;

  std::size_t center() const noexcept { return start + span / 2; }
  std::size_t last() const noexcept { return start + span - 1; }
  bool operator==(const WindowIndex&) const = default;
};

/// Window of length span whose center() is `center`.
WindowIndex window_at_center(std::size_t center, std::size_t span);

/// Centered windows for odd L: n - L + 1 windows with centers L/2 .. n-1-L/2.
std::vector<WindowIndex> valid_windows(std::size_t n, std::size_t L);

/// Like valid_windows but also accepts even L (frames [start, start + L)).
std::vector<WindowIndex> training_windows(std::size_t n, std::size_t L);

struct SynthSpec {
  std::size_t n_places = 2000;
  std::size_t d = 64;
  double sigma = 0.5;         // appearance noise, as a fraction of descriptor norm
  double warp = 0.0;          // query speed modulation amplitude, in [0, 1)
  std::size_t warp_period = 60;
  bool reverse = false;
  double smooth_coeff = 0.5;  // EMA coefficient across consecutive place anchors
  double nuisance = 0.0;      // norm of the condition-dependent appearance shift
  std::size_t nuisance_rank = 8;
  double nuisance_corr = 0.95;  // frame-to-frame correlation of the shift
  double jitter = 0.0;        // query position noise in meters
  double radius = 2.0;        // ground-truth localization radius in meters
  double spacing = 2.0;       // reference frame separation in meters
  std::uint64_t seed = 1;
};

/// Parses the key=value synth spec format. Unknown keys are InvalidSpec.
SynthSpec parse_synth_spec(const std::string& text);
SynthSpec load_synth_spec(const std::filesystem::path& path);
std::string format_synth_spec(const SynthSpec& spec);
void validate(const SynthSpec& spec);

struct SynthPair {
  Traverse reference;
  Traverse query;
  GroundTruth truth;
};

SynthPair synth_traverse_pair(const SynthSpec& spec);

}  // namespace seqnet
