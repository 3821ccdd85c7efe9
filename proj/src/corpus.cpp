#include "seqnet/corpus.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <sstream>

#include "seqnet/config.hpp"
#include "seqnet/error.hpp"
#include "seqnet/io_util.hpp"

namespace seqnet {

namespace {

constexpr std::array<char, 4> kDescriptorMagic{'S', 'Q', 'D', 'S'};
constexpr std::uint32_t kDescriptorVersion = 1;
constexpr std::size_t kDescriptorHeaderBytes = 16;

void check_finite(const MatrixF& m) {
  for (std::size_t i = 0; i < m.data().size(); ++i) {
    if (!std::isfinite(m.data()[i])) {
      throw Error(ErrorCode::NonFinite, "entry at row " + std::to_string(i / m.cols()) + ", column " +
                                            std::to_string(i % m.cols()));
    }
  }
}

}  // namespace

DescriptorSet::DescriptorSet(MatrixF m, bool is_normalized) : data(std::move(m)), normalized(is_normalized) {
  if (data.rows() == 0 || data.cols() == 0) {
    throw Error(ErrorCode::ShapeMismatch, "descriptor set needs n >= 1 and d >= 1");
  }
  check_finite(data);
}

DescriptorSet load_descriptors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < kDescriptorHeaderBytes ||
      std::memcmp(bytes.data(), kDescriptorMagic.data(), kDescriptorMagic.size()) != 0) {
    throw Error(ErrorCode::MalformedHeader, path.string() + ": bad magic");
  }
  const std::uint32_t version = io::read_u32_le(bytes.data() + 4);
  if (version != kDescriptorVersion) {
    throw Error(ErrorCode::MalformedHeader, path.string() + ": unsupported version " + std::to_string(version));
  }
  const std::uint32_t n = io::read_u32_le(bytes.data() + 8);
  const std::uint32_t d = io::read_u32_le(bytes.data() + 12);
  if (n == 0 || d == 0) throw Error(ErrorCode::MalformedHeader, path.string() + ": zero dimension");
  const std::uint64_t expected = kDescriptorHeaderBytes + std::uint64_t{n} * d * 4;
  if (bytes.size() != expected) {
    throw Error(ErrorCode::TruncatedData, path.string() + ": expected " + std::to_string(expected) +
                                              " bytes, found " + std::to_string(bytes.size()));
  }
  MatrixF m(n, d);
  const unsigned char* p = bytes.data() + kDescriptorHeaderBytes;
  for (auto& v : m.data()) {
    v = std::bit_cast<float>(io::read_u32_le(p));
    p += 4;
  }
  return DescriptorSet(std::move(m));
}

void write_descriptors(const std::filesystem::path& path, const DescriptorSet& set) {
  std::vector<unsigned char> bytes;
  bytes.reserve(kDescriptorHeaderBytes + set.data.data().size() * 4);
  bytes.insert(bytes.end(), kDescriptorMagic.begin(), kDescriptorMagic.end());
  io::append_u32_le(bytes, kDescriptorVersion);
  io::append_u32_le(bytes, static_cast<std::uint32_t>(set.n()));
  io::append_u32_le(bytes, static_cast<std::uint32_t>(set.d()));
  for (float v : set.data.data()) io::append_u32_le(bytes, std::bit_cast<std::uint32_t>(v));
  io::write_file(path, bytes);
}

DescriptorSet normalize_rows(const DescriptorSet& set) {
  MatrixF out = set.data;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    double sq = 0.0;
    for (float v : r) sq += double{v} * v;
    const double norm = std::sqrt(sq);
    if (norm < 1e-12) throw Error(ErrorCode::DegenerateNorm, "row " + std::to_string(i) + " has zero norm");
    for (float& v : r) v = static_cast<float>(v / norm);
  }
  return DescriptorSet(std::move(out), true);
}

double geometric_distance(GeometryKind kind, const Position& a, const Position& b) {
  if (kind == GeometryKind::FrameIndexed) return std::abs(a.x - b.x);
  return std::hypot(a.x - b.x, a.y - b.y);
}

PoseTable load_poses(const std::filesystem::path& path, GeometryKind kind) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, path.string() + ": line 1: missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = io::split_csv(line);

  const std::vector<std::string> planar{"index", "x_m", "y_m"};
  const std::vector<std::string> framed{"index", "frame"};
  const auto& expected = kind == GeometryKind::Planar ? planar : framed;
  const auto& other = kind == GeometryKind::Planar ? framed : planar;
  auto prefix_matches = [&](const std::vector<std::string>& want) {
    return header.size() >= want.size() && std::equal(want.begin(), want.end(), header.begin());
  };
  if (!prefix_matches(expected)) {
    if (prefix_matches(other)) {
      throw Error(ErrorCode::GeometryKindMismatch, path.string() + ": header declares the other geometry kind");
    }
    throw Error(ErrorCode::ParseError, path.string() + ": line 1: unexpected header '" + line + "'");
  }
  const bool has_time = header.size() == expected.size() + 1 && header.back() == "t_s";
  if (header.size() != expected.size() + (has_time ? 1 : 0)) {
    throw Error(ErrorCode::ParseError, path.string() + ": line 1: unexpected header '" + line + "'");
  }

  PoseTable poses;
  poses.kind = kind;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = io::split_csv(line);
    auto fail = [&](const std::string& why) -> Error {
      return Error(ErrorCode::ParseError, path.string() + ": line " + std::to_string(line_no) + ": " + why);
    };
    if (fields.size() != header.size()) throw fail("expected " + std::to_string(header.size()) + " fields");
    double index = 0;
    if (!io::parse_double(fields[0], index) || index != std::floor(index)) throw fail("bad index '" + fields[0] + "'");
    Position p;
    if (kind == GeometryKind::Planar) {
      if (!io::parse_double(fields[1], p.x)) throw fail("bad x_m '" + fields[1] + "'");
      if (!io::parse_double(fields[2], p.y)) throw fail("bad y_m '" + fields[2] + "'");
    } else {
      if (!io::parse_double(fields[1], p.x) || p.x != std::floor(p.x)) throw fail("bad frame '" + fields[1] + "'");
    }
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw fail("non-finite position");
    poses.positions.push_back(p);
    if (has_time) {
      double t = 0;
      if (!io::parse_double(fields.back(), t) || !std::isfinite(t)) throw fail("bad t_s '" + fields.back() + "'");
      if (!poses.timestamps.empty() && t < poses.timestamps.back()) throw fail("timestamps must be non-decreasing");
      poses.timestamps.push_back(t);
    }
  }
  return poses;
}

void write_poses(const std::filesystem::path& path, const PoseTable& poses) {
  std::ostringstream out;
  out.precision(17);
  const bool has_time = !poses.timestamps.empty();
  out << (poses.kind == GeometryKind::Planar ? "index,x_m,y_m" : "index,frame") << (has_time ? ",t_s" : "") << '\n';
  for (std::size_t i = 0; i < poses.positions.size(); ++i) {
    out << i << ',';
    if (poses.kind == GeometryKind::Planar) {
      out << poses.positions[i].x << ',' << poses.positions[i].y;
    } else {
      out << static_cast<long long>(poses.positions[i].x);
    }
    if (has_time) out << ',' << poses.timestamps[i];
    out << '\n';
  }
  io::write_file(path, out.str());
}

Traverse make_traverse(DescriptorSet descriptors, PoseTable poses) {
  if (poses.positions.size() != descriptors.n()) {
    throw Error(ErrorCode::RowCountMismatch, std::to_string(poses.positions.size()) + " poses for " +
                                                 std::to_string(descriptors.n()) + " descriptors");
  }
  if (!poses.timestamps.empty() && poses.timestamps.size() != descriptors.n()) {
    throw Error(ErrorCode::RowCountMismatch, "timestamp count differs from descriptor count");
  }
  Traverse t;
  t.descriptors = std::move(descriptors);
  t.kind = poses.kind;
  t.positions = std::move(poses.positions);
  t.timestamps = std::move(poses.timestamps);
  return t;
}

Traverse select_frames(const Traverse& t, const std::vector<std::size_t>& frames) {
  MatrixF m(frames.size(), t.descriptors.d());
  Traverse out;
  out.kind = t.kind;
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const std::size_t f = frames[k];
    if (f >= t.size()) throw Error(ErrorCode::WindowOutOfRange, "frame " + std::to_string(f));
    std::ranges::copy(t.descriptors.data.row(f), m.row(k).begin());
    out.positions.push_back(t.positions[f]);
    if (!t.timestamps.empty()) out.timestamps.push_back(t.timestamps[f]);
  }
  out.descriptors = DescriptorSet(std::move(m), t.descriptors.normalized);
  return out;
}

Traverse reverse_traverse(const Traverse& t) {
  std::vector<std::size_t> frames(t.size());
  for (std::size_t i = 0; i < frames.size(); ++i) frames[i] = frames.size() - 1 - i;
  return select_frames(t, frames);
}

GroundTruth associate(const Traverse& reference, const Traverse& query, double radius) {
  if (reference.kind != query.kind) throw Error(ErrorCode::GeometryKindMismatch, "reference and query geometry differ");
  if (!(radius >= 0.0)) throw Error(ErrorCode::InvalidSpec, "radius must be non-negative");
  GroundTruth gt;
  gt.radius = radius;
  gt.pairs.resize(query.positions.size());
  for (std::size_t i = 0; i < query.positions.size(); ++i) {
    for (std::size_t j = 0; j < reference.positions.size(); ++j) {
      if (geometric_distance(query.kind, query.positions[i], reference.positions[j]) <= radius) {
        gt.pairs[i].push_back(j);
      }
    }
  }
  return gt;
}

Traverse resample_fixed_distance(const Traverse& t, double spacing_m) {
  if (t.kind != GeometryKind::Planar) {
    throw Error(ErrorCode::GeometryKindMismatch, "fixed-distance resampling needs planar geometry");
  }
  if (!(spacing_m > 0.0)) throw Error(ErrorCode::InvalidSpec, "spacing must be positive");
  std::vector<std::size_t> keep{0};
  double travelled = 0.0;
  for (std::size_t k = 1; k < t.size(); ++k) {
    travelled += geometric_distance(t.kind, t.positions[k - 1], t.positions[k]);
    if (travelled >= spacing_m) {
      keep.push_back(k);
      travelled = 0.0;
    }
  }
  return select_frames(t, keep);
}

Traverse resample_fixed_time(const Traverse& t, std::size_t stride) {
  if (stride == 0) throw Error(ErrorCode::InvalidSpec, "stride must be positive");
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < t.size(); k += stride) keep.push_back(k);
  return select_frames(t, keep);
}

WindowIndex window_at_center(std::size_t center, std::size_t span) {
  if (span == 0) throw Error(ErrorCode::InvalidSpec, "window span must be positive");
  if (center < span / 2) throw Error(ErrorCode::WindowOutOfRange, "center " + std::to_string(center));
  return WindowIndex{center - span / 2, span};
}

std::vector<WindowIndex> training_windows(std::size_t n, std::size_t L) {
  if (L == 0) throw Error(ErrorCode::InvalidSpec, "sequence length must be positive");
  if (L > n) {
    throw Error(ErrorCode::SequenceTooLong, "length " + std::to_string(L) + " exceeds " + std::to_string(n) + " frames");
  }
  std::vector<WindowIndex> out;
  out.reserve(n - L + 1);
  for (std::size_t s = 0; s + L <= n; ++s) out.push_back({s, L});
  return out;
}

std::vector<WindowIndex> valid_windows(std::size_t n, std::size_t L) {
  if (L % 2 == 0) throw Error(ErrorCode::InvalidSpec, "centered windows need odd length, got " + std::to_string(L));
  return training_windows(n, L);
}

SynthSpec parse_synth_spec(const std::string& text) {
  auto cfg = KeyValueConfig::parse(text);
  SynthSpec s;
  auto as_size = [&](const char* key, std::size_t fallback) {
    const auto v = cfg.get_int("", key, static_cast<std::int64_t>(fallback));
    if (v <= 0) throw Error(ErrorCode::InvalidSpec, std::string(key) + " must be positive");
    return static_cast<std::size_t>(v);
  };
  s.n_places = as_size("n_places", s.n_places);
  s.d = as_size("d", s.d);
  s.sigma = cfg.get_double("", "sigma", s.sigma);
  s.warp = cfg.get_double("", "warp", s.warp);
  s.warp_period = as_size("warp_period", s.warp_period);
  s.reverse = cfg.get_bool("", "reverse", s.reverse);
  s.smooth_coeff = cfg.get_double("", "smooth_coeff", s.smooth_coeff);
  s.nuisance = cfg.get_double("", "nuisance", s.nuisance);
  s.nuisance_rank = as_size("nuisance_rank", s.nuisance_rank);
  s.nuisance_corr = cfg.get_double("", "nuisance_corr", s.nuisance_corr);
  s.jitter = cfg.get_double("", "jitter", s.jitter);
  s.radius = cfg.get_double("", "radius", s.radius);
  s.spacing = cfg.get_double("", "spacing", s.spacing);
  s.seed = cfg.get_uint("", "seed", s.seed);
  cfg.reject_unknown();
  validate(s);
  return s;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_synth_spec(buf.str());
}

std::string format_synth_spec(const SynthSpec& s) {
  std::ostringstream out;
  out.precision(17);
  out << "n_places=" << s.n_places << "\nd=" << s.d << "\nsigma=" << s.sigma << "\nwarp=" << s.warp
      << "\nwarp_period=" << s.warp_period << "\nreverse=" << (s.reverse ? "true" : "false")
      << "\nsmooth_coeff=" << s.smooth_coeff << "\nnuisance=" << s.nuisance << "\nnuisance_rank=" << s.nuisance_rank
      << "\nnuisance_corr=" << s.nuisance_corr << "\njitter=" << s.jitter << "\nradius=" << s.radius
      << "\nspacing=" << s.spacing << "\nseed=" << s.seed << '\n';
  return out.str();
}

void validate(const SynthSpec& s) {
  auto bad = [](const std::string& why) { return Error(ErrorCode::InvalidSpec, why); };
  if (s.n_places < 2) throw bad("n_places must be at least 2");
  if (s.d == 0) throw bad("d must be positive");
  if (!(s.sigma >= 0.0) || !std::isfinite(s.sigma)) throw bad("sigma must be >= 0");
  if (!(s.warp >= 0.0 && s.warp < 1.0)) throw bad("warp must lie in [0, 1)");
  if (s.warp_period == 0) throw bad("warp_period must be positive");
  if (!(s.smooth_coeff >= 0.0 && s.smooth_coeff < 1.0)) throw bad("smooth_coeff must lie in [0, 1)");
  if (!(s.nuisance >= 0.0) || !std::isfinite(s.nuisance)) throw bad("nuisance must be >= 0");
  if (s.nuisance > 0.0 && (s.nuisance_rank == 0 || s.nuisance_rank > s.d))
    throw bad("nuisance_rank must lie in [1, d] when nuisance > 0");
  if (!(s.nuisance_corr >= 0.0 && s.nuisance_corr < 1.0)) throw bad("nuisance_corr must lie in [0, 1)");
  if (!(s.jitter >= 0.0) || !std::isfinite(s.jitter)) throw bad("jitter must be >= 0");
  if (!(s.radius >= 0.0) || !std::isfinite(s.radius)) throw bad("radius must be >= 0");
  if (!(s.spacing > 0.0) || !std::isfinite(s.spacing)) throw bad("spacing must be positive");
}

SynthPair synth_traverse_pair(const SynthSpec& spec) {
  validate(spec);
  const std::size_t n = spec.n_places;
  const std::size_t d = spec.d;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  auto normalize = [](std::vector<double>& v) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    const double norm = std::sqrt(sq);
    for (double& x : v) x /= norm;
  };

  // Place appearance: unit-norm Gaussian anchors smoothed by an exponential
  // moving average run forward and then backward along the route, so that
  // consecutive places look alike and the route has no preferred direction.
  std::vector<std::vector<double>> place(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& x : place[i]) x = normal(rng);
    normalize(place[i]);
  }
  const double keep = spec.smooth_coeff;
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) place[i][c] = keep * place[i - 1][c] + (1.0 - keep) * place[i][c];
  }
  for (std::size_t i = n - 1; i-- > 0;) {
    for (std::size_t c = 0; c < d; ++c) place[i][c] = keep * place[i + 1][c] + (1.0 - keep) * place[i][c];
  }
  for (auto& p : place) normalize(p);

  // Condition shift: a slowly drifting offset inside a fixed low-rank subspace,
  // drawn independently for each traverse.
  const std::size_t rank = spec.nuisance > 0.0 ? spec.nuisance_rank : 0;
  std::vector<std::vector<double>> basis(rank, std::vector<double>(d));
  for (std::size_t r = 0; r < rank; ++r) {
    for (auto& x : basis[r]) x = normal(rng);
    for (std::size_t p = 0; p < r; ++p) {
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += basis[r][c] * basis[p][c];
      for (std::size_t c = 0; c < d; ++c) basis[r][c] -= dot * basis[p][c];
    }
    normalize(basis[r]);
  }
  std::vector<double> drift(rank, 0.0);
  const double innovation = std::sqrt(1.0 - spec.nuisance_corr * spec.nuisance_corr);
  const double shift_scale = rank > 0 ? spec.nuisance / std::sqrt(static_cast<double>(rank)) : 0.0;
  auto add_shift = [&](std::vector<double>& v, bool first) {
    for (std::size_t r = 0; r < rank; ++r) {
      drift[r] = first ? normal(rng) : spec.nuisance_corr * drift[r] + innovation * normal(rng);
      for (std::size_t c = 0; c < d; ++c) v[c] += shift_scale * drift[r] * basis[r][c];
    }
  };

  Traverse ref;
  ref.kind = GeometryKind::Planar;
  MatrixF ref_m(n, d);
  std::vector<double> frame(d);
  for (std::size_t i = 0; i < n; ++i) {
    frame = place[i];
    add_shift(frame, i == 0);
    for (std::size_t c = 0; c < d; ++c) ref_m(i, c) = static_cast<float>(frame[c]);
    ref.positions.push_back({spec.spacing * static_cast<double>(i), 0.0});
    ref.timestamps.push_back(static_cast<double>(i));
  }
  ref.descriptors = DescriptorSet(std::move(ref_m));

  // Query path in place units. The speed oscillates around one place per frame
  // when warp > 0, emulating sampling at a fixed frame rate.
  std::vector<double> path;
  const double last = static_cast<double>(n - 1);
  if (spec.warp == 0.0) {
    for (std::size_t i = 0; i < n; ++i) path.push_back(static_cast<double>(i));
  } else {
    double u = 0.0;
    for (std::size_t k = 0; u <= last; ++k) {
      path.push_back(u);
      const double phase = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(spec.warp_period);
      u += 1.0 + spec.warp * std::sin(phase);
    }
  }
  if (spec.reverse) {
    for (auto& u : path) u = last - u;
  }

  Traverse qry;
  qry.kind = GeometryKind::Planar;
  MatrixF q_m(path.size(), d);
  const double noise_scale = spec.sigma / std::sqrt(static_cast<double>(d));
  std::vector<double> base(d);
  for (std::size_t k = 0; k < path.size(); ++k) {
    const double u = path[k];
    const auto lo = static_cast<std::size_t>(std::floor(u));
    const double frac = u - static_cast<double>(lo);
    if (frac == 0.0 || lo + 1 >= n) {
      base = place[std::min(lo, n - 1)];
    } else {
      for (std::size_t c = 0; c < d; ++c) base[c] = (1.0 - frac) * place[lo][c] + frac * place[lo + 1][c];
      normalize(base);
    }
    add_shift(base, k == 0);
    for (std::size_t c = 0; c < d; ++c) {
      const double noise = spec.sigma > 0.0 ? noise_scale * normal(rng) : 0.0;
      q_m(k, c) = static_cast<float>(base[c] + noise);
    }
    Position p{spec.spacing * u, 0.0};
    if (spec.jitter > 0.0) {
      p.x += spec.jitter * normal(rng);
      p.y += spec.jitter * normal(rng);
    }
    qry.positions.push_back(p);
    qry.timestamps.push_back(static_cast<double>(k));
  }
  qry.descriptors = DescriptorSet(std::move(q_m));

  SynthPair out{std::move(ref), std::move(qry), {}};
  out.truth = associate(out.reference, out.query, spec.radius);
  return out;
}

}  // namespace seqnet
