#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "seqnet/corpus.hpp"
#include "seqnet/error.hpp"
#include "seqnet/model.hpp"

namespace testutil {

inline seqnet::MatrixF random_matrix(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<float> g(0.0f, 1.0f);
  seqnet::MatrixF m(n, d);
  for (std::size_t i = 0; i < n * d; ++i) m.data()[i] = g(rng);
  return m;
}

inline seqnet::MatrixD random_input(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  seqnet::MatrixD m(n, d);
  for (std::size_t i = 0; i < n * d; ++i) m.data()[i] = g(rng);
  return m;
}

/// Frame-indexed traverse over the given rows.
inline seqnet::Traverse frame_traverse(seqnet::MatrixF rows) {
  seqnet::Traverse t;
  const std::size_t n = rows.rows();
  t.descriptors = seqnet::DescriptorSet(std::move(rows));
  t.kind = seqnet::GeometryKind::FrameIndexed;
  for (std::size_t i = 0; i < n; ++i) t.positions.push_back({static_cast<double>(i), 0.0});
  return t;
}

/// Planar traverse with frames at x = spacing * i.
inline seqnet::Traverse planar_traverse(seqnet::MatrixF rows, double spacing) {
  seqnet::Traverse t;
  const std::size_t n = rows.rows();
  t.descriptors = seqnet::DescriptorSet(std::move(rows));
  t.kind = seqnet::GeometryKind::Planar;
  for (std::size_t i = 0; i < n; ++i) t.positions.push_back({spacing * static_cast<double>(i), 0.0});
  return t;
}

inline std::vector<float> unit_vector(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<float> v(d);
  double s = 0.0;
  for (auto& x : v) {
    x = g(rng);
    s += double(x) * x;
  }
  for (auto& x : v) x = static_cast<float>(x / std::sqrt(s));
  return v;
}

inline double l2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("seqnet_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

template <typename Fn>
seqnet::ErrorCode error_of(Fn&& fn) {
  try {
    fn();
  } catch (const seqnet::Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected an error");
}

}  // namespace testutil
