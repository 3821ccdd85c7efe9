#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace seqnet::cli {

struct CommonOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  unsigned threads = 1;
  bool json = false;
};

struct EvalOptions {
  std::optional<std::size_t> K;
  std::optional<std::size_t> L_m;
  bool reverse_db = false;
  bool include_empty = false;
};

struct BenchOptions {
  std::optional<std::size_t> K;
  std::optional<std::size_t> L_m;
  std::size_t repetitions = 20;
};

struct ExtractOptions {
  std::filesystem::path model;
  std::filesystem::path descriptors;
  std::filesystem::path out;
};

// Each command returns the process exit status: 0 on success, 2 for invalid
// input or I/O failures, 1 for anything unexpected. Files written before a
// failure are removed.
int cmd_synth(const CommonOptions& common, std::ostream& out, std::ostream& err);
int cmd_train(const CommonOptions& common, std::ostream& out, std::ostream& err);
int cmd_eval(const CommonOptions& common, const EvalOptions& eval, std::ostream& out, std::ostream& err);
int cmd_bench(const CommonOptions& common, const BenchOptions& bench, std::ostream& out, std::ostream& err);
int cmd_extract(const CommonOptions& common, const ExtractOptions& extract, std::ostream& out, std::ostream& err);

}  // namespace seqnet::cli
