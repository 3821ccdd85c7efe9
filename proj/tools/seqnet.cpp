#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"

using namespace seqnet::cli;

namespace {

void add_common(CLI::App* cmd, CommonOptions& common, bool with_out = true) {
  cmd->add_option("--config", common.config, "Configuration file (key=value with [section] headers)");
  cmd->add_option("--seed", common.seed, "Override the configured random seed");
  if (with_out) cmd->add_option("--out", common.out, "Output directory");
  cmd->add_option("--threads", common.threads, "Worker threads for matching")->capture_default_str();
  cmd->add_flag("--json", common.json, "Print reports as JSON lines");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential place recognition: synthetic corpora, training, matching and evaluation"};
  app.require_subcommand(1);

  CommonOptions common;
  EvalOptions eval;
  BenchOptions bench;
  ExtractOptions extract;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic reference/query traverse pair");
  add_common(synth, common);
  auto* train = app.add_subcommand("train", "Train single-frame and sequential models");
  add_common(train, common);
  auto* ev = app.add_subcommand("eval", "Evaluate every matching method and print recall@K");
  add_common(ev, common);
  ev->add_option("--K", eval.K, "Shortlist size");
  ev->add_option("--Lm", eval.L_m, "Sequence matching length");
  ev->add_flag("--reverse-db", eval.reverse_db, "Reverse the reference traverse");
  ev->add_flag("--include-empty", eval.include_empty, "Count queries without positives as misses");
  auto* bn = app.add_subcommand("bench", "Time descriptor extraction and matching");
  add_common(bn, common);
  bn->add_option("--K", bench.K, "Shortlist size");
  bn->add_option("--Lm", bench.L_m, "Sequence matching length");
  bn->add_option("--repetitions", bench.repetitions, "Timed repetitions per stage")->capture_default_str();
  auto* ex = app.add_subcommand("extract", "Compute sequential descriptors for a descriptor file");
  add_common(ex, common, false);
  ex->add_option("--model", extract.model, "Model file")->required();
  ex->add_option("--descriptors", extract.descriptors, "Descriptor file")->required();
  ex->add_option("--out", extract.out, "Output descriptor file")->required();

  CLI11_PARSE(app, argc, argv);

  if (synth->parsed()) return cmd_synth(common, std::cout, std::cerr);
  if (train->parsed()) return cmd_train(common, std::cout, std::cerr);
  if (ev->parsed()) return cmd_eval(common, eval, std::cout, std::cerr);
  if (bn->parsed()) return cmd_bench(common, bench, std::cout, std::cerr);
  return cmd_extract(common, extract, std::cout, std::cerr);
}
