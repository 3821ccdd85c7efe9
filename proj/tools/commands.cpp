#include "commands.hpp"

#include <algorithm>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "seqnet/config.hpp"
#include "seqnet/corpus.hpp"
#include "seqnet/error.hpp"
#include "seqnet/eval.hpp"
#include "seqnet/io_util.hpp"
#include "seqnet/matcher.hpp"
#include "seqnet/model.hpp"
#include "seqnet/trainer.hpp"

namespace fs = std::filesystem;

namespace seqnet::cli {

namespace {

/// Removes every tracked file unless commit() was reached.
class OutputGuard {
 public:
  OutputGuard() = default;
  OutputGuard(const OutputGuard&) = delete;
  OutputGuard& operator=(const OutputGuard&) = delete;
  ~OutputGuard() {
    if (committed_) return;
    for (const auto& p : written_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }

  fs::path track(fs::path p) {
    written_.push_back(p);
    return p;
  }
  void commit() { committed_ = true; }

 private:
  std::vector<fs::path> written_;
  bool committed_ = false;
};

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    fn();
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

fs::path require_existing(const fs::path& p) {
  if (!fs::exists(p)) throw Error(ErrorCode::IoError, "missing file: " + p.string());
  return p;
}

fs::path config_dir(const CommonOptions& common) {
  return common.config ? common.config->parent_path() : fs::path{};
}

fs::path resolve(const fs::path& base, const std::string& value) {
  fs::path p(value);
  return p.is_absolute() || base.empty() ? p : base / p;
}

KeyValueConfig load_config(const CommonOptions& common) {
  if (!common.config) throw Error(ErrorCode::InvalidSpec, "--config is required");
  return KeyValueConfig::load(require_existing(*common.config));
}

GeometryKind parse_geometry(const std::string& s) {
  if (s == "planar") return GeometryKind::Planar;
  if (s == "frames") return GeometryKind::FrameIndexed;
  throw Error(ErrorCode::InvalidSpec, "geometry must be 'planar' or 'frames', got '" + s + "'");
}

struct TraversePair {
  Traverse reference;
  Traverse query;
};

TraversePair load_pair(KeyValueConfig& kv, const std::string& section, const fs::path& base) {
  if (!kv.has_section(section)) throw Error(ErrorCode::InvalidSpec, "config has no [" + section + "] section");
  const auto kind = parse_geometry(kv.get_string(section, "geometry", "planar"));
  auto path_of = [&](const char* key) {
    if (!kv.has(section, key)) throw Error(ErrorCode::InvalidSpec, "[" + section + "] needs " + key);
    return require_existing(resolve(base, kv.get_string(section, key, "")));
  };
  const auto ref_desc = path_of("reference");
  const auto qry_desc = path_of("query");
  const auto ref_pose = path_of("reference_poses");
  const auto qry_pose = path_of("query_poses");
  return {make_traverse(load_descriptors(ref_desc), load_poses(ref_pose, kind)),
          make_traverse(load_descriptors(qry_desc), load_poses(qry_pose, kind))};
}

fs::path output_dir(KeyValueConfig& kv, const CommonOptions& common) {
  fs::path dir = common.out ? *common.out : resolve(config_dir(common), kv.get_string("output", "dir", "."));
  fs::create_directories(dir);
  return dir;
}

double default_radius(const Traverse& t) { return t.kind == GeometryKind::Planar ? 10.0 : 1.0; }

std::string ground_truth_csv(const GroundTruth& gt) {
  std::ostringstream out;
  out << "query_index,reference_index\n";
  for (std::size_t q = 0; q < gt.pairs.size(); ++q) {
    for (auto r : gt.pairs[q]) out << q << ',' << r << '\n';
  }
  return out.str();
}

PoseTable poses_of(const Traverse& t) { return {t.kind, t.positions, t.timestamps}; }

}  // namespace

int cmd_synth(const CommonOptions& common, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    SynthSpec spec = common.config ? load_synth_spec(require_existing(*common.config)) : SynthSpec{};
    if (common.seed) spec.seed = *common.seed;
    validate(spec);
    const fs::path dir = common.out ? *common.out : fs::path("synth");
    fs::create_directories(dir);
    const auto pair = synth_traverse_pair(spec);

    OutputGuard guard;
    write_descriptors(guard.track(dir / "reference.sqds"), pair.reference.descriptors);
    write_descriptors(guard.track(dir / "query.sqds"), pair.query.descriptors);
    write_poses(guard.track(dir / "reference_poses.csv"), poses_of(pair.reference));
    write_poses(guard.track(dir / "query_poses.csv"), poses_of(pair.query));
    io::write_file(guard.track(dir / "ground_truth.csv"), ground_truth_csv(pair.truth));
    io::write_file(guard.track(dir / "synth.cfg"), format_synth_spec(spec));
    guard.commit();
    out << "wrote " << pair.reference.size() << " reference and " << pair.query.size() << " query frames to "
        << dir.string() << '\n';
  });
}

int cmd_train(const CommonOptions& common, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto kv = load_config(common);
    const fs::path base = config_dir(common);
    auto data = load_pair(kv, "data", base);
    TrainConfig cfg = read_train_config(kv, "train");
    if (common.seed) cfg.seed = *common.seed;
    const std::string models = kv.get_string("train", "models", "s1,sld");
    const bool want_s1 = models.find("s1") != std::string::npos;
    const bool want_sld = models.find("sld") != std::string::npos;
    if (!want_s1 && !want_sld) throw Error(ErrorCode::InvalidSpec, "models must list s1 and/or sld");

    std::optional<TraversePair> val_data;
    double val_radius = 0.0;
    if (kv.has_section("validation")) {
      val_data = load_pair(kv, "validation", base);
      val_radius = kv.get_double("validation", "radius", default_radius(val_data->reference));
    }
    const fs::path dir = output_dir(kv, common);
    kv.reject_unknown({"models", "eval"});

    std::optional<ValidationPair> val;
    if (val_data) val = ValidationPair{&val_data->reference, &val_data->query, val_radius};

    OutputGuard guard;
    auto run = [&](TrainConfig c, const std::string& name) {
      auto result = train(data.reference, data.query, c, val);
      save_model(guard.track(dir / (name + ".sqnm")), result.model);
      write_train_log(guard.track(dir / ("train_log_" + name + ".csv")), result.log);
      io::write_file(guard.track(dir / ("train_" + name + ".cfg")), format_train_config(c));
      out << name << ": " << result.log.epochs.size() << " epochs";
      if (!result.log.epochs.empty()) out << ", final mean loss " << result.log.epochs.back().mean_loss;
      out << '\n';
    };
    if (want_s1) {
      TrainConfig c = cfg;
      c.L_d = 1;
      c.w = 1;
      run(c, "s1");
    }
    if (want_sld) run(cfg, "sld");
    guard.commit();
  });
}

namespace {

struct LoadedModels {
  std::optional<SeqNetModel> s1;
  std::optional<SeqNetModel> sequential;
  ProtocolModels view() const { return {s1 ? &*s1 : nullptr, sequential ? &*sequential : nullptr}; }
};

LoadedModels load_models(KeyValueConfig& kv, const fs::path& base) {
  LoadedModels m;
  if (kv.has("models", "s1")) m.s1 = load_model(require_existing(resolve(base, kv.get_string("models", "s1", ""))));
  if (kv.has("models", "sld")) {
    m.sequential = load_model(require_existing(resolve(base, kv.get_string("models", "sld", ""))));
  }
  return m;
}

std::vector<std::size_t> as_sizes(const std::vector<std::int64_t>& v) {
  std::vector<std::size_t> out;
  for (auto x : v) {
    if (x <= 0) throw Error(ErrorCode::InvalidSpec, "recall K values must be positive");
    out.push_back(static_cast<std::size_t>(x));
  }
  return out;
}

std::string safe_name(std::string s) {
  for (char& c : s) {
    if (c == '+') c = '_';
  }
  return s;
}

}  // namespace

int cmd_eval(const CommonOptions& common, const EvalOptions& eval, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto kv = load_config(common);
    const fs::path base = config_dir(common);
    auto data = load_pair(kv, "data", base);
    const auto models = load_models(kv, base);

    ProtocolConfig pc;
    pc.K = static_cast<std::size_t>(kv.get_int("eval", "K", 20));
    pc.L_m = static_cast<std::size_t>(kv.get_int("eval", "Lm", 5));
    pc.baseline_length = static_cast<std::size_t>(kv.get_int("eval", "baseline_length", 5));
    pc.ks = as_sizes(kv.get_int_list("eval", "ks", {1, 5, 20}));
    pc.radius = kv.get_double("eval", "radius", default_radius(data.reference));
    pc.include_empty = kv.get_bool("eval", "include_empty", false) || eval.include_empty;
    pc.reverse_db = kv.get_bool("eval", "reverse_db", false) || eval.reverse_db;
    const std::string methods = kv.get_string("eval", "methods", "");
    if (!methods.empty()) {
      std::istringstream in(methods);
      std::string tag;
      while (std::getline(in, tag, ',')) pc.methods.push_back(tag);
    }
    if (eval.K) pc.K = *eval.K;
    if (eval.L_m) pc.L_m = *eval.L_m;
    pc.threads = common.threads;
    const fs::path dir = output_dir(kv, common);
    kv.reject_unknown({"train", "validation"});

    const auto result = run_protocol(data.reference, data.query, models.view(), pc);

    OutputGuard guard;
    write_reports_csv(guard.track(dir / "reports.csv"), result.reports);
    for (const auto& table : result.tables) {
      write_match_table(guard.track(dir / ("matches_" + safe_name(table.method) + ".csv")), table);
    }
    if (common.json) {
      const auto json = reports_json(result.reports);
      io::write_file(guard.track(dir / "reports.jsonl"), json);
      out << json;
    } else {
      out << "K=" << pc.K << " L_m=" << pc.L_m << " radius=" << pc.radius << " queries=" << result.centers.size()
          << (pc.reverse_db ? " (reversed database)" : "") << '\n';
      out << format_reports_table(result.reports);
    }
    guard.commit();
  });
}

int cmd_bench(const CommonOptions& common, const BenchOptions& bench, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (bench.repetitions < 2) throw Error(ErrorCode::InvalidSpec, "--repetitions must be at least 2");
    auto kv = load_config(common);
    const fs::path base = config_dir(common);
    auto data = load_pair(kv, "data", base);
    const auto models = load_models(kv, base);
    if (!models.s1 || !models.sequential) throw Error(ErrorCode::InvalidSpec, "bench needs [models] s1 and sld");
    std::size_t K = static_cast<std::size_t>(kv.get_int("eval", "K", 20));
    std::size_t L_m = static_cast<std::size_t>(kv.get_int("eval", "Lm", 5));
    // The remaining [eval] keys are shared with eval and unused here.
    (void)kv.get_int_list("eval", "ks", {});
    (void)kv.get_double("eval", "radius", 0.0);
    (void)kv.get_bool("eval", "include_empty", false);
    (void)kv.get_bool("eval", "reverse_db", false);
    (void)kv.get_int("eval", "baseline_length", 5);
    (void)kv.get_string("eval", "methods", "");
    if (bench.K) K = *bench.K;
    if (bench.L_m) L_m = *bench.L_m;
    if (K == 0 || L_m == 0) throw Error(ErrorCode::InvalidSpec, "K and L_m must be positive");
    const fs::path dir = output_dir(kv, common);
    kv.reject_unknown({"train", "validation"});

    const auto& s1 = *models.s1;
    const auto& sld = *models.sequential;
    const Traverse ref = prepared(data.reference);
    const Traverse qry = prepared(data.query);
    const std::size_t margin = std::max(sld.L_d / 2, L_m / 2);
    std::vector<std::size_t> ref_centers;
    for (std::size_t f = margin; f + margin < ref.size(); ++f) ref_centers.push_back(f);
    std::vector<std::size_t> qry_centers;
    for (std::size_t f = margin; f + margin < qry.size(); ++f) qry_centers.push_back(f);
    if (ref_centers.empty() || qry_centers.empty()) throw Error(ErrorCode::SequenceTooLong, "traverses too short");

    const auto ref_s1 = forward_batch(s1, ref, 1);
    const auto qry_s1 = forward_batch(s1, qry, 1);
    DescriptorList ref_seq;
    for (auto c : ref_centers) ref_seq.push_back(forward_window(sld, ref.descriptors, window_at_center(c, sld.L_d)));
    DescriptorList qry_seq;
    for (auto c : qry_centers) qry_seq.push_back(forward_window(sld, qry.descriptors, window_at_center(c, sld.L_d)));
    const auto shortlist = retrieve_topk(ref_seq, qry_seq, K, common.threads);

    std::size_t cursor = 0;
    auto next_query = [&] { return cursor++ % qry_centers.size(); };
    volatile double sink = 0.0;
    std::vector<StageTiming> timings;
    timings.push_back(bench_timing(
        [&] {
          const auto q = qry_centers[next_query()];
          sink = forward_window(s1, qry.descriptors, window_at_center(q, 1)).values[0];
        },
        bench.repetitions, 1, "S1 extract"));
    timings.push_back(bench_timing(
        [&] {
          const auto q = qry_centers[next_query()];
          sink = forward_window(sld, qry.descriptors, window_at_center(q, sld.L_d)).values[0];
        },
        bench.repetitions, 1, "S" + std::to_string(sld.L_d) + " extract"));
    timings.push_back(bench_timing(
        [&] {
          const auto q = qry_centers[next_query()];
          double best = std::numeric_limits<double>::infinity();
          for (auto c : ref_centers) best = std::min(best, *seqmatch_centered(ref_s1, qry_s1, q, c, L_m));
          sink = best;
        },
        bench.repetitions, 1, "SeqMatch: All"));
    timings.push_back(bench_timing(
        [&] {
          const auto qi = next_query();
          double best = std::numeric_limits<double>::infinity();
          for (const auto& cand : shortlist.ranked[qi]) {
            best = std::min(best, *seqmatch_centered(ref_s1, qry_s1, qry_centers[qi], ref_centers[cand.ref], L_m));
          }
          sink = best;
        },
        bench.repetitions, 1, "SeqMatch: Top " + std::to_string(K)));

    const std::uint64_t n_db = ref_centers.size();
    const std::uint64_t k_eff = std::min<std::uint64_t>(K, n_db);
    const std::uint64_t retrieval = n_db;
    const std::uint64_t full = n_db * L_m;
    const std::uint64_t hvpr = n_db + k_eff * L_m;
    const double ratio = static_cast<double>(hvpr) / static_cast<double>(full);

    OutputGuard guard;
    std::ostringstream timing_csv;
    timing_csv.precision(9);
    timing_csv << "stage,mean_ms,std_ms,samples\n";
    for (const auto& t : timings) timing_csv << t.stage << ',' << t.mean_ms << ',' << t.std_ms << ',' << t.samples << '\n';
    io::write_file(guard.track(dir / "bench_timing.csv"), timing_csv.str());
    std::ostringstream count_csv;
    count_csv.precision(9);
    count_csv << "method,per_query,total,queries\n"
              << "retrieval," << retrieval << ',' << retrieval * qry_centers.size() << ',' << qry_centers.size() << '\n'
              << "seqmatch_all," << full << ',' << full * qry_centers.size() << ',' << qry_centers.size() << '\n'
              << "hvpr," << hvpr << ',' << hvpr * qry_centers.size() << ',' << qry_centers.size() << '\n'
              << "hvpr_over_seqmatch_all," << ratio << ",,\n";
    io::write_file(guard.track(dir / "comparison_counts.csv"), count_csv.str());

    out << std::left << std::setw(22) << "stage" << std::right << std::setw(14) << "mean_ms" << std::setw(14)
        << "std_ms" << '\n';
    out << std::fixed << std::setprecision(4);
    for (const auto& t : timings) {
      out << std::left << std::setw(22) << t.stage << std::right << std::setw(14) << t.mean_ms << std::setw(14)
          << t.std_ms << '\n';
    }
    out << "\ncomparisons per query (N_db=" << n_db << ", K=" << K << ", L_m=" << L_m << ")\n"
        << "  retrieval          " << retrieval << '\n'
        << "  SeqMatch: All      " << full << '\n'
        << "  HVPR               " << hvpr << '\n'
        << "  HVPR / SeqMatch    " << std::setprecision(2) << 100.0 * ratio << "%\n";
    guard.commit();
  });
}

int cmd_extract(const CommonOptions& common, const ExtractOptions& ex, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto model = load_model(require_existing(ex.model));
    auto set = load_descriptors(require_existing(ex.descriptors));
    if (!set.normalized) set = normalize_rows(set);
    Traverse t;
    t.descriptors = set;
    t.kind = GeometryKind::FrameIndexed;
    for (std::size_t i = 0; i < set.n(); ++i) t.positions.push_back({static_cast<double>(i), 0.0});
    const auto descs = forward_batch(model, t, model.L_d);

    MatrixF m(descs.size(), model.d_out);
    std::ostringstream centers;
    centers << "row,center\n";
    for (std::size_t i = 0; i < descs.size(); ++i) {
      std::ranges::copy(descs[i].values, m.row(i).begin());
      centers << i << ',' << descs[i].source_window.center() << '\n';
    }
    const fs::path target = ex.out.empty() ? fs::path("extracted.sqds") : ex.out;
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    OutputGuard guard;
    write_descriptors(guard.track(target), DescriptorSet(std::move(m), true));
    fs::path centers_path = target;
    centers_path.replace_extension(".centers.csv");
    io::write_file(guard.track(centers_path), centers.str());
    guard.commit();
    (void)common;
    out << "wrote " << descs.size() << " descriptors to " << target.string() << '\n';
  });
}

}  // namespace seqnet::cli
