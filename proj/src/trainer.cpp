#include "seqnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "seqnet/error.hpp"
#include "seqnet/io_util.hpp"
#include "seqnet/matcher.hpp"

namespace seqnet {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) { return splitmix64(seed ^ splitmix64(epoch)); }

double distance(std::span<const double> a, std::span<const double> b) {
  double sq = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) sq += (a[c] - b[c]) * (a[c] - b[c]);
  return std::sqrt(sq);
}

}  // namespace

TrainConfig frames_profile() {
  TrainConfig cfg;
  cfg.L_d = 10;
  cfg.w = 5;
  cfg.pos_radius = 10.0;
  cfg.neg_radius = 40.0;
  return cfg;
}

void validate(const TrainConfig& cfg) {
  auto bad = [](const std::string& why) { return Error(ErrorCode::InvalidSpec, why); };
  if (!(cfg.margin > 0.0)) throw bad("margin must be positive");
  if (!(cfg.lr0 > 0.0) || !std::isfinite(cfg.lr0)) throw bad("lr must be positive");
  if (cfg.lr_halving_period == 0) throw bad("lr_period must be positive");
  if (!(cfg.lr_factor > 0.0 && cfg.lr_factor <= 1.0)) throw bad("lr_factor must lie in (0, 1]");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw bad("momentum must lie in [0, 1)");
  if (!(cfg.weight_decay >= 0.0)) throw bad("weight_decay must be non-negative");
  if (cfg.n_neg == 0) throw bad("n_neg must be at least 1");
  if (!(cfg.pos_radius >= 0.0 && cfg.pos_radius < cfg.neg_radius)) throw bad("need 0 <= pos_radius < neg_radius");
  if (cfg.L_d == 0 || cfg.w == 0 || cfg.w > cfg.L_d) throw bad("need 1 <= w <= L_d");
}

TrainConfig read_train_config(KeyValueConfig& kv, const std::string& s) {
  const std::string profile = kv.get_string(s, "profile", "city");
  TrainConfig cfg;
  if (profile == "frames") {
    cfg = frames_profile();
  } else if (profile != "city") {
    throw Error(ErrorCode::InvalidSpec, "profile must be 'city' or 'frames', got '" + profile + "'");
  }
  auto size_key = [&](const char* key, std::size_t fallback) {
    const auto v = kv.get_int(s, key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw Error(ErrorCode::InvalidSpec, std::string(key) + " must be non-negative");
    return static_cast<std::size_t>(v);
  };
  cfg.margin = kv.get_double(s, "margin", cfg.margin);
  cfg.lr0 = kv.get_double(s, "lr", cfg.lr0);
  cfg.lr_halving_period = size_key("lr_period", cfg.lr_halving_period);
  cfg.lr_factor = kv.get_double(s, "lr_factor", cfg.lr_factor);
  cfg.momentum = kv.get_double(s, "momentum", cfg.momentum);
  cfg.weight_decay = kv.get_double(s, "weight_decay", cfg.weight_decay);
  cfg.n_neg = size_key("n_neg", cfg.n_neg);
  cfg.pos_radius = kv.get_double(s, "pos_radius", cfg.pos_radius);
  cfg.neg_radius = kv.get_double(s, "neg_radius", cfg.neg_radius);
  cfg.epochs = size_key("epochs", cfg.epochs);
  cfg.seed = kv.get_uint(s, "seed", cfg.seed);
  cfg.L_d = size_key("L_d", cfg.L_d);
  cfg.w = size_key("w", cfg.w);
  cfg.identity_init = kv.get_bool(s, "identity_init", cfg.identity_init);
  const std::string reduction = kv.get_string(s, "negatives", "sum");
  if (reduction == "sum") {
    cfg.reduction = NegativeReduction::Sum;
  } else if (reduction == "mean") {
    cfg.reduction = NegativeReduction::Mean;
  } else {
    throw Error(ErrorCode::InvalidSpec, "negatives must be 'sum' or 'mean'");
  }
  validate(cfg);
  return cfg;
}

std::string format_train_config(const TrainConfig& cfg) {
  std::ostringstream out;
  out.precision(17);
  out << "margin=" << cfg.margin << "\nlr=" << cfg.lr0 << "\nlr_period=" << cfg.lr_halving_period
      << "\nlr_factor=" << cfg.lr_factor << "\nmomentum=" << cfg.momentum << "\nweight_decay=" << cfg.weight_decay
      << "\nn_neg=" << cfg.n_neg << "\npos_radius=" << cfg.pos_radius << "\nneg_radius=" << cfg.neg_radius
      << "\nepochs=" << cfg.epochs << "\nseed=" << cfg.seed << "\nL_d=" << cfg.L_d << "\nw=" << cfg.w
      << "\nidentity_init=" << (cfg.identity_init ? "true" : "false")
      << "\nnegatives=" << (cfg.reduction == NegativeReduction::Sum ? "sum" : "mean") << '\n';
  return out.str();
}

double triplet_loss(std::span<const float> a, std::span<const float> p, std::span<const float> n, double margin) {
  if (a.size() != p.size() || a.size() != n.size()) {
    throw Error(ErrorCode::DimensionMismatch, "triplet descriptors differ in dimension");
  }
  return std::max(descriptor_distance(a, p) - descriptor_distance(a, n) + margin, 0.0);
}

double triplet_loss(const SeqDescriptor& a, const SeqDescriptor& p, const SeqDescriptor& n, double margin) {
  return triplet_loss(a.values, p.values, n.values, margin);
}

std::vector<Triplet> mine_triplets(const Traverse& ref, const Traverse& qry, const TrainConfig& cfg,
                                   std::uint64_t seed) {
  validate(cfg);
  if (ref.kind != qry.kind) throw Error(ErrorCode::GeometryKindMismatch, "reference and query geometry differ");
  const auto ref_windows = training_windows(ref.size(), cfg.L_d);
  const auto qry_windows = training_windows(qry.size(), cfg.L_d);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, ref_windows.size() - 1);
  std::vector<double> dist(ref_windows.size());
  std::vector<Triplet> out;
  for (const auto& anchor : qry_windows) {
    const Position& here = qry.positions[anchor.center()];
    std::size_t best = ref_windows.size();
    std::size_t beyond = 0;
    for (std::size_t j = 0; j < ref_windows.size(); ++j) {
      dist[j] = geometric_distance(ref.kind, here, ref.positions[ref_windows[j].center()]);
      if (dist[j] <= cfg.pos_radius && (best == ref_windows.size() || dist[j] < dist[best])) best = j;
      if (dist[j] > cfg.neg_radius) ++beyond;
    }
    if (best == ref_windows.size()) continue;
    if (beyond < cfg.n_neg) {
      throw Error(ErrorCode::NoNegativesAvailable, "query window at frame " + std::to_string(anchor.center()) +
                                                       " has " + std::to_string(beyond) + " candidate negatives");
    }
    Triplet t{anchor, ref_windows[best], {}};
    std::vector<std::size_t> chosen;
    if (2 * beyond >= ref_windows.size()) {
      // Rejection sampling: at least half the draws land beyond the radius.
      while (chosen.size() < cfg.n_neg) {
        const std::size_t j = pick(rng);
        if (dist[j] > cfg.neg_radius && std::ranges::find(chosen, j) == chosen.end()) chosen.push_back(j);
      }
    } else {
      std::vector<std::size_t> pool;
      for (std::size_t j = 0; j < ref_windows.size(); ++j) {
        if (dist[j] > cfg.neg_radius) pool.push_back(j);
      }
      for (std::size_t s = 0; s < cfg.n_neg; ++s) {
        std::uniform_int_distribution<std::size_t> rest(s, pool.size() - 1);
        std::swap(pool[s], pool[rest(rng)]);
        chosen.push_back(pool[s]);
      }
    }
    for (auto j : chosen) t.negatives.push_back(ref_windows[j]);
    out.push_back(std::move(t));
  }
  return out;
}

LossGradient loss_gradient(const SeqNetModel& m, const Triplet& t, const Traverse& ref, const Traverse& qry,
                           double margin, NegativeReduction reduction) {
  LossGradient out;
  out.grads = zero_gradients(m);
  const auto anchor = forward_state(m, window_rows(qry.descriptors, t.anchor));
  const auto positive = forward_state(m, window_rows(ref.descriptors, t.positive));
  const double d_ap = distance(anchor.output, positive.output);
  const double scale = reduction == NegativeReduction::Mean ? 1.0 / static_cast<double>(t.negatives.size()) : 1.0;

  const std::size_t d = m.d_out;
  std::vector<double> up_anchor(d, 0.0);
  std::vector<double> up_positive(d, 0.0);
  std::vector<double> up_negative(d);
  std::vector<double> toward_positive(d, 0.0);
  if (d_ap > 0.0) {
    for (std::size_t c = 0; c < d; ++c) toward_positive[c] = (anchor.output[c] - positive.output[c]) / d_ap;
  }
  for (const auto& neg_window : t.negatives) {
    const auto negative = forward_state(m, window_rows(ref.descriptors, neg_window));
    const double d_an = distance(anchor.output, negative.output);
    const double term = d_ap - d_an + margin;
    if (!(term > 0.0)) continue;
    out.loss += scale * term;
    ++out.active_terms;
    for (std::size_t c = 0; c < d; ++c) {
      const double away = d_an > 0.0 ? (anchor.output[c] - negative.output[c]) / d_an : 0.0;
      up_anchor[c] += scale * (toward_positive[c] - away);
      up_positive[c] -= scale * toward_positive[c];
      up_negative[c] = scale * away;
    }
    accumulate_parameter_gradients(m, negative, up_negative, out.grads);
  }
  if (out.active_terms > 0) {
    accumulate_parameter_gradients(m, anchor, up_anchor, out.grads);
    accumulate_parameter_gradients(m, positive, up_positive, out.grads);
  }
  return out;
}

MomentumState zero_momentum(const SeqNetModel& m) {
  return {std::vector<double>(m.kernel.size(), 0.0), std::vector<double>(m.bias.size(), 0.0)};
}

void sgd_step(SeqNetModel& m, const GradientBundle& grads, MomentumState& state, double lr, const TrainConfig& cfg) {
  if (grads.d_kernel.size() != m.kernel.size() || grads.d_bias.size() != m.bias.size() ||
      state.kernel.size() != m.kernel.size() || state.bias.size() != m.bias.size()) {
    throw Error(ErrorCode::ShapeMismatch, "gradient or momentum shape differs from the model");
  }
  for (std::size_t i = 0; i < m.kernel.size(); ++i) {
    state.kernel[i] = cfg.momentum * state.kernel[i] + (grads.d_kernel[i] + cfg.weight_decay * m.kernel[i]);
    m.kernel[i] -= lr * state.kernel[i];
  }
  for (std::size_t o = 0; o < m.bias.size(); ++o) {
    state.bias[o] = cfg.momentum * state.bias[o] + grads.d_bias[o];
    m.bias[o] -= lr * state.bias[o];
  }
}

double lr_at_epoch(std::size_t epoch, const TrainConfig& cfg) {
  return cfg.lr0 * std::pow(cfg.lr_factor, static_cast<double>(epoch / cfg.lr_halving_period));
}

Traverse prepared(const Traverse& t) {
  if (t.descriptors.normalized) return t;
  Traverse out = t;
  out.descriptors = normalize_rows(t.descriptors);
  return out;
}

namespace {

double validation_recall1(const SeqNetModel& m, const ValidationPair& val) {
  const Traverse ref = prepared(*val.reference);
  const Traverse qry = prepared(*val.query);
  const auto ref_desc = forward_batch(m, ref, m.L_d);
  const auto qry_desc = forward_batch(m, qry, m.L_d);
  const auto table = retrieve_topk(ref_desc, qry_desc, 1);
  std::size_t counted = 0;
  std::size_t hits = 0;
  for (std::size_t q = 0; q < table.ranked.size(); ++q) {
    const auto& here = qry.positions[table.query_frames[q]];
    bool any_positive = false;
    for (auto c : table.ref_frames) {
      if (geometric_distance(ref.kind, here, ref.positions[c]) <= val.radius) {
        any_positive = true;
        break;
      }
    }
    if (!any_positive) continue;
    ++counted;
    const auto top = table.ref_frames[table.ranked[q].front().ref];
    if (geometric_distance(ref.kind, here, ref.positions[top]) <= val.radius) ++hits;
  }
  return counted == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(counted);
}

}  // namespace

TrainResult train(const Traverse& ref_in, const Traverse& qry_in, const TrainConfig& cfg,
                  std::optional<ValidationPair> val) {
  validate(cfg);
  if (ref_in.descriptors.d() != qry_in.descriptors.d()) {
    throw Error(ErrorCode::DimensionMismatch, "reference and query descriptor dimensions differ");
  }
  const Traverse ref = prepared(ref_in);
  const Traverse qry = prepared(qry_in);
  const std::size_t d = ref.descriptors.d();

  TrainResult result{init_model(d, d, cfg.w, cfg.L_d, cfg.seed, cfg.identity_init), {}};
  SeqNetModel& model = result.model;
  MomentumState momentum = zero_momentum(model);
  std::optional<SeqNetModel> best;
  double best_recall = -1.0;

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const std::uint64_t seed = epoch_seed(cfg.seed, e);
    auto triplets = mine_triplets(ref, qry, cfg, seed);
    std::mt19937_64 order_rng(splitmix64(seed));
    std::shuffle(triplets.begin(), triplets.end(), order_rng);

    EpochLog entry;
    entry.epoch = e;
    entry.lr = lr_at_epoch(e, cfg);
    std::size_t active = 0;
    double loss_sum = 0.0;
    for (const auto& t : triplets) {
      auto lg = loss_gradient(model, t, ref, qry, cfg.margin, cfg.reduction);
      if (!std::isfinite(lg.loss)) {
        throw Error(ErrorCode::TrainingDiverged, "non-finite loss in epoch " + std::to_string(e));
      }
      loss_sum += lg.loss;
      if (lg.active_terms == 0) continue;
      ++active;
      sgd_step(model, lg.grads, momentum, entry.lr, cfg);
    }
    const auto finite = [](double v) { return std::isfinite(v); };
    if (!std::ranges::all_of(model.kernel, finite) || !std::ranges::all_of(model.bias, finite)) {
      throw Error(ErrorCode::TrainingDiverged, "non-finite parameters after epoch " + std::to_string(e));
    }
    if (!triplets.empty()) {
      entry.mean_loss = loss_sum / static_cast<double>(triplets.size());
      entry.active_fraction = static_cast<double>(active) / static_cast<double>(triplets.size());
    }
    if (val) {
      entry.val_recall1 = validation_recall1(model, *val);
      if (*entry.val_recall1 > best_recall) {
        best_recall = *entry.val_recall1;
        best = model;
      }
    }
    result.log.epochs.push_back(entry);
  }
  if (best) result.model = *best;
  return result;
}

void write_train_log(const std::filesystem::path& path, const TrainLog& log) {
  std::ostringstream out;
  out.precision(10);
  out << "epoch,lr,mean_loss,active_fraction,val_recall1\n";
  for (const auto& e : log.epochs) {
    out << e.epoch << ',' << e.lr << ',' << e.mean_loss << ',' << e.active_fraction << ',';
    if (e.val_recall1) out << *e.val_recall1;
    out << '\n';
  }
  io::write_file(path, out.str());
}

}  // namespace seqnet
