#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "seqnet/config.hpp"
#include "seqnet/corpus.hpp"
#include "seqnet/model.hpp"

namespace seqnet {

struct Triplet {
  WindowIndex anchor;                  // query window
  WindowIndex positive;                // reference window
  std::vector<WindowIndex> negatives;  // reference windows
};

enum class NegativeReduction { Sum, Mean };

struct TrainConfig {
  double margin = 0.3;
  double lr0 = 1e-4;
  std::size_t lr_halving_period = 50;
  double lr_factor = 0.5;
  double momentum = 0.9;
  double weight_decay = 1e-3;
  std::size_t n_neg = 10;
  double pos_radius = 5.0;
  double neg_radius = 20.0;
  std::size_t epochs = 200;
  std::uint64_t seed = 42;
  std::size_t L_d = 5;
  std::size_t w = 3;
  bool identity_init = false;
  NegativeReduction reduction = NegativeReduction::Sum;
};

/// Defaults for frame-indexed data: L_d = 10, w = 5, radii 10 / 40 frames.
TrainConfig frames_profile();

void validate(const TrainConfig& cfg);

/// Reads a [train] section (and `profile`) from a key=value config.
TrainConfig read_train_config(KeyValueConfig& cfg, const std::string& section = "train");
std::string format_train_config(const TrainConfig& cfg);

double triplet_loss(std::span<const float> anchor, std::span<const float> positive, std::span<const float> negative,
                    double margin);
double triplet_loss(const SeqDescriptor& a, const SeqDescriptor& p, const SeqDescriptor& n, double margin);

/// One triplet per query window with a reference window inside pos_radius; the
/// closest such window is the positive and n_neg windows beyond neg_radius are
/// sampled without replacement.
std::vector<Triplet> mine_triplets(const Traverse& ref, const Traverse& qry, const TrainConfig& cfg,
                                   std::uint64_t epoch_seed);

struct LossGradient {
  double loss = 0.0;
  std::size_t active_terms = 0;
  GradientBundle grads;  // kernel and bias only
};

LossGradient loss_gradient(const SeqNetModel& m, const Triplet& t, const Traverse& ref, const Traverse& qry,
                           double margin, NegativeReduction reduction = NegativeReduction::Sum);

struct MomentumState {
  std::vector<double> kernel;
  std::vector<double> bias;
};

MomentumState zero_momentum(const SeqNetModel& m);

/// v <- momentum * v + (grad + weight_decay * param); param <- param - lr * v.
/// Biases are not decayed.
void sgd_step(SeqNetModel& m, const GradientBundle& grads, MomentumState& state, double lr, const TrainConfig& cfg);

double lr_at_epoch(std::size_t epoch, const TrainConfig& cfg);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  double active_fraction = 0.0;
  std::optional<double> val_recall1;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
};

struct TrainResult {
  SeqNetModel model;
  TrainLog log;
};

struct ValidationPair {
  const Traverse* reference = nullptr;
  const Traverse* query = nullptr;
  double radius = 0.0;
};

/// Descriptors are L2-normalized row-wise before training when not already.
TrainResult train(const Traverse& ref, const Traverse& qry, const TrainConfig& cfg,
                  std::optional<ValidationPair> val = std::nullopt);

void write_train_log(const std::filesystem::path& path, const TrainLog& log);

/// Row-normalized copy of a traverse, or the traverse itself when already normalized.
Traverse prepared(const Traverse& t);

}  // namespace seqnet
