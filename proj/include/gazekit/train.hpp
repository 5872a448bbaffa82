#pragma once

#include <span>
#include <string>
#include <vector>

#include "gazekit/metrics.hpp"
#include "gazekit/model.hpp"

namespace gazekit {

enum class OptimizerKind { Sgd, Adam };

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct SplitChoice {
  enum class Mode { Counts, Ratio, Explicit };
  Mode mode = Mode::Counts;
  int n_train = 17, n_val = 5, n_test = 6;
  double r_train = 0.7, r_val = 0.15, r_test = 0.15;
  SplitSpec explicit_spec;
};

struct TrainConfig {
  double lr = 1e-3;
  OptimizerKind optimizer = OptimizerKind::Adam;
  AdamConfig adam;
  int batch_size = 16;
  int epochs = 10;
  std::uint64_t seed = 1;
  LossWeights loss;
  ModelConfig model;
  int eval_image_w = 1280;
  int eval_image_h = 720;
  SplitChoice split;
};

SplitResult apply_split(std::span<const SampleRecord> records, const SplitChoice& choice,
                        std::uint64_t seed);

struct LossCurveRow {
  int epoch = 0;
  std::string split;  // "train" or "val"
  double loss_dir = 0.0;
  double loss_pog = 0.0;
};

// First/second Adam moments in parameter-registration order.
struct OptimizerState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;
};

struct TrainState {
  GazeModel model;
  OptimizerState opt;
  int next_epoch = 1;
};

TrainState make_train_state(const TrainConfig& cfg);

// One optimizer step from the currently accumulated gradients. Frozen
// parameters (W_k under scene_blind) are skipped.
void optimizer_step(ParamSet& params, OptimizerState& opt, const TrainConfig& cfg);

// Runs epochs state.next_epoch .. cfg.epochs, mini-batch mean reduction,
// seeded per-epoch shuffling. Throws NumericError with epoch/batch/parameter
// diagnostics when the loss goes non-finite.
std::vector<LossCurveRow> train(TrainState& state, std::span<const LoadedSample> train_set,
                                std::span<const LoadedSample> val_set, const TrainConfig& cfg);

// Parameter groups whose gradient norm is exactly zero (after a backward).
std::vector<std::string> zero_grad_param_groups(const ParamSet& ps);

// Forwards every sample and aggregates the PoG metrics. When train_drivers is
// given, any overlap with the evaluated drivers is a contamination error.
EvalReport evaluate(std::span<const LoadedSample> samples, const GazeModel& model, int eval_w,
                    int eval_h, const std::vector<std::string>* train_drivers = nullptr);

// Mean angular error in degrees over samples carrying a gaze vector.
double mean_angular_error(std::span<const LoadedSample> samples, const GazeModel& model);

void write_loss_curve_csv(const std::string& path, std::span<const LossCurveRow> rows);

}  // namespace gazekit
