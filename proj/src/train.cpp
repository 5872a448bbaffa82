#include "gazekit/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace gazekit {

SplitResult apply_split(std::span<const SampleRecord> records, const SplitChoice& choice,
                        std::uint64_t seed) {
  switch (choice.mode) {
    case SplitChoice::Mode::Counts:
      return split_by_counts(records, choice.n_train, choice.n_val, choice.n_test);
    case SplitChoice::Mode::Ratio:
      return split_by_ratio(records, choice.r_train, choice.r_val, choice.r_test, seed);
    case SplitChoice::Mode::Explicit:
      return split_by_driver(records, choice.explicit_spec);
  }
  throw ValueError("apply_split: unknown mode");
}

TrainState make_train_state(const TrainConfig& cfg) {
  if (cfg.lr <= 0.0 && cfg.lr != 0.0) throw ValueError("train: lr must be >= 0");
  if (cfg.batch_size < 1) throw ValueError("train: batch_size must be >= 1");
  TrainState st;
  st.model = GazeModel::init(cfg.model, cfg.seed);
  const auto& entries = st.model.params.entries();
  st.opt.m.resize(entries.size());
  st.opt.v.resize(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    st.opt.m[i].assign(std::size_t(entries[i].second.size()), 0.0);
    st.opt.v[i].assign(std::size_t(entries[i].second.size()), 0.0);
  }
  return st;
}

namespace {

bool is_frozen(const std::string& name, const TrainConfig& cfg) {
  return cfg.model.scene_blind && name == "head.attn.wk";
}

}  // namespace

void optimizer_step(ParamSet& params, OptimizerState& opt, const TrainConfig& cfg) {
  auto& entries = params.entries();
  if (opt.m.size() != entries.size())
    throw ValueError("optimizer_step: state does not match parameter registry");
  ++opt.step;
  const double b1 = cfg.adam.beta1, b2 = cfg.adam.beta2, eps = cfg.adam.eps;
  const double bc1 = 1.0 - std::pow(b1, double(opt.step));
  const double bc2 = 1.0 - std::pow(b2, double(opt.step));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& [name, t] = entries[i];
    if (is_frozen(name, cfg)) continue;
    auto& x = t.values();
    const auto& g = t.grad();
    if (cfg.optimizer == OptimizerKind::Sgd) {
      for (std::size_t k = 0; k < x.size(); ++k) x[k] -= cfg.lr * g[k];
    } else {
      auto& m = opt.m[i];
      auto& v = opt.v[i];
      for (std::size_t k = 0; k < x.size(); ++k) {
        m[k] = b1 * m[k] + (1.0 - b1) * g[k];
        v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
        const double mhat = m[k] / bc1;
        const double vhat = v[k] / bc2;
        x[k] -= cfg.lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }
}

namespace {

std::string nan_diagnostics(const ParamSet& params, int epoch, int batch) {
  std::string msg = "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                    std::to_string(batch);
  std::string worst_name = "<none>";
  double worst_norm = -1.0;
  for (const auto& [name, t] : params.entries()) {
    double norm = 0.0;
    bool finite = true;
    for (double v : t.values()) {
      if (!std::isfinite(v)) finite = false;
      norm += v * v;
    }
    if (!finite) {
      msg += "; parameter group '" + name + "' contains non-finite values";
      return msg;
    }
    norm = std::sqrt(norm);
    if (norm > worst_norm) {
      worst_norm = norm;
      worst_name = name;
    }
  }
  msg += "; largest parameter group norm " + std::to_string(worst_norm) + " ('" + worst_name +
         "')";
  return msg;
}

}  // namespace

std::vector<LossCurveRow> train(TrainState& state, std::span<const LoadedSample> train_set,
                                std::span<const LoadedSample> val_set, const TrainConfig& cfg) {
  if (train_set.empty()) throw ValueError("train: empty training split");
  std::vector<LossCurveRow> curve;

  for (int epoch = state.next_epoch; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng = Rng(cfg.seed).fork("epoch." + std::to_string(epoch));
    shuffle_rng.shuffle(order);

    double epoch_dir = 0.0, epoch_pog = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + std::size_t(cfg.batch_size));
      Tape tape;
      state.model.params.zero_grads();
      Tensor batch_total;
      for (std::size_t k = start; k < end; ++k) {
        const LoadedSample& s = train_set[order[k]];
        const ForwardResult fwd = state.model.forward(&tape, s);
        const SampleLoss l = state.model.sample_loss(&tape, fwd, s, cfg.loss);
        epoch_dir += l.dir_value;
        epoch_pog += l.pog_value;
        batch_total = batch_total.defined() ? add(&tape, batch_total, l.total) : l.total;
      }
      const Tensor batch_loss = scale(&tape, batch_total, 1.0 / double(end - start));
      if (!std::isfinite(batch_loss.item()))
        throw NumericError(nan_diagnostics(state.model.params, epoch, batch_index));
      tape.backward(batch_loss);
      optimizer_step(state.model.params, state.opt, cfg);
      ++batch_index;
    }

    LossCurveRow row;
    row.epoch = epoch;
    row.split = "train";
    row.loss_dir = epoch_dir / double(train_set.size());
    row.loss_pog = epoch_pog / double(train_set.size());
    curve.push_back(row);

    if (!val_set.empty()) {
      double val_dir = 0.0, val_pog = 0.0;
      for (const LoadedSample& s : val_set) {
        const ForwardResult fwd = state.model.forward(nullptr, s);
        const SampleLoss l = state.model.sample_loss(nullptr, fwd, s, cfg.loss);
        val_dir += l.dir_value;
        val_pog += l.pog_value;
      }
      LossCurveRow vrow;
      vrow.epoch = epoch;
      vrow.split = "val";
      vrow.loss_dir = val_dir / double(val_set.size());
      vrow.loss_pog = val_pog / double(val_set.size());
      curve.push_back(vrow);
    }
    state.next_epoch = epoch + 1;
  }
  return curve;
}

std::vector<std::string> zero_grad_param_groups(const ParamSet& ps) {
  std::vector<std::string> out;
  for (const auto& [name, t] : ps.entries()) {
    double norm = 0.0;
    for (double g : t.grad()) norm += g * g;
    if (norm == 0.0) out.push_back(name);
  }
  return out;
}

EvalReport evaluate(std::span<const LoadedSample> samples, const GazeModel& model, int eval_w,
                    int eval_h, const std::vector<std::string>* train_drivers) {
  if (samples.empty()) throw ValueError("evaluate: empty sample set");
  if (model.cfg.heads == Heads::Direction)
    throw ValueError("evaluate: PoG head is not active in this model");
  if (train_drivers) {
    const std::set<std::string> forbidden(train_drivers->begin(), train_drivers->end());
    for (const auto& s : samples)
      if (forbidden.count(s.driver_id))
        throw ProtocolError("evaluate: split contamination, driver '" + s.driver_id +
                            "' was seen during training");
  }

  std::vector<double> errors;
  std::vector<std::pair<double, double>> spatial;
  std::vector<double> angles;
  errors.reserve(samples.size());
  spatial.reserve(samples.size());
  for (const auto& s : samples) {
    const ForwardResult fwd = model.forward(nullptr, s);
    const std::array<double, 2> pred{fwd.pog.p_final(0), fwd.pog.p_final(1)};
    const double err = pixel_error(pred, s.gaze_norm, eval_w, eval_h);
    errors.push_back(err);
    spatial.push_back({s.gaze_norm[0] * eval_w, err});
    if (fwd.pog.g_hat.defined() && s.gaze_vec) {
      angles.push_back(angular_error_deg({fwd.pog.g_hat(0), fwd.pog.g_hat(1), fwd.pog.g_hat(2)},
                                         *s.gaze_vec));
    }
  }
  std::optional<double> mae;
  if (!angles.empty()) mae = mean_of(angles);
  return build_eval_report(errors, spatial, mae, eval_w, eval_h);
}

double mean_angular_error(std::span<const LoadedSample> samples, const GazeModel& model) {
  if (model.cfg.heads == Heads::Pog)
    throw ValueError("mean_angular_error: direction head is not active");
  std::vector<double> angles;
  for (const auto& s : samples) {
    if (!s.gaze_vec) continue;
    const ForwardResult fwd = model.forward(nullptr, s);
    angles.push_back(
        angular_error_deg({fwd.pog.g_hat(0), fwd.pog.g_hat(1), fwd.pog.g_hat(2)}, *s.gaze_vec));
  }
  if (angles.empty()) throw ValueError("mean_angular_error: no samples carry a gaze vector");
  return mean_of(angles);
}

void write_loss_curve_csv(const std::string& path, std::span<const LossCurveRow> rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write loss curve: " + path);
  f << "epoch,split,loss_dir,loss_pog\n";
  f.precision(17);
  for (const auto& r : rows)
    f << r.epoch << "," << r.split << "," << r.loss_dir << "," << r.loss_pog << "\n";
}

}  // namespace gazekit
