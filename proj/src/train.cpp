#include "mtln/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>

#include "mtln/error.hpp"
#include "mtln/image_io.hpp"
#include "mtln/ops.hpp"

namespace mtln {

namespace {

bool all_finite(std::span<const float> v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

Tensor image_tensor(const Image& image) {
  return Tensor({1, 1, image.height, image.width}, image.pixels, false);
}

Grid<float> probabilities(const Tensor& logits) {
  const int h = logits.dim(2);
  const int w = logits.dim(3);
  Grid<float> probs(h, w, 0.0f);
  const auto& v = logits.values();
  for (std::size_t i = 0; i < probs.pixels.size(); ++i) {
    probs.pixels[i] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(v[i]))));
  }
  return probs;
}

struct SetScore {
  double loss = 0.0;
  double dsc = 0.0;
};

SetScore score_set(const ModelParams& params, const TrainConfig& config, const std::vector<PreparedSample>& set) {
  SetScore s;
  if (set.empty()) {
    s.loss = std::numeric_limits<double>::quiet_NaN();
    s.dsc = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  for (const auto& sample : set) {
    Tape tape(false);
    const SampleLoss l = compute_loss(tape, params, config, sample);
    s.loss += l.total.item();
    s.dsc += dice_score(threshold_mask(probabilities(l.seg_logits)), sample.mask);
  }
  s.loss /= static_cast<double>(set.size());
  s.dsc /= static_cast<double>(set.size());
  return s;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  loss.validate();
  network.validate();
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams out;
  for (const auto& [name, t] : params) out.emplace(name, Tensor::zeros(t.dims()));
  return out;
}

ModelParams collect_gradients(const ModelParams& params, float factor) {
  ModelParams out;
  for (const auto& [name, t] : params) {
    std::vector<float> g(t.size(), 0.0f);
    if (t.has_grad()) {
      const auto& src = t.grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = src[i] * factor;
    }
    out.emplace(name, Tensor(t.dims(), std::move(g)));
  }
  return out;
}

void sgd_momentum_step(ModelParams& params, const ModelParams& grads, ModelParams& velocity, double learning_rate,
                       double momentum) {
  if (grads.size() != params.size() || velocity.size() != params.size()) {
    throw InvalidArgument("sgd_momentum_step: parameter, gradient and velocity name sets differ");
  }
  for (auto& [name, p] : params) {
    const auto g_it = grads.find(name);
    const auto v_it = velocity.find(name);
    if (g_it == grads.end() || v_it == velocity.end()) {
      throw InvalidArgument("sgd_momentum_step: no gradient or velocity for '" + name + "'");
    }
    const auto& g = g_it->second.values();
    const auto& v_old = v_it->second.values();
    if (g.size() != p.size() || v_old.size() != p.size()) {
      throw ShapeError("sgd_momentum_step: size mismatch for '" + name + "'");
    }
    const auto& pv = p.values();
    std::vector<float> v_new(p.size());
    std::vector<float> p_new(p.size());
    const float mu = static_cast<float>(momentum);
    const float lr = static_cast<float>(learning_rate);
    for (std::size_t i = 0; i < p_new.size(); ++i) {
      v_new[i] = mu * v_old[i] - lr * g[i];
      p_new[i] = pv[i] + v_new[i];
    }
    v_it->second = Tensor(p.dims(), std::move(v_new));
    p = Tensor(p.dims(), std::move(p_new), true);
  }
}

PreparedSample prepare_sample(const Sample& sample, const TrainConfig& config) {
  const Sample s = resize_sample(sample, config.network.height, config.network.width);
  PreparedSample p;
  p.id = s.id;
  p.image = image_tensor(s.image);
  p.mask = s.mask;
  p.weights = boundary_weight_map(s.mask, config.loss.omega0, config.loss.sigma, config.loss.weight_form);
  p.target = normalize(s.ellipse, s.image.height, s.image.width);
  return p;
}

SampleLoss compute_loss(Tape& tape, const ModelParams& params, const TrainConfig& config,
                        const PreparedSample& sample) {
  const bool multi = config.mode == TrainMode::kMultiTask;
  const MtlnOutput out = forward_mtln(tape, params, config.network, sample.image, ForwardOptions{multi});
  SampleLoss l;
  l.seg_logits = out.seg_logits;
  l.segmentation = segmentation_loss(tape, out.seg_logits, sample.mask, sample.weights, config.loss);
  if (multi) {
    l.ellipse = ellipse_param_mse(tape, out.ellipse_pred, sample.target);
    l.total = total_loss(tape, l.segmentation, l.ellipse, config.loss);
  } else {
    l.total = ops::scale(tape, l.segmentation, static_cast<float>(config.loss.alpha_seg));
  }
  return l;
}

void write_loss_log(std::ostream& os, const std::vector<EpochLog>& log) {
  os << kLossLogHeader << '\n';
  for (const auto& row : log) {
    os << row.epoch << ',' << format_double(row.train_loss) << ',' << format_double(row.val_loss) << ','
       << format_double(row.val_dsc) << '\n';
  }
}

TrainResult train(const TrainConfig& config, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw InvalidArgument("train: empty training set");

  std::vector<PreparedSample> train_data;
  std::vector<PreparedSample> val_data;
  train_data.reserve(train_set.size());
  for (const auto& s : train_set) train_data.push_back(prepare_sample(s, config));
  for (const auto& s : val_set) val_data.push_back(prepare_sample(s, config));

  NetworkConfig net = config.network;
  ModelParams params = build_mtln(net);
  ModelParams velocity = zeros_like(params);

  TrainResult result;
  auto snapshot = [&](int epoch) { return Checkpoint{config, epoch, params, velocity}; };

  const SetScore initial_train = score_set(params, config, train_data);
  const SetScore initial_val = score_set(params, config, val_data);
  result.log.push_back({0, initial_train.loss, initial_val.loss, initial_val.dsc});
  if (on_epoch) on_epoch(result.log.back());
  double best_score = val_data.empty() ? initial_train.loss : initial_val.loss;
  result.best = snapshot(0);

  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::uint64_t shuffle_seed = derive_seed(config.seed, "shuffle");
  const float inv_batch = 1.0f / static_cast<float>(config.batch_size);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng rng(derive_seed(shuffle_seed, static_cast<std::uint64_t>(epoch)));
    shuffle_in_place(order, rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const float factor = stop - start == static_cast<std::size_t>(config.batch_size)
                               ? inv_batch
                               : 1.0f / static_cast<float>(stop - start);
      for (std::size_t k = start; k < stop; ++k) {
        const PreparedSample& sample = train_data[order[k]];
        try {
          Tape tape;
          const SampleLoss l = compute_loss(tape, params, config, sample);
          const double value = l.total.item();
          if (!std::isfinite(value)) throw TrainingDiverged(sample.id, "loss is not finite");
          tape.backward(l.total);
          loss_sum += value;
        } catch (const TrainingDiverged&) {
          throw;
        } catch (const NumericError& e) {
          throw TrainingDiverged(sample.id, e.what());
        }
      }
      const ModelParams grads = collect_gradients(params, factor);
      for (const auto& [name, g] : grads) {
        if (!all_finite(g.values())) {
          throw TrainingDiverged(train_data[order[stop - 1]].id, "gradient of '" + name + "' is not finite");
        }
      }
      sgd_momentum_step(params, grads, velocity, config.learning_rate, config.momentum);
    }

    const SetScore val = score_set(params, config, val_data);
    const double train_loss = loss_sum / static_cast<double>(train_data.size());
    result.log.push_back({epoch, train_loss, val.loss, val.dsc});
    if (on_epoch) on_epoch(result.log.back());
    const double score = val_data.empty() ? train_loss : val.loss;
    if (score < best_score) {
      best_score = score;
      result.best = snapshot(epoch);
    }
  }
  result.last = snapshot(config.epochs);
  return result;
}

Prediction predict(const ModelParams& params, const TrainConfig& config, const Sample& sample) {
  const int h = config.network.height;
  const int w = config.network.width;
  const Image input = resize_bilinear(sample.image, h, w);
  const bool multi = config.mode == TrainMode::kMultiTask;
  Tape tape(false);
  const MtlnOutput out = forward_mtln(tape, params, config.network, image_tensor(input), ForwardOptions{multi});

  Prediction pred;
  pred.probs = resize_bilinear(probabilities(out.seg_logits), sample.image.height, sample.image.width);
  if (multi) {
    std::array<float, 5> v{};
    std::copy_n(out.ellipse_pred.values().begin(), 5, v.begin());
    pred.normalized = v;
    EllipseParams e = denormalize(v, h, w);
    if (sample.image.height != h || sample.image.width != w) {
      const double sx = w > 1 ? static_cast<double>(sample.image.width - 1) / (w - 1) : 1.0;
      const double sy = h > 1 ? static_cast<double>(sample.image.height - 1) / (h - 1) : 1.0;
      e = transform_ellipse(e, {sx, 0.0, 0.0, sy}, {0.0, 0.0}, {0.0, 0.0});
    }
    pred.ellipse = e;
  }
  return pred;
}

EvaluationResult evaluate_model(const Checkpoint& checkpoint, const std::vector<Sample>& samples) {
  if (samples.empty()) throw InvalidArgument("evaluate_model: no samples to evaluate");
  const TrainConfig& config = checkpoint.config;
  EvaluationResult result;
  double mse_sum = 0.0;
  for (const auto& sample : samples) {
    const Prediction pred = predict(checkpoint.params, config, sample);
    result.reports.push_back(
        evaluate_case(sample.id, pred.probs, sample.mask, sample.ellipse, sample.pixel_size_mm));
    EllipseEvaluation row;
    row.case_id = sample.id;
    if (pred.ellipse) {
      row.present = true;
      row.ellipse = *pred.ellipse;
      const Sample sized = resize_sample(sample, config.network.height, config.network.width);
      const auto target = normalize(sized.ellipse, config.network.height, config.network.width);
      double se = 0.0;
      for (int i = 0; i < 5; ++i) {
        const double d = static_cast<double>((*pred.normalized)[i]) - target[i];
        se += d * d;
      }
      row.normalized_mse = se / 5.0;
      mse_sum += row.normalized_mse;
    }
    result.ellipses.push_back(row);
  }
  result.summary = summarize(result.reports);
  if (config.mode == TrainMode::kMultiTask && !samples.empty()) {
    result.mean_ellipse_mse = mse_sum / static_cast<double>(samples.size());
  }
  return result;
}

void write_ellipse_csv(std::ostream& os, const std::vector<EllipseEvaluation>& rows) {
  os << kEllipseCsvHeader << '\n';
  for (const auto& r : rows) {
    os << r.case_id << ',' << (r.present ? "present" : "absent");
    if (r.present) {
      os << ',' << format_double(r.ellipse.cx) << ',' << format_double(r.ellipse.cy) << ','
         << format_double(r.ellipse.a) << ',' << format_double(r.ellipse.b) << ','
         << format_double(r.ellipse.theta) << ',' << format_double(r.normalized_mse);
    } else {
      os << ",,,,,,";
    }
    os << '\n';
  }
}

}  // namespace mtln
