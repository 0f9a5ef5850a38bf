#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mtln/data.hpp"
#include "mtln/loss.hpp"
#include "mtln/metrics.hpp"
#include "mtln/nn.hpp"

namespace mtln {

enum class TrainMode {
  kMultiTask,   // segmentation + ellipse head, L_T = a1 L_seg + a2 L_ET
  kSingleTask,  // segmentation only; the ellipse head is neither run nor updated
};

struct TrainConfig {
  double learning_rate = 0.001;
  double momentum = 0.9;
  int epochs = 200;
  int batch_size = 1;
  std::uint64_t seed = 0;
  LossConfig loss;
  NetworkConfig network;
  TrainMode mode = TrainMode::kMultiTask;

  void validate() const;
};

struct Checkpoint {
  TrainConfig config;
  int epoch = 0;
  ModelParams params;
  ModelParams velocity;  // same names as params
};

/// v <- mu v - lr g;  p <- p + v, elementwise per tensor. Name sets must match.
/// Updated parameters are fresh tracked leaves.
void sgd_momentum_step(ModelParams& params, const ModelParams& grads, ModelParams& velocity, double learning_rate,
                       double momentum);

/// Zero tensors shaped like params (untracked).
ModelParams zeros_like(const ModelParams& params);

/// Accumulated gradients of every parameter times `factor` (zeros where none).
ModelParams collect_gradients(const ModelParams& params, float factor = 1.0f);

/// Per-sample inputs precomputed once: network-sized image tensor, mask,
/// boundary weights and normalized ellipse target.
struct PreparedSample {
  std::string id;
  Tensor image;
  BinaryMask mask;
  WeightMap weights;
  std::array<float, 5> target{};
};

PreparedSample prepare_sample(const Sample& sample, const TrainConfig& config);

struct SampleLoss {
  Tensor total;
  Tensor segmentation;
  Tensor ellipse;  // undefined in single-task mode
  Tensor seg_logits;
};

/// Forward pass and loss for one sample, recorded on `tape`.
SampleLoss compute_loss(Tape& tape, const ModelParams& params, const TrainConfig& config,
                        const PreparedSample& sample);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN when there is no validation split
  double val_dsc = 0.0;   // NaN when there is no validation split
};

inline constexpr const char* kLossLogHeader = "epoch,train_loss,val_loss,val_dsc";

void write_loss_log(std::ostream& os, const std::vector<EpochLog>& log);

struct TrainResult {
  Checkpoint best;  // lowest validation L_T (training L_T without a validation split)
  Checkpoint last;
  std::vector<EpochLog> log;
};

/// Raised when a loss or gradient becomes non-finite; names the sample.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& sample_id, const std::string& what)
      : NumericError("training diverged on sample '" + sample_id + "': " + what), sample_id_(sample_id) {}
  const std::string& sample_id() const { return sample_id_; }

 private:
  std::string sample_id_;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Row 0 of the log holds the losses of the initial parameters; row e >= 1
/// holds the mean training loss seen during epoch e and the validation
/// figures after it.
TrainResult train(const TrainConfig& config, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const EpochCallback& on_epoch = {});

/// Network output for one sample at its native resolution.
struct Prediction {
  Grid<float> probs;
  std::optional<EllipseParams> ellipse;          // pixel units of the native image
  std::optional<std::array<float, 5>> normalized;  // raw head output
};

Prediction predict(const ModelParams& params, const TrainConfig& config, const Sample& sample);

struct EllipseEvaluation {
  std::string case_id;
  bool present = false;
  EllipseParams ellipse;
  double normalized_mse = 0.0;
};

struct EvaluationResult {
  std::vector<MetricsReport> reports;
  std::vector<EllipseEvaluation> ellipses;
  SummaryReport summary;
  /// Mean normalized ellipse MSE over all cases, when the head was trained.
  std::optional<double> mean_ellipse_mse;
};

/// Throws InvalidArgument for an empty sample set.
EvaluationResult evaluate_model(const Checkpoint& checkpoint, const std::vector<Sample>& samples);

inline constexpr const char* kEllipseCsvHeader = "case_id,head,cx,cy,a,b,theta,normalized_mse";

void write_ellipse_csv(std::ostream& os, const std::vector<EllipseEvaluation>& rows);

/// Binary checkpoint: "MTLN", u32 version, u32-length JSON config, u32 tensor
/// count, then per tensor u16 name length, name, u8 rank, u32 dims, f32
/// payload; all little-endian. Velocity tensors follow the parameters under
/// names prefixed "vel/".
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
void write_checkpoint(std::ostream& os, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint read_checkpoint(std::istream& is);

}  // namespace mtln
