#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mate/dataset_io.hpp"
#include "mate/model.hpp"

namespace mate::train {

// In-memory labeled split; loaded from a manifest or built directly.
using Dataset = data::LoadedDataset;

struct JointConfig {
  enum class Mode { Joint, ClassificationOnly };

  Mode mode = Mode::Joint;
  double lambda = 1.0;  // task balance between classification and reconstruction
  int epochs = 60;
  double lr = 1e-3;
  double lr_min = 1e-6;
  double mask_ratio = 0.9;
  bool augment_scale = true;
  bool augment_translate = true;
  int batch_size = 32;
  double weight_decay = 0.05;
  std::uint64_t seed = 0;
  // smoothed-loss trend gate; a run that backslides after epoch 10 fails
  bool check_loss_trend = true;

  void validate() const;
  // classification-only training sees every token
  double effective_mask_ratio() const {
    return mode == Mode::ClassificationOnly ? 0.0 : mask_ratio;
  }
};

// Similarity transform: uniform scale then per-axis translation.
geom::PointCloud augment_scale_translate(const geom::PointCloud& cloud, double scale,
                                         const geom::Vec3& translation);
// Draws scale from [0.8, 1.2] and translation from [-0.1, 0.1]^3.
geom::PointCloud augment_scale_translate(const geom::PointCloud& cloud, Rng& rng);

struct LossBreakdown {
  double total = 0.0;
  double ce = 0.0;
  double recon = 0.0;
  int correct = 0;  // argmax hits on the training-mode logits
  net::GradStore grads;
};

// Mean-reduced joint objective over a batch: cross entropy on the visible
// latents plus lambda times the per-token Chamfer reconstruction. Gradients
// cover all four parameter groups in joint mode.
LossBreakdown joint_loss(const std::vector<const geom::PointCloud*>& batch,
                         const std::vector<int>& labels, net::ModelParams& params,
                         const JointConfig& cfg, Rng& rng);
LossBreakdown joint_loss(const geom::PointCloud& cloud, int label,
                         net::ModelParams& params, const JointConfig& cfg, Rng& rng);

struct EpochLog {
  int epoch = 0;
  double ce_loss = 0, recon_loss = 0, total_loss = 0;
  double train_acc = 0, val_acc = 0, lr = 0;
};

struct TrainResult {
  net::ModelParams params;
  std::vector<EpochLog> log;
};

// Shuffled mini-batch optimization with a cosine learning-rate schedule,
// deterministic under cfg.seed.
TrainResult train_joint(const Dataset& train_split, const Dataset& val_split,
                        const JointConfig& cfg, const net::ModelConfig& model_cfg);

struct EvalResult {
  double accuracy = 0.0;
  Eigen::MatrixXi confusion;  // row: true label, column: prediction
};

// Deterministic evaluation with every token visible.
EvalResult evaluate_clean(const Dataset& data, net::ModelParams& params);

// CSV columns: epoch, ce_loss, recon_loss, total_loss, train_acc, val_acc, lr
void write_training_log_csv(const std::string& path, const std::vector<EpochLog>& log);

}  // namespace mate::train
