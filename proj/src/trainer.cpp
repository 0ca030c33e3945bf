#include "mate/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace mate::train {

using geom::PointCloud;
using geom::TokenizedCloud;
using geom::Vec3;
using net::ModelParams;

void JointConfig::validate() const {
  if (lambda < 0.0) {
    throw Error(ErrorCode::InvalidConfig, "joint config: lambda must be >= 0");
  }
  if (mask_ratio < 0.0 || mask_ratio >= 1.0) {
    throw Error(ErrorCode::MaskRatioOutOfRange, "joint config: mask ratio in [0, 1)");
  }
  if (epochs < 0 || batch_size < 1 || lr <= 0.0) {
    throw Error(ErrorCode::InvalidConfig, "joint config: bad epochs/batch/lr");
  }
}

PointCloud augment_scale_translate(const PointCloud& cloud, double scale,
                                   const Vec3& translation) {
  PointCloud out;
  out.points.reserve(cloud.points.size());
  for (const auto& p : cloud.points) out.points.push_back(p * scale + translation);
  return out;
}

PointCloud augment_scale_translate(const PointCloud& cloud, Rng& rng) {
  const double scale = rng.uniform(0.8, 1.2);
  const Vec3 translation(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1),
                         rng.uniform(-0.1, 0.1));
  return augment_scale_translate(cloud, scale, translation);
}

namespace {

int argmax_row(const Eigen::RowVectorXd& row) {
  int best = 0;
  for (int c = 1; c < row.cols(); ++c) {
    if (row(c) > row(best)) best = c;
  }
  return best;
}

}  // namespace

LossBreakdown joint_loss(const std::vector<const PointCloud*>& batch,
                         const std::vector<int>& labels, ModelParams& params,
                         const JointConfig& cfg, Rng& rng) {
  cfg.validate();
  if (batch.empty() || batch.size() != labels.size()) {
    throw Error(ErrorCode::ShapeMismatch, "joint_loss: batch/label size mismatch");
  }
  const auto& mc = params.config;
  const double mask_ratio = cfg.effective_mask_ratio();
  const bool with_recon = cfg.mode == JointConfig::Mode::Joint;

  // augment, tokenize (random sampling start) and mask each sample
  std::vector<TokenizedCloud> toks;
  toks.reserve(batch.size());
  for (const auto* cloud : batch) {
    PointCloud prepared = *cloud;
    if (cfg.augment_scale || cfg.augment_translate) {
      const double scale = cfg.augment_scale ? rng.uniform(0.8, 1.2) : 1.0;
      Vec3 tr = Vec3::Zero();
      if (cfg.augment_translate) {
        tr = Vec3(rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1));
      }
      prepared = augment_scale_translate(prepared, scale, tr);
    }
    const int start = static_cast<int>(rng.index(prepared.points.size()));
    auto tok = geom::tokenize(prepared, mc.group_count, mc.group_size, start);
    if (mask_ratio > 0.0) {
      tok.mask = geom::random_token_mask(mc.group_count, mask_ratio, rng);
      tok.mask_ratio = mask_ratio;
    }
    toks.push_back(std::move(tok));
  }
  std::vector<const TokenizedCloud*> tok_ptrs;
  for (const auto& t : toks) tok_ptrs.push_back(&t);

  net::Tape tape;
  net::ModelForward fb(tape, params, true, &rng);
  const net::BatchGraph graph = build_batch_graph(fb, tok_ptrs, true, with_recon);
  const net::Var ce = cross_entropy_mean(tape, graph.logits, labels);
  const net::Var loss =
      with_recon ? add_scaled(tape, ce, graph.recon_loss, cfg.lambda) : ce;
  tape.backward(loss);

  LossBreakdown out;
  out.total = tape.scalar(loss);
  out.ce = tape.scalar(ce);
  out.recon = with_recon ? tape.scalar(graph.recon_loss) : 0.0;
  out.grads = fb.collect_gradients();
  const net::Mat& logits = tape.value(graph.logits);
  for (int r = 0; r < logits.rows(); ++r) {
    if (argmax_row(logits.row(r)) == labels[r]) ++out.correct;
  }
  return out;
}

LossBreakdown joint_loss(const PointCloud& cloud, int label, ModelParams& params,
                         const JointConfig& cfg, Rng& rng) {
  return joint_loss({&cloud}, {label}, params, cfg, rng);
}

TrainResult train_joint(const Dataset& train_split, const Dataset& val_split,
                        const JointConfig& cfg, const net::ModelConfig& model_cfg) {
  cfg.validate();
  model_cfg.validate();
  if (train_split.clouds.empty()) {
    throw Error(ErrorCode::InvalidConfig, "train_joint: empty train split");
  }

  TrainResult result;
  result.params = ModelParams::init(model_cfg, mix_seed(cfg.seed, 0x696e6974));
  Rng root(cfg.seed);

  net::AdamWConfig opt;
  opt.weight_decay = cfg.weight_decay;
  const net::GroupFilter groups =
      cfg.mode == JointConfig::Mode::Joint
          ? net::all_groups()
          : net::GroupFilter([](net::ParamGroup g) {
              return g == net::ParamGroup::Encoder || g == net::ParamGroup::Classifier;
            });

  const int n = static_cast<int>(train_split.clouds.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  double best_window = std::numeric_limits<double>::infinity();
  std::vector<double> window;  // last 10 epoch losses

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double progress = cfg.epochs > 1 ? static_cast<double>(epoch) / (cfg.epochs - 1)
                                           : 0.0;
    opt.lr = cfg.lr_min + 0.5 * (cfg.lr - cfg.lr_min) * (1.0 + std::cos(M_PI * progress));

    Rng shuffle_rng = root.derive(mix_seed(0x73687566, epoch));
    shuffle_rng.shuffle(order);
    Rng sample_rng = root.derive(mix_seed(0x65706f63, epoch));

    double ce_sum = 0, recon_sum = 0, total_sum = 0;
    int correct = 0, batches = 0;
    for (int begin = 0; begin < n; begin += cfg.batch_size) {
      const int end = std::min(n, begin + cfg.batch_size);
      std::vector<const PointCloud*> batch;
      std::vector<int> labels;
      for (int i = begin; i < end; ++i) {
        batch.push_back(&train_split.clouds[order[i]]);
        labels.push_back(train_split.labels[order[i]]);
      }
      const LossBreakdown loss =
          joint_loss(batch, labels, result.params, cfg, sample_rng);
      if (!std::isfinite(loss.total)) {
        throw Error(ErrorCode::DivergenceDetected,
                    "train_joint: non-finite loss at epoch " + std::to_string(epoch));
      }
      adamw_step(result.params, loss.grads, opt, groups);
      ce_sum += loss.ce;
      recon_sum += loss.recon;
      total_sum += loss.total;
      correct += loss.correct;
      ++batches;
    }

    EpochLog log;
    log.epoch = epoch;
    log.ce_loss = ce_sum / batches;
    log.recon_loss = recon_sum / batches;
    log.total_loss = total_sum / batches;
    log.train_acc = static_cast<double>(correct) / n;
    log.lr = opt.lr;
    if (!val_split.clouds.empty()) {
      log.val_acc = evaluate_clean(val_split, result.params).accuracy;
    }
    result.log.push_back(log);

    // trend gate: the 10-epoch smoothed loss must not backslide. The 5%
    // relative allowance absorbs plateau noise and the absolute floor keeps
    // near-zero plateaus from tripping on meaningless wobble; sustained
    // upward drift still fails the run.
    window.push_back(log.total_loss);
    if (window.size() > 10) window.erase(window.begin());
    if (cfg.check_loss_trend && window.size() == 10) {
      const double smoothed =
          std::accumulate(window.begin(), window.end(), 0.0) / window.size();
      if (epoch >= 10 && smoothed > best_window * 1.05 + 0.02) {
        throw Error(ErrorCode::DivergenceDetected,
                    "train_joint: smoothed loss increased at epoch " +
                        std::to_string(epoch));
      }
      best_window = std::min(best_window, smoothed);
    }
  }
  return result;
}

EvalResult evaluate_clean(const Dataset& data, ModelParams& params) {
  if (data.clouds.empty()) {
    throw Error(ErrorCode::InvalidConfig, "evaluate_clean: empty split");
  }
  const int classes = std::max(data.num_classes, params.config.num_classes);
  EvalResult out;
  out.confusion = Eigen::MatrixXi::Zero(classes, classes);

  int correct = 0;
  for (std::size_t i = 0; i < data.clouds.size(); ++i) {
    const auto eval = net::evaluate_cloud(data.clouds[i], params);
    out.confusion(data.labels[i], eval.predicted) += 1;
    if (eval.predicted == data.labels[i]) ++correct;
  }
  out.accuracy = static_cast<double>(correct) / data.clouds.size();
  return out;
}

void write_training_log_csv(const std::string& path, const std::vector<EpochLog>& log) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorCode::IOFailure, "cannot open for write: " + path);
  f << "epoch,ce_loss,recon_loss,total_loss,train_acc,val_acc,lr\n";
  for (const auto& row : log) {
    f << row.epoch << ',' << row.ce_loss << ',' << row.recon_loss << ','
      << row.total_loss << ',' << row.train_acc << ',' << row.val_acc << ',' << row.lr
      << "\n";
  }
  if (!f) throw Error(ErrorCode::IOFailure, "write failed: " + path);
}

}  // namespace mate::train
