#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mate/dataset_io.hpp"
#include "mate/model.hpp"

namespace mate::ttt {

struct TTTConfig {
  enum class Mode { Standard, Online, SourceOnly };

  Mode mode = Mode::Online;
  double mask_ratio = 0.9;
  int replica_batch = 48;
  int grad_steps = 1;  // 20 for standard, 1 for online
  int stride = 1;
  double lr = 5e-5;
  double weight_decay = 0.05;
  std::uint64_t seed = 0;
  // record a prediction after every gradient step (loss/accuracy diagnostics)
  bool record_step_predictions = false;
  int threads = 1;  // standard mode may adapt samples concurrently

  static TTTConfig standard() {
    TTTConfig c;
    c.mode = Mode::Standard;
    c.grad_steps = 20;
    return c;
  }
  static TTTConfig online() { return TTTConfig{}; }
  static TTTConfig source_only() {
    TTTConfig c;
    c.mode = Mode::SourceOnly;
    c.grad_steps = 0;
    return c;
  }

  void validate() const;
};

struct SampleRecord {
  int index = 0;
  std::string corruption;
  int label = -1;
  int predicted = -1;
  bool adapted = false;
  bool fallback = false;  // non-finite loss; predicted with un-adapted weights
  std::vector<double> step_losses;
  std::vector<int> step_predictions;
  double millis = 0.0;
};

struct RunReport {
  std::vector<SampleRecord> records;
  double total_millis = 0.0;
  int grad_steps = 0;

  double accuracy() const;
  // macro average: mean of the per-corruption accuracies
  double mean_corruption_accuracy() const;
  std::map<std::string, double> per_corruption_accuracy() const;
  double fps() const;
  int adapted_count() const;

  // one row per sample: idx, corruption, label, pred, adapted, fallback,
  // loss_step_1..k, ms
  void write_csv(const std::string& path) const;
  void write_summary_json(const std::string& path) const;
};

struct Stream {
  std::vector<geom::PointCloud> clouds;
  std::vector<int> labels;
  std::vector<std::string> corruptions;

  static Stream from_dataset(const data::LoadedDataset& d);
  std::size_t size() const { return clouds.size(); }
};

// Per-sample seed is content-derived (hash of the raw point bytes mixed
// with the run seed) so standard-mode results are invariant under stream
// permutation.
std::uint64_t sample_seed(const geom::PointCloud& cloud, std::uint64_t run_seed);

// The replica mask bitmaps used by step `step_index` of one sample.
std::vector<std::vector<bool>> replica_masks(std::uint64_t sample_seed, int step_index,
                                             int replicas, int group_count,
                                             double mask_ratio);

// One adaptation step: replica_batch independently masked replicas, mean
// per-token Chamfer loss, one optimizer step on encoder/decoder/prediction
// head. The classifier is never touched. Throws NonFiniteLoss when the
// loss leaves the reals.
double ttt_step(const geom::TokenizedCloud& tok, net::ModelParams& params,
                const TTTConfig& cfg, std::uint64_t sample_seed, int step_index);

// Adapt each sample independently from the restored checkpoint with
// grad_steps fresh-mask steps, then predict at mask ratio zero.
RunReport run_standard(const Stream& stream, const net::ModelParams& checkpoint,
                       const TTTConfig& cfg);

// Single pass, updates accumulate; samples with index % stride == 0 get one
// adaptation step, every sample is evaluated with the current weights.
RunReport run_online(const Stream& stream, const net::ModelParams& checkpoint,
                     const TTTConfig& cfg);

// Frozen-checkpoint evaluation.
RunReport run_source_only(const Stream& stream, const net::ModelParams& checkpoint);

}  // namespace mate::ttt
