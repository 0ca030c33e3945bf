#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mate/geometry.hpp"
#include "mate/tape.hpp"

namespace mate::net {

struct ModelConfig {
  int embed_dim = 64;
  int encoder_depth = 3;
  int decoder_depth = 1;
  int num_heads = 4;
  double mlp_ratio = 2.0;
  int num_classes = 8;
  // 32 tokens leave three visible at the default 0.9 mask ratio, matching
  // the ~10%-visible training regime the method expects
  int group_count = 32;
  int group_size = 16;
  double dropout_rate = 0.1;

  static ModelConfig desk_default() { return ModelConfig{}; }
  static ModelConfig paper_scale() {
    ModelConfig c;
    c.encoder_depth = 12;
    c.decoder_depth = 4;
    return c;
  }

  int mlp_hidden() const { return static_cast<int>(embed_dim * mlp_ratio); }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// The four parameter groups of the network. The classifier is frozen during
// test-time training; the other three adapt.
enum class ParamGroup { Encoder, Decoder, PredictionHead, Classifier };
const char* param_group_name(ParamGroup g);
ParamGroup parse_param_group(const std::string& name);

struct TensorEntry {
  std::string name;
  ParamGroup group;
  bool buffer = false;  // running statistics: serialized but never optimized
  Mat value;
};

// All learnable state plus AdamW moments. Tensor order is fixed by init()
// and is the serialization order.
struct ModelParams {
  ModelConfig config;
  std::vector<TensorEntry> tensors;
  std::vector<Mat> opt_m;  // aligned with tensors; empty for buffers
  std::vector<Mat> opt_v;
  std::int64_t opt_step = 0;

  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

  int index_of(const std::string& name) const;
  TensorEntry& tensor(const std::string& name);
  const TensorEntry& tensor(const std::string& name) const;

  // number of optimizable scalars (buffers excluded)
  std::size_t parameter_count() const;

  // bit-exact comparison of one group (buffers included)
  bool group_identical(const ModelParams& other, ParamGroup g) const;
};

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

// Gradients aligned with ModelParams::tensors; an empty matrix means no
// gradient reached that tensor (treated as zero).
struct GradStore {
  std::vector<Mat> grads;
};

using GroupFilter = std::function<bool(ParamGroup)>;

// Decoupled-weight-decay adaptive-moment update on the selected groups.
// Exactly one step-counter increment per call.
void adamw_step(ModelParams& params, const GradStore& grads, const AdamWConfig& cfg,
                const GroupFilter& update_group);

inline GroupFilter all_groups() {
  return [](ParamGroup) { return true; };
}
inline GroupFilter adaptation_groups() {  // classifier stays frozen
  return [](ParamGroup g) { return g != ParamGroup::Classifier; };
}

// Builds forward graphs for one model on one tape. Parameter tensors are
// mirrored onto the tape lazily, so a graph that never touches the
// classifier never copies it.
class ModelForward {
 public:
  ModelForward(Tape& tape, ModelParams& params, bool train, Rng* dropout_rng);

  // One row per token over the whole batch, permutation-invariant within
  // each patch: shared two-stage point MLP with max-pooling.
  Var embed_tokens(const std::vector<const geom::TokenizedCloud*>& batch);
  // Positional embedding (two-layer MLP) of raw 3D centers, one per row.
  Var position_embedding(const Mat& centers);
  // Pre-norm attention+MLP encoder blocks; identity when encoder_depth == 0.
  Var encode(Var tokens, int block_size);
  Var encoder_norm(Var latents);
  // Decoder blocks over the concatenated sequence plus final norm.
  Var decode(Var tokens, int block_size);
  // Linear reconstruction head: one row of k*3 coordinates per token.
  Var predict_points(Var latents);
  // The shared learned mask token (1 x d).
  Var mask_token();
  // concat(max-pool, mean-pool) over each block of latents, then the
  // three-layer head. Returns one logits row per block.
  Var classify(Var latents, int block_size);

  GradStore collect_gradients() const;

  Tape& tape() { return *tape_; }
  const ModelConfig& config() const;

 private:
  Var leaf(const std::string& name);
  Var transformer_block(Var x, const std::string& prefix, int block_size);

  Tape* tape_;
  ModelParams* params_;
  bool train_;
  Rng* dropout_rng_;
  std::vector<int> leaf_ids_;
};

// Shared graph assembly for training, evaluation and test-time training.
struct BatchGraph {
  Var visible_latents;  // (B*v) x d after encoder norm
  Var logits;           // B x num_classes, only when with_classifier
  Var recon_loss;       // scalar, only when with_reconstruction
  int visible_per_block = 0;
  int masked_per_block = 0;
};

// Every cloud in the batch must share group_count, group_size and masked
// count. Classification reads the visible latents; reconstruction decodes
// mask tokens at masked centers and scores per-token Chamfer against the
// ground-truth patches.
BatchGraph build_batch_graph(ModelForward& fb,
                             const std::vector<const geom::TokenizedCloud*>& batch,
                             bool with_classifier, bool with_reconstruction);

// Reconstruction graph for `masks.size()` replicas of one tokenized cloud,
// each replica with its own mask. Token embeddings are computed once and
// shared across replicas.
Var build_replica_recon_loss(ModelForward& fb, const geom::TokenizedCloud& tok,
                             const std::vector<std::vector<bool>>& masks);

struct EvalOutput {
  int predicted = -1;
  Eigen::RowVectorXd logits;
};

// Deterministic evaluation with every token visible (mask ratio 0),
// dropout off, normalization on running statistics.
EvalOutput evaluate_tokenized(const geom::TokenizedCloud& tok, ModelParams& params);
EvalOutput evaluate_cloud(const geom::PointCloud& cloud, ModelParams& params);

// --- serialization (serialize.cpp) ---
// In-memory snapshot: float64, bit-exact round trip, optimizer state
// included. Checkpoint files use the same container with float32 tensors.
std::vector<std::uint8_t> snapshot(const ModelParams& params);
ModelParams restore(const std::vector<std::uint8_t>& blob);
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

}  // namespace mate::net
