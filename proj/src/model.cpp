#include "mate/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace mate::net {

using geom::TokenizedCloud;
using geom::Vec3;

void ModelConfig::validate() const {
  if (encoder_depth <= decoder_depth || decoder_depth <= 0) {
    throw Error(ErrorCode::InvalidConfig,
                "model config: need encoder_depth > decoder_depth > 0");
  }
  if (embed_dim % num_heads != 0) {
    throw Error(ErrorCode::InvalidConfig,
                "model config: embed_dim must be divisible by num_heads");
  }
  if (embed_dim < 2 || num_classes < 2 || group_count < 1 || group_size < 1) {
    throw Error(ErrorCode::InvalidConfig, "model config: degenerate sizes");
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw Error(ErrorCode::InvalidConfig, "model config: dropout out of range");
  }
}

const char* param_group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::Encoder: return "encoder";
    case ParamGroup::Decoder: return "decoder";
    case ParamGroup::PredictionHead: return "prediction_head";
    case ParamGroup::Classifier: return "classifier";
  }
  return "unknown";
}

ParamGroup parse_param_group(const std::string& name) {
  for (const ParamGroup g : {ParamGroup::Encoder, ParamGroup::Decoder,
                             ParamGroup::PredictionHead, ParamGroup::Classifier}) {
    if (name == param_group_name(g)) return g;
  }
  throw Error(ErrorCode::CorruptBlob, "unknown parameter group: " + name);
}

namespace {

// truncated normal, sigma 0.02, resampled beyond two sigma
double trunc_normal(Rng& rng) {
  while (true) {
    const double x = rng.normal(0.0, 0.02);
    if (std::abs(x) <= 0.04) return x;
  }
}

Mat init_weight(Rng& rng, int rows, int cols) {
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = trunc_normal(rng);
  }
  return m;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams p;
  p.config = config;
  Rng rng(mix_seed(seed, 0x7061726d));  // "parm"

  const int d = config.embed_dim;
  const int h = std::max(d / 2, 4);
  const int m = config.mlp_hidden();
  const int k3 = 3 * config.group_size;

  auto weight = [&](const std::string& name, ParamGroup g, int r, int c) {
    p.tensors.push_back({name, g, false, init_weight(rng, r, c)});
  };
  auto zeros = [&](const std::string& name, ParamGroup g, int c) {
    p.tensors.push_back({name, g, false, Mat::Zero(1, c)});
  };
  auto ones = [&](const std::string& name, ParamGroup g, int c) {
    p.tensors.push_back({name, g, false, Mat::Ones(1, c)});
  };
  auto buffer = [&](const std::string& name, ParamGroup g, int c, double fill) {
    p.tensors.push_back({name, g, true, Mat::Constant(1, c, fill)});
  };
  auto transformer_block = [&](const std::string& prefix, ParamGroup g) {
    ones(prefix + ".ln1.g", g, d);
    zeros(prefix + ".ln1.b", g, d);
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      weight(prefix + ".attn." + w, g, d, d);
    }
    for (const char* b : {"bq", "bk", "bv", "bo"}) {
      zeros(prefix + ".attn." + b, g, d);
    }
    ones(prefix + ".ln2.g", g, d);
    zeros(prefix + ".ln2.b", g, d);
    weight(prefix + ".mlp.w0", g, d, m);
    zeros(prefix + ".mlp.b0", g, m);
    weight(prefix + ".mlp.w1", g, m, d);
    zeros(prefix + ".mlp.b1", g, d);
  };

  // token embedder: two-stage point MLP
  weight("embed.s1.w0", ParamGroup::Encoder, 3, h);
  zeros("embed.s1.b0", ParamGroup::Encoder, h);
  weight("embed.s1.w1", ParamGroup::Encoder, h, h);
  zeros("embed.s1.b1", ParamGroup::Encoder, h);
  weight("embed.s2.w0", ParamGroup::Encoder, 2 * h, d);
  zeros("embed.s2.b0", ParamGroup::Encoder, d);
  weight("embed.s2.w1", ParamGroup::Encoder, d, d);
  zeros("embed.s2.b1", ParamGroup::Encoder, d);

  // positional embedding (shared by encoder and decoder)
  weight("pos.w0", ParamGroup::Encoder, 3, d);
  zeros("pos.b0", ParamGroup::Encoder, d);
  weight("pos.w1", ParamGroup::Encoder, d, d);
  zeros("pos.b1", ParamGroup::Encoder, d);

  for (int i = 0; i < config.encoder_depth; ++i) {
    transformer_block("enc.blk" + std::to_string(i), ParamGroup::Encoder);
  }
  ones("enc.norm.g", ParamGroup::Encoder, d);
  zeros("enc.norm.b", ParamGroup::Encoder, d);

  p.tensors.push_back(
      {"dec.mask_token", ParamGroup::Decoder, false, init_weight(rng, 1, d)});
  for (int i = 0; i < config.decoder_depth; ++i) {
    transformer_block("dec.blk" + std::to_string(i), ParamGroup::Decoder);
  }
  ones("dec.norm.g", ParamGroup::Decoder, d);
  zeros("dec.norm.b", ParamGroup::Decoder, d);

  weight("pred.w", ParamGroup::PredictionHead, d, k3);
  zeros("pred.b", ParamGroup::PredictionHead, k3);

  // three-layer classifier on concat(max, mean) pooling
  weight("cls.w0", ParamGroup::Classifier, 2 * d, 2 * d);
  zeros("cls.b0", ParamGroup::Classifier, 2 * d);
  ones("cls.bn0.g", ParamGroup::Classifier, 2 * d);
  zeros("cls.bn0.b", ParamGroup::Classifier, 2 * d);
  buffer("cls.bn0.rm", ParamGroup::Classifier, 2 * d, 0.0);
  buffer("cls.bn0.rv", ParamGroup::Classifier, 2 * d, 1.0);
  weight("cls.w1", ParamGroup::Classifier, 2 * d, d);
  zeros("cls.b1", ParamGroup::Classifier, d);
  ones("cls.bn1.g", ParamGroup::Classifier, d);
  zeros("cls.bn1.b", ParamGroup::Classifier, d);
  buffer("cls.bn1.rm", ParamGroup::Classifier, d, 0.0);
  buffer("cls.bn1.rv", ParamGroup::Classifier, d, 1.0);
  weight("cls.w2", ParamGroup::Classifier, d, config.num_classes);
  zeros("cls.b2", ParamGroup::Classifier, config.num_classes);

  p.opt_m.resize(p.tensors.size());
  p.opt_v.resize(p.tensors.size());
  for (std::size_t i = 0; i < p.tensors.size(); ++i) {
    if (p.tensors[i].buffer) continue;
    p.opt_m[i] = Mat::Zero(p.tensors[i].value.rows(), p.tensors[i].value.cols());
    p.opt_v[i] = Mat::Zero(p.tensors[i].value.rows(), p.tensors[i].value.cols());
  }
  return p;
}

int ModelParams::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

TensorEntry& ModelParams::tensor(const std::string& name) {
  const int i = index_of(name);
  if (i < 0) throw Error(ErrorCode::StateMismatch, "unknown tensor: " + name);
  return tensors[i];
}

const TensorEntry& ModelParams::tensor(const std::string& name) const {
  const int i = index_of(name);
  if (i < 0) throw Error(ErrorCode::StateMismatch, "unknown tensor: " + name);
  return tensors[i];
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) {
    if (!t.buffer) n += static_cast<std::size_t>(t.value.size());
  }
  return n;
}

bool ModelParams::group_identical(const ModelParams& other, ParamGroup g) const {
  if (tensors.size() != other.tensors.size()) return false;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].group != g) continue;
    const Mat& a = tensors[i].value;
    const Mat& b = other.tensors[i].value;
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    if (std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) != 0) return false;
  }
  return true;
}

void adamw_step(ModelParams& params, const GradStore& grads, const AdamWConfig& cfg,
                const GroupFilter& update_group) {
  if (grads.grads.size() != params.tensors.size()) {
    throw Error(ErrorCode::StateMismatch,
                "adamw_step: gradient store does not match parameter layout");
  }
  params.opt_step += 1;
  const double t = static_cast<double>(params.opt_step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);

  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto& entry = params.tensors[i];
    if (entry.buffer || !update_group(entry.group)) continue;

    const Mat& g = grads.grads[i].size() != 0
                       ? grads.grads[i]
                       : Mat::Zero(entry.value.rows(), entry.value.cols()).eval();
    if (g.rows() != entry.value.rows() || g.cols() != entry.value.cols()) {
      throw Error(ErrorCode::StateMismatch,
                  "adamw_step: gradient shape mismatch for " + entry.name);
    }
    Mat& m = params.opt_m[i];
    Mat& v = params.opt_v[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const Mat m_hat = m / bc1;
    const Mat v_hat = v / bc2;
    entry.value -=
        cfg.lr * (m_hat.array() / (v_hat.array().sqrt() + cfg.eps)).matrix();
    entry.value -= cfg.lr * cfg.weight_decay * entry.value;
  }
}

// --- forward graphs ---

ModelForward::ModelForward(Tape& tape, ModelParams& params, bool train,
                           Rng* dropout_rng)
    : tape_(&tape),
      params_(&params),
      train_(train),
      dropout_rng_(dropout_rng),
      leaf_ids_(params.tensors.size(), -1) {}

const ModelConfig& ModelForward::config() const { return params_->config; }

Var ModelForward::leaf(const std::string& name) {
  const int i = params_->index_of(name);
  if (i < 0) throw Error(ErrorCode::StateMismatch, "unknown tensor: " + name);
  if (leaf_ids_[i] < 0) {
    leaf_ids_[i] = tape_->leaf(params_->tensors[i].value).id;
  }
  return Var{leaf_ids_[i]};
}

Var ModelForward::embed_tokens(const std::vector<const TokenizedCloud*>& batch) {
  if (batch.empty()) throw Error(ErrorCode::ShapeMismatch, "embed_tokens: empty batch");
  const int k = batch[0]->group_size();
  int total_tokens = 0;
  for (const auto* tok : batch) {
    if (tok->group_size() != k) {
      throw Error(ErrorCode::ShapeMismatch, "embed_tokens: group size differs in batch");
    }
    total_tokens += tok->group_count();
  }

  Mat pts(static_cast<long>(total_tokens) * k, 3);
  int row = 0;
  for (const auto* tok : batch) {
    for (const auto& patch : tok->patches) {
      for (const auto& p : patch) pts.row(row++) = p.transpose();
    }
  }

  Tape& t = *tape_;
  const Var input = t.constant(std::move(pts));
  Var s1 = linear(t, input, leaf("embed.s1.w0"), leaf("embed.s1.b0"));
  s1 = gelu(t, s1);
  s1 = linear(t, s1, leaf("embed.s1.w1"), leaf("embed.s1.b1"));

  const Var pooled = group_max_pool(t, s1, k);
  std::vector<int> expand(static_cast<std::size_t>(total_tokens) * k);
  for (int g = 0; g < total_tokens; ++g) {
    for (int j = 0; j < k; ++j) expand[static_cast<std::size_t>(g) * k + j] = g;
  }
  const Var global = gather_rows(t, pooled, expand);
  Var s2 = concat_cols(t, s1, global);
  s2 = linear(t, s2, leaf("embed.s2.w0"), leaf("embed.s2.b0"));
  s2 = gelu(t, s2);
  s2 = linear(t, s2, leaf("embed.s2.w1"), leaf("embed.s2.b1"));
  return group_max_pool(t, s2, k);
}

Var ModelForward::position_embedding(const Mat& centers) {
  Tape& t = *tape_;
  const Var input = t.constant(centers);
  Var x = linear(t, input, leaf("pos.w0"), leaf("pos.b0"));
  x = gelu(t, x);
  return linear(t, x, leaf("pos.w1"), leaf("pos.b1"));
}

Var ModelForward::transformer_block(Var x, const std::string& prefix, int block_size) {
  Tape& t = *tape_;
  const Var normed = layer_norm(t, x, leaf(prefix + ".ln1.g"), leaf(prefix + ".ln1.b"));
  const Var q = linear(t, normed, leaf(prefix + ".attn.wq"), leaf(prefix + ".attn.bq"));
  const Var k = linear(t, normed, leaf(prefix + ".attn.wk"), leaf(prefix + ".attn.bk"));
  const Var v = linear(t, normed, leaf(prefix + ".attn.wv"), leaf(prefix + ".attn.bv"));
  const Var att =
      block_self_attention(t, q, k, v, block_size, params_->config.num_heads);
  const Var proj = linear(t, att, leaf(prefix + ".attn.wo"), leaf(prefix + ".attn.bo"));
  x = add(t, x, proj);

  const Var normed2 = layer_norm(t, x, leaf(prefix + ".ln2.g"), leaf(prefix + ".ln2.b"));
  Var h = linear(t, normed2, leaf(prefix + ".mlp.w0"), leaf(prefix + ".mlp.b0"));
  h = gelu(t, h);
  h = linear(t, h, leaf(prefix + ".mlp.w1"), leaf(prefix + ".mlp.b1"));
  return add(t, x, h);
}

Var ModelForward::encode(Var tokens, int block_size) {
  if (tape_->value(tokens).rows() == 0) {
    throw Error(ErrorCode::EmptyVisibleSet, "encode: no visible tokens");
  }
  Var x = tokens;
  for (int i = 0; i < params_->config.encoder_depth; ++i) {
    x = transformer_block(x, "enc.blk" + std::to_string(i), block_size);
  }
  return x;
}

Var ModelForward::encoder_norm(Var latents) {
  return layer_norm(*tape_, latents, leaf("enc.norm.g"), leaf("enc.norm.b"));
}

Var ModelForward::decode(Var tokens, int block_size) {
  Var x = tokens;
  for (int i = 0; i < params_->config.decoder_depth; ++i) {
    x = transformer_block(x, "dec.blk" + std::to_string(i), block_size);
  }
  return layer_norm(*tape_, x, leaf("dec.norm.g"), leaf("dec.norm.b"));
}

Var ModelForward::predict_points(Var latents) {
  return linear(*tape_, latents, leaf("pred.w"), leaf("pred.b"));
}

Var ModelForward::mask_token() { return leaf("dec.mask_token"); }

Var ModelForward::classify(Var latents, int block_size) {
  Tape& t = *tape_;
  const Var maxp = group_max_pool(t, latents, block_size);
  const Var meanp = group_mean_pool(t, latents, block_size);
  Var x = concat_cols(t, maxp, meanp);

  const double rate = params_->config.dropout_rate;
  x = linear(t, x, leaf("cls.w0"), leaf("cls.b0"));
  x = batch_norm(t, x, leaf("cls.bn0.g"), leaf("cls.bn0.b"),
                 &params_->tensor("cls.bn0.rm").value,
                 &params_->tensor("cls.bn0.rv").value, train_);
  x = relu(t, x);
  x = dropout(t, x, rate, train_, dropout_rng_);
  x = linear(t, x, leaf("cls.w1"), leaf("cls.b1"));
  x = batch_norm(t, x, leaf("cls.bn1.g"), leaf("cls.bn1.b"),
                 &params_->tensor("cls.bn1.rm").value,
                 &params_->tensor("cls.bn1.rv").value, train_);
  x = relu(t, x);
  x = dropout(t, x, rate, train_, dropout_rng_);
  return linear(t, x, leaf("cls.w2"), leaf("cls.b2"));
}

GradStore ModelForward::collect_gradients() const {
  GradStore store;
  store.grads.resize(params_->tensors.size());
  for (std::size_t i = 0; i < leaf_ids_.size(); ++i) {
    if (leaf_ids_[i] < 0) continue;
    const Var v{leaf_ids_[i]};
    if (tape_->has_grad(v)) store.grads[i] = tape_->raw_grad(v);
  }
  return store;
}

namespace {

// Shared tail: encode visible tokens, optionally classify, optionally
// decode masked slots and score Chamfer. Token rows arrive grouped per
// block with uniform visible/masked counts.
struct AssemblyInput {
  Var token_embed;  // (blocks * tokens_per_block) x d
  Var pos_embed;    // same layout
  std::vector<int> visible_rows;           // blocks * v, block-major
  std::vector<int> masked_rows;            // blocks * m, block-major
  std::vector<std::vector<Vec3>> targets;  // per masked row, ground truth patch
  int blocks = 0;
  int visible_per_block = 0;
  int masked_per_block = 0;
};

BatchGraph run_assembly(ModelForward& fb, const AssemblyInput& in, bool with_classifier,
                        bool with_reconstruction) {
  Tape& t = fb.tape();
  BatchGraph out;
  out.visible_per_block = in.visible_per_block;
  out.masked_per_block = in.masked_per_block;

  const Var x = add(t, in.token_embed, in.pos_embed);
  const Var xv = gather_rows(t, x, in.visible_rows);
  Var lat = fb.encode(xv, in.visible_per_block);
  lat = fb.encoder_norm(lat);
  out.visible_latents = lat;

  if (with_classifier) {
    out.logits = fb.classify(lat, in.visible_per_block);
  }

  if (with_reconstruction) {
    if (in.masked_per_block == 0) {
      throw Error(ErrorCode::NoMaskedTokens, "reconstruction with no masked tokens");
    }
    const Var vis_pos = gather_rows(t, in.pos_embed, in.visible_rows);
    const Var vis_in = add(t, lat, vis_pos);

    const int total_masked = in.blocks * in.masked_per_block;
    const Var mask_token =
        gather_rows(t, fb.mask_token(), std::vector<int>(total_masked, 0));
    const Var masked_pos = gather_rows(t, in.pos_embed, in.masked_rows);
    const Var mask_in = add(t, mask_token, masked_pos);

    // stack [visible | masked] then permute into block order
    const Var stacked = concat_rows(t, vis_in, mask_in);
    const int v = in.visible_per_block;
    const int m = in.masked_per_block;
    const int g = v + m;
    std::vector<int> order(static_cast<std::size_t>(in.blocks) * g);
    for (int b = 0; b < in.blocks; ++b) {
      for (int i = 0; i < v; ++i) order[b * g + i] = b * v + i;
      for (int i = 0; i < m; ++i) order[b * g + v + i] = in.blocks * v + b * m + i;
    }
    const Var dec_in = gather_rows(t, stacked, order);
    const Var dec_out = fb.decode(dec_in, g);

    std::vector<int> masked_slots(static_cast<std::size_t>(in.blocks) * m);
    for (int b = 0; b < in.blocks; ++b) {
      for (int i = 0; i < m; ++i) masked_slots[b * m + i] = b * g + v + i;
    }
    const Var masked_lat = gather_rows(t, dec_out, masked_slots);
    const Var packed = fb.predict_points(masked_lat);
    const Var points = rows_to_points(t, packed, fb.config().group_size);
    out.recon_loss = chamfer_token_loss(t, points, in.targets);
  }
  return out;
}

}  // namespace

BatchGraph build_batch_graph(ModelForward& fb,
                             const std::vector<const TokenizedCloud*>& batch,
                             bool with_classifier, bool with_reconstruction) {
  if (batch.empty()) {
    throw Error(ErrorCode::ShapeMismatch, "build_batch_graph: empty batch");
  }
  const int g = batch[0]->group_count();
  const int masked = batch[0]->masked_count();
  for (const auto* tok : batch) {
    if (tok->group_count() != g || tok->masked_count() != masked) {
      throw Error(ErrorCode::ShapeMismatch,
                  "build_batch_graph: batch must share token and mask counts");
    }
  }

  AssemblyInput in;
  in.blocks = static_cast<int>(batch.size());
  in.visible_per_block = g - masked;
  in.masked_per_block = masked;

  Mat centers(static_cast<long>(in.blocks) * g, 3);
  for (int b = 0; b < in.blocks; ++b) {
    for (int i = 0; i < g; ++i) {
      centers.row(static_cast<long>(b) * g + i) = batch[b]->centers[i].transpose();
    }
  }
  in.token_embed = fb.embed_tokens(batch);
  in.pos_embed = fb.position_embedding(centers);

  for (int b = 0; b < in.blocks; ++b) {
    for (int i = 0; i < g; ++i) {
      const int row = b * g + i;
      if (batch[b]->mask[i]) {
        in.masked_rows.push_back(row);
        in.targets.push_back(batch[b]->patches[i]);
      } else {
        in.visible_rows.push_back(row);
      }
    }
  }
  return run_assembly(fb, in, with_classifier, with_reconstruction);
}

Var build_replica_recon_loss(ModelForward& fb, const TokenizedCloud& tok,
                             const std::vector<std::vector<bool>>& masks) {
  if (masks.empty()) {
    throw Error(ErrorCode::ShapeMismatch, "replica graph: no masks");
  }
  const int g = tok.group_count();
  const int masked = static_cast<int>(std::count(masks[0].begin(), masks[0].end(), true));
  for (const auto& m : masks) {
    if (static_cast<int>(m.size()) != g ||
        static_cast<int>(std::count(m.begin(), m.end(), true)) != masked) {
      throw Error(ErrorCode::ShapeMismatch, "replica graph: mask counts differ");
    }
  }

  AssemblyInput in;
  in.blocks = static_cast<int>(masks.size());
  in.visible_per_block = g - masked;
  in.masked_per_block = masked;

  Mat centers(g, 3);
  for (int i = 0; i < g; ++i) centers.row(i) = tok.centers[i].transpose();

  // token embeddings computed once for the sample, shared across replicas
  const Var embed_one = fb.embed_tokens({&tok});
  const Var pos_one = fb.position_embedding(centers);

  std::vector<int> all_rows;
  for (int b = 0; b < in.blocks; ++b) {
    for (int i = 0; i < g; ++i) all_rows.push_back(i);
  }
  Tape& t = fb.tape();
  in.token_embed = gather_rows(t, embed_one, all_rows);
  in.pos_embed = gather_rows(t, pos_one, all_rows);

  for (int b = 0; b < in.blocks; ++b) {
    for (int i = 0; i < g; ++i) {
      const int row = b * g + i;
      if (masks[b][i]) {
        in.masked_rows.push_back(row);
        in.targets.push_back(tok.patches[i]);
      } else {
        in.visible_rows.push_back(row);
      }
    }
  }
  const BatchGraph graph = run_assembly(fb, in, false, true);
  return graph.recon_loss;
}

EvalOutput evaluate_tokenized(const TokenizedCloud& tok, ModelParams& params) {
  Tape tape;
  ModelForward fb(tape, params, false, nullptr);
  TokenizedCloud all_visible = tok;
  std::fill(all_visible.mask.begin(), all_visible.mask.end(), false);
  const BatchGraph g = build_batch_graph(fb, {&all_visible}, true, false);

  EvalOutput out;
  out.logits = tape.value(g.logits).row(0);
  out.predicted = 0;
  for (int c = 1; c < out.logits.cols(); ++c) {
    if (out.logits(c) > out.logits(out.predicted)) out.predicted = c;
  }
  return out;
}

EvalOutput evaluate_cloud(const geom::PointCloud& cloud, ModelParams& params) {
  const auto tok = geom::tokenize(cloud, params.config.group_count,
                                  params.config.group_size, 0);
  return evaluate_tokenized(tok, params);
}

}  // namespace mate::net
