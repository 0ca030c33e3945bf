#include "mate/ttt.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include <json.hpp>

namespace mate::ttt {

using geom::PointCloud;
using geom::TokenizedCloud;
using net::ModelParams;

void TTTConfig::validate() const {
  if (mask_ratio < 0.0 || mask_ratio >= 1.0) {
    throw Error(ErrorCode::MaskRatioOutOfRange, "ttt config: mask ratio in [0, 1)");
  }
  if (replica_batch < 1 || stride < 1) {
    throw Error(ErrorCode::InvalidConfig, "ttt config: batch and stride must be >= 1");
  }
  if (mode != Mode::SourceOnly && grad_steps < 1) {
    throw Error(ErrorCode::InvalidConfig, "ttt config: grad_steps must be >= 1");
  }
}

Stream Stream::from_dataset(const data::LoadedDataset& d) {
  Stream s;
  s.clouds = d.clouds;
  s.labels = d.labels;
  s.corruptions = d.corruptions;
  return s;
}

std::uint64_t sample_seed(const PointCloud& cloud, std::uint64_t run_seed) {
  const std::uint64_t content =
      fnv1a64(cloud.points.data(), cloud.points.size() * sizeof(geom::Vec3));
  return mix_seed(run_seed, content);
}

std::vector<std::vector<bool>> replica_masks(std::uint64_t sample_seed, int step_index,
                                             int replicas, int group_count,
                                             double mask_ratio) {
  std::vector<std::vector<bool>> masks;
  masks.reserve(replicas);
  for (int r = 0; r < replicas; ++r) {
    // one independent stream per (sample, step, replica)
    Rng rng(mix_seed(sample_seed, 0x6d61736bULL + 1000003ULL * step_index + r));
    masks.push_back(geom::random_token_mask(group_count, mask_ratio, rng));
  }
  return masks;
}

double ttt_step(const TokenizedCloud& tok, ModelParams& params, const TTTConfig& cfg,
                std::uint64_t sample_seed, int step_index) {
  const auto masks = replica_masks(sample_seed, step_index, cfg.replica_batch,
                                   tok.group_count(), cfg.mask_ratio);
  net::Tape tape;
  net::ModelForward fb(tape, params, false, nullptr);
  const net::Var loss = build_replica_recon_loss(fb, tok, masks);
  const double value = tape.scalar(loss);
  if (!std::isfinite(value)) {
    throw Error(ErrorCode::NonFiniteLoss, "ttt_step: reconstruction loss not finite");
  }
  tape.backward(loss);

  net::AdamWConfig opt;
  opt.lr = cfg.lr;
  opt.weight_decay = cfg.weight_decay;
  adamw_step(params, fb.collect_gradients(), opt, net::adaptation_groups());
  return value;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

int predict(const TokenizedCloud& tok, ModelParams& params) {
  return net::evaluate_tokenized(tok, params).predicted;
}

SampleRecord adapt_one_standard(const Stream& stream, int index,
                                const std::vector<std::uint8_t>& base,
                                const TTTConfig& cfg) {
  const auto t0 = Clock::now();
  SampleRecord rec;
  rec.index = index;
  rec.label = stream.labels[index];
  if (!stream.corruptions.empty()) rec.corruption = stream.corruptions[index];

  ModelParams params = net::restore(base);
  const PointCloud& cloud = stream.clouds[index];
  if (!cloud.all_finite()) {
    rec.fallback = true;
    rec.predicted = 0;  // no usable geometry; deterministic placeholder
    rec.millis = ms_since(t0);
    return rec;
  }

  const auto tok = geom::tokenize(cloud, params.config.group_count,
                                  params.config.group_size, 0);
  const std::uint64_t seed = sample_seed(cloud, cfg.seed);
  rec.adapted = true;
  for (int step = 0; step < cfg.grad_steps; ++step) {
    try {
      rec.step_losses.push_back(ttt_step(tok, params, cfg, seed, step));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonFiniteLoss) throw;
      params = net::restore(base);  // source-only fallback
      rec.fallback = true;
      rec.adapted = false;
      break;
    }
    if (cfg.record_step_predictions) {
      rec.step_predictions.push_back(predict(tok, params));
    }
  }
  rec.predicted = predict(tok, params);
  rec.millis = ms_since(t0);
  return rec;
}

}  // namespace

RunReport run_standard(const Stream& stream, const ModelParams& checkpoint,
                       const TTTConfig& cfg) {
  cfg.validate();
  const auto run_t0 = Clock::now();
  const auto base = net::snapshot(checkpoint);

  RunReport report;
  report.grad_steps = cfg.grad_steps;
  report.records.resize(stream.size());

  const int threads = std::max(1, cfg.threads);
  if (threads == 1) {
    for (std::size_t i = 0; i < stream.size(); ++i) {
      report.records[i] = adapt_one_standard(stream, static_cast<int>(i), base, cfg);
    }
  } else {
    // samples are independent; each worker adapts its own restored copy
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= stream.size()) return;
        report.records[i] = adapt_one_standard(stream, static_cast<int>(i), base, cfg);
      }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  report.total_millis = ms_since(run_t0);
  return report;
}

RunReport run_online(const Stream& stream, const ModelParams& checkpoint,
                     const TTTConfig& cfg) {
  cfg.validate();
  const auto run_t0 = Clock::now();

  RunReport report;
  report.grad_steps = cfg.grad_steps;
  ModelParams params = net::restore(net::snapshot(checkpoint));

  for (std::size_t i = 0; i < stream.size(); ++i) {
    const auto t0 = Clock::now();
    SampleRecord rec;
    rec.index = static_cast<int>(i);
    rec.label = stream.labels[i];
    if (!stream.corruptions.empty()) rec.corruption = stream.corruptions[i];

    const PointCloud& cloud = stream.clouds[i];
    if (!cloud.all_finite()) {
      rec.fallback = true;
      rec.predicted = 0;
      rec.millis = ms_since(t0);
      report.records.push_back(std::move(rec));
      continue;
    }

    const auto tok = geom::tokenize(cloud, params.config.group_count,
                                    params.config.group_size, 0);
    const bool adapt =
        cfg.mode != TTTConfig::Mode::SourceOnly && (i % cfg.stride == 0);
    if (adapt) {
      const auto pre = net::snapshot(params);
      const std::uint64_t seed = sample_seed(cloud, cfg.seed);
      rec.adapted = true;
      for (int step = 0; step < cfg.grad_steps; ++step) {
        try {
          rec.step_losses.push_back(ttt_step(tok, params, cfg, seed, step));
        } catch (const Error& e) {
          if (e.code() != ErrorCode::NonFiniteLoss) throw;
          params = net::restore(pre);  // roll back this sample's update
          rec.fallback = true;
          rec.adapted = false;
          break;
        }
      }
    }
    rec.predicted = predict(tok, params);
    rec.millis = ms_since(t0);
    report.records.push_back(std::move(rec));
  }
  report.total_millis = ms_since(run_t0);
  return report;
}

RunReport run_source_only(const Stream& stream, const ModelParams& checkpoint) {
  TTTConfig cfg = TTTConfig::source_only();
  return run_online(stream, checkpoint, cfg);
}

double RunReport::accuracy() const {
  if (records.empty()) return 0.0;
  int correct = 0;
  for (const auto& r : records) {
    if (r.predicted == r.label) ++correct;
  }
  return static_cast<double>(correct) / records.size();
}

std::map<std::string, double> RunReport::per_corruption_accuracy() const {
  std::map<std::string, std::pair<int, int>> buckets;  // correct, total
  for (const auto& r : records) {
    auto& b = buckets[r.corruption];
    if (r.predicted == r.label) b.first++;
    b.second++;
  }
  std::map<std::string, double> out;
  for (const auto& [kind, b] : buckets) {
    out[kind] = static_cast<double>(b.first) / b.second;
  }
  return out;
}

double RunReport::mean_corruption_accuracy() const {
  const auto per = per_corruption_accuracy();
  if (per.empty()) return 0.0;
  double sum = 0;
  for (const auto& [kind, acc] : per) sum += acc;
  return sum / per.size();
}

double RunReport::fps() const {
  return total_millis > 0 ? records.size() * 1000.0 / total_millis : 0.0;
}

int RunReport::adapted_count() const {
  int n = 0;
  for (const auto& r : records) n += r.adapted ? 1 : 0;
  return n;
}

void RunReport::write_csv(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorCode::IOFailure, "cannot open for write: " + path);
  f << "idx,corruption,label,pred,adapted,fallback";
  for (int s = 1; s <= grad_steps; ++s) f << ",loss_step_" << s;
  f << ",ms\n";
  for (const auto& r : records) {
    f << r.index << ',' << r.corruption << ',' << r.label << ',' << r.predicted << ','
      << (r.adapted ? 1 : 0) << ',' << (r.fallback ? 1 : 0);
    for (int s = 0; s < grad_steps; ++s) {
      f << ',';
      if (s < static_cast<int>(r.step_losses.size())) f << r.step_losses[s];
    }
    f << ',' << r.millis << "\n";
  }
  if (!f) throw Error(ErrorCode::IOFailure, "write failed: " + path);
}

void RunReport::write_summary_json(const std::string& path) const {
  nlohmann::json j;
  j["samples"] = records.size();
  j["accuracy"] = accuracy();
  j["mean_accuracy"] = mean_corruption_accuracy();
  j["per_corruption_accuracy"] = per_corruption_accuracy();
  j["fps"] = fps();
  j["adapted"] = adapted_count();
  j["grad_steps"] = grad_steps;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorCode::IOFailure, "cannot open for write: " + path);
  f << j.dump(1) << "\n";
  if (!f) throw Error(ErrorCode::IOFailure, "write failed: " + path);
}

}  // namespace mate::ttt
