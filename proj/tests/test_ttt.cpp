#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mate/corruptions.hpp"
#include "mate/datagen.hpp"
#include "mate/trainer.hpp"
#include "mate/ttt.hpp"

using mate::Error;
using mate::ErrorCode;
using mate::Rng;
using mate::geom::PointCloud;
using namespace mate::ttt;

namespace {

mate::net::ModelConfig tiny_model() {
  mate::net::ModelConfig c;
  c.embed_dim = 16;
  c.encoder_depth = 2;
  c.decoder_depth = 1;
  c.num_heads = 2;
  c.num_classes = 8;
  c.group_count = 8;
  c.group_size = 8;
  c.dropout_rate = 0.0;
  return c;
}

TTTConfig tiny_ttt(TTTConfig base) {
  base.replica_batch = 4;
  base.grad_steps = std::min(base.grad_steps, 3);
  base.lr = 1e-3;
  base.seed = 5;
  return base;
}

Stream tiny_stream(int per_class, std::uint64_t seed, bool corrupted) {
  Stream s;
  for (int cls = 0; cls < 8; ++cls) {
    for (int i = 0; i < per_class; ++i) {
      auto cloud = mate::data::generate_shape(static_cast<mate::data::ShapeClass>(cls),
                                              96, mate::mix_seed(seed, cls * 100 + i));
      if (corrupted) {
        cloud = mate::corrupt::corrupt(cloud, mate::corrupt::CorruptionKind::Gaussian,
                                       mate::mix_seed(seed, cls * 31 + i));
      }
      s.clouds.push_back(std::move(cloud));
      s.labels.push_back(cls);
      s.corruptions.push_back(corrupted ? "gaussian" : "");
    }
  }
  return s;
}

bool predictions_equal(const RunReport& a, const RunReport& b) {
  if (a.records.size() != b.records.size()) return false;
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    if (a.records[i].predicted != b.records[i].predicted) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("ttt_step with zero learning rate reports loss, leaves weights") {
  auto params = mate::net::ModelParams::init(tiny_model(), 1);
  const auto before = params;
  Stream s = tiny_stream(1, 1, true);
  const auto tok = mate::geom::tokenize(s.clouds[0], 8, 8, 0);

  TTTConfig cfg = tiny_ttt(TTTConfig::standard());
  cfg.lr = 0.0;
  cfg.weight_decay = 0.0;
  const double loss = ttt_step(tok, params, cfg, sample_seed(s.clouds[0], 5), 0);
  CHECK(std::isfinite(loss));
  CHECK(loss > 0.0);
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    CHECK(params.tensors[i].value == before.tensors[i].value);
  }
}

TEST_CASE("ttt_step freezes the classifier and moves the other groups") {
  auto params = mate::net::ModelParams::init(tiny_model(), 2);
  const auto before = params;
  Stream s = tiny_stream(1, 2, true);
  const auto tok = mate::geom::tokenize(s.clouds[0], 8, 8, 0);

  const TTTConfig cfg = tiny_ttt(TTTConfig::standard());
  const std::uint64_t seed = sample_seed(s.clouds[0], cfg.seed);
  for (int step = 0; step < 3; ++step) {
    static_cast<void>(ttt_step(tok, params, cfg, seed, step));
  }
  CHECK(params.group_identical(before, mate::net::ParamGroup::Classifier));
  CHECK_FALSE(params.group_identical(before, mate::net::ParamGroup::Encoder));
  CHECK_FALSE(params.group_identical(before, mate::net::ParamGroup::Decoder));
  CHECK_FALSE(params.group_identical(before, mate::net::ParamGroup::PredictionHead));
}

TEST_CASE("ttt_step loss equals the mean of independent per-replica losses") {
  auto params = mate::net::ModelParams::init(tiny_model(), 3);
  Stream s = tiny_stream(1, 3, true);
  const auto tok = mate::geom::tokenize(s.clouds[0], 8, 8, 0);
  const std::uint64_t seed = sample_seed(s.clouds[0], 5);

  for (const int replicas : {2, 48}) {
    TTTConfig cfg = tiny_ttt(TTTConfig::standard());
    cfg.replica_batch = replicas;
    cfg.lr = 0.0;  // keep params fixed for the reference loop
    cfg.weight_decay = 0.0;
    const double reported = ttt_step(tok, params, cfg, seed, 0);

    const auto masks = replica_masks(seed, 0, replicas, tok.group_count(), cfg.mask_ratio);
    double sum = 0.0;
    for (const auto& mask : masks) {
      mate::net::Tape tape;
      mate::net::ModelForward fb(tape, params, false, nullptr);
      sum += tape.scalar(build_replica_recon_loss(fb, tok, {mask}));
    }
    CHECK(reported == doctest::Approx(sum / replicas).epsilon(1e-12));
  }
}

TEST_CASE("standard run with zero learning rate equals source-only") {
  auto params = mate::net::ModelParams::init(tiny_model(), 4);
  Stream s = tiny_stream(2, 4, true);

  TTTConfig cfg = tiny_ttt(TTTConfig::standard());
  cfg.lr = 0.0;
  cfg.weight_decay = 0.0;
  const auto adapted = run_standard(s, params, cfg);
  const auto baseline = run_source_only(s, params);
  CHECK(predictions_equal(adapted, baseline));
  CHECK(adapted.accuracy() == baseline.accuracy());
}

TEST_CASE("standard-mode records are invariant under stream permutation") {
  auto params = mate::net::ModelParams::init(tiny_model(), 5);
  Stream s = tiny_stream(2, 5, true);
  const TTTConfig cfg = tiny_ttt(TTTConfig::standard());
  const auto direct = run_standard(s, params, cfg);

  // rotate the stream by 5 positions
  const int n = static_cast<int>(s.size());
  Stream rotated;
  std::vector<int> where(n);
  for (int i = 0; i < n; ++i) {
    const int j = (i + 5) % n;
    rotated.clouds.push_back(s.clouds[j]);
    rotated.labels.push_back(s.labels[j]);
    rotated.corruptions.push_back(s.corruptions[j]);
    where[j] = i;
  }
  const auto permuted = run_standard(rotated, params, cfg);

  for (int j = 0; j < n; ++j) {
    const auto& a = direct.records[j];
    const auto& b = permuted.records[where[j]];
    CHECK(a.predicted == b.predicted);
    CHECK(a.label == b.label);
    REQUIRE(a.step_losses.size() == b.step_losses.size());
    for (std::size_t k = 0; k < a.step_losses.size(); ++k) {
      CHECK(a.step_losses[k] == b.step_losses[k]);
    }
  }
  CHECK(direct.accuracy() == permuted.accuracy());
}

TEST_CASE("standard-mode multithreading changes nothing") {
  auto params = mate::net::ModelParams::init(tiny_model(), 6);
  Stream s = tiny_stream(1, 6, true);
  TTTConfig cfg = tiny_ttt(TTTConfig::standard());
  const auto serial = run_standard(s, params, cfg);
  cfg.threads = 2;
  const auto parallel = run_standard(s, params, cfg);
  CHECK(predictions_equal(serial, parallel));
  for (std::size_t i = 0; i < serial.records.size(); ++i) {
    CHECK(serial.records[i].step_losses == parallel.records[i].step_losses);
  }
}

TEST_CASE("online adaptation count follows the stride schedule") {
  auto params = mate::net::ModelParams::init(tiny_model(), 7);
  Stream s = tiny_stream(2, 7, true);  // 16 samples
  for (const int stride : {1, 3, 100}) {
    TTTConfig cfg = tiny_ttt(TTTConfig::online());
    cfg.stride = stride;
    const auto report = run_online(s, params, cfg);
    const int expected = static_cast<int>((s.size() + stride - 1) / stride);
    CHECK(report.adapted_count() == expected);
    for (const auto& r : report.records) {
      if (r.adapted) {
        CHECK(static_cast<int>(r.step_losses.size()) == cfg.grad_steps);
      } else {
        CHECK(r.step_losses.empty());
      }
    }
  }
}

TEST_CASE("online adaptation actually changes some prediction") {
  auto params = mate::net::ModelParams::init(tiny_model(), 8);
  Stream s = tiny_stream(3, 8, true);
  TTTConfig cfg = tiny_ttt(TTTConfig::online());
  cfg.lr = 2e-2;  // strong updates so the effect is visible from random init
  const auto adapted = run_online(s, params, cfg);
  const auto baseline = run_source_only(s, params);
  CHECK_FALSE(predictions_equal(adapted, baseline));
}

TEST_CASE("source-only is deterministic and matches clean evaluation") {
  auto params = mate::net::ModelParams::init(tiny_model(), 9);
  Stream s = tiny_stream(2, 9, false);  // clean stream
  const auto a = run_source_only(s, params);
  const auto b = run_source_only(s, params);
  CHECK(predictions_equal(a, b));

  mate::train::Dataset d;
  d.clouds = s.clouds;
  d.labels = s.labels;
  d.corruptions = s.corruptions;
  d.num_classes = 8;
  const auto eval = mate::train::evaluate_clean(d, params);
  CHECK(a.accuracy() == eval.accuracy);
}

TEST_CASE("online equals source-only when the learning rate is zero") {
  auto params = mate::net::ModelParams::init(tiny_model(), 10);
  Stream s = tiny_stream(2, 10, true);
  TTTConfig cfg = tiny_ttt(TTTConfig::online());
  cfg.lr = 0.0;
  cfg.weight_decay = 0.0;
  const auto adapted = run_online(s, params, cfg);
  const auto baseline = run_source_only(s, params);
  CHECK(predictions_equal(adapted, baseline));
}

TEST_CASE("a non-finite sample falls back and the run completes") {
  auto params = mate::net::ModelParams::init(tiny_model(), 11);
  Stream s = tiny_stream(1, 11, true);
  s.clouds[3].points[10].x() = std::nan("");

  for (const bool online : {true, false}) {
    TTTConfig cfg = tiny_ttt(online ? TTTConfig::online() : TTTConfig::standard());
    const auto report =
        online ? run_online(s, params, cfg) : run_standard(s, params, cfg);
    REQUIRE(report.records.size() == s.size());
    CHECK(report.records[3].fallback);
    CHECK_FALSE(report.records[3].adapted);
    int fallbacks = 0;
    for (const auto& r : report.records) fallbacks += r.fallback ? 1 : 0;
    CHECK(fallbacks == 1);
  }
}

TEST_CASE("classifier stays bit-frozen across whole runs") {
  auto params = mate::net::ModelParams::init(tiny_model(), 12);
  const auto before = params;
  Stream s = tiny_stream(1, 12, true);

  const auto r1 = run_standard(s, params, tiny_ttt(TTTConfig::standard()));
  const auto r2 = run_online(s, params, tiny_ttt(TTTConfig::online()));
  static_cast<void>(r1);
  static_cast<void>(r2);
  // the caller's checkpoint object is never mutated at all
  CHECK(mate::net::snapshot(params) == mate::net::snapshot(before));
}

TEST_CASE("report files round-trip through csv and json") {
  namespace fs = std::filesystem;
  auto params = mate::net::ModelParams::init(tiny_model(), 13);
  Stream s = tiny_stream(1, 13, true);
  TTTConfig cfg = tiny_ttt(TTTConfig::online());
  cfg.stride = 2;
  const auto report = run_online(s, params, cfg);

  const auto dir = fs::temp_directory_path() / "mate_ttt_report";
  fs::create_directories(dir);
  const auto csv = (dir / "report.csv").string();
  const auto json = (dir / "summary.json").string();
  report.write_csv(csv);
  report.write_summary_json(json);

  std::ifstream fc(csv);
  std::string header;
  std::getline(fc, header);
  CHECK(header == "idx,corruption,label,pred,adapted,fallback,loss_step_1,ms");
  int rows = 0;
  std::string line;
  while (std::getline(fc, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == static_cast<int>(s.size()));

  std::ifstream fj(json);
  std::string all((std::istreambuf_iterator<char>(fj)), std::istreambuf_iterator<char>());
  CHECK(all.find("per_corruption_accuracy") != std::string::npos);
  CHECK(all.find("fps") != std::string::npos);
  CHECK(all.find("mean_accuracy") != std::string::npos);
  fs::remove_all(dir);
}
