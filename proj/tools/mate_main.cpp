// mate: masked-autoencoder test-time training for point-cloud
// classification. Subcommands cover dataset generation, joint training,
// corruption benchmarks, test-time adaptation runs, ablation sweeps and
// report rendering.

#include <fcntl.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mate/corruptions.hpp"
#include "mate/datagen.hpp"
#include "mate/report.hpp"
#include "mate/trainer.hpp"
#include "mate/ttt.hpp"

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "mate 0.1.0";

// One run per output directory at a time.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".mate.lock") {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      throw mate::Error(mate::ErrorCode::IOFailure,
                        "output directory is locked by another run: " + dir.string());
    }
    ::close(fd);
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

fs::path prepare_out_dir(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) {
    throw mate::Error(mate::ErrorCode::IOFailure, "cannot create directory: " + out);
  }
  return dir;
}

void write_resolved_config(const fs::path& dir,
                           const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream f(dir / "config.resolved", std::ios::trunc);
  f << "version = " << kVersion << "\n";
  for (const auto& [k, v] : kv) f << k << " = " << v << "\n";
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

// Plain key=value config files, applied before command-line flags so flags
// win. Unknown keys are rejected.
using KeyMap = std::map<std::string, std::function<void(const std::string&)>>;

void apply_config_file(const std::string& path, const KeyMap& keys) {
  std::ifstream f(path);
  if (!f) {
    throw CLI::FileError("cannot open config file: " + path);
  }
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    if (trim(line).empty()) continue;
    if (eq == std::string::npos) {
      throw CLI::FileError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = keys.find(key);
    if (it == keys.end()) {
      throw CLI::FileError(path + ":" + std::to_string(lineno) + ": unknown key '" +
                           key + "'");
    }
    try {
      it->second(value);
    } catch (const std::exception&) {
      throw CLI::FileError(path + ":" + std::to_string(lineno) + ": bad value for '" +
                           key + "'");
    }
  }
}

template <typename T>
std::function<void(const std::string&)> bind_value(T& target) {
  return [&target](const std::string& s) {
    if constexpr (std::is_same_v<T, std::string>) {
      target = s;
    } else if constexpr (std::is_same_v<T, bool>) {
      target = s == "1" || s == "true" || s == "on";
    } else if constexpr (std::is_integral_v<T>) {
      target = static_cast<T>(std::stoll(s));
    } else {
      target = static_cast<T>(std::stod(s));
    }
  };
}

// --config may appear anywhere after the subcommand
std::string find_config_path(int argc, char** argv) {
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") return argv[i + 1];
  }
  return "";
}

// --- dataset ---

struct DatasetArgs {
  std::string out;
  int per_class = 100;
  int val = 25;
  int test = 25;
  int points = 256;
  std::uint64_t seed = 0;
};

int run_dataset(const DatasetArgs& a) {
  const auto dir = prepare_out_dir(a.out);
  DirLock lock(dir);
  mate::data::DatasetSpec spec;
  spec.per_class_train = a.per_class;
  spec.per_class_val = a.val;
  spec.per_class_test = a.test;
  spec.points_per_cloud = a.points;
  spec.seed = a.seed;
  const auto manifest = mate::data::build_dataset(a.out, spec);
  write_resolved_config(dir, {{"command", "dataset"},
                              {"per_class", std::to_string(a.per_class)},
                              {"val", std::to_string(a.val)},
                              {"test", std::to_string(a.test)},
                              {"points", std::to_string(a.points)},
                              {"seed", std::to_string(a.seed)}});
  std::cout << "manifest: " << manifest << "\n";
  std::cout << "manifest_hash: " << std::hex << mate::data::file_hash(manifest)
            << std::dec << "\n";
  return 0;
}

// --- train ---

struct TrainArgs {
  std::string dataset;
  std::string out;
  std::string mode = "joint";
  std::string preset = "desk";
  double lambda = 1.0;
  int epochs = 60;
  double lr = 1e-3;
  double mask_ratio = 0.9;
  int batch = 32;
  double weight_decay = 0.05;
  std::uint64_t seed = 0;
  bool no_augment = false;
  bool no_trend_check = false;
};

int run_train(const TrainArgs& a) {
  const auto dir = prepare_out_dir(a.out);
  DirLock lock(dir);

  mate::net::ModelConfig model = a.preset == "paper"
                                     ? mate::net::ModelConfig::paper_scale()
                                     : mate::net::ModelConfig::desk_default();
  mate::train::JointConfig cfg;
  cfg.mode = a.mode == "classification_only"
                 ? mate::train::JointConfig::Mode::ClassificationOnly
                 : mate::train::JointConfig::Mode::Joint;
  cfg.lambda = a.lambda;
  cfg.epochs = a.epochs;
  cfg.lr = a.lr;
  cfg.mask_ratio = a.mask_ratio;
  cfg.batch_size = a.batch;
  cfg.weight_decay = a.weight_decay;
  cfg.seed = a.seed;
  cfg.augment_scale = !a.no_augment;
  cfg.augment_translate = !a.no_augment;
  cfg.check_loss_trend = !a.no_trend_check;

  const auto train_split = mate::data::load_split(a.dataset, "train");
  const auto val_split = mate::data::load_split(a.dataset, "val");
  model.num_classes = std::max(model.num_classes, train_split.num_classes);

  const auto result = mate::train::train_joint(train_split, val_split, cfg, model);
  const auto checkpoint = (dir / "checkpoint.mate").string();
  mate::net::save_checkpoint(checkpoint, result.params);
  mate::train::write_training_log_csv((dir / "train_log.csv").string(), result.log);
  write_resolved_config(
      dir, {{"command", "train"},
            {"dataset", a.dataset},
            {"mode", a.mode},
            {"preset", a.preset},
            {"lambda", fmt(a.lambda)},
            {"epochs", std::to_string(a.epochs)},
            {"lr", fmt(a.lr)},
            {"mask_ratio", fmt(cfg.mask_ratio)},
            {"batch", std::to_string(a.batch)},
            {"weight_decay", fmt(a.weight_decay)},
            {"augment", a.no_augment ? "off" : "scale+translate"},
            {"seed", std::to_string(a.seed)}});
  std::cout << "checkpoint: " << checkpoint << "\n";
  std::cout << "parameters: " << result.params.parameter_count() << "\n";
  if (!result.log.empty()) {
    std::cout << "final_train_acc: " << result.log.back().train_acc << "\n";
    std::cout << "final_val_acc: " << result.log.back().val_acc << "\n";
  }
  return 0;
}

// --- corrupt ---

struct CorruptArgs {
  std::string in;
  std::string out;
  std::string kind;
  std::string compose;
  std::string split = "test";
  std::uint64_t seed = 0;
  bool describe = false;
};

void corrupt_one_kind(const mate::data::LoadedDataset& data,
                      const std::vector<mate::data::ManifestEntry>& entries,
                      mate::corrupt::CorruptionKind kind, const fs::path& out_dir,
                      std::uint64_t seed) {
  fs::create_directories(out_dir);
  std::vector<mate::data::ManifestEntry> manifest;
  for (std::size_t i = 0; i < data.clouds.size(); ++i) {
    const auto corrupted =
        mate::corrupt::corrupt(data.clouds[i], kind, mate::mix_seed(seed, i));
    const std::string name = fs::path(entries[i].path).filename().string();
    mate::data::write_pcb((out_dir / name).string(), corrupted);
    manifest.push_back(
        {name, entries[i].label, entries[i].split, mate::corrupt::corruption_kind_name(kind)});
  }
  mate::data::write_manifest((out_dir / "manifest.json").string(), manifest);
}

int run_corrupt(const CorruptArgs& a) {
  if (a.describe) {
    std::cout << mate::corrupt::describe_corruptions_json() << "\n";
    return 0;
  }
  if (a.in.empty() || a.out.empty() || (a.kind.empty() && a.compose.empty())) {
    std::cerr << "error: corrupt requires --in, --out and one of --kind/--compose\n";
    return 2;
  }
  const auto dir = prepare_out_dir(a.out);
  DirLock lock(dir);

  // keep only the selected split, in manifest order
  const auto all_entries = mate::data::read_manifest(a.in);
  std::vector<mate::data::ManifestEntry> entries;
  for (const auto& e : all_entries) {
    if (a.split.empty() || e.split == a.split) entries.push_back(e);
  }
  if (entries.empty()) {
    throw mate::Error(mate::ErrorCode::InvalidConfig,
                      "no samples in split '" + a.split + "' of " + a.in);
  }
  const auto data = mate::data::load_split(a.in, a.split);

  if (!a.compose.empty()) {
    if (a.compose != "random2") {
      std::cerr << "error: unsupported --compose mode: " << a.compose << "\n";
      return 2;
    }
    const auto kinds = mate::corrupt::all_corruption_kinds();
    const fs::path sub = dir / "compose_random2";
    fs::create_directories(sub);
    std::vector<mate::data::ManifestEntry> manifest;
    for (std::size_t i = 0; i < data.clouds.size(); ++i) {
      mate::Rng pick(mate::mix_seed(a.seed, 0xc0000000ULL + i));
      // redraw pairs that shrink the cloud below a cluster kind's minimum
      mate::geom::PointCloud corrupted;
      mate::corrupt::CorruptionKind k1{}, k2{};
      for (int attempt = 0;; ++attempt) {
        k1 = kinds[pick.index(kinds.size())];
        k2 = kinds[pick.index(kinds.size())];
        while (k2 == k1) k2 = kinds[pick.index(kinds.size())];
        try {
          corrupted = mate::corrupt::corrupt_compose(data.clouds[i], {k1, k2},
                                                     mate::mix_seed(a.seed, i));
          break;
        } catch (const mate::Error& e) {
          if (e.code() != mate::ErrorCode::CloudTooSmall || attempt >= 50) throw;
        }
      }
      const std::string name = fs::path(entries[i].path).filename().string();
      mate::data::write_pcb((sub / name).string(), corrupted);
      manifest.push_back({name, entries[i].label, entries[i].split,
                          std::string(mate::corrupt::corruption_kind_name(k1)) + "+" +
                              mate::corrupt::corruption_kind_name(k2)});
    }
    mate::data::write_manifest((sub / "manifest.json").string(), manifest);
    std::cout << "corrupted: " << (sub / "manifest.json").string() << "\n";
  } else if (a.kind == "all") {
    for (const auto kind : mate::corrupt::all_corruption_kinds()) {
      corrupt_one_kind(data, entries, kind,
                       dir / mate::corrupt::corruption_kind_name(kind), a.seed);
    }
    std::cout << "corrupted: 15 kinds under " << dir.string() << "\n";
  } else {
    const auto kind = mate::corrupt::parse_corruption_kind(a.kind);
    corrupt_one_kind(data, entries, kind, dir / a.kind, a.seed);
    std::cout << "corrupted: " << (dir / a.kind / "manifest.json").string() << "\n";
  }
  write_resolved_config(dir, {{"command", "corrupt"},
                              {"in", a.in},
                              {"kind", a.kind.empty() ? a.compose : a.kind},
                              {"split", a.split},
                              {"seed", std::to_string(a.seed)}});
  return 0;
}

// --- ttt ---

struct TttArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::string mode = "online";
  std::string preset = "desk";
  double mask_ratio = 0.9;
  int batch = 48;
  int steps = -1;  // default by mode
  int stride = 1;
  double lr = -1;  // default by preset
  double weight_decay = 0.05;
  std::uint64_t seed = 0;
  int threads = 1;
  bool record_step_preds = false;
  std::string split = "test";
};

mate::ttt::TTTConfig make_ttt_config(const TttArgs& a) {
  mate::ttt::TTTConfig cfg;
  if (a.mode == "standard") {
    cfg = mate::ttt::TTTConfig::standard();
  } else if (a.mode == "online") {
    cfg = mate::ttt::TTTConfig::online();
  } else if (a.mode == "source_only") {
    cfg = mate::ttt::TTTConfig::source_only();
  } else {
    throw mate::Error(mate::ErrorCode::InvalidConfig, "unknown ttt mode: " + a.mode);
  }
  cfg.mask_ratio = a.mask_ratio;
  cfg.replica_batch = a.batch;
  if (a.steps > 0) cfg.grad_steps = a.steps;
  cfg.stride = a.stride;
  cfg.lr = a.lr > 0 ? a.lr : (a.preset == "large" ? 1e-4 : 5e-5);
  cfg.weight_decay = a.weight_decay;
  cfg.seed = a.seed;
  cfg.threads = a.threads;
  cfg.record_step_predictions = a.record_step_preds;
  return cfg;
}

int run_ttt(const TttArgs& a) {
  const auto dir = prepare_out_dir(a.out);
  DirLock lock(dir);

  const auto params = mate::net::load_checkpoint(a.checkpoint);
  const auto dataset = mate::data::load_split(a.data, a.split);
  if (dataset.clouds.empty()) {
    throw mate::Error(mate::ErrorCode::InvalidConfig,
                      "no samples in split '" + a.split + "' of " + a.data);
  }
  const auto stream = mate::ttt::Stream::from_dataset(dataset);
  const auto cfg = make_ttt_config(a);

  mate::ttt::RunReport report;
  if (cfg.mode == mate::ttt::TTTConfig::Mode::Standard) {
    report = mate::ttt::run_standard(stream, params, cfg);
  } else if (cfg.mode == mate::ttt::TTTConfig::Mode::Online) {
    report = mate::ttt::run_online(stream, params, cfg);
  } else {
    report = mate::ttt::run_source_only(stream, params);
  }

  report.write_csv((dir / "report.csv").string());
  report.write_summary_json((dir / "summary.json").string());
  write_resolved_config(dir, {{"command", "ttt"},
                              {"checkpoint", a.checkpoint},
                              {"data", a.data},
                              {"mode", a.mode},
                              {"mask_ratio", fmt(cfg.mask_ratio)},
                              {"batch", std::to_string(cfg.replica_batch)},
                              {"steps", std::to_string(cfg.grad_steps)},
                              {"stride", std::to_string(cfg.stride)},
                              {"lr", fmt(cfg.lr)},
                              {"weight_decay", fmt(cfg.weight_decay)},
                              {"threads", std::to_string(cfg.threads)},
                              {"seed", std::to_string(a.seed)}});
  std::cout << "accuracy: " << report.accuracy() << "\n";
  std::cout << "mean_accuracy: " << report.mean_corruption_accuracy() << "\n";
  std::cout << "adapted: " << report.adapted_count() << "\n";
  std::cout << "fps: " << report.fps() << "\n";
  return 0;
}

// --- ablate ---

struct AblateArgs {
  TttArgs base;
  std::string axis;
  std::string grid;
};

int run_ablate(const AblateArgs& a) {
  if (a.axis != "mask_ratio" && a.axis != "stride" && a.axis != "batch") {
    std::cerr << "error: --axis must be one of mask_ratio, stride, batch\n";
    return 2;
  }
  const auto dir = prepare_out_dir(a.base.out);
  DirLock lock(dir);

  std::vector<double> grid;
  {
    std::stringstream ss(a.grid);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      if (!cell.empty()) grid.push_back(std::stod(cell));
    }
  }
  if (grid.empty()) {
    std::cerr << "error: empty --grid\n";
    return 2;
  }

  const auto params = mate::net::load_checkpoint(a.base.checkpoint);
  const auto dataset = mate::data::load_split(a.base.data, a.base.split);
  const auto stream = mate::ttt::Stream::from_dataset(dataset);

  std::ofstream csv(dir / "ablate.csv", std::ios::trunc);
  csv << "axis,value,accuracy,mean_accuracy,fps,adapted\n";
  for (const double value : grid) {
    auto cfg = make_ttt_config(a.base);
    if (a.axis == "mask_ratio") cfg.mask_ratio = value;
    if (a.axis == "stride") cfg.stride = static_cast<int>(value);
    if (a.axis == "batch") cfg.replica_batch = static_cast<int>(value);

    mate::ttt::RunReport report;
    if (cfg.mode == mate::ttt::TTTConfig::Mode::Standard) {
      report = mate::ttt::run_standard(stream, params, cfg);
    } else {
      report = mate::ttt::run_online(stream, params, cfg);
    }

    std::ostringstream label;
    label << a.axis << "_" << value;
    const fs::path sub = dir / label.str();
    fs::create_directories(sub);
    report.write_csv((sub / "report.csv").string());
    report.write_summary_json((sub / "summary.json").string());
    csv << a.axis << ',' << value << ',' << report.accuracy() << ','
        << report.mean_corruption_accuracy() << ',' << report.fps() << ','
        << report.adapted_count() << "\n";
    std::cout << a.axis << "=" << value << " accuracy=" << report.accuracy() << "\n";
  }
  write_resolved_config(dir, {{"command", "ablate"},
                              {"axis", a.axis},
                              {"grid", a.grid},
                              {"checkpoint", a.base.checkpoint},
                              {"data", a.base.data},
                              {"mode", a.base.mode},
                              {"seed", std::to_string(a.base.seed)}});
  return 0;
}

// --- report ---

struct ReportArgs {
  std::vector<std::string> runs;
  std::string out;
};

int run_report(const ReportArgs& a) {
  const auto dir = prepare_out_dir(a.out);
  DirLock lock(dir);
  const auto written = mate::report::write_report(a.runs, a.out);
  write_resolved_config(dir, {{"command", "report"}});
  for (const auto& w : written) std::cout << "wrote: " << w << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"masked-autoencoder test-time training for point clouds"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(0, 1);

  DatasetArgs ds;
  auto* dataset_cmd = app.add_subcommand("dataset", "generate the synthetic dataset");
  dataset_cmd->add_option("--out", ds.out, "output directory")->required();
  dataset_cmd->add_option("--per-class", ds.per_class, "training samples per class");
  dataset_cmd->add_option("--val", ds.val, "validation samples per class");
  dataset_cmd->add_option("--test", ds.test, "test samples per class");
  dataset_cmd->add_option("--points", ds.points, "points per cloud");
  dataset_cmd->add_option("--seed", ds.seed, "generation seed");
  std::string cfg_path;
  dataset_cmd->add_option("--config", cfg_path, "key=value config file");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "joint or classification-only training");
  train_cmd->add_option("--dataset", tr.dataset, "dataset manifest")->required();
  train_cmd->add_option("--out", tr.out, "output directory")->required();
  train_cmd->add_option("--mode", tr.mode)
      ->check(CLI::IsMember({"joint", "classification_only"}));
  train_cmd->add_option("--preset", tr.preset)->check(CLI::IsMember({"desk", "paper"}));
  train_cmd->add_option("--lambda", tr.lambda, "reconstruction weight");
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--lr", tr.lr);
  train_cmd->add_option("--mask-ratio", tr.mask_ratio);
  train_cmd->add_option("--batch", tr.batch);
  train_cmd->add_option("--weight-decay", tr.weight_decay);
  train_cmd->add_option("--seed", tr.seed);
  train_cmd->add_flag("--no-augment", tr.no_augment, "disable augmentation");
  train_cmd->add_flag("--no-trend-check", tr.no_trend_check,
                      "disable the smoothed-loss trend gate");
  train_cmd->add_option("--config", cfg_path, "key=value config file");

  CorruptArgs co;
  auto* corrupt_cmd = app.add_subcommand("corrupt", "apply distribution shifts");
  corrupt_cmd->add_option("--in", co.in, "clean dataset manifest");
  corrupt_cmd->add_option("--out", co.out, "output directory");
  corrupt_cmd->add_option("--kind", co.kind, "corruption kind or 'all'");
  corrupt_cmd->add_option("--compose", co.compose, "composition mode (random2)");
  corrupt_cmd->add_option("--split", co.split, "dataset split to corrupt");
  corrupt_cmd->add_option("--seed", co.seed);
  corrupt_cmd->add_flag("--describe", co.describe, "print the parameter table");
  corrupt_cmd->add_option("--config", cfg_path, "key=value config file");

  TttArgs tt;
  auto* ttt_cmd = app.add_subcommand("ttt", "test-time training / evaluation");
  ttt_cmd->add_option("--checkpoint", tt.checkpoint)->required();
  ttt_cmd->add_option("--data", tt.data, "corrupted dataset manifest")->required();
  ttt_cmd->add_option("--out", tt.out)->required();
  ttt_cmd->add_option("--mode", tt.mode)
      ->check(CLI::IsMember({"standard", "online", "source_only"}));
  ttt_cmd->add_option("--preset", tt.preset)->check(CLI::IsMember({"desk", "large"}));
  ttt_cmd->add_option("--mask-ratio", tt.mask_ratio);
  ttt_cmd->add_option("--batch", tt.batch, "replica batch size");
  ttt_cmd->add_option("--steps", tt.steps, "gradient steps per adapted sample");
  ttt_cmd->add_option("--stride", tt.stride, "adapt every stride-th sample");
  ttt_cmd->add_option("--lr", tt.lr);
  ttt_cmd->add_option("--weight-decay", tt.weight_decay);
  ttt_cmd->add_option("--seed", tt.seed);
  ttt_cmd->add_option("--threads", tt.threads, "standard-mode worker threads");
  ttt_cmd->add_option("--split", tt.split);
  ttt_cmd->add_flag("--record-step-preds", tt.record_step_preds,
                    "store a prediction after each gradient step");
  ttt_cmd->add_option("--config", cfg_path, "key=value config file");

  AblateArgs ab;
  auto* ablate_cmd = app.add_subcommand("ablate", "sweep one adaptation axis");
  ablate_cmd->add_option("--axis", ab.axis, "mask_ratio, stride or batch")->required();
  ablate_cmd->add_option("--grid", ab.grid, "comma-separated values")->required();
  ablate_cmd->add_option("--checkpoint", ab.base.checkpoint)->required();
  ablate_cmd->add_option("--data", ab.base.data)->required();
  ablate_cmd->add_option("--out", ab.base.out)->required();
  ablate_cmd->add_option("--mode", ab.base.mode)
      ->check(CLI::IsMember({"standard", "online"}));
  ablate_cmd->add_option("--mask-ratio", ab.base.mask_ratio);
  ablate_cmd->add_option("--batch", ab.base.batch);
  ablate_cmd->add_option("--steps", ab.base.steps);
  ablate_cmd->add_option("--stride", ab.base.stride);
  ablate_cmd->add_option("--lr", ab.base.lr);
  ablate_cmd->add_option("--seed", ab.base.seed);
  ablate_cmd->add_option("--threads", ab.base.threads);
  ablate_cmd->add_option("--split", ab.base.split);
  ablate_cmd->add_option("--config", cfg_path, "key=value config file");

  ReportArgs re;
  auto* report_cmd = app.add_subcommand("report", "summaries and charts from runs");
  report_cmd->add_option("--runs", re.runs, "run directories")
      ->required()
      ->delimiter(',');
  report_cmd->add_option("--out", re.out)->required();

  // Config values act as defaults; explicit flags override them.
  const KeyMap dataset_keys = {{"per-class", bind_value(ds.per_class)},
                               {"val", bind_value(ds.val)},
                               {"test", bind_value(ds.test)},
                               {"points", bind_value(ds.points)},
                               {"seed", bind_value(ds.seed)}};
  const KeyMap train_keys = {{"mode", bind_value(tr.mode)},
                             {"preset", bind_value(tr.preset)},
                             {"lambda", bind_value(tr.lambda)},
                             {"epochs", bind_value(tr.epochs)},
                             {"lr", bind_value(tr.lr)},
                             {"mask-ratio", bind_value(tr.mask_ratio)},
                             {"batch", bind_value(tr.batch)},
                             {"weight-decay", bind_value(tr.weight_decay)},
                             {"seed", bind_value(tr.seed)},
                             {"no-augment", bind_value(tr.no_augment)},
                             {"dataset", bind_value(tr.dataset)},
                             {"out", bind_value(tr.out)}};
  const KeyMap corrupt_keys = {{"in", bind_value(co.in)},
                               {"out", bind_value(co.out)},
                               {"kind", bind_value(co.kind)},
                               {"compose", bind_value(co.compose)},
                               {"split", bind_value(co.split)},
                               {"seed", bind_value(co.seed)}};
  const KeyMap ttt_keys = {{"checkpoint", bind_value(tt.checkpoint)},
                           {"data", bind_value(tt.data)},
                           {"out", bind_value(tt.out)},
                           {"mode", bind_value(tt.mode)},
                           {"preset", bind_value(tt.preset)},
                           {"mask-ratio", bind_value(tt.mask_ratio)},
                           {"batch", bind_value(tt.batch)},
                           {"steps", bind_value(tt.steps)},
                           {"stride", bind_value(tt.stride)},
                           {"lr", bind_value(tt.lr)},
                           {"weight-decay", bind_value(tt.weight_decay)},
                           {"seed", bind_value(tt.seed)},
                           {"threads", bind_value(tt.threads)},
                           {"split", bind_value(tt.split)}};
  const KeyMap ablate_keys = {{"axis", bind_value(ab.axis)},
                              {"grid", bind_value(ab.grid)},
                              {"checkpoint", bind_value(ab.base.checkpoint)},
                              {"data", bind_value(ab.base.data)},
                              {"out", bind_value(ab.base.out)},
                              {"mode", bind_value(ab.base.mode)},
                              {"mask-ratio", bind_value(ab.base.mask_ratio)},
                              {"batch", bind_value(ab.base.batch)},
                              {"steps", bind_value(ab.base.steps)},
                              {"stride", bind_value(ab.base.stride)},
                              {"lr", bind_value(ab.base.lr)},
                              {"seed", bind_value(ab.base.seed)},
                              {"threads", bind_value(ab.base.threads)},
                              {"split", bind_value(ab.base.split)}};

  try {
    const std::string config_path = find_config_path(argc, argv);
    if (!config_path.empty() && argc > 1) {
      const std::string sub = argv[1];
      if (sub == "dataset") apply_config_file(config_path, dataset_keys);
      if (sub == "train") apply_config_file(config_path, train_keys);
      if (sub == "corrupt") apply_config_file(config_path, corrupt_keys);
      if (sub == "ttt") apply_config_file(config_path, ttt_keys);
      if (sub == "ablate") apply_config_file(config_path, ablate_keys);
    }
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*dataset_cmd) return run_dataset(ds);
    if (*train_cmd) return run_train(tr);
    if (*corrupt_cmd) return run_corrupt(co);
    if (*ttt_cmd) return run_ttt(tt);
    if (*ablate_cmd) return run_ablate(ab);
    if (*report_cmd) return run_report(re);
    std::cerr << app.help() << "\n";
    return 2;
  } catch (const mate::Error& e) {
    std::cerr << "error [" << mate::error_code_name(e.code()) << "]: " << e.what()
              << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
