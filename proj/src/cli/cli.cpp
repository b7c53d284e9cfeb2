#include "t3d/cli/cli.hpp"

#include <algorithm>
#include <cctype>
#include <csignal>
#include <iomanip>
#include <ostream>

#include <CLI11.hpp>

#include "t3d/metrics/report.hpp"
#include "t3d/model/checkpoint.hpp"
#include "t3d/phantom/dataset.hpp"
#include "t3d/service/server.hpp"
#include "t3d/train/evaluate.hpp"
#include "t3d/train/trainer.hpp"
#include "t3d/voxel/io.hpp"
#include "t3d/voxel/marching_cubes.hpp"
#include "t3d/voxel/projection.hpp"

namespace t3d::cli {

namespace {

constexpr const char* kGroundTruth = "ground-truth";

class UsageError : public Error {
 public:
  using Error::Error;
};

std::string env_name(const std::string& flag) {
  std::string name = "T3D_";
  for (char c : flag.substr(flag.find_first_not_of('-'))) {
    name += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return name;
}

template <typename T>
CLI::Option* flag(CLI::App* app, const std::string& name, T& value, const std::string& help) {
  return app->add_option(name, value, help)->envname(env_name(name));
}

struct SynthArgs {
  int count = 0;
  std::uint64_t seed = 0;
  std::string out;
  int grid = 64;
  int upsample = 4;
  double fov = 96.0;
  double noise = 0.0;
  std::string axis = "y";
};

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string log;
  std::string resume;
  int snapshot_every = 0;
};

struct EvalArgs {
  std::vector<std::string> ckpts;
  std::string data;
  std::string split = "test";
  std::string out;
  double threshold = train::kDefaultThreshold;
};

struct ReconstructArgs {
  std::string ckpt;
  std::string topogram;
  std::string mask;
  std::string out;
  double threshold = train::kDefaultThreshold;
};

struct ExportArgs {
  std::string grid;
  double iso = 0.5;
  std::string out;
};

struct ServeArgs {
  std::string models;
  std::string listen = "127.0.0.1:8080";
  int workers = 2;
  int queue_timeout_ms = 30000;
  std::string cors_origin = "*";
  std::string ui_dir;
};

void print_terms(std::ostream& out, const model::LossComponents& t, double total) {
  out << "rec_shape " << metrics::format_number(t.rec_shape) << '\n'
      << "kl " << metrics::format_number(t.kl) << '\n'
      << "rec_observation " << metrics::format_number(t.rec_observation) << '\n'
      << "mask " << metrics::format_number(t.mask) << '\n'
      << "total " << metrics::format_number(total) << '\n';
}

int synth(const SynthArgs& a, std::ostream& out) {
  if (a.count < 1) throw UsageError("--count must be at least 1");
  phantom::SynthesisOptions options;
  options.grid = a.grid;
  options.topogram_upsample = a.upsample;
  options.field_of_view_mm = a.fov;
  options.noise_sigma = a.noise;
  try {
    options.axis = voxel::axis_from_string(a.axis);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  if (a.grid < voxel::VoxelGrid::kMinDim || a.grid > voxel::VoxelGrid::kMaxDim || (a.grid & (a.grid - 1)) != 0) {
    throw UsageError("--grid must be a power of two between 8 and 64");
  }
  if (a.upsample < 1) throw UsageError("--upsample must be positive");
  if (!(a.fov > 0.0)) throw UsageError("--fov must be positive");
  if (a.noise < 0.0) throw UsageError("--noise must be nonnegative");
  out << phantom::synthesize_dataset(a.count, a.seed, a.out, options).string() << '\n';
  return kExitOk;
}

int train_command(const TrainArgs& a, std::ostream& out) {
  const auto config = a.config.empty() ? train::TrainingConfig{} : train::read_config(a.config);
  const train::DatasetDirectory data(a.data);
  const auto split = train::split_from_manifest(data.manifest(), data.dir() / "manifest.json");
  std::optional<model::Checkpoint> resume;
  if (!a.resume.empty()) resume = model::load_checkpoint(a.resume);
  train::TrainOptions options;
  options.checkpoint_path = a.out;
  options.log_path = a.log.empty() ? a.out + ".log.jsonl" : a.log;
  options.resume = resume ? &*resume : nullptr;
  options.snapshot_every = a.snapshot_every;
  const auto result = train::train(config, split, data, options);
  out << "checkpoint " << a.out << '\n' << "log " << options.log_path.string() << '\n';
  if (!result.log.epochs.empty()) {
    const auto& last = result.log.epochs.back();
    out << "epoch " << last.epoch << '\n';
    print_terms(out, last.mean, last.mean_total);
  }
  return kExitOk;
}

std::string unique_label(std::string label, const std::vector<std::pair<std::string, metrics::MetricsReport>>& taken) {
  const std::string base = label;
  for (int k = 2; std::any_of(taken.begin(), taken.end(), [&](const auto& r) { return r.first == label; }); ++k) {
    label = base + "-" + std::to_string(k);
  }
  return label;
}

int eval(const EvalArgs& a, std::ostream& out) {
  if (a.split != "train" && a.split != "test" && a.split != "all") throw UsageError("--split must be train, test or all");
  if (!(a.threshold > 0.0 && a.threshold < 1.0)) throw UsageError("--threshold must lie in (0, 1)");
  const train::DatasetDirectory data(a.data);
  const auto ids = data.manifest().ids(a.split);
  if (ids.empty()) throw Error("split '" + a.split + "' of " + a.data + " has no cases");

  std::vector<std::pair<std::string, metrics::MetricsReport>> reports;
  for (const auto& ckpt : a.ckpts) {
    metrics::MetricsReport report;
    std::string label;
    if (ckpt == kGroundTruth) {
      std::vector<metrics::LabeledGrid> truth;
      for (const auto& id : ids) truth.push_back({id, *data.load(id, {true, false, false}).shape});
      report = metrics::evaluate_dataset(truth, truth);
      label = kGroundTruth;
    } else {
      const auto m = model::restore_model(model::load_checkpoint(ckpt));
      report = train::evaluate(m, data, ids, a.threshold);
      label = std::filesystem::path(ckpt).stem().string();
    }
    reports.emplace_back(unique_label(label, reports), std::move(report));
  }
  metrics::write_report_dir(a.out, reports);
  for (const auto& [label, report] : reports) {
    const auto& g = report.aggregate;
    out << label << " cases " << g.cases << " iou " << metrics::format_number(g.iou) << " dice "
        << metrics::format_number(g.dice) << " hausdorff " << metrics::format_number(g.hausdorff_voxels)
        << " volume_error " << metrics::format_number(g.volume_error) << '\n';
  }
  out << (std::filesystem::path(a.out) / "summary.json").string() << '\n';
  return kExitOk;
}

int reconstruct(const ReconstructArgs& a, std::ostream& out) {
  if (!(a.threshold > 0.0 && a.threshold < 1.0)) throw UsageError("--threshold must lie in (0, 1)");
  const auto ckpt = model::load_checkpoint(a.ckpt);
  const auto m = model::restore_model(ckpt);
  const auto variant = m.config().variant;
  if (!a.mask.empty() && !model::reads_mask(variant)) {
    throw UsageError(std::string("--mask given but the checkpoint is ") + std::string(model::to_string(variant)));
  }
  if (a.mask.empty() && model::reads_mask(variant)) {
    throw UsageError(std::string("--mask is required by a ") + std::string(model::to_string(variant)) + " checkpoint");
  }
  std::optional<voxel::Topogram> topogram;
  if (!a.topogram.empty()) {
    topogram = voxel::Topogram(voxel::read_image(a.topogram).image, {1.0, m.config().axis});
  } else if (model::reads_topogram(variant)) {
    throw UsageError("--topogram is required");
  }
  std::optional<voxel::Mask2D> mask;
  if (!a.mask.empty()) mask = voxel::read_mask(a.mask);

  voxel::Spacing spacing;
  if (ckpt.summary.contains("spacing_mm")) {
    const auto& sp = ckpt.summary.at("spacing_mm");
    spacing = {sp.at(0).get<double>(), sp.at(1).get<double>(), sp.at(2).get<double>()};
  }
  const auto pred = train::predict(m, model::reads_topogram(variant) && topogram ? &*topogram : nullptr,
                                   mask ? &*mask : nullptr, spacing);
  const auto binary = voxel::binarize(pred, a.threshold);
  voxel::write_grid(a.out + ".vgrid", pred);
  voxel::write_mesh(a.out + ".obj", voxel::marching_cubes(pred, a.threshold));
  voxel::write_mask(a.out + "_proj.pgm", voxel::project_orthographic(binary, m.config().axis));
  const auto volume = voxel::voxel_volume(binary);
  out << "volume_ml " << metrics::format_number(volume.milliliters) << '\n'
      << "voxels " << volume.count << '\n';
  return kExitOk;
}

int export_mesh(const ExportArgs& a, std::ostream& out) {
  if (!(a.iso > 0.0 && a.iso < 1.0)) throw UsageError("--iso must lie in (0, 1)");
  const auto mesh = voxel::marching_cubes(voxel::read_grid(a.grid), a.iso);
  voxel::write_mesh(a.out, mesh);
  out << "vertices " << mesh.vertices.size() << " triangles " << mesh.triangles.size() << '\n';
  return kExitOk;
}

std::pair<std::string, int> parse_listen(const std::string& addr) {
  const auto colon = addr.rfind(':');
  std::string host = colon == std::string::npos ? "127.0.0.1" : addr.substr(0, colon);
  const std::string port_text = colon == std::string::npos ? addr : addr.substr(colon + 1);
  if (host.empty()) host = "0.0.0.0";
  int port = -1;
  try {
    std::size_t used = 0;
    port = std::stoi(port_text, &used);
    if (used != port_text.size()) port = -1;
  } catch (const std::exception&) {
  }
  if (port < 0 || port > 65535) throw UsageError("--listen must be HOST:PORT with PORT in [0, 65535]");
  return {host, port};
}

int serve(const ServeArgs& a, std::ostream& out) {
  service::ServiceConfig config;
  std::tie(config.host, config.port) = parse_listen(a.listen);
  if (a.workers < 1) throw UsageError("--workers must be positive");
  if (a.queue_timeout_ms < 0) throw UsageError("--queue-timeout-ms must be nonnegative");
  config.model_dir = a.models;
  config.workers = a.workers;
  config.queue_timeout_ms = a.queue_timeout_ms;
  config.cors_origin = a.cors_origin;
  config.ui_dir = a.ui_dir;

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  service::ReconstructionService svc(config);
  const int port = svc.start();
  out << "listening on " << config.host << ':' << port << " models " << svc.models_loaded() << std::endl;
  int received = 0;
  sigwait(&signals, &received);
  svc.stop();
  pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Organ shape reconstruction from topograms", "t3d"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", "t3d 1.0");

  SynthArgs sa;
  auto* s = app.add_subcommand("synth", "Synthesize a phantom dataset");
  flag(s, "--count", sa.count, "number of cases")->required();
  flag(s, "--seed", sa.seed, "dataset seed");
  flag(s, "--out", sa.out, "output directory")->required();
  flag(s, "--grid", sa.grid, "voxel grid size D");
  flag(s, "--upsample", sa.upsample, "topogram size as a multiple of D");
  flag(s, "--fov", sa.fov, "field of view in mm");
  flag(s, "--noise", sa.noise, "topogram noise standard deviation");
  flag(s, "--axis", sa.axis, "projection axis (x, y or z)");

  TrainArgs ta;
  auto* t = app.add_subcommand("train", "Train a reconstruction model");
  flag(t, "--config", ta.config, "training config JSON (defaults when omitted)");
  flag(t, "--data", ta.data, "dataset directory")->required();
  flag(t, "--out", ta.out, "checkpoint path")->required();
  flag(t, "--log", ta.log, "JSON-lines log path (default <out>.log.jsonl)");
  flag(t, "--resume", ta.resume, "checkpoint to resume from");
  flag(t, "--snapshot-every", ta.snapshot_every, "epochs between train-IoU snapshots in the log; 0 disables");

  EvalArgs ea;
  auto* e = app.add_subcommand("eval", "Evaluate checkpoints on a dataset split");
  flag(e, "--ckpt", ea.ckpts, "comma separated checkpoints; 'ground-truth' scores the labels against themselves")
      ->required()
      ->delimiter(',');
  flag(e, "--data", ea.data, "dataset directory")->required();
  flag(e, "--split", ea.split, "train, test or all");
  flag(e, "--out", ea.out, "report directory")->required();
  flag(e, "--threshold", ea.threshold, "binarization threshold");

  ReconstructArgs ra;
  auto* r = app.add_subcommand("reconstruct", "Predict a shape from a topogram and optional mask");
  flag(r, "--ckpt", ra.ckpt, "checkpoint")->required();
  flag(r, "--topogram", ra.topogram, "topogram PGM");
  flag(r, "--mask", ra.mask, "binary mask PGM");
  flag(r, "--out", ra.out, "output prefix")->required();
  flag(r, "--threshold", ra.threshold, "binarization threshold");

  ExportArgs xa;
  auto* x = app.add_subcommand("export-mesh", "Extract a marching-cubes mesh from a grid");
  flag(x, "--grid", xa.grid, "input .vgrid")->required();
  flag(x, "--iso", xa.iso, "iso level in (0, 1)");
  flag(x, "--out", xa.out, "output OBJ")->required();

  ServeArgs va;
  auto* v = app.add_subcommand("serve", "Run the HTTP inference service");
  flag(v, "--models", va.models, "checkpoint directory")->required();
  flag(v, "--listen", va.listen, "HOST:PORT; port 0 picks a free port");
  flag(v, "--workers", va.workers, "simultaneous forward passes");
  flag(v, "--queue-timeout-ms", va.queue_timeout_ms, "wait for a free worker before answering 503");
  flag(v, "--cors-origin", va.cors_origin, "Access-Control-Allow-Origin value");
  flag(v, "--ui-dir", va.ui_dir, "static files served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*s) return synth(sa, out);
    if (*t) return train_command(ta, out);
    if (*e) return eval(ea, out);
    if (*r) return reconstruct(ra, out);
    if (*x) return export_mesh(xa, out);
    if (*v) return serve(va, out);
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const train::VariantMismatch& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace t3d::cli
