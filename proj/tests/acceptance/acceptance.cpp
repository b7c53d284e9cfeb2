#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <future>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>

#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "t3d/cli/cli.hpp"
#include "t3d/metrics/metrics.hpp"
#include "t3d/model/checkpoint.hpp"
#include "t3d/model/losses.hpp"
#include "t3d/model/spec.hpp"
#include "t3d/phantom/dataset.hpp"
#include "t3d/service/base64.hpp"
#include "t3d/service/server.hpp"
#include "t3d/train/evaluate.hpp"
#include "t3d/train/trainer.hpp"
#include "t3d/voxel/io.hpp"
#include "t3d/voxel/marching_cubes.hpp"
#include "t3d/voxel/projection.hpp"

using namespace t3d;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double budget_s;  // 0 = unbounded
  bool slow;
  std::function<Outcome()> run;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

Outcome metric_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> density(0.05, 0.6);
  std::uniform_real_distribution<double> sp(0.5, 3.0);
  int mismatches = 0;
  double worst_identity = 0.0;
  for (int t = 0; t < 200; ++t) {
    const voxel::Spacing s{sp(rng), sp(rng), sp(rng)};
    const auto a = test::random_binary_grid(8, rng, density(rng), s);
    const auto b = test::random_binary_grid(8, rng, density(rng), s);
    const double iou = metrics::iou(a, b), dice = metrics::dice(a, b);
    if (iou != test::iou_oracle(a, b) || dice != test::dice_oracle(a, b)) ++mismatches;
    const auto h = metrics::hausdorff(a, b);
    if (std::abs(h.mm - test::hausdorff_oracle(a, b)) > 1e-9) ++mismatches;
    worst_identity = std::max(worst_identity, std::abs(dice - 2.0 * iou / (1.0 + iou)));
  }
  return {mismatches == 0 && worst_identity < 1e-12,
          "200 pairs, mismatches " + std::to_string(mismatches) + ", dice identity residual " + fmt(worst_identity)};
}

Outcome projection_equivalence() {
  std::mt19937_64 rng(7);
  int mismatches = 0;
  for (int t = 0; t < 100; ++t) {
    const auto g = test::random_binary_grid(16, rng, 0.02 + 0.3 * (t % 10) / 10.0);
    for (auto axis : {voxel::Axis::x, voxel::Axis::y, voxel::Axis::z}) {
      const auto soft = voxel::soft_project(g, axis);
      const auto hard = voxel::project_orthographic(g, axis);
      const auto oracle = test::or_projection(g, axis);
      for (std::size_t k = 0; k < oracle.size(); ++k) {
        if (soft.values()[k] != hard.values()[k] || hard.values()[k] != oracle[k]) {
          ++mismatches;
          break;
        }
      }
    }
  }
  return {mismatches == 0, "100 grids x 3 axes, mismatches " + std::to_string(mismatches)};
}

Outcome loss_correctness() {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const auto s = test::random_binary_grid(8, rng);
    const auto p = test::random_probability_grid(8, rng);
    worst = std::max(worst, rel(model::bce_loss(s, p), test::bce_mean_oracle({s.values().begin(), s.values().end()},
                                                                             {p.values().begin(), p.values().end()})));
    std::normal_distribution<double> n(0.0, 2.0);
    std::vector<double> mu(16), lv(16);
    for (auto& v : mu) v = n(rng);
    for (auto& v : lv) v = n(rng);
    worst = std::max(worst, rel(model::kl_loss(model::make_posterior(mu, lv)), test::kl_oracle(mu, lv)));

    std::bernoulli_distribution on(0.4);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    std::vector<float> k(64), q(64);
    for (auto& v : k) v = on(rng) ? 1.0f : 0.0f;
    for (auto& v : q) v = u(rng);
    const double mask = model::mask_loss(voxel::Mask2D(voxel::Image2D(8, 8, k), voxel::Occupancy::binary),
                                         voxel::Mask2D(voxel::Image2D(8, 8, q), voxel::Occupancy::probability));
    worst = std::max(worst, rel(mask, 64.0 * test::bce_mean_oracle({k.begin(), k.end()}, {q.begin(), q.end()})));

    std::uniform_real_distribution<double> w(0.0, 60.0);
    const model::LossComponents c{w(rng), w(rng), w(rng), w(rng)};
    const model::LossWeights a{w(rng), w(rng), w(rng), w(rng)};
    const long double oracle = static_cast<long double>(a.alpha1) * c.rec_shape + static_cast<long double>(a.alpha2) * c.kl +
                               static_cast<long double>(a.alpha3) * c.rec_observation + static_cast<long double>(a.alpha4) * c.mask;
    worst = std::max(worst, rel(model::combined_loss(c, a), static_cast<double>(oracle)));
  }
  const double worked = model::combined_loss({0.6931, 0.5, 0.6931, 10.0}, model::LossWeights{});
  return {worst < 1e-6 && std::abs(worked - 69.361) < 1e-3,
          "worst relative error " + fmt(worst) + ", worked example " + fmt(worked, 8)};
}

Outcome gradient_check() {
  bool ok = true;
  std::string detail;
  for (auto v : {model::Variant::topogram_mask, model::Variant::topogram_only, model::Variant::mask_only,
                 model::Variant::no_shape_encoder}) {
    test::GradCheckOptions o;
    o.variant = v;
    o.weights = model::default_weights(v);
    o.richardson = true;
    const auto r = test::gradient_check(o);
    ok = ok && r.checked >= 200 && r.failures.empty();
    detail += std::string(model::to_string(v)) + " n=" + std::to_string(r.checked) + " worst " + fmt(r.worst_relative, 2) + "; ";
  }
  return {ok, detail};
}

std::array<int, 5> expected_shape(int rank, int channels, int size) {
  return rank == 3 ? std::array<int, 5>{1, channels, size, size, size} : std::array<int, 5>{1, channels, 1, size, size};
}

Outcome architecture() {
  int checked = 0;
  std::string problem;
  for (const auto& dims : {model::ModelDims::production(), model::ModelDims::reduced()}) {
    for (const auto& spec : {model::shape_encoder_spec(dims), model::shape_decoder_spec(dims), model::topogram_encoder_spec(dims),
                             model::mask_branch_spec(dims), model::combiner_spec(dims)}) {
      spec.validate();
      model::Network<float> net(spec);
      net.initialize(1);
      const auto in = expected_shape(spec.rank, spec.input_channels, spec.input_size);
      const auto out = net.forward(model::Tensor<float>(in[0], in[1], in[2], in[3], in[4]), model::Mode::eval);
      if (out.shape != expected_shape(spec.rank, spec.output_channels, spec.output_size)) {
        problem += std::string(model::to_string(spec.role)) + " at grid " + std::to_string(dims.grid) + "; ";
      }
      ++checked;
    }
    for (auto v : {model::Variant::topogram_mask, model::Variant::topogram_only, model::Variant::mask_only,
                   model::Variant::no_shape_encoder}) {
      model::ReconstructionModel<float> m({v, dims, voxel::Axis::y});
      m.initialize(2);
      model::Batch<float> b;
      b.topograms = model::image_batch<float>(1, dims.topogram);
      b.masks = model::image_batch<float>(1, dims.mask);
      if (m.predict(b).shape != std::array<int, 5>{1, 1, dims.grid, dims.grid, dims.grid}) {
        problem += std::string(model::to_string(v)) + " prediction at grid " + std::to_string(dims.grid) + "; ";
      }
      ++checked;
    }
  }
  return {problem.empty(), std::to_string(checked) + " networks and models" + (problem.empty() ? "" : ", wrong: " + problem)};
}

std::vector<phantom::ExampleTriple> phantom_cases(int n, std::uint64_t seed, int grid) {
  phantom::SynthesisOptions o;
  o.grid = grid;
  std::vector<phantom::ExampleTriple> out;
  for (int i = 0; i < n; ++i) {
    const std::string id = "p" + std::to_string(i);
    out.push_back(phantom::synthesize_case(id, seed + i, o));
  }
  return out;
}

Outcome overfit() {
  const auto cases = phantom_cases(16, 500, 32);
  const train::InMemoryDataSource src(cases);
  train::DatasetSplit split;
  for (const auto& c : cases) split.train_ids.push_back(c.id);
  bool ok = true;
  std::string detail;
  for (auto v : {model::Variant::topogram_mask, model::Variant::topogram_only, model::Variant::mask_only}) {
    auto cfg = train::default_config(v);
    cfg.dims = model::ModelDims::reduced(8);
    cfg.epochs = 300;
    cfg.batch_size = 2;
    cfg.learning_rate = 1e-3;
    cfg.seed = 1;
    const auto r = train::train(cfg, split, src);
    const auto m = model::restore_model(r.checkpoint);
    const auto report = train::evaluate(m, src, split.train_ids);
    const double l1 = r.log.epochs[0].mean_total, l10 = r.log.epochs[9].mean_total;
    const bool pass = report.aggregate.iou > 0.85 && report.aggregate.volume_error < 0.15 && l10 < l1;
    ok = ok && pass;
    detail += std::string(model::to_string(v)) + " IoU " + fmt(report.aggregate.iou, 3) + " Vf " +
              fmt(report.aggregate.volume_error, 3) + " loss1 " + fmt(l1) + " loss10 " + fmt(l10) + "; ";
  }
  return {ok, detail};
}

Outcome ablation() {
  test::TempDir dir("ablation");
  phantom::SynthesisOptions o;
  o.grid = 32;
  phantom::synthesize_dataset(200, 2024, dir.path(), o);
  const train::DatasetDirectory src(dir.path());
  const auto split = train::split_from_manifest(src.manifest());
  std::vector<train::AblationRun> runs;
  for (auto v : {model::Variant::topogram_mask, model::Variant::topogram_only, model::Variant::mask_only}) {
    auto cfg = train::default_config(v);
    cfg.dims = model::ModelDims::reduced(8);
    cfg.epochs = 150;
    cfg.batch_size = 8;
    cfg.learning_rate = 1e-3;
    cfg.seed = 7;
    runs.push_back({std::string(model::to_string(v)), cfg});
  }
  const auto r = train::run_ablation(runs, split, src);
  const auto& joint = r.reports[0].second.aggregate;
  const auto& topo = r.reports[1].second.aggregate;
  const auto& mask = r.reports[2].second.aggregate;
  const bool iou_order = joint.iou >= topo.iou && topo.iou >= mask.iou;
  const bool vf_order = joint.volume_error <= topo.volume_error && topo.volume_error <= mask.volume_error;
  return {iou_order && vf_order, std::to_string(split.train_ids.size()) + "/" + std::to_string(split.test_ids.size()) +
                                     " split; IoU joint " + fmt(joint.iou, 3) + " topo " + fmt(topo.iou, 3) + " mask " +
                                     fmt(mask.iou, 3) + "; Vf joint " + fmt(joint.volume_error, 3) + " topo " +
                                     fmt(topo.volume_error, 3) + " mask " + fmt(mask.volume_error, 3)};
}

bool edges_shared_twice(const voxel::TriangleMesh& mesh) {
  std::map<std::pair<int, int>, int> edges;
  for (const auto& t : mesh.triangles) {
    for (int e = 0; e < 3; ++e) {
      const int a = t[e], b = t[(e + 1) % 3];
      ++edges[{std::min(a, b), std::max(a, b)}];
    }
  }
  for (const auto& [edge, count] : edges) {
    if (count != 2) return false;
  }
  return !edges.empty();
}

Outcome marching_cubes() {
  std::vector<float> v(512, 0.0f);
  v[3 + 8 * (4 + 8 * 5)] = 1.0f;
  const auto single = voxel::marching_cubes(voxel::VoxelGrid(8, {}, voxel::Occupancy::binary, v), 0.5);
  const voxel::Spacing sp{1.5, 1.5, 1.5};
  const auto ball = voxel::marching_cubes(test::ball_grid(64, 20.0, sp), 0.5);
  const double analytic = 4.0 / 3.0 * std::numbers::pi * 8000.0 * sp.voxel_volume_mm3();
  const double err = std::abs(ball.enclosed_volume_mm3() - analytic) / analytic;
  const bool closed = edges_shared_twice(single) && edges_shared_twice(ball);
  return {closed && err < 0.05, std::string("closed ") + (closed ? "yes" : "no") + ", ball volume error " + fmt(err, 3)};
}

int cli_run(std::vector<std::string> args) {
  args.insert(args.begin(), "t3d");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = voxel::read_file(e.path());
  }
  return out;
}

const char* kTinyConfig = R"({"variant": "topogram+mask", "grid_dim": 16, "topo_dim": 64, "mask_dim": 16,
  "latent_dim": 8, "base_channels": 4, "epochs": 3, "batch_size": 4, "learning_rate": 0.001, "seed": 9})";

Outcome determinism() {
  test::TempDir dir("determinism");
  voxel::write_file(dir / "cfg.json", kTinyConfig);
  std::vector<std::string> differing;
  for (const char* run : {"a", "b"}) {
    const auto r = dir.path() / run;
    if (cli_run({"synth", "--count", "10", "--seed", "4", "--grid", "16", "--fov", "32", "--out", (r / "data").string()}) ||
        cli_run({"train", "--config", (dir / "cfg.json").string(), "--data", (r / "data").string(), "--out",
                 (r / "model.ckpt").string(), "--log", (dir / (std::string(run) + ".log")).string()})) {
      return {false, "synth or train failed"};
    }
    const auto m = phantom::read_manifest(r / "data");
    const auto& c = m.cases.front();
    if (cli_run({"reconstruct", "--ckpt", (r / "model.ckpt").string(), "--topogram", (r / "data" / c.topogram_path).string(),
                 "--mask", (r / "data" / c.mask_path).string(), "--out", (r / "pred").string()}) ||
        cli_run({"eval", "--ckpt", (r / "model.ckpt").string(), "--data", (r / "data").string(), "--split", "all", "--out",
                 (r / "report").string()})) {
      return {false, "reconstruct or eval failed"};
    }
  }
  const auto a = tree_bytes(dir.path() / "a"), b = tree_bytes(dir.path() / "b");
  for (const auto& [name, bytes] : a) {
    if (!b.count(name) || b.at(name) != bytes) differing.push_back(name);
  }
  std::string detail = std::to_string(a.size()) + " files compared";
  for (const auto& d : differing) detail += ", differs: " + d;
  return {differing.empty() && a.size() == b.size() && a.size() > 20, detail};
}

json strip_latency(const std::string& body) {
  auto j = json::parse(body);
  j.erase("latency_ms");
  return j;
}

Outcome service_contract() {
  test::TempDir dir("service");
  const auto cases = phantom_cases(6, 900, 16);
  const train::InMemoryDataSource src(cases);
  fs::create_directories(dir / "models");
  for (auto v : {model::Variant::topogram_mask, model::Variant::topogram_only}) {
    auto cfg = train::default_config(v);
    cfg.dims = {16, 64, 16, 8, 4};
    cfg.epochs = 2;
    cfg.batch_size = 3;
    cfg.learning_rate = 1e-3;
    const auto r = train::train(cfg, {{"p0", "p1", "p2", "p3", "p4"}, {"p5"}, {}}, src);
    model::save_checkpoint(dir / "models" / (v == model::Variant::topogram_mask ? "joint.ckpt" : "topo.ckpt"), r.checkpoint);
  }
  service::ServiceConfig config;
  config.port = 0;
  config.model_dir = dir / "models";
  service::ReconstructionService svc(config);
  const int port = svc.start();
  httplib::Client cli("127.0.0.1", port);
  cli.set_read_timeout(120, 0);
  auto post = [&](const std::string& body) {
    const auto r = cli.Post("/v1/reconstruct", body, "application/json");
    return r ? std::make_pair(r->status, r->body) : std::make_pair(-1, std::string());
  };
  auto request = [&](const std::string& model, int i, bool mask) {
    json j = {{"model_id", model},
              {"topogram", service::base64_encode(voxel::encode_pgm(cases[i].topogram.image(), 65535))}};
    if (mask) j["mask"] = service::base64_encode(voxel::encode_pgm(cases[i].mask.image(), 255));
    return j;
  };

  std::string problem;
  std::vector<std::string> bodies;
  for (int i = 0; i < 16; ++i) bodies.push_back(request(i % 2 ? "topo" : "joint", i % 6, i % 2 == 0).dump());
  std::vector<json> sequential;
  for (const auto& b : bodies) {
    const auto [code, body] = post(b);
    if (code != 200) return {false, "sequential request answered " + std::to_string(code)};
    const auto again = post(b);
    if (again.first != 200 || strip_latency(again.second) != strip_latency(body)) problem += "repeat differs; ";
    sequential.push_back(strip_latency(body));
  }
  std::vector<std::future<std::pair<int, std::string>>> futures;
  for (const auto& b : bodies) {
    futures.push_back(std::async(std::launch::async, [port, b] {
      httplib::Client c("127.0.0.1", port);
      c.set_read_timeout(120, 0);
      const auto r = c.Post("/v1/reconstruct", b, "application/json");
      return r ? std::make_pair(r->status, r->body) : std::make_pair(-1, httplib::to_string(r.error()));
    }));
  }
  int concurrent_mismatch = 0;
  for (std::size_t i = 0; i < futures.size(); ++i) {
    const auto [code, body] = futures[i].get();
    if (code != 200) {
      problem += "concurrent request " + std::to_string(i) + " answered " + std::to_string(code) + " " + body + "; ";
    } else if (strip_latency(body) != sequential[i]) {
      ++concurrent_mismatch;
    }
  }
  if (concurrent_mismatch) problem += std::to_string(concurrent_mismatch) + " concurrent responses differ; ";

  auto bad_threshold = request("topo", 0, false);
  bad_threshold["threshold"] = 2.0;
  auto wrong_size = request("topo", 0, false);
  wrong_size["topogram"] = service::base64_encode(voxel::encode_pgm(voxel::Image2D(8, 8), 255));
  const std::vector<std::pair<std::string, int>> fixtures = {
      {"{\"model_id\": ", 400},
      {json{{"topogram", "AAAA"}}.dump(), 400},
      {bad_threshold.dump(), 400},
      {wrong_size.dump(), 400},
      {request("nonexistent", 0, false).dump(), 404},
      {request("topo", 0, true).dump(), 409},
      {request("joint", 0, false).dump(), 409},
  };
  for (const auto& [body, expected] : fixtures) {
    const int got = post(body).first;
    if (got != expected) problem += "expected " + std::to_string(expected) + " got " + std::to_string(got) + "; ";
  }
  svc.stop();
  return {problem.empty(), "16 requests sequential+concurrent, " + std::to_string(fixtures.size()) + " error fixtures" +
                               (problem.empty() ? "" : "; " + problem)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("acceptance checks");
  bool fast = false;
  std::string only;
  app.add_flag("--fast", fast, "skip the slow suite");
  app.add_option("--only", only, "run a single check by name");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {"metric-oracle", 10, false, metric_oracle},
      {"projection-equivalence", 5, false, projection_equivalence},
      {"loss-correctness", 5, false, loss_correctness},
      {"gradient-check", 300, false, gradient_check},
      {"architecture-shapes", 60, false, architecture},
      {"overfit-convergence", 1800, false, overfit},
      {"ablation", 0, true, ablation},
      {"marching-cubes", 60, false, marching_cubes},
      {"determinism", 0, false, determinism},
      {"service-contract", 120, false, service_contract},
  };

  int failed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && c.name != only) continue;
    if (only.empty() && fast && c.slow) {
      std::printf("SKIP %-24s slow suite; run with --only %s\n", c.name.c_str(), c.name.c_str());
      continue;
    }
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = c.budget_s == 0 || s < c.budget_s;
    const bool pass = o.pass && in_budget;
    failed += !pass;
    std::printf("%s %-24s %s (%.1f s%s)\n", pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(), s,
                in_budget ? "" : ", over budget");
    std::fflush(stdout);
  }
  if (ran == 0) {
    std::fprintf(stderr, "no check named '%s'\n", only.c_str());
    return 2;
  }
  return failed == 0 ? 0 : 1;
}
