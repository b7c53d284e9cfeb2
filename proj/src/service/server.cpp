#include "t3d/service/server.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <httplib.h>

#include "t3d/model/checkpoint.hpp"
#include "t3d/service/base64.hpp"
#include "t3d/train/evaluate.hpp"
#include "t3d/voxel/io.hpp"
#include "t3d/voxel/marching_cubes.hpp"
#include "t3d/voxel/projection.hpp"

namespace t3d::service {

namespace {

constexpr const char* kCheckpointExtension = ".ckpt";

struct HttpError {
  int status;
  std::string message;
};

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

HttpResponse json_response(int status, const nlohmann::json& j) { return {status, j.dump(), "application/json"}; }

HttpResponse error_response(int status, const std::string& message, const std::string& request_id) {
  nlohmann::json j = {{"error", message}, {"status", status}};
  if (!request_id.empty()) j["request_id"] = request_id;
  return json_response(status, j);
}

voxel::Image2D decode_image_field(const nlohmann::json& request, const char* field) {
  const auto& v = request.at(field);
  if (!v.is_string()) throw HttpError{400, std::string(field) + " must be a base64 string"};
  try {
    return voxel::decode_pgm(base64_decode(v.get<std::string>())).image;
  } catch (const Error& e) {
    throw HttpError{400, std::string(field) + ": " + e.what()};
  }
}

}  // namespace

std::vector<LoadedModel> scan_models(const std::filesystem::path& dir) {
  std::vector<LoadedModel> out;
  if (dir.empty()) return out;
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("model directory " + dir.string() + " does not exist");
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != kCheckpointExtension) continue;
    const auto ckpt = model::load_checkpoint(entry.path());
    LoadedModel m;
    m.id = entry.path().stem().string();
    m.path = entry.path();
    m.header = model::read_checkpoint_header(entry.path());
    m.model = std::make_shared<const model::ReconstructionModel<float>>(model::restore_model(ckpt));
    out.push_back(std::move(m));
  }
  std::sort(out.begin(), out.end(), [](const LoadedModel& a, const LoadedModel& b) { return a.id < b.id; });
  return out;
}

nlohmann::json model_summary(const std::string& id, const nlohmann::json& header) {
  const auto& dims = header.at("model").at("dims");
  return {{"id", id},
          {"variant", header.at("model").at("variant")},
          {"axis", header.at("model").at("axis")},
          {"grid", dims.at("grid")},
          {"topogram", dims.at("topogram")},
          {"mask", dims.at("mask")},
          {"latent", dims.at("latent")},
          {"epoch", header.at("epoch")},
          {"step", header.at("step")},
          {"seed", header.at("seed")},
          {"training", header.value("summary", nlohmann::json::object())}};
}

ReconstructionService::ReconstructionService(ServiceConfig config)
    : config_(std::move(config)),
      started_(std::chrono::steady_clock::now()),
      models_(std::make_shared<const Snapshot>()),
      slots_(std::max(config_.workers, 1)) {
  if (config_.workers <= 0) throw InvalidArgument("worker count must be positive");
  if (config_.queue_timeout_ms < 0) throw InvalidArgument("queue timeout must be nonnegative");
  reload();
}

ReconstructionService::~ReconstructionService() { stop(); }

std::size_t ReconstructionService::reload() {
  auto fresh = std::make_shared<const Snapshot>(scan_models(config_.model_dir));
  std::lock_guard lock(mutex_);
  models_ = fresh;
  return models_->size();
}

std::shared_ptr<const ReconstructionService::Snapshot> ReconstructionService::snapshot() const {
  std::lock_guard lock(mutex_);
  return models_;
}

std::size_t ReconstructionService::models_loaded() const { return snapshot()->size(); }

HttpResponse ReconstructionService::health() const {
  const double uptime = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  return json_response(200, {{"status", "ok"}, {"uptime_s", uptime}, {"models_loaded", models_loaded()}});
}

HttpResponse ReconstructionService::models() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& m : *snapshot()) list.push_back(model_summary(m.id, m.header));
  return json_response(200, list);
}

HttpResponse ReconstructionService::reconstruct(const std::string& body) const {
  const auto start = std::chrono::steady_clock::now();
  std::string request_id = fnv1a_hex(body);
  try {
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw HttpError{400, std::string("request body is not valid JSON: ") + e.what()};
    }
    if (!req.is_object()) throw HttpError{400, "request body must be a JSON object"};
    if (req.contains("request_id")) {
      if (!req["request_id"].is_string()) throw HttpError{400, "request_id must be a string"};
      request_id = req["request_id"].get<std::string>();
    }
    if (!req.contains("model_id") || !req["model_id"].is_string()) throw HttpError{400, "model_id is required"};
    if (!req.contains("topogram")) throw HttpError{400, "topogram is required"};

    std::set<std::string> outputs = {"voxels", "mesh", "projection", "volume"};
    if (req.contains("outputs")) {
      if (!req["outputs"].is_array()) throw HttpError{400, "outputs must be an array"};
      outputs.clear();
      for (const auto& o : req["outputs"]) {
        const std::string name = o.is_string() ? o.get<std::string>() : "";
        if (name != "voxels" && name != "mesh" && name != "projection" && name != "volume") {
          throw HttpError{400, "unknown output '" + (o.is_string() ? name : o.dump()) + "'"};
        }
        outputs.insert(name);
      }
    }
    double threshold = train::kDefaultThreshold;
    if (req.contains("threshold")) {
      if (!req["threshold"].is_number()) throw HttpError{400, "threshold must be a number"};
      threshold = req["threshold"].get<double>();
      if (!(threshold > 0.0 && threshold < 1.0)) throw HttpError{400, "threshold must lie in (0, 1)"};
    }

    const auto models = snapshot();
    const std::string model_id = req["model_id"].get<std::string>();
    const auto it = std::find_if(models->begin(), models->end(), [&](const LoadedModel& m) { return m.id == model_id; });
    if (it == models->end()) throw HttpError{404, "unknown model '" + model_id + "'"};
    const auto& net = *it->model;
    const auto& dims = net.config().dims;
    const auto variant = net.config().variant;

    const voxel::Image2D topo_image = decode_image_field(req, "topogram");
    if (topo_image.width() != dims.topogram || topo_image.height() != dims.topogram) {
      throw HttpError{400, "topogram must be " + std::to_string(dims.topogram) + "x" + std::to_string(dims.topogram)};
    }
    const voxel::Topogram topogram(topo_image, {1.0, net.config().axis});
    std::optional<voxel::Mask2D> mask;
    if (req.contains("mask") && !req["mask"].is_null()) {
      const voxel::Image2D mask_image = decode_image_field(req, "mask");
      if (mask_image.width() != dims.mask || mask_image.height() != dims.mask) {
        throw HttpError{400, "mask must be " + std::to_string(dims.mask) + "x" + std::to_string(dims.mask)};
      }
      mask = voxel::mask_from_image(mask_image);
      if (!mask->is_binary()) throw HttpError{400, "mask must be binary"};
    }
    if (mask && !model::reads_mask(variant)) {
      throw HttpError{409, "model '" + model_id + "' is " + std::string(model::to_string(variant)) + " and does not accept a mask"};
    }
    if (!mask && model::reads_mask(variant)) {
      throw HttpError{409, "model '" + model_id + "' is " + std::string(model::to_string(variant)) + " and requires a mask"};
    }

    voxel::Spacing spacing;
    const auto& summary = it->header.at("summary");
    if (summary.contains("spacing_mm")) {
      const auto& sp = summary.at("spacing_mm");
      spacing = {sp.at(0).get<double>(), sp.at(1).get<double>(), sp.at(2).get<double>()};
    }
    std::optional<voxel::VoxelGrid> prediction;
    {
      if (!slots_.try_acquire_for(std::chrono::milliseconds(config_.queue_timeout_ms))) {
        throw HttpError{503, "all workers busy; timed out after " + std::to_string(config_.queue_timeout_ms) + " ms"};
      }
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{slots_};
      prediction = train::predict(net, model::reads_topogram(variant) ? &topogram : nullptr, mask ? &*mask : nullptr, spacing);
    }
    for (float v : prediction->values()) {
      if (!std::isfinite(v)) throw HttpError{500, "model produced a non-finite output"};
    }

    const auto binary = voxel::binarize(*prediction, threshold);
    const auto volume = voxel::voxel_volume(binary);
    nlohmann::json res = {{"model_id", model_id},
                          {"request_id", request_id},
                          {"variant", model::to_string(variant)},
                          {"threshold", threshold},
                          {"volume_ml", volume.milliliters},
                          {"voxel_count", volume.count}};
    if (outputs.count("voxels")) res["voxels"] = base64_encode(voxel::encode_grid(*prediction));
    if (outputs.count("mesh")) res["mesh"] = voxel::encode_obj(voxel::marching_cubes(*prediction, threshold));
    if (outputs.count("projection")) {
      const auto proj = voxel::project_orthographic(binary, net.config().axis);
      res["projection"] = base64_encode(voxel::encode_pgm(proj.image(), 255));
    }
    res["latency_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return json_response(200, res);
  } catch (const HttpError& e) {
    return error_response(e.status, e.message, request_id);
  } catch (const train::VariantMismatch& e) {
    return error_response(409, e.what(), request_id);
  } catch (const DimensionMismatch& e) {
    return error_response(400, e.what(), request_id);
  } catch (const std::exception& e) {
    return error_response(500, e.what(), request_id);
  }
}

void ReconstructionService::configure_routes() {
  server_ = std::make_unique<httplib::Server>();
  auto& s = *server_;
  const int pool = std::max(config_.workers, 1) + 8;
  s.new_task_queue = [pool] { return new httplib::ThreadPool(static_cast<std::size_t>(pool)); };
  s.set_socket_options([](int sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  s.set_default_headers({{"Access-Control-Allow-Origin", config_.cors_origin},
                         {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                         {"Access-Control-Allow-Headers", "Content-Type"}});
  auto send = [](httplib::Response& res, const HttpResponse& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  s.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  s.Post("/v1/reconstruct", [this, send](const httplib::Request& req, httplib::Response& res) { send(res, reconstruct(req.body)); });
  s.Get("/v1/models", [this, send](const httplib::Request&, httplib::Response& res) { send(res, models()); });
  s.Get("/v1/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
  s.Post("/v1/admin/reload", [this, send](const httplib::Request&, httplib::Response& res) {
    try {
      send(res, json_response(200, {{"models_loaded", reload()}}));
    } catch (const std::exception& e) {
      send(res, error_response(500, e.what(), ""));
    }
  });
  if (!config_.ui_dir.empty() && !s.set_mount_point("/", config_.ui_dir.string())) {
    throw IoError("ui directory " + config_.ui_dir.string() + " does not exist");
  }
}

int ReconstructionService::bind() {
  configure_routes();
  int port = config_.port;
  if (port == 0) {
    port = server_->bind_to_any_port(config_.host);
  } else if (!server_->bind_to_port(config_.host, port)) {
    port = -1;
  }
  if (port < 0) throw IoError("cannot listen on " + config_.host + ":" + std::to_string(config_.port));
  return port;
}

void ReconstructionService::listen() {
  bind();
  server_->listen_after_bind();
}

int ReconstructionService::start() {
  const int port = bind();
  thread_ = std::make_unique<std::thread>([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port;
}

void ReconstructionService::stop() {
  if (server_) server_->stop();
  if (thread_ && thread_->joinable()) thread_->join();
  thread_.reset();
}

}  // namespace t3d::service
