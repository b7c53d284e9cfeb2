#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "t3d/model/reconstruction_model.hpp"

namespace httplib {
class Server;
}

namespace t3d::service {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  ///< 0 binds an ephemeral port
  std::filesystem::path model_dir;
  int workers = 2;                 ///< simultaneous forward passes
  int queue_timeout_ms = 30000;    ///< wait for a worker before answering 503
  std::string cors_origin = "*";
  std::filesystem::path ui_dir;    ///< optional static files served at /
};

struct LoadedModel {
  std::string id;  ///< checkpoint file stem
  std::filesystem::path path;
  nlohmann::json header;
  std::shared_ptr<const model::ReconstructionModel<float>> model;
};

/// Checkpoints (*.ckpt) of a directory, sorted by id.
std::vector<LoadedModel> scan_models(const std::filesystem::path& dir);

/// One entry of GET /v1/models built from a checkpoint header.
nlohmann::json model_summary(const std::string& id, const nlohmann::json& header);

struct HttpResponse {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// HTTP inference service. Handlers are exposed directly so they can be exercised without sockets.
/// Every request works on an immutable snapshot of the loaded models; only reload() replaces it.
class ReconstructionService {
 public:
  explicit ReconstructionService(ServiceConfig config);
  ~ReconstructionService();
  ReconstructionService(const ReconstructionService&) = delete;
  ReconstructionService& operator=(const ReconstructionService&) = delete;

  const ServiceConfig& config() const { return config_; }

  /// Rescans the model directory. Returns the number of models loaded.
  std::size_t reload();
  std::size_t models_loaded() const;

  HttpResponse reconstruct(const std::string& body) const;
  HttpResponse models() const;
  HttpResponse health() const;

  /// Binds and serves until stop(). Throws IoError when the address cannot be bound.
  void listen();
  /// Binds, then serves on a background thread; returns the bound port.
  int start();
  void stop();

 private:
  using Snapshot = std::vector<LoadedModel>;
  std::shared_ptr<const Snapshot> snapshot() const;
  int bind();
  void configure_routes();

  ServiceConfig config_;
  std::chrono::steady_clock::time_point started_;
  mutable std::mutex mutex_;
  std::shared_ptr<const Snapshot> models_;
  mutable std::counting_semaphore<> slots_;
  std::unique_ptr<httplib::Server> server_;
  std::unique_ptr<std::thread> thread_;
};

}  // namespace t3d::service
