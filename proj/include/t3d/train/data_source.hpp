#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "t3d/phantom/dataset.hpp"
#include "t3d/voxel/grid.hpp"

namespace t3d::train {

/// Which parts of a case to load.
struct Fields {
  bool shape = true;
  bool topogram = true;
  bool mask = true;
};

struct ExampleRecord {
  std::string id;
  std::optional<voxel::VoxelGrid> shape;
  std::optional<voxel::Topogram> topogram;
  std::optional<voxel::Mask2D> mask;
};

/// Source of examples by id. Implementations must be safe for concurrent const use.
class DataSource {
 public:
  virtual ~DataSource() = default;
  virtual bool contains(const std::string& id) const = 0;
  /// Throws InvalidArgument for an unknown id.
  virtual ExampleRecord load(const std::string& id, Fields fields) const = 0;
};

/// Cases of a synthesized dataset directory, read from disk on demand.
class DatasetDirectory final : public DataSource {
 public:
  explicit DatasetDirectory(std::filesystem::path dir);
  const phantom::Manifest& manifest() const { return manifest_; }
  const std::filesystem::path& dir() const { return dir_; }
  bool contains(const std::string& id) const override;
  ExampleRecord load(const std::string& id, Fields fields) const override;

 private:
  std::filesystem::path dir_;
  phantom::Manifest manifest_;
  std::map<std::string, std::size_t> index_;
};

class InMemoryDataSource final : public DataSource {
 public:
  explicit InMemoryDataSource(std::vector<phantom::ExampleTriple> cases);
  bool contains(const std::string& id) const override;
  ExampleRecord load(const std::string& id, Fields fields) const override;

 private:
  std::map<std::string, phantom::ExampleTriple> cases_;
};

struct DatasetSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::filesystem::path manifest;

  /// Throws InvalidArgument when either list is empty or they share an id.
  void validate() const;
};

DatasetSplit split_from_manifest(const phantom::Manifest& manifest, const std::filesystem::path& path = {});

}  // namespace t3d::train
