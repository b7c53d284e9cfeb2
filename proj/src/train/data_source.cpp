#include "t3d/train/data_source.hpp"

#include <set>

#include "t3d/voxel/io.hpp"

namespace t3d::train {

DatasetDirectory::DatasetDirectory(std::filesystem::path dir) : dir_(std::move(dir)), manifest_(phantom::read_manifest(dir_)) {
  for (std::size_t i = 0; i < manifest_.cases.size(); ++i) index_[manifest_.cases[i].id] = i;
}

bool DatasetDirectory::contains(const std::string& id) const { return index_.count(id) > 0; }

ExampleRecord DatasetDirectory::load(const std::string& id, Fields fields) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw InvalidArgument("dataset has no case '" + id + "'");
  const auto& entry = manifest_.cases[it->second];
  ExampleRecord r;
  r.id = id;
  if (fields.shape) r.shape = voxel::read_grid(dir_ / entry.shape_path);
  if (fields.topogram) {
    const auto raw = voxel::read_topogram(dir_ / entry.topogram_path);
    r.topogram = voxel::Topogram(raw.image(), {raw.meta().source_intensity, voxel::axis_from_string(manifest_.axis)});
  }
  if (fields.mask) r.mask = voxel::read_mask(dir_ / entry.mask_path);
  return r;
}

InMemoryDataSource::InMemoryDataSource(std::vector<phantom::ExampleTriple> cases) {
  for (auto& c : cases) {
    const std::string id = c.id;
    if (!cases_.emplace(id, std::move(c)).second) throw InvalidArgument("duplicate case id '" + id + "'");
  }
}

bool InMemoryDataSource::contains(const std::string& id) const { return cases_.count(id) > 0; }

ExampleRecord InMemoryDataSource::load(const std::string& id, Fields fields) const {
  const auto it = cases_.find(id);
  if (it == cases_.end()) throw InvalidArgument("data source has no case '" + id + "'");
  ExampleRecord r;
  r.id = id;
  if (fields.shape) r.shape = it->second.shape;
  if (fields.topogram) r.topogram = it->second.topogram;
  if (fields.mask) r.mask = it->second.mask;
  return r;
}

void DatasetSplit::validate() const {
  if (train_ids.empty()) throw InvalidArgument("split has no training cases");
  if (test_ids.empty()) throw InvalidArgument("split has no test cases");
  std::set<std::string> train(train_ids.begin(), train_ids.end());
  if (train.size() != train_ids.size()) throw InvalidArgument("duplicate id in the training split");
  std::set<std::string> test;
  for (const auto& id : test_ids) {
    if (train.count(id)) throw InvalidArgument("case '" + id + "' is in both splits");
    if (!test.insert(id).second) throw InvalidArgument("duplicate id in the test split");
  }
}

DatasetSplit split_from_manifest(const phantom::Manifest& manifest, const std::filesystem::path& path) {
  DatasetSplit s{manifest.ids("train"), manifest.ids("test"), path};
  s.validate();
  return s;
}

}  // namespace t3d::train
