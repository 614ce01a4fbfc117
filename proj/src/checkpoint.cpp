#include "baton/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace baton {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'B', 'A', 'T', 'O', 'N', 'C', 'K', '1'};
constexpr uint32_t kVersion = 1;
}  // namespace

void StateMap::put(const std::string& name, Mat value) {
  if (index_.count(name)) throw Error("StateMap: duplicate entry " + name);
  index_[name] = entries_.size();
  entries_.emplace_back(name, std::move(value));
}

void StateMap::put_scalar(const std::string& name, real value) {
  Mat m(1, 1);
  m(0, 0) = value;
  put(name, std::move(m));
}

const Mat& StateMap::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("StateMap: missing entry " + name);
  return entries_[it->second].second;
}

real StateMap::get_scalar(const std::string& name) const {
  const Mat& m = get(name);
  if (m.rows() != 1 || m.cols() != 1) throw DimensionError("StateMap: " + name + " is not scalar");
  return m(0, 0);
}

bool StateMap::contains(const std::string& name) const { return index_.count(name) > 0; }

void save_checkpoint(const std::string& path, const StateMap& state) {
  json manifest = json::array();
  uint64_t offset = 0;
  for (const auto& [name, mat] : state.entries()) {
    manifest.push_back({{"name", name},
                        {"rows", mat.rows()},
                        {"cols", mat.cols()},
                        {"offset", offset}});
    offset += static_cast<uint64_t>(mat.size()) * sizeof(double);
  }
  std::string header = manifest.dump();

  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("checkpoint: cannot open " + tmp);
    out.write(kMagic, sizeof(kMagic));
    uint32_t version = kVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    uint64_t hlen = header.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, mat] : state.entries()) {
      Eigen::MatrixXd m64 = mat.cast<double>();
      out.write(reinterpret_cast<const char*>(m64.data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(m64.size())));
    }
    if (!out) throw Error("checkpoint: write failed on " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

StateMap load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, 8) != std::string(kMagic, 8)) {
    throw Error("checkpoint: bad magic in " + path);
  }
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (version != kVersion) {
    throw Error("checkpoint: unsupported version " + std::to_string(version));
  }
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw Error("checkpoint: truncated header in " + path);
  json manifest = json::parse(header);

  std::streampos data_start = in.tellg();
  StateMap state;
  for (const auto& item : manifest) {
    const std::string name = item.at("name").get<std::string>();
    const Eigen::Index rows = item.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = item.at("cols").get<Eigen::Index>();
    const uint64_t offset = item.at("offset").get<uint64_t>();
    Eigen::MatrixXd m64(rows, cols);
    in.seekg(data_start + static_cast<std::streamoff>(offset));
    in.read(reinterpret_cast<char*>(m64.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(m64.size())));
    if (!in) throw Error("checkpoint: truncated data for " + name);
    state.put(name, m64.cast<real>());
  }
  return state;
}

}  // namespace baton
