#include "glf/manifest.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "glf/tensor.hpp"

namespace glf {

namespace fs = std::filesystem;

Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path + ": cannot open");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": invalid JSON: " + e.what());
  }
  Manifest m;
  try {
    m.split = j.at("split").get<std::string>();
    const fs::path base = fs::path(path).parent_path();
    for (const auto& je : j.at("entries")) {
      ManifestEntry e;
      e.original = je.at("original").get<std::string>();
      e.recon = je.at("recon").get<std::string>();
      e.qp = je.at("qp").get<int>();
      auto resolve = [&](const std::string& p) {
        return fs::path(p).is_absolute() ? p : (base / p).string();
      };
      e.original = resolve(e.original);
      e.recon = resolve(e.recon);
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": manifest schema error: " + e.what());
  }
  if (m.split != "train" && m.split != "val")
    throw IoError(path + ": split must be \"train\" or \"val\", got \"" + m.split + "\"");
  return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
  nlohmann::json j;
  j["split"] = m.split;
  j["entries"] = nlohmann::json::array();
  const fs::path base = fs::path(path).parent_path();
  for (const ManifestEntry& e : m.entries) {
    // Store paths relative to the manifest when possible so the dataset
    // directory stays relocatable.
    auto relativize = [&](const std::string& p) {
      std::error_code ec;
      const fs::path rel = fs::relative(p, base.empty() ? "." : base, ec);
      return ec || rel.empty() ? p : rel.string();
    };
    j["entries"].push_back({{"original", relativize(e.original)},
                            {"recon", relativize(e.recon)},
                            {"qp", e.qp}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << j.dump(2) << "\n";
}

Manifest filter_by_qp(const Manifest& m, int qp) {
  Manifest out;
  out.split = m.split;
  for (const ManifestEntry& e : m.entries)
    if (e.qp == qp) out.entries.push_back(e);
  return out;
}

std::pair<Manifest, Manifest> split_holdout(const Manifest& m, int every) {
  if (every < 2) throw ConfigError("split_holdout: every must be >= 2");
  Manifest train, val;
  train.split = "train";
  val.split = "val";
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    if ((i + 1) % static_cast<std::size_t>(every) == 0)
      val.entries.push_back(m.entries[i]);
    else
      train.entries.push_back(m.entries[i]);
  }
  return {std::move(train), std::move(val)};
}

}  // namespace glf
