#pragma once

#include <string>
#include <vector>

namespace glf {

struct ManifestEntry {
  std::string original;  // path to the pristine frame
  std::string recon;     // path to the coded reconstruction
  int qp = 0;
};

/// Dataset manifest: a split tag plus (original, reconstructed, qp) triples.
/// Relative paths are resolved against the manifest file's directory.
struct Manifest {
  std::string split = "train";
  std::vector<ManifestEntry> entries;
};

Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& m, const std::string& path);

Manifest filter_by_qp(const Manifest& m, int qp);

/// Deterministic holdout split: every `every`-th entry (indices every-1,
/// 2*every-1, ...) goes to the second (validation) manifest.
std::pair<Manifest, Manifest> split_holdout(const Manifest& m, int every = 5);

}  // namespace glf
