#pragma once

#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ipseg/image.hpp"

namespace ipseg {

/// One line per sample: id TAB image_path TAB mask_path TAB categories.
struct ManifestEntry {
  std::string id;
  std::string image_path;
  std::string mask_path;
  CategorySet categories;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

void write_manifest(std::ostream& out, std::span<const ManifestEntry> entries);
std::vector<ManifestEntry> read_manifest(std::istream& in);

/// Writes images/<id>.ppm, masks/<id>.pgm and <name> under `root`, paths
/// relative to `root`. Returns the manifest path.
std::filesystem::path write_corpus(const std::filesystem::path& root, const std::string& name,
                                   std::span<const Sample> samples);
/// Loads a corpus written by write_corpus; category lists are re-derived
/// from the masks and checked against the manifest.
std::vector<Sample> read_corpus(const std::filesystem::path& manifest_path);

}  // namespace ipseg
