#include "ipseg/manifest.hpp"

#include <fstream>
#include <stdexcept>

#include "ipseg/pnm.hpp"

namespace ipseg {

void write_manifest(std::ostream& out, std::span<const ManifestEntry> entries) {
  for (const auto& e : entries) {
    out << e.id << '\t' << e.image_path << '\t' << e.mask_path << '\t' << e.categories.to_string() << '\n';
  }
}

std::vector<ManifestEntry> read_manifest(std::istream& in) {
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4) {
      throw std::runtime_error("manifest line " + std::to_string(line_number) + ": expected 4 fields, got " +
                               std::to_string(fields.size()));
    }
    out.push_back({fields[0], fields[1], fields[2], CategorySet::parse(fields[3])});
  }
  return out;
}

std::filesystem::path write_corpus(const std::filesystem::path& root, const std::string& name,
                                   std::span<const Sample> samples) {
  std::vector<ManifestEntry> entries;
  for (const Sample& s : samples) {
    ManifestEntry e{s.image.id, "images/" + s.image.id + ".ppm", "masks/" + s.image.id + ".pgm", s.categories};
    write_ppm(root / e.image_path, s.image);
    write_pgm(root / e.mask_path, to_gray(s.truth, s.image.id));
    entries.push_back(std::move(e));
  }
  const auto path = root / name;
  std::ofstream out(path);
  write_manifest(out, entries);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return path;
}

std::vector<Sample> read_corpus(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open " + manifest_path.string());
  const auto root = manifest_path.parent_path();
  std::vector<Sample> out;
  for (const auto& e : read_manifest(in)) {
    Sample s;
    s.image = read_ppm(root / e.image_path);
    const GrayImage mask = read_pgm(root / e.mask_path);
    if (mask.width != s.image.width || mask.height != s.image.height) {
      throw std::runtime_error("mask of " + e.id + " does not match its image");
    }
    s.truth = GroundTruthMap(mask.width, mask.height, mask.pixels);
    for (std::uint8_t code : s.truth.values()) {
      if (code != codes::kBackground) s.categories.insert(code);
    }
    if (s.categories != e.categories) {
      throw std::runtime_error("manifest categories of " + e.id + " disagree with its mask");
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace ipseg
