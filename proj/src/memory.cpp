#include "ipseg/memory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include "ipseg/pnm.hpp"
#include "ipseg/rng.hpp"

namespace ipseg {

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::size_t packed_mask_size(std::size_t width, std::size_t height) { return 8 + height * ((width + 7) / 8); }

std::vector<std::uint8_t> pack_mask(const SaliencyMap& mask) {
  const std::size_t w = mask.width();
  const std::size_t h = mask.height();
  if (w > UINT32_MAX || h > UINT32_MAX) throw std::invalid_argument("mask too large to pack");
  const std::size_t stride = (w + 7) / 8;
  std::vector<std::uint8_t> out;
  out.reserve(packed_mask_size(w, h));
  put_u32(out, static_cast<std::uint32_t>(w));
  put_u32(out, static_cast<std::uint32_t>(h));
  out.resize(packed_mask_size(w, h), 0);
  for (std::size_t y = 0; y < h; ++y) {
    std::uint8_t* row = out.data() + 8 + y * stride;
    for (std::size_t x = 0; x < w; ++x) {
      if (mask.at(x, y) != 0) row[x / 8] |= static_cast<std::uint8_t>(0x80u >> (x % 8));
    }
  }
  return out;
}

SaliencyMap unpack_mask(std::span<const std::uint8_t> payload) {
  if (payload.size() < 8) {
    throw std::invalid_argument("packed mask shorter than its 8-byte header (" + std::to_string(payload.size()) +
                                " bytes)");
  }
  const std::size_t w = get_u32(payload, 0);
  const std::size_t h = get_u32(payload, 4);
  const std::size_t expected = packed_mask_size(w, h);
  if (payload.size() != expected) {
    throw std::invalid_argument("packed " + std::to_string(w) + "x" + std::to_string(h) + " mask needs " +
                                std::to_string(expected) + " bytes, got " + std::to_string(payload.size()));
  }
  const std::size_t stride = (w + 7) / 8;
  SaliencyMap mask(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    const std::uint8_t* row = payload.data() + 8 + y * stride;
    for (std::size_t x = 0; x < w; ++x) mask.at(x, y) = (row[x / 8] >> (7 - x % 8)) & 1u;
  }
  return mask;
}

MemorySample make_memory_sample(std::size_t image_index, std::string image_id, CategorySet labels,
                                const SaliencyMap& saliency, std::size_t source_step) {
  MemorySample s;
  s.image_index = image_index;
  s.image_id = std::move(image_id);
  s.labels = labels;
  s.mask = pack_mask(saliency);
  s.source_step = source_step;
  s.salient_pixels = static_cast<std::size_t>(std::count(saliency.values().begin(), saliency.values().end(), 1));
  return s;
}

std::size_t MemoryBuffer::count(int category) const {
  return static_cast<std::size_t>(
      std::count_if(samples_.begin(), samples_.end(), [&](const MemorySample& s) { return s.labels.contains(category); }));
}

RebalanceReport MemoryBuffer::rebalance(std::span<const MemorySample> candidates, CategorySet seen) {
  // Pool keyed by image index so an image offered twice is one candidate.
  std::map<std::size_t, MemorySample> pool;
  auto offer = [&](const MemorySample& s) {
    auto [it, inserted] = pool.emplace(s.image_index, s);
    if (!inserted) {
      it->second.labels = it->second.labels | s.labels;
      if (s.source_step > it->second.source_step) {
        it->second.source_step = s.source_step;
        it->second.mask = s.mask;
        it->second.salient_pixels = s.salient_pixels;
      }
    }
  };
  for (const MemorySample& s : samples_) offer(s);
  for (const MemorySample& s : candidates) offer(s);

  std::vector<MemorySample> remaining;
  for (auto& [index, s] : pool) {
    s.labels = s.labels & seen;
    remaining.push_back(std::move(s));
  }

  RebalanceReport report;
  const auto categories = seen.members();
  report.quota = categories.empty() ? 0 : capacity_ / categories.size();
  std::map<CategoryId, std::size_t> counts;
  for (CategoryId c : categories) counts[c] = 0;

  std::vector<MemorySample> selected;
  auto better = [](const MemorySample& a, const MemorySample& b) {
    if (a.salient_pixels != b.salient_pixels) return a.salient_pixels > b.salient_pixels;
    return a.image_index < b.image_index;
  };
  while (selected.size() < capacity_ && !remaining.empty()) {
    // Most deficient category that some remaining candidate can still raise.
    int target = -1;
    bool below_quota = false;
    for (CategoryId c : categories) {
      const bool available = std::any_of(remaining.begin(), remaining.end(),
                                         [&](const MemorySample& s) { return s.labels.contains(c); });
      if (!available) continue;
      const bool below = counts[c] < report.quota;
      const bool better_target = target < 0 || (below && !below_quota) ||
                                 (below == below_quota && counts[c] < counts[static_cast<CategoryId>(target)]);
      if (better_target) {
        target = c;
        below_quota = below;
      }
    }
    std::size_t pick = remaining.size();
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      if (target >= 0 && !remaining[i].labels.contains(target)) continue;
      if (pick == remaining.size() || better(remaining[i], remaining[pick])) pick = i;
    }
    for (CategoryId c : remaining[pick].labels.members()) ++counts[c];
    selected.push_back(std::move(remaining[pick]));
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  samples_ = std::move(selected);
  for (CategoryId c : categories) {
    if (counts[c] < report.quota) report.shortfalls.push_back({c, report.quota - counts[c]});
  }
  return report;
}

void MemoryBuffer::write(const std::filesystem::path& dir, const std::string& image_dir, int categories) const {
  std::filesystem::create_directories(dir / "masks");
  std::ofstream manifest(dir / "buffer.tsv");
  for (const MemorySample& s : samples_) {
    const std::string mask_path = "masks/" + s.image_id + ".bin";
    write_file(dir / mask_path, s.mask);
    std::string bits;
    for (int c = 1; c <= categories; ++c) bits.push_back(s.labels.contains(c) ? '1' : '0');
    manifest << s.image_id << '\t' << image_dir << '/' << s.image_id << ".ppm\t" << mask_path << '\t' << bits << '\n';
  }
  if (!manifest) throw std::runtime_error("cannot write buffer manifest in " + dir.string());
}

namespace {

std::size_t memory_slots(const MemoryBuffer& buffer, double mix_ratio, std::size_t batch_size) {
  if (!(mix_ratio >= 0.0 && mix_ratio <= 1.0)) throw std::invalid_argument("mix ratio must lie in [0, 1]");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
  if (buffer.empty()) return 0;
  return static_cast<std::size_t>(std::lround(mix_ratio * static_cast<double>(batch_size)));
}

}  // namespace

std::vector<BatchEntry> replay_batch(const MemoryBuffer& buffer, std::size_t current_size, double mix_ratio,
                                     std::size_t batch_size, std::uint64_t seed) {
  const std::size_t from_memory = memory_slots(buffer, mix_ratio, batch_size);
  Rng rng(seed);
  std::vector<BatchEntry> out;
  for (std::size_t i = 0; i < from_memory; ++i) out.push_back({true, rng.below(buffer.size())});
  std::vector<std::size_t> order(current_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng.engine());
  for (std::size_t i = 0; i < batch_size - from_memory && i < order.size(); ++i) out.push_back({false, order[i]});
  return out;
}

std::vector<std::vector<BatchEntry>> plan_epoch(const MemoryBuffer& buffer, std::size_t current_size,
                                                double mix_ratio, std::size_t batch_size, std::uint64_t seed) {
  const std::size_t from_memory = memory_slots(buffer, mix_ratio, batch_size);
  const std::size_t from_current = batch_size - from_memory;
  Rng rng(seed);
  std::vector<std::size_t> order(current_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng.engine());
  const std::size_t per_batch = from_current > 0 ? from_current : batch_size;
  const std::size_t batches = (current_size + per_batch - 1) / per_batch;
  std::vector<std::vector<BatchEntry>> out(batches);
  for (std::size_t b = 0; b < batches; ++b) {
    for (std::size_t i = 0; i < from_memory; ++i) out[b].push_back({true, rng.below(buffer.size())});
    for (std::size_t i = b * from_current; i < std::min(current_size, (b + 1) * from_current); ++i) {
      out[b].push_back({false, order[i]});
    }
  }
  return out;
}

}  // namespace ipseg
