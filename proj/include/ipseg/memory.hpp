#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ipseg/categories.hpp"
#include "ipseg/grid.hpp"

namespace ipseg {

/// Header (width u32 LE, height u32 LE) then rows of bits, MSB first, each
/// row padded to a whole byte.
std::vector<std::uint8_t> pack_mask(const SaliencyMap& mask);
/// Throws std::invalid_argument when the payload length disagrees with the header.
SaliencyMap unpack_mask(std::span<const std::uint8_t> payload);
std::size_t packed_mask_size(std::size_t width, std::size_t height);

/// What the buffer keeps of an image: a reference to it, its image-level
/// labels and the packed salient mask. Pixel annotation is deliberately absent.
struct MemorySample {
  std::size_t image_index = 0;
  std::string image_id;
  CategorySet labels;
  std::vector<std::uint8_t> mask;
  std::size_t source_step = 0;
  std::size_t salient_pixels = 0;

  SaliencyMap saliency() const { return unpack_mask(mask); }
};

MemorySample make_memory_sample(std::size_t image_index, std::string image_id, CategorySet labels,
                                const SaliencyMap& saliency, std::size_t source_step);

struct Shortfall {
  CategoryId category;
  std::size_t missing;
};

struct RebalanceReport {
  std::size_t quota = 0;
  std::vector<Shortfall> shortfalls;
};

class MemoryBuffer {
 public:
  explicit MemoryBuffer(std::size_t capacity = 20) : capacity_(capacity) {}

  std::size_t capacity() const noexcept { return capacity_; }
  std::span<const MemorySample> samples() const noexcept { return samples_; }
  bool empty() const noexcept { return samples_.empty(); }
  std::size_t size() const noexcept { return samples_.size(); }

  /// Reselects the buffer from its current contents plus `candidates`.
  /// Greedy: while some category of `seen` is below floor(capacity / |seen|)
  /// and still has unselected candidates, take the category with the fewest
  /// selected samples (lowest code on ties) and add its candidate with the
  /// most salient pixels (lowest image index on ties). Remaining room is
  /// filled the same way without the quota cap. Categories left below the
  /// quota are reported, not treated as errors. Labels outside `seen` are
  /// dropped; duplicate images merge their labels.
  RebalanceReport rebalance(std::span<const MemorySample> candidates, CategorySet seen);

  /// Number of samples whose labels contain `category`.
  std::size_t count(int category) const;

  /// Writes masks/<id>.bin and a manifest line per sample:
  /// id TAB image_path TAB mask_path TAB bits, bit k-1 for category k up to `categories`.
  void write(const std::filesystem::path& dir, const std::string& image_dir, int categories) const;

 private:
  std::size_t capacity_;
  std::vector<MemorySample> samples_;
};

/// One slot of a training batch.
struct BatchEntry {
  bool from_memory;
  std::size_t index;  // into the buffer or into D_t

  friend bool operator==(const BatchEntry&, const BatchEntry&) = default;
};

/// A single mixed batch: round(mix_ratio * batch_size) uniform draws from the
/// buffer (none when it is empty), the rest uniform draws from D_t without
/// repetition inside the batch.
std::vector<BatchEntry> replay_batch(const MemoryBuffer& buffer, std::size_t current_size, double mix_ratio,
                                     std::size_t batch_size, std::uint64_t seed);

/// An epoch over D_t in shuffled order, each batch topped up with memory
/// draws as in replay_batch. With mix_ratio 1 the epoch has as many
/// memory-only batches as a memory-free epoch would have.
std::vector<std::vector<BatchEntry>> plan_epoch(const MemoryBuffer& buffer, std::size_t current_size,
                                                double mix_ratio, std::size_t batch_size, std::uint64_t seed);

}  // namespace ipseg
