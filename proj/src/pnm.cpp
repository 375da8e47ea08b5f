#include "ipseg/pnm.hpp"

#include <cctype>
#include <fstream>
#include <iterator>

namespace ipseg {
namespace {

struct Header {
  std::string id;
  std::size_t width = 0;
  std::size_t height = 0;
  unsigned maxval = 0;
  std::size_t payload_offset = 0;
};

class HeaderParser {
 public:
  explicit HeaderParser(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  Header parse(char kind) {
    if (bytes_.size() < 2 || bytes_[0] != 'P' || bytes_[1] != static_cast<std::uint8_t>(kind)) {
      throw PnmError(std::string("bad magic, expected P") + kind, 0);
    }
    pos_ = 2;
    Header h;
    h.width = number("width");
    h.height = number("height");
    const std::size_t maxval_at = pos_;
    const std::size_t maxval = number("maxval");
    if (maxval == 0 || maxval > 255) {
      throw PnmError("unsupported maxval " + std::to_string(maxval), maxval_at);
    }
    h.maxval = static_cast<unsigned>(maxval);
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw PnmError("expected single whitespace before payload", pos_);
    }
    h.payload_offset = pos_ + 1;
    h.id = id_;
    return h;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        std::size_t end = pos_ + 1;
        while (end < bytes_.size() && bytes_[end] != '\n') ++end;
        if (!seen_comment_) {
          std::size_t start = pos_ + 1;
          if (start < end && bytes_[start] == ' ') ++start;
          id_.assign(bytes_.begin() + static_cast<std::ptrdiff_t>(start), bytes_.begin() + static_cast<std::ptrdiff_t>(end));
          seen_comment_ = true;
        }
        pos_ = end;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::size_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > (1u << 24)) throw PnmError(std::string(what) + " too large", start);
      ++pos_;
    }
    if (pos_ == start) {
      throw PnmError(std::string("expected ") + what + (pos_ >= bytes_.size() ? " (truncated header)" : ""), pos_);
    }
    return value;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string id_;
  bool seen_comment_ = false;
};

std::vector<std::uint8_t> encode(char kind, const std::string& id, std::size_t w, std::size_t h, unsigned maxval,
                                 std::span<const std::uint8_t> payload) {
  if (id.find('\n') != std::string::npos) throw std::invalid_argument("PNM id must not contain newlines");
  const std::string header = std::string("P") + kind + "\n# " + id + "\n" + std::to_string(w) + " " +
                             std::to_string(h) + "\n" + std::to_string(maxval) + "\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

std::span<const std::uint8_t> payload(std::span<const std::uint8_t> bytes, const Header& h, std::size_t channels) {
  const std::size_t needed = h.width * h.height * channels;
  const std::size_t available = bytes.size() > h.payload_offset ? bytes.size() - h.payload_offset : 0;
  if (available < needed) {
    throw PnmError("truncated payload: expected " + std::to_string(needed) + " bytes, found " +
                       std::to_string(available),
                   h.payload_offset + available);
  }
  auto data = bytes.subspan(h.payload_offset, needed);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i] > h.maxval) {
      throw PnmError("sample " + std::to_string(data[i]) + " exceeds maxval " + std::to_string(h.maxval),
                     h.payload_offset + i);
    }
  }
  return data;
}

}  // namespace

PnmError::PnmError(const std::string& what, std::size_t offset)
    : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}

std::vector<std::uint8_t> encode_ppm(const SceneImage& image) {
  if (image.rgb.size() != image.width * image.height * 3) {
    throw std::invalid_argument("image " + image.id + " has inconsistent pixel buffer");
  }
  return encode('6', image.id, image.width, image.height, 255, image.rgb);
}

SceneImage decode_ppm(std::span<const std::uint8_t> bytes) {
  const Header h = HeaderParser(bytes).parse('6');
  auto data = payload(bytes, h, 3);
  return {h.id, h.width, h.height, {data.begin(), data.end()}};
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height) {
    throw std::invalid_argument("gray image " + image.id + " has inconsistent pixel buffer");
  }
  return encode('5', image.id, image.width, image.height, image.maxval, image.pixels);
}

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  const Header h = HeaderParser(bytes).parse('5');
  auto data = payload(bytes, h, 1);
  return {h.id, h.width, h.height, h.maxval, {data.begin(), data.end()}};
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

void write_ppm(const std::filesystem::path& path, const SceneImage& image) { write_file(path, encode_ppm(image)); }
SceneImage read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }
void write_pgm(const std::filesystem::path& path, const GrayImage& image) { write_file(path, encode_pgm(image)); }
GrayImage read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

}  // namespace ipseg
