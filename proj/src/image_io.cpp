#include "do3d/image_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace do3d {
namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }

  static bool is_space(char c) { return c == ' ' || c == '\n' || c == '\r' || c == '\t'; }

  void skip_space_and_comments(const char* what) {
    const std::size_t start = pos_;
    while (pos_ < bytes_.size()) {
      if (is_space(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
    if (pos_ == start) throw ParseError(std::string("expected whitespace before ") + what, pos_);
  }

  std::string_view token(const char* what) {
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !is_space(bytes_[pos_])) ++pos_;
    if (pos_ == start) throw ParseError(std::string("missing ") + what, start);
    return bytes_.substr(start, pos_ - start);
  }

  int positive_int(const char* what) {
    const std::size_t start = pos_;
    const std::string_view tok = token(what);
    int value = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || value <= 0)
      throw ParseError(std::string("invalid ") + what + " '" + std::string(tok) + "'", start);
    return value;
  }

  double real(const char* what) {
    const std::size_t start = pos_;
    const std::string_view tok = token(what);
    std::istringstream in{std::string(tok)};
    double value = 0.0;
    in >> value;
    if (in.fail() || !in.eof() || !std::isfinite(value))
      throw ParseError(std::string("invalid ") + what + " '" + std::string(tok) + "'", start);
    return value;
  }

  // Exactly one whitespace byte separates the header from the payload.
  void single_space(const char* what) {
    if (pos_ >= bytes_.size() || !is_space(bytes_[pos_]))
      throw ParseError(std::string("expected single whitespace after ") + what, pos_);
    ++pos_;
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t byteswap32(std::uint32_t x) {
  return (x >> 24) | ((x >> 8) & 0x0000ff00u) | ((x << 8) & 0x00ff0000u) | (x << 24);
}

}  // namespace

std::string encode_pfm(const PfmImage& image) {
  if (image.channels != 1 && image.channels != 3) throw ContractError("PFM supports 1 or 3 channels");
  const std::size_t row = static_cast<std::size_t>(image.width) * image.channels;
  if (image.data.size() != row * image.height) throw ContractError("PFM payload size mismatch");
  std::string out = (image.channels == 1 ? "Pf\n" : "PF\n") + std::to_string(image.width) + " " +
                    std::to_string(image.height) + "\n-1.0\n";
  const std::size_t header = out.size();
  out.resize(header + image.data.size() * sizeof(float));
  char* dst = out.data() + header;
  for (int r = image.height - 1; r >= 0; --r) {
    for (std::size_t i = 0; i < row; ++i) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(image.data[r * row + i]);
      if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
      std::memcpy(dst, &bits, 4);
      dst += 4;
    }
  }
  return out;
}

PfmImage decode_pfm(std::string_view bytes) {
  if (bytes.size() < 2) throw ParseError("truncated PFM magic", bytes.size());
  PfmImage img;
  if (bytes.substr(0, 2) == "Pf") {
    img.channels = 1;
  } else if (bytes.substr(0, 2) == "PF") {
    img.channels = 3;
  } else {
    throw ParseError("invalid PFM magic '" + std::string(bytes.substr(0, 2)) + "'", 0);
  }
  HeaderReader reader(bytes);
  if (reader.token("magic").size() != 2) throw ParseError("invalid PFM magic", 0);
  reader.skip_space_and_comments("width");
  img.width = reader.positive_int("width");
  reader.skip_space_and_comments("height");
  img.height = reader.positive_int("height");
  reader.skip_space_and_comments("scale");
  const std::size_t scale_offset = reader.offset();
  const double scale = reader.real("scale");
  if (scale == 0.0) throw ParseError("PFM scale must be nonzero", scale_offset);
  reader.single_space("scale");

  const bool little = scale < 0.0;
  const std::size_t row = static_cast<std::size_t>(img.width) * img.channels;
  const std::size_t count = row * img.height;
  const std::size_t start = reader.offset();
  if (bytes.size() - start < count * 4)
    throw ParseError("truncated PFM payload: need " + std::to_string(count * 4) + " bytes, have " +
                         std::to_string(bytes.size() - start),
                     bytes.size());
  if (bytes.size() - start > count * 4) throw ParseError("trailing bytes after PFM payload", start + count * 4);

  img.data.resize(count);
  const char* src = bytes.data() + start;
  const bool swap = little != (std::endian::native == std::endian::little);
  for (int r = img.height - 1; r >= 0; --r) {
    for (std::size_t i = 0; i < row; ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, src, 4);
      src += 4;
      if (swap) bits = byteswap32(bits);
      img.data[r * row + i] = std::bit_cast<float>(bits);
    }
  }
  return img;
}

std::string write_ppm(const ColorImage& image) {
  std::string out = "P6\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
  out.reserve(out.size() + image.data().size());
  for (double v : image.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("PPM values must lie in [0,1]");
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
  return out;
}

ColorImage read_ppm(std::string_view bytes) {
  if (bytes.size() < 2 || bytes.substr(0, 2) != "P6") throw ParseError("invalid PPM magic", 0);
  HeaderReader reader(bytes);
  if (reader.token("magic").size() != 2) throw ParseError("invalid PPM magic", 0);
  reader.skip_space_and_comments("width");
  const int width = reader.positive_int("width");
  reader.skip_space_and_comments("height");
  const int height = reader.positive_int("height");
  reader.skip_space_and_comments("maxval");
  const std::size_t maxval_offset = reader.offset();
  const int maxval = reader.positive_int("maxval");
  if (maxval != 255) throw ParseError("unsupported PPM maxval " + std::to_string(maxval), maxval_offset);
  reader.single_space("maxval");
  const std::size_t start = reader.offset();
  const std::size_t count = static_cast<std::size_t>(width) * height * 3;
  if (bytes.size() - start < count) throw ParseError("truncated PPM payload", bytes.size());
  ColorImage image(height, width);
  for (std::size_t i = 0; i < count; ++i)
    image.data()[i] = static_cast<unsigned char>(bytes[start + i]) / 255.0;
  return image;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace do3d
