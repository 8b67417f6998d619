#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "do3d/grid.hpp"

namespace do3d {

/// Raw Portable Float Map contents in top-to-bottom row order.
struct PfmImage {
  int width = 0;
  int height = 0;
  int channels = 1;  // 1 ("Pf") or 3 ("PF")
  std::vector<float> data;
};

/// Serializes as little-endian (negative scale) with bottom-to-top rows.
std::string encode_pfm(const PfmImage& image);
/// Accepts both byte orders. Throws ParseError naming the failing offset.
PfmImage decode_pfm(std::string_view bytes);

template <typename G>
PfmImage to_pfm(const G& field) {
  static_assert(G::kChannels >= 1 && G::kChannels <= 3, "PFM stores 1 or 3 channels");
  PfmImage img;
  img.width = field.width();
  img.height = field.height();
  img.channels = G::kChannels == 1 ? 1 : 3;
  img.data.assign(field.pixel_count() * img.channels, 0.0f);
  for (std::size_t i = 0; i < field.pixel_count(); ++i)
    for (int c = 0; c < G::kChannels; ++c)
      img.data[i * img.channels + c] = static_cast<float>(field.data()[i * G::kChannels + c]);
  return img;
}

/// Converts decoded PFM data into a grid; a two-channel grid takes the first
/// two channels of a three-channel file.
template <typename G>
G from_pfm(const PfmImage& img) {
  const int want = G::kChannels == 1 ? 1 : 3;
  if (img.channels != want)
    throw ContractError("PFM has " + std::to_string(img.channels) + " channels, expected " +
                        std::to_string(want));
  G field(img.height, img.width);
  for (std::size_t i = 0; i < field.pixel_count(); ++i)
    for (int c = 0; c < G::kChannels; ++c)
      field.data()[i * G::kChannels + c] = img.data[i * img.channels + c];
  return field;
}

template <typename G>
std::string write_pfm(const G& field) {
  return encode_pfm(to_pfm(field));
}

template <typename G>
G read_pfm(std::string_view bytes) {
  return from_pfm<G>(decode_pfm(bytes));
}

/// Binary P6, maxval 255; each channel stored as round(v * 255).
std::string write_ppm(const ColorImage& image);
/// Decodes bytes b to b / 255. Rejects any maxval other than 255.
ColorImage read_ppm(std::string_view bytes);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace do3d
