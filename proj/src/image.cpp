// SPDX-License-Identifier: Apache-2.0
#include "metaanchor/image.hpp"

#include <cctype>
#include <fstream>
#include <string>

#include "metaanchor/error.hpp"

namespace metaanchor {

Image Image::blank(std::size_t width, std::size_t height) {
  Image img;
  img.width = width;
  img.height = height;
  img.rgb.assign(width * height * 3, 0);
  return img;
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

std::size_t header_number(std::istream& in, const std::filesystem::path& path, const char* what) {
  const std::string tok = header_token(in);
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
    throw IoError(path.string() + ": bad PPM " + what + " '" + tok + "'");
  }
  return std::stoul(tok);
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  if (header_token(in) != "P6") throw IoError(path.string() + ": not a binary PPM (P6)");
  Image img;
  img.width = header_number(in, path, "width");
  img.height = header_number(in, path, "height");
  const std::size_t maxval = header_number(in, path, "maxval");
  if (maxval != 255) throw IoError(path.string() + ": only maxval 255 is supported");
  if (img.width == 0 || img.height == 0) throw IoError(path.string() + ": empty image");
  img.rgb.resize(img.width * img.height * 3);
  in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.rgb.size())) {
    throw IoError(path.string() + ": truncated pixel data");
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
  if (image.rgb.size() != image.width * image.height * 3) {
    throw ShapeError("image buffer does not match its dimensions");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path.string());
  out << "P6\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()),
            static_cast<std::streamsize>(image.rgb.size()));
  if (!out) throw IoError("failed writing image " + path.string());
}

Tensor image_to_tensor(const Image& image) {
  const std::size_t plane = image.width * image.height;
  std::vector<double> v(3 * plane);
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < 3; ++c) v[c * plane + p] = image.rgb[p * 3 + c] / 255.0;
  }
  return Tensor::from({3, image.height, image.width}, std::move(v));
}

}  // namespace metaanchor
