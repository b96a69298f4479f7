#include "udock/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

#include "udock/errors.hpp"

namespace udock {

double ImageBuffer::at_clamped(int x, int y, int c) const {
  x = std::clamp(x, 0, width - 1);
  y = std::clamp(y, 0, height - 1);
  return at(x, y, c);
}

ImageBuffer rgb_to_hsv(const ImageBuffer& img) {
  if (img.channels != 3) throw ShapeMismatch("rgb_to_hsv: need 3 channels");
  ImageBuffer out(img.width, img.height, 3, ColorSpace::Hsv);
  const std::size_t n = img.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    const double r = img.data[i];
    const double g = img.data[n + i];
    const double b = img.data[2 * n + i];
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double d = mx - mn;
    double h = 0.0;
    if (d > 0.0) {
      if (mx == r)
        h = std::fmod((g - b) / d, 6.0);
      else if (mx == g)
        h = (b - r) / d + 2.0;
      else
        h = (r - g) / d + 4.0;
      h /= 6.0;
      if (h < 0.0) h += 1.0;
    }
    out.data[i] = h;
    out.data[n + i] = mx > 0.0 ? d / mx : 0.0;
    out.data[2 * n + i] = mx;
  }
  return out;
}

ImageBuffer hsv_to_rgb(const ImageBuffer& img) {
  if (img.channels != 3) throw ShapeMismatch("hsv_to_rgb: need 3 channels");
  ImageBuffer out(img.width, img.height, 3, ColorSpace::Rgb);
  const std::size_t n = img.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    double h = img.data[i];
    const double s = img.data[n + i];
    const double v = img.data[2 * n + i];
    h = h - std::floor(h);  // wrap into [0,1)
    const double h6 = h * 6.0;
    const int sector = std::min(5, static_cast<int>(h6));
    const double f = h6 - sector;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    double r, g, b;
    switch (sector) {
      case 0: r = v; g = t; b = p; break;
      case 1: r = q; g = v; b = p; break;
      case 2: r = p; g = v; b = t; break;
      case 3: r = p; g = q; b = v; break;
      case 4: r = t; g = p; b = v; break;
      default: r = v; g = p; b = q; break;
    }
    out.data[i] = r;
    out.data[n + i] = g;
    out.data[2 * n + i] = b;
  }
  return out;
}

namespace {

std::uint8_t to_byte(double v) {
  const double s = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<std::uint8_t>(s);
}

}  // namespace

void write_pnm(const ImageBuffer& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3)
    throw ShapeMismatch("write_pnm: 1 or 3 channels");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoFailure("cannot open for write: " + path);
  f << (img.channels == 1 ? "P5" : "P6") << "\n"
    << img.width << " " << img.height << "\n255\n";
  const std::size_t n = img.pixel_count();
  std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width) * img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        row[static_cast<std::size_t>(x) * img.channels + c] =
            to_byte(img.data[static_cast<std::size_t>(c) * n +
                             static_cast<std::size_t>(y) * img.width + x]);
      }
    }
    f.write(reinterpret_cast<const char*>(row.data()),
            static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw IoFailure("write failed: " + path);
}

namespace {

int read_pnm_int(std::istream& in) {
  // skips whitespace and '#' comment lines
  int c = in.get();
  while (c == '#' || std::isspace(c)) {
    if (c == '#') {
      while (c != '\n' && c != EOF) c = in.get();
    }
    c = in.get();
  }
  int value = 0;
  bool any = false;
  while (std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw IoFailure("malformed PNM header");
  return value;
}

}  // namespace

ImageBuffer read_pnm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoFailure("cannot open for read: " + path);
  char magic[2];
  f.read(magic, 2);
  if (!f || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6'))
    throw IoFailure("not a binary PGM/PPM: " + path);
  const int channels = magic[1] == '5' ? 1 : 3;
  const int w = read_pnm_int(f);
  const int h = read_pnm_int(f);
  const int maxval = read_pnm_int(f);
  if (maxval != 255) throw IoFailure("unsupported maxval: " + path);
  ImageBuffer img(w, h, channels,
                  channels == 1 ? ColorSpace::Gray : ColorSpace::Rgb);
  const std::size_t n = img.pixel_count();
  std::vector<std::uint8_t> row(static_cast<std::size_t>(w) * channels);
  for (int y = 0; y < h; ++y) {
    f.read(reinterpret_cast<char*>(row.data()),
           static_cast<std::streamsize>(row.size()));
    if (!f) throw IoFailure("truncated PNM: " + path);
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        img.data[static_cast<std::size_t>(c) * n +
                 static_cast<std::size_t>(y) * w + x] =
            row[static_cast<std::size_t>(x) * channels + c] / 255.0;
      }
    }
  }
  return img;
}

}  // namespace udock
