#pragma once

#include <string>
#include <vector>

namespace udock {

enum class ColorSpace { Gray, Rgb, Hsv };

/// Planar raster with samples in [0,1]. Channel c of pixel (x,y) lives at
/// data[c*W*H + y*W + x]. Hue is stored in [0,1) and wraps.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 1;
  ColorSpace color_space = ColorSpace::Gray;
  std::vector<double> data;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c, ColorSpace cs = ColorSpace::Gray)
      : width(w), height(h), channels(c), color_space(cs),
        data(static_cast<std::size_t>(w) * h * c, 0.0) {}

  double& at(int x, int y, int c = 0) {
    return data[static_cast<std::size_t>(c) * width * height +
                static_cast<std::size_t>(y) * width + x];
  }
  double at(int x, int y, int c = 0) const {
    return data[static_cast<std::size_t>(c) * width * height +
                static_cast<std::size_t>(y) * width + x];
  }

  /// Clamped-coordinate read; used by kernels near the border.
  double at_clamped(int x, int y, int c = 0) const;

  bool same_shape(const ImageBuffer& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
};

/// RGB <-> HSV hexcone conversions, channels in [0,1], hue wrapping in [0,1).
ImageBuffer rgb_to_hsv(const ImageBuffer& img);
ImageBuffer hsv_to_rgb(const ImageBuffer& img);

/// Binary PGM (P5, 1 channel) / PPM (P6, 3 channels), maxval 255.
void write_pnm(const ImageBuffer& img, const std::string& path);
ImageBuffer read_pnm(const std::string& path);

}  // namespace udock
