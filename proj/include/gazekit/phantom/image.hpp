#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <string>
#include <vector>

#include "gazekit/error.hpp"

namespace gazekit::phantom {

/// Grayscale image, row-major, values nominally in [0, 1]. Pixel (x, y) covers
/// [x, x+1) x [y, y+1); its centre is (x + 0.5, y + 0.5).
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), pixels(w * h, fill) {}

  double& operator()(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  double operator()(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }

  double mean() const {
    double s = 0.0;
    for (double v : pixels) s += v;
    return pixels.empty() ? 0.0 : s / static_cast<double>(pixels.size());
  }

  friend bool operator==(const Image&, const Image&) = default;
};

namespace detail {

// Row-stochastic overlap weights mapping `src` cells onto `dst` equal-width bins.
struct AreaWeights {
  std::vector<std::size_t> first;
  std::vector<std::vector<double>> weights;
};

inline AreaWeights area_weights(std::size_t src, std::size_t dst) {
  AreaWeights w;
  w.first.resize(dst);
  w.weights.resize(dst);
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  for (std::size_t j = 0; j < dst; ++j) {
    const double lo = static_cast<double>(j) * scale, hi = static_cast<double>(j + 1) * scale;
    const auto i0 = static_cast<std::size_t>(std::floor(lo));
    const auto i1 = std::min(src, static_cast<std::size_t>(std::ceil(hi)));
    w.first[j] = i0;
    for (std::size_t i = i0; i < i1; ++i) {
      const double overlap = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
      w.weights[j].push_back(std::max(0.0, overlap) / scale);
    }
  }
  return w;
}

}  // namespace detail

/// Resampling by exact pixel-area relation: each output pixel is the mean of the
/// input area it covers, with fractional overlaps weighted by area.
inline Image area_resample(const Image& in, std::size_t out_w, std::size_t out_h) {
  require(out_w > 0 && out_h > 0 && in.width > 0 && in.height > 0, ErrorKind::Parameter,
          "area_resample needs non-empty sizes");
  const auto wx = detail::area_weights(in.width, out_w);
  const auto wy = detail::area_weights(in.height, out_h);
  Image tmp(out_w, in.height);
  for (std::size_t y = 0; y < in.height; ++y)
    for (std::size_t j = 0; j < out_w; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < wx.weights[j].size(); ++k) acc += wx.weights[j][k] * in(wx.first[j] + k, y);
      tmp(j, y) = acc;
    }
  Image out(out_w, out_h);
  for (std::size_t i = 0; i < out_h; ++i)
    for (std::size_t x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < wy.weights[i].size(); ++k) acc += wy.weights[i][k] * tmp(x, wy.first[i] + k);
      out(x, i) = acc;
    }
  return out;
}

/// Bilinear sample at continuous image coordinates, clamping at the border.
inline double bilinear(const Image& img, double x, double y) {
  const double fx = std::clamp(x - 0.5, 0.0, static_cast<double>(img.width - 1));
  const double fy = std::clamp(y - 0.5, 0.0, static_cast<double>(img.height - 1));
  const auto x0 = static_cast<std::size_t>(fx), y0 = static_cast<std::size_t>(fy);
  const std::size_t x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const double ax = fx - static_cast<double>(x0), ay = fy - static_cast<double>(y0);
  const double top = img(x0, y0) * (1.0 - ax) + img(x1, y0) * ax;
  const double bottom = img(x0, y1) * (1.0 - ax) + img(x1, y1) * ax;
  return top * (1.0 - ay) + bottom * ay;
}

/// Separable Gaussian blur with a 3-sigma kernel and clamped borders.
inline Image gaussian_blur(const Image& in, double sigma) {
  require(sigma >= 0.0, ErrorKind::Parameter, "blur sigma must be >= 0");
  if (sigma == 0.0) return in;
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i)
    sum += kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
  for (double& k : kernel) k /= sum;

  const auto w = static_cast<std::ptrdiff_t>(in.width), h = static_cast<std::ptrdiff_t>(in.height);
  auto clampi = [](std::ptrdiff_t v, std::ptrdiff_t hi) { return std::clamp<std::ptrdiff_t>(v, 0, hi - 1); };
  Image tmp(in.width, in.height), out(in.width, in.height);
  for (std::ptrdiff_t y = 0; y < h; ++y)
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               in.pixels[static_cast<std::size_t>(y * w + clampi(x + i, w))];
      tmp.pixels[static_cast<std::size_t>(y * w + x)] = acc;
    }
  for (std::ptrdiff_t y = 0; y < h; ++y)
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] *
               tmp.pixels[static_cast<std::size_t>(clampi(y + i, h) * w + x)];
      out.pixels[static_cast<std::size_t>(y * w + x)] = acc;
    }
  return out;
}

/// Binary 8-bit PGM; values are clamped to [0, 1] and scaled to 0..255.
inline void write_pgm(const std::string& path, const Image& img) {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorKind::Io, "cannot write " + path);
  f << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  for (double v : img.pixels) {
    const auto b = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    f.put(static_cast<char>(b));
  }
}

}  // namespace gazekit::phantom
