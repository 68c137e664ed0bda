#pragma once

// 8-bit raster images and file codecs. OpenCV is used only for decoding and
// encoding; all pixel processing lives on Image.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "affordance/types.hpp"

namespace affordance {

/// Interleaved 8-bit image; 3-channel images are stored RGB.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {
    if (w < 1 || h < 1 || (c != 1 && c != 3)) {
      throw Error(Errc::invalid_argument, "invalid image shape");
    }
  }

  ImageSize size() const { return {width, height}; }
  std::uint8_t& at(int u, int v, int c = 0) {
    return data[(static_cast<std::size_t>(v) * width + u) * channels + c];
  }
  std::uint8_t at(int u, int v, int c = 0) const {
    return data[(static_cast<std::size_t>(v) * width + u) * channels + c];
  }
  std::array<std::uint8_t, 3> rgb(int u, int v) const {
    if (channels == 1) {
      const auto g = at(u, v);
      return {g, g, g};
    }
    return {at(u, v, 0), at(u, v, 1), at(u, v, 2)};
  }
  friend bool operator==(const Image&, const Image&) = default;
};

/// Luma (BT.601) as doubles in [0, 255].
inline Grid<double> to_gray(const Image& image) {
  Grid<double> gray(image.width, image.height);
  for (int v = 0; v < image.height; ++v) {
    for (int u = 0; u < image.width; ++u) {
      if (image.channels == 1) {
        gray.at(u, v) = image.at(u, v);
      } else {
        gray.at(u, v) = 0.299 * image.at(u, v, 0) + 0.587 * image.at(u, v, 1) +
                        0.114 * image.at(u, v, 2);
      }
    }
  }
  return gray;
}

namespace detail {

inline Image from_mat(const cv::Mat& mat) {
  if (mat.depth() != CV_8U) throw Error(Errc::io, "only 8-bit images are supported");
  Image image(mat.cols, mat.rows, mat.channels() == 1 ? 1 : 3);
  for (int v = 0; v < mat.rows; ++v) {
    const std::uint8_t* row = mat.ptr<std::uint8_t>(v);
    for (int u = 0; u < mat.cols; ++u) {
      if (mat.channels() == 1) {
        image.at(u, v) = row[u];
      } else {
        const int c = mat.channels();
        image.at(u, v, 0) = row[u * c + 2];
        image.at(u, v, 1) = row[u * c + 1];
        image.at(u, v, 2) = row[u * c + 0];
      }
    }
  }
  return image;
}

inline cv::Mat to_mat(const Image& image) {
  cv::Mat mat(image.height, image.width, image.channels == 1 ? CV_8UC1 : CV_8UC3);
  for (int v = 0; v < image.height; ++v) {
    std::uint8_t* row = mat.ptr<std::uint8_t>(v);
    for (int u = 0; u < image.width; ++u) {
      if (image.channels == 1) {
        row[u] = image.at(u, v);
      } else {
        row[u * 3 + 0] = image.at(u, v, 2);
        row[u * 3 + 1] = image.at(u, v, 1);
        row[u * 3 + 2] = image.at(u, v, 0);
      }
    }
  }
  return mat;
}

}  // namespace detail

inline Image load_image(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw Error(Errc::io, "image not found: " + path.string());
  }
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw Error(Errc::io, "cannot decode image: " + path.string());
  if (mat.channels() == 4) {
    cv::Mat bgr;
    cv::Mat channels[4];
    cv::split(mat, channels);
    cv::merge(channels, 3, bgr);
    mat = bgr;
  }
  return detail::from_mat(mat);
}

/// Reads only what is needed to know the image dimensions.
inline ImageSize image_size(const std::filesystem::path& path) {
  return load_image(path).size();
}

inline std::vector<std::uint8_t> encode_png(const Image& image) {
  std::vector<std::uint8_t> bytes;
  if (!cv::imencode(".png", detail::to_mat(image), bytes)) {
    throw Error(Errc::io, "PNG encoding failed");
  }
  return bytes;
}

inline void save_image(const std::filesystem::path& path, const Image& image) {
  if (!cv::imwrite(path.string(), detail::to_mat(image))) {
    throw Error(Errc::io, "cannot write image: " + path.string());
  }
}

/// Single-channel part mask: any nonzero pixel is 1.
inline BinaryMask load_mask(const std::filesystem::path& path) {
  const Image image = load_image(path);
  BinaryMask mask(image.width, image.height, 0);
  for (int v = 0; v < image.height; ++v) {
    for (int u = 0; u < image.width; ++u) {
      bool on = false;
      for (int c = 0; c < image.channels; ++c) on = on || image.at(u, v, c) != 0;
      mask.at(u, v) = on ? 1 : 0;
    }
  }
  return mask;
}

inline Image mask_to_image(const BinaryMask& mask) {
  Image image(mask.width(), mask.height(), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) image.data[i] = mask[i] ? 255 : 0;
  return image;
}

}  // namespace affordance
