#pragma once

// Seeded synthetic scenes for tests, demos and the bundled mini dataset.

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "affordance/annotation.hpp"
#include "affordance/image.hpp"
#include "affordance/types.hpp"

namespace affordance::synthetic {

/// mt19937_64 with explicitly defined value mappings, so streams do not depend
/// on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi) {  // inclusive
    return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi - lo + 1));
  }
  double normal() {
    // Box-Muller; uniform() can return 0, so shift into (0, 1].
    const double a = 1.0 - uniform();
    const double b = uniform();
    return std::sqrt(-2.0 * std::log(a)) * std::cos(2.0 * 3.14159265358979323846 * b);
  }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

inline constexpr std::uint8_t kSkinRgb[3] = {220, 170, 140};

/// Blurred gray noise in [40, 215]. Gray pixels never pass the chroma skin rule.
inline Image textured_background(int width, int height, Rng& rng, int blur = 1) {
  Grid<double> noise(width, height);
  for (double& x : noise.values()) x = rng.uniform();
  Image out(width, height, 3);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      double sum = 0.0;
      int n = 0;
      for (int dv = -blur; dv <= blur; ++dv) {
        for (int du = -blur; du <= blur; ++du) {
          const int x = std::clamp(u + du, 0, width - 1);
          const int y = std::clamp(v + dv, 0, height - 1);
          sum += noise.at(x, y);
          ++n;
        }
      }
      const auto g = static_cast<std::uint8_t>(std::lround(40.0 + 175.0 * sum / n));
      for (int c = 0; c < 3; ++c) out.at(u, v, c) = g;
    }
  }
  return out;
}

inline void paint_disk(Image& image, Point2D center, double radius, const std::uint8_t rgb[3]) {
  for (int v = 0; v < image.height; ++v) {
    for (int u = 0; u < image.width; ++u) {
      const double du = u - center.u, dv = v - center.v;
      if (du * du + dv * dv <= radius * radius) {
        for (int c = 0; c < image.channels; ++c) image.at(u, v, c) = rgb[c];
      }
    }
  }
}

inline Image crop(const Image& src, int u0, int v0, int width, int height) {
  Image out(width, height, src.channels);
  for (int v = 0; v < height; ++v)
    for (int u = 0; u < width; ++u)
      for (int c = 0; c < src.channels; ++c) out.at(u, v, c) = src.at(u0 + u, v0 + v, c);
  return out;
}

struct SequenceSpec {
  int width = 160;
  int height = 120;
  int observations = 10;
  /// Camera motion per frame; scene content moves by the negative amount.
  int shift_u = 2;
  int shift_v = 0;
  Point2D contact{80.0, 60.0};
  double blob_radius = 5.0;
  std::uint64_t seed = 1;
  std::string id = "seq";
};

struct SyntheticSequence {
  FrameSequence sequence;
  std::map<std::string, Image> frames;
  /// Where the planted contact point lies in o_1.
  Point2D planted_initial;

  ImageLoader loader() const {
    return [this](const std::string& ref) {
      auto it = frames.find(ref);
      if (it == frames.end()) throw Error(Errc::io, "no such frame: " + ref);
      return it->second;
    };
  }
};

/// Camera translating over a textured plane; a skin blob marks the contact
/// point in the contact frame only.
inline SyntheticSequence make_sequence(const SequenceSpec& spec) {
  Rng rng(spec.seed);
  const int n = spec.observations;
  const int pad_u = std::abs(spec.shift_u) * n + 4;
  const int pad_v = std::abs(spec.shift_v) * n + 4;
  const Image world = textured_background(spec.width + 2 * pad_u, spec.height + 2 * pad_v, rng);

  // Frame t (t = 0 is o_1, t = n the contact frame) views the world from
  // offset origin + t * shift.
  auto frame_at = [&](int t) {
    return crop(world, pad_u + spec.shift_u * (t - n / 2), pad_v + spec.shift_v * (t - n / 2), spec.width,
                spec.height);
  };

  SyntheticSequence out;
  out.sequence.id = spec.id;
  out.sequence.contact_frame = spec.id + "/contact.png";
  for (int t = 0; t < n; ++t) {
    const std::string ref = spec.id + "/o" + std::to_string(t + 1) + ".png";
    out.sequence.observations.push_back(ref);
    out.frames[ref] = frame_at(t);
  }
  Image contact = frame_at(n);
  paint_disk(contact, spec.contact, spec.blob_radius, kSkinRgb);
  out.frames[out.sequence.contact_frame] = contact;

  const double r = spec.blob_radius;
  out.sequence.hand_bbox = {spec.contact.u - 3.0 * r, spec.contact.v - 2.0 * r, spec.contact.u + 1.5 * r,
                            spec.contact.v + 2.0 * r};
  out.sequence.object_bbox = {spec.contact.u - 1.5 * r, spec.contact.v - 1.5 * r, spec.contact.u + 4.0 * r,
                              spec.contact.v + 3.0 * r};
  out.planted_initial = {spec.contact.u + static_cast<double>(spec.shift_u) * n,
                         spec.contact.v + static_cast<double>(spec.shift_v) * n};
  return out;
}

}  // namespace affordance::synthetic
