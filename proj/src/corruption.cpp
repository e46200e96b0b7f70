#include <cmath>
#include <numbers>

#include "nsl/assurance.hpp"

namespace nsl {

std::string to_string(CorruptionKind kind) {
  switch (kind) {
    case CorruptionKind::gaussian_noise: return "gaussian-noise";
    case CorruptionKind::rotation: return "rotation";
    case CorruptionKind::occlusion: return "occlusion";
    case CorruptionKind::brightness: return "brightness";
  }
  return "?";
}

CorruptionKind corruption_kind(const std::string& name) {
  for (auto k : corruption_suite())
    if (to_string(k) == name) return k;
  throw MetricError("unknown corruption '" + name + "' (gaussian-noise, rotation, occlusion, brightness)");
}

const std::vector<CorruptionKind>& corruption_suite() {
  static const std::vector<CorruptionKind> all{CorruptionKind::gaussian_noise, CorruptionKind::rotation,
                                               CorruptionKind::occlusion, CorruptionKind::brightness};
  return all;
}

double CorruptionConfig::level() const {
  if (magnitude) return *magnitude;
  static const double sigma[] = {0.04, 0.08, 0.12, 0.18, 0.26};
  static const double degrees[] = {10, 20, 30, 45, 60};
  static const double patch[] = {0.2, 0.3, 0.4, 0.5, 0.6};
  static const double shift[] = {0.1, 0.2, 0.3, 0.4, 0.5};
  const auto s = static_cast<std::size_t>(severity - 1);
  switch (kind) {
    case CorruptionKind::gaussian_noise: return sigma[s];
    case CorruptionKind::rotation: return degrees[s];
    case CorruptionKind::occlusion: return patch[s];
    case CorruptionKind::brightness: return shift[s];
  }
  return 0;
}

void CorruptionConfig::check() const {
  if (severity < 1 || severity > 5) throw MetricError("corruption severity must be in 1..5");
  if (magnitude && !std::isfinite(*magnitude)) throw MetricError("corruption magnitude must be finite");
}

ImageShape image_shape(std::size_t dim) {
  for (std::size_t c = 1; c <= 4; ++c) {
    if (dim % c) continue;
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(dim / c))));
    if (side > 1 && side * side * c == dim) return {c, side, side};
  }
  return {1, 1, dim};
}

namespace {

using Plane = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void rotate_plane(Plane img, double degrees) {
  const Eigen::MatrixXd src = img;
  const auto h = src.rows(), w = src.cols();
  const double quarter = degrees / 90.0;
  if (std::abs(quarter - std::round(quarter)) < 1e-12) {
    // exact permutation, counter-clockwise
    const int q = static_cast<int>(((std::llround(quarter) % 4) + 4) % 4);
    for (Eigen::Index r = 0; r < h; ++r)
      for (Eigen::Index c = 0; c < w; ++c) {
        switch (q) {
          case 0: img(r, c) = src(r, c); break;
          case 1: img(r, c) = src(c, w - 1 - r); break;
          case 2: img(r, c) = src(h - 1 - r, w - 1 - c); break;
          case 3: img(r, c) = src(h - 1 - c, r); break;
        }
      }
    return;
  }
  const double th = degrees * std::numbers::pi / 180.0, cs = std::cos(th), sn = std::sin(th);
  const double cy = (static_cast<double>(h) - 1) / 2, cx = (static_cast<double>(w) - 1) / 2;
  auto at = [&](Eigen::Index r, Eigen::Index c) { return r < 0 || c < 0 || r >= h || c >= w ? 0.0 : src(r, c); };
  for (Eigen::Index r = 0; r < h; ++r)
    for (Eigen::Index c = 0; c < w; ++c) {
      // inverse map: where did this output pixel come from
      const double dy = static_cast<double>(r) - cy, dx = static_cast<double>(c) - cx;
      const double sy = cy + cs * dy - sn * dx, sx = cx + sn * dy + cs * dx;
      const auto y0 = static_cast<Eigen::Index>(std::floor(sy)), x0 = static_cast<Eigen::Index>(std::floor(sx));
      const double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
      img(r, c) = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) + fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
    }
}

}  // namespace

Sample corrupt(const Sample& sample, const CorruptionConfig& config, std::uint64_t stream) {
  config.check();
  Sample out = sample;
  Eigen::MatrixXd& x = out.features;
  const double level = config.level();
  Rng rng(config.seed * 0xD1B54A32D192ED03ULL + stream);
  const auto shape = image_shape(static_cast<std::size_t>(x.rows()));
  const auto plane = static_cast<Eigen::Index>(shape.height * shape.width);

  for (Eigen::Index s = 0; s < x.cols(); ++s) {
    double* col = x.col(s).data();
    switch (config.kind) {
      case CorruptionKind::gaussian_noise:
        // the draws do not depend on the level, so distortion grows with it
        for (Eigen::Index i = 0; i < x.rows(); ++i) col[i] += level * rng.normal();
        break;
      case CorruptionKind::brightness:
        x.col(s).array() += level;
        break;
      case CorruptionKind::rotation:
        if (shape.height == 1) {
          const double turns = level / 360.0;
          const auto n = x.rows();
          const auto k = ((static_cast<Eigen::Index>(std::llround((turns - std::floor(turns)) * static_cast<double>(n))) % n) + n) % n;
          const Eigen::VectorXd v = x.col(s);
          for (Eigen::Index i = 0; i < n; ++i) col[(i + k) % n] = v[i];
        } else {
          for (std::size_t c = 0; c < shape.channels; ++c)
            rotate_plane(Plane(col + static_cast<Eigen::Index>(c) * plane, static_cast<Eigen::Index>(shape.height),
                               static_cast<Eigen::Index>(shape.width)),
                         level);
        }
        break;
      case CorruptionKind::occlusion: {
        const auto ph = std::min<std::size_t>(shape.height, static_cast<std::size_t>(std::llround(level * static_cast<double>(shape.height))));
        const auto pw = std::min<std::size_t>(shape.width, static_cast<std::size_t>(std::llround(level * static_cast<double>(shape.width))));
        const std::size_t r0 = rng.below(shape.height - ph + 1), c0 = rng.below(shape.width - pw + 1);
        for (std::size_t c = 0; c < shape.channels; ++c)
          for (std::size_t r = r0; r < r0 + ph; ++r)
            for (std::size_t q = c0; q < c0 + pw; ++q) col[static_cast<Eigen::Index>(c) * plane + static_cast<Eigen::Index>(r * shape.width + q)] = 0.0;
        break;
      }
    }
  }
  x = x.cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

}  // namespace nsl
