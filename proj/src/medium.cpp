#include "mswave/medium.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace mswave {

MediumField constant_medium(const FineMesh& f, double kappa, double rho) {
  if (!(kappa > 0.0) || !(rho > 0.0))
    throw std::invalid_argument("medium coefficients must be positive");
  MediumField m;
  m.kappa = Vec::Constant(f.triangles.size(), kappa);
  m.rho = Vec::Constant(f.triangles.size(), rho);
  return m;
}

MediumField layered_random_medium(const FineMesh& f, std::uint64_t seed, int layers,
                                  double contrast) {
  if (layers < 1) throw std::invalid_argument("need at least one layer");
  if (!(contrast >= 1.0)) throw std::invalid_argument("contrast must be >= 1");
  std::mt19937_64 gen(seed);
  Vec band_value(layers);
  for (int i = 0; i < layers; ++i) {
    // top 53 bits -> [0,1); avoids the platform-dependent distribution classes
    double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
    // the drawn band value is the bulk-modulus field 1/kappa in [1, contrast]
    band_value[i] = 1.0 / (1.0 + u * (contrast - 1.0));
  }
  MediumField m;
  m.kappa.resize(f.triangles.size());
  m.rho = Vec::Ones(f.triangles.size());
  for (size_t t = 0; t < f.triangles.size(); ++t) {
    double y = fine_centroid(f, static_cast<int>(t)).y;
    int band = std::clamp(static_cast<int>(std::floor(y * layers)), 0, layers - 1);
    m.kappa[t] = band_value[band];
  }
  return m;
}

namespace {
double raster_at(const RasterGrid& g, Point2 p) {
  double dx = (g.x1 - g.x0) / g.nx;
  double dy = (g.y1 - g.y0) / g.ny;
  int ix = std::clamp(static_cast<int>(std::floor((p.x - g.x0) / dx)), 0, g.nx - 1);
  int iy = std::clamp(static_cast<int>(std::floor((p.y - g.y0) / dy)), 0, g.ny - 1);
  return g.values[static_cast<Eigen::Index>(iy) * g.nx + ix];
}

void check_raster(const RasterGrid& g) {
  if (g.nx < 1 || g.ny < 1 || g.values.size() != static_cast<Eigen::Index>(g.nx) * g.ny)
    throw std::invalid_argument("raster dimensions do not match its value count");
  if (g.values.minCoeff() <= 0.0) throw std::invalid_argument("raster values must be positive");
  if (g.x0 > 0.0 || g.y0 > 0.0 || g.x1 < 1.0 || g.y1 < 1.0)
    throw std::invalid_argument("raster does not cover the unit square");
}
}  // namespace

MediumField sample_raster(const FineMesh& f, const RasterGrid& kappa_raster,
                          const RasterGrid* rho_raster) {
  check_raster(kappa_raster);
  if (rho_raster) check_raster(*rho_raster);
  MediumField m;
  m.kappa.resize(f.triangles.size());
  m.rho.resize(f.triangles.size());
  for (size_t t = 0; t < f.triangles.size(); ++t) {
    Point2 c = fine_centroid(f, static_cast<int>(t));
    m.kappa[t] = raster_at(kappa_raster, c);
    m.rho[t] = rho_raster ? raster_at(*rho_raster, c) : 1.0;
  }
  return m;
}

double ricker_time_factor(double t, double f0) {
  double s = t - 2.0 / f0;
  double a = M_PI * M_PI * f0 * f0;
  return s * std::exp(-a * s * s);
}

double ricker_spatial_factor(Point2 x, const SourceConfig& s) {
  double dx = x.x - s.center.x;
  double dy = x.y - s.center.y;
  return std::exp(-(dx * dx + dy * dy) / (s.delta * s.delta)) / (s.delta * s.delta);
}

double ricker(double t, Point2 x, const SourceConfig& s) {
  return ricker_spatial_factor(x, s) * ricker_time_factor(t, s.f0);
}

std::uint64_t medium_checksum(const MediumField& m) {
  std::uint64_t hash = 1469598103934665603ULL;
  auto mix = [&hash](const Vec& v) {
    const unsigned char* p = reinterpret_cast<const unsigned char*>(v.data());
    for (size_t i = 0; i < sizeof(double) * v.size(); ++i) {
      hash ^= p[i];
      hash *= 1099511628211ULL;
    }
  };
  mix(m.kappa);
  mix(m.rho);
  return hash;
}

}  // namespace mswave
