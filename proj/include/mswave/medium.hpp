#pragma once

#include <cstdint>
#include <string>

#include "mswave/mesh.hpp"
#include "mswave/types.hpp"

namespace mswave {

/// Piecewise-constant coefficients per fine element. `kappa` multiplies the
/// velocity time derivative, `rho` the pressure time derivative.
struct MediumField {
  Vec kappa;
  Vec rho;
};

/// Axis-aligned raster of positive values covering [x0,x1]x[y0,y1].
/// Values are row-major: y-major rows, x-minor within a row.
struct RasterGrid {
  int nx = 0, ny = 0;
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  Vec values;
};

struct SourceConfig {
  double f0 = 20.0;        // central frequency
  double delta = 1.0 / 32; // spatial support width
  Point2 center{0.5, 0.5};
};

MediumField constant_medium(const FineMesh& f, double kappa, double rho);

/// Horizontal bands over the unit interval in y. Per band, the bulk-modulus
/// field 1/kappa is drawn uniformly from [1, contrast] by a fixed 64-bit
/// generator; rho = 1. Deterministic for a fixed seed. Centroids outside
/// [0,1] take the nearest band.
MediumField layered_random_medium(const FineMesh& f, std::uint64_t seed, int layers,
                                  double contrast);

/// Nearest-cell sampling at element centroids. The raster must cover the unit
/// square; centroids outside it (absorbing-layer extensions) are clamped.
MediumField sample_raster(const FineMesh& f, const RasterGrid& kappa_raster,
                          const RasterGrid* rho_raster = nullptr);

double ricker_time_factor(double t, double f0);
double ricker_spatial_factor(Point2 x, const SourceConfig& s);
double ricker(double t, Point2 x, const SourceConfig& s);

std::uint64_t medium_checksum(const MediumField& m);

}  // namespace mswave
