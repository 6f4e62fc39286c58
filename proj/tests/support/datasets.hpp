// Synthetic benchmark datasets shared by the unit and acceptance suites.
#pragma once

#include <cmath>
#include <vector>

#include "cgpm/rng.hpp"

namespace datasets {

struct Xy {
  std::vector<double> x, y;
};

struct Xyz {
  std::vector<double> x, y;
  std::vector<int> z;
};

// Two lines y = x and y = -x with Gaussian noise; z labels the line.
inline Xyz xcross(int n, uint64_t seed, double sigma = 0.4) {
  Xyz d;
  cgpm::Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    int z = i % 2;
    double x = rng.uniform() * 2 - 1;
    double y = (z == 0 ? x : -x) + rng.normal(0, sigma);
    d.x.push_back(x);
    d.y.push_back(y);
    d.z.push_back(z);
  }
  return d;
}

// Dependent zero-correlation shapes used for structure discovery checks.
inline Xy sine(int n, uint64_t seed, double noise = 0.1) {
  Xy d;
  cgpm::Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    double x = rng.uniform() * 4 * M_PI - 2 * M_PI;
    d.x.push_back(x);
    d.y.push_back(std::sin(x) + rng.normal(0, noise));
  }
  return d;
}

inline Xy parabola(int n, uint64_t seed, double noise = 0.1) {
  Xy d;
  cgpm::Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    double x = rng.uniform() * 2 - 1;
    d.x.push_back(x);
    d.y.push_back(x * x + rng.normal(0, noise));
  }
  return d;
}

inline Xy xcross_pair(int n, uint64_t seed, double noise = 0.1) {
  Xy d;
  cgpm::Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    double x = rng.uniform() * 2 - 1;
    double y = (i % 2 == 0 ? x : -x) + rng.normal(0, noise);
    d.x.push_back(x);
    d.y.push_back(y);
  }
  return d;
}

inline Xy diamond(int n, uint64_t seed, double noise = 0.05) {
  Xy d;
  cgpm::Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    // |x| + |y| = 1 traced by a uniform corner-to-corner walk.
    double t = rng.uniform() * 4;
    int side = static_cast<int>(t);
    double u = t - side;
    double x = 0, y = 0;
    switch (side) {
      case 0: x = u; y = 1 - u; break;
      case 1: x = 1 - u; y = -u; break;
      case 2: x = -u; y = u - 1; break;
      default: x = u - 1; y = u; break;
    }
    d.x.push_back(x + rng.normal(0, noise));
    d.y.push_back(y + rng.normal(0, noise));
  }
  return d;
}

inline Xy ring(int n, uint64_t seed, double noise = 0.05) {
  Xy d;
  cgpm::Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    double th = rng.uniform() * 2 * M_PI;
    d.x.push_back(std::cos(th) + rng.normal(0, noise));
    d.y.push_back(std::sin(th) + rng.normal(0, noise));
  }
  return d;
}

}  // namespace datasets
