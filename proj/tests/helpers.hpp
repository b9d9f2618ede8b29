#pragma once

// Shared test-only utilities: random tensor builders and independent oracles
// kept deliberately separate from the implementation paths they check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "nids/rng.hpp"
#include "nids/tensor.hpp"

namespace testutil {

inline nids::tc::Tensor random_tensor(nids::tc::Shape shape, nids::Rng& rng,
                                      double lo = -1.0, double hi = 1.0,
                                      bool requires_grad = false) {
  std::size_t n = nids::tc::numel(shape);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return nids::tc::Tensor::from_data(std::move(shape), std::move(v),
                                     requires_grad);
}

// Push every entry at least `margin` away from `kink` so relu/maxpool checks
// do not probe across their nondifferentiable points.
inline void avoid_kink(nids::tc::Tensor& t, double kink, double margin) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    double& v = t.data()[i];
    if (std::abs(v - kink) < margin) v = v >= kink ? kink + margin : kink - margin;
  }
}

// Cyclic Jacobi eigendecomposition for small symmetric matrices. Returns
// eigenvalues descending with matching eigenvectors as rows. Independent of
// the SVD route used by the library.
struct EigenResult {
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;  // vectors[i] pairs values[i]
};

inline EigenResult jacobi_eigen(std::vector<std::vector<double>> a) {
  std::size_t n = a.size();
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;
  for (int sweep = 0; sweep < 200; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (std::size_t i = 0; i < n; ++i) {
          double aip = a[i][p], aiq = a[i][q];
          a[i][p] = c * aip - s * aiq;
          a[i][q] = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          double api = a[p][i], aqi = a[q][i];
          a[p][i] = c * api - s * aqi;
          a[q][i] = s * api + c * aqi;
        }
        for (std::size_t i = 0; i < n; ++i) {
          double vip = v[i][p], viq = v[i][q];
          v[i][p] = c * vip - s * viq;
          v[i][q] = s * vip + c * viq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return a[x][x] > a[y][y]; });
  EigenResult r;
  for (std::size_t i : order) {
    r.values.push_back(a[i][i]);
    std::vector<double> col(n);
    for (std::size_t j = 0; j < n; ++j) col[j] = v[j][i];
    r.vectors.push_back(col);
  }
  return r;
}

}  // namespace testutil
