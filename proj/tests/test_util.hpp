#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "alttrack/tensor.hpp"

namespace testutil {

inline alttrack::Tensor random_tensor(std::mt19937_64& rng, std::vector<std::size_t> shape, double lo = -1.0,
                                      double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> d(alttrack::shape_product(shape));
  for (auto& v : d) v = dist(rng);
  return alttrack::Tensor(std::move(shape), std::move(d));
}

// Naive dense helpers used as independent oracles.
using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const alttrack::Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

inline Mat mul(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b.empty() ? 0 : b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < c[i].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Mat transpose(const Mat& a) {
  Mat t(a.empty() ? 0 : a[0].size(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) t[j][i] = a[i][j];
  return t;
}

inline Mat add(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  return a;
}

inline Mat softmax(Mat a) {
  for (auto& row : a) {
    double mx = -INFINITY;
    for (double v : row) mx = std::max(mx, v);
    double s = 0;
    for (double& v : row) s += (v = std::exp(v - mx));
    for (double& v : row) v /= s;
  }
  return a;
}

inline Mat dense(const Mat& x, const alttrack::Tensor& w, const alttrack::Tensor& b, bool relu) {
  auto y = mul(x, to_mat(w));
  for (auto& row : y)
    for (std::size_t j = 0; j < row.size(); ++j) {
      row[j] += b.data()[j];
      if (relu) row[j] = std::max(0.0, row[j]);
    }
  return y;
}

inline double max_abs_diff(const Mat& a, const alttrack::Tensor& t) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) m = std::max(m, std::abs(a[i][j] - t.at(i, j)));
  return m;
}

}  // namespace testutil
