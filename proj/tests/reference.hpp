#pragma once

// Plain nested-vector reference math, independent of the tensor library.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "transmod/gradcheck.hpp"

namespace ref {

using Mat = std::vector<std::vector<double>>;

inline Mat from(const transmod::Tensor& t) {
  const std::size_t rows = t.rank() == 1 ? 1 : t.dim(0);
  const std::size_t cols = t.rank() == 1 ? t.dim(0) : t.dim(1);
  Mat m(rows, std::vector<double>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m[r][c] = t.data()[r * cols + c];
  return m;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Mat add_row(Mat a, const Mat& row) {
  for (auto& r : a)
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += row[0][j];
  return a;
}

inline Mat add(Mat a, const Mat& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
  return a;
}

inline Mat relu(Mat a) {
  for (auto& r : a)
    for (auto& v : r) v = v > 0 ? v : 0;
  return a;
}

inline Mat transpose(const Mat& a) {
  Mat t(a[0].size(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) t[j][i] = a[i][j];
  return t;
}

inline Mat layer_norm(const Mat& a, const Mat& gain, const Mat& offset) {
  Mat out = a;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double mu = 0, var = 0;
    for (double v : a[i]) mu += v;
    mu /= a[i].size();
    for (double v : a[i]) var += (v - mu) * (v - mu);
    var /= a[i].size();
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      out[i][j] = (a[i][j] - mu) / std::sqrt(var + 1e-12) * gain[0][j] + offset[0][j];
    }
  }
  return out;
}

// One attention head stack with an additive mask; zero rows if no key is valid.
inline Mat attention(const Mat& q, const Mat& kv, const std::vector<double>& mask,
                     const std::map<std::string, Mat>& p, const std::string& prefix,
                     std::size_t heads) {
  const std::size_t d = q[0].size();
  const std::size_t dk = d / heads;
  bool any = false;
  for (double m : mask) any = any || m != 0.0;
  if (!any) return Mat(q.size(), std::vector<double>(d, 0.0));
  Mat joined(q.size());
  for (std::size_t h = 0; h < heads; ++h) {
    const std::string hp = prefix + ".head" + std::to_string(h);
    const Mat qh = matmul(q, p.at(hp + ".query"));
    const Mat kh = matmul(kv, p.at(hp + ".key"));
    const Mat vh = matmul(kv, p.at(hp + ".value"));
    for (std::size_t i = 0; i < q.size(); ++i) {
      std::vector<double> w(kv.size());
      double mx = -1e300;
      for (std::size_t j = 0; j < kv.size(); ++j) {
        double s = 0;
        for (std::size_t c = 0; c < dk; ++c) s += qh[i][c] * kh[j][c];
        w[j] = s / std::sqrt(static_cast<double>(dk)) + (mask[j] != 0.0 ? 0.0 : -1e9);
        mx = std::max(mx, w[j]);
      }
      double z = 0;
      for (auto& x : w) z += (x = std::exp(x - mx));
      for (std::size_t c = 0; c < dk; ++c) {
        double acc = 0;
        for (std::size_t j = 0; j < kv.size(); ++j) acc += w[j] / z * vh[j][c];
        joined[i].push_back(acc);
      }
    }
  }
  return matmul(joined, p.at(prefix + ".output"));
}

inline Mat feed_forward(const Mat& x, const std::map<std::string, Mat>& p, const std::string& prefix) {
  const Mat h = relu(add_row(matmul(x, p.at(prefix + ".inner.weight")), p.at(prefix + ".inner.bias")));
  return add_row(matmul(h, p.at(prefix + ".outer.weight")), p.at(prefix + ".outer.bias"));
}

inline std::map<std::string, Mat> param_map(const transmod::ParamList& params) {
  std::map<std::string, Mat> out;
  for (const auto& np : params) out[np.name] = from(np.tensor);
  return out;
}

}  // namespace ref
