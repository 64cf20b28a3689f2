#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "t2ic/tensor.hpp"

namespace t2ic {

template <typename T>
struct GaussianStats {
  Tensor<T> mean;  // (d)
  Tensor<T> cov;   // (d,d), symmetric by construction
  std::size_t count = 0;
};

template <typename T>
T cosine_sim(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.numel() != b.numel()) throw std::invalid_argument("cosine_sim: length mismatch");
  T dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > T(0)) || !(nb > T(0)))
    throw std::invalid_argument("cosine_sim: zero-norm input");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  x.check_finite("log_softmax input");
  Tensor<T> out(x.shape());
  T mx = x[0];
  for (std::size_t i = 1; i < x.numel(); ++i) mx = std::max(mx, x[i]);
  T s = 0;
  for (std::size_t i = 0; i < x.numel(); ++i) s += std::exp(x[i] - mx);
  T lse = mx + std::log(s);
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = x[i] - lse;
  return out;
}

// Sample mean and unbiased covariance of row samples (n,d), n >= 2.
template <typename T>
GaussianStats<T> gaussian_stats(const Tensor<T>& samples) {
  if (samples.rank() != 2) throw std::invalid_argument("gaussian_stats: rank-2 input");
  std::size_t n = samples.dim(0), d = samples.dim(1);
  if (n < 2) throw std::invalid_argument("gaussian_stats: need at least 2 samples");
  GaussianStats<T> st;
  st.count = n;
  st.mean = Tensor<T>({d});
  st.cov = Tensor<T>({d, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) st.mean[j] += samples[i * d + j];
  for (std::size_t j = 0; j < d; ++j) st.mean[j] /= static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      T cj = samples[i * d + j] - st.mean[j];
      for (std::size_t k = j; k < d; ++k)
        st.cov[j * d + k] += cj * (samples[i * d + k] - st.mean[k]);
    }
  for (std::size_t j = 0; j < d; ++j)
    for (std::size_t k = j; k < d; ++k) {
      st.cov[j * d + k] /= static_cast<T>(n - 1);
      st.cov[k * d + j] = st.cov[j * d + k];  // exact symmetry
    }
  return st;
}

// Symmetric PSD square root via eigendecomposition, eigenvalues clipped at 0
// when >= -1e-8 (near-singular covariances are routine at small sample sizes).
template <typename T>
Tensor<T> matrix_sqrt_psd(const Tensor<T>& m) {
  if (m.rank() != 2 || m.dim(0) != m.dim(1))
    throw std::invalid_argument("matrix_sqrt_psd: square matrix required");
  const auto d = static_cast<Eigen::Index>(m.dim(0));
  Eigen::MatrixXd a(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      a(i, j) = 0.5 * (static_cast<double>(m[i * d + j]) + static_cast<double>(m[j * d + i]));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("matrix_sqrt_psd: eigendecomposition failed");
  Eigen::VectorXd ev = es.eigenvalues();
  double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < d; ++i) {
    if (ev(i) < -1e-8 * scale)
      throw std::runtime_error("matrix_sqrt_psd: matrix is not PSD");
    ev(i) = ev(i) > 0 ? std::sqrt(ev(i)) : 0.0;
  }
  Eigen::MatrixXd s = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  Tensor<T> out({m.dim(0), m.dim(1)});
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j)
      out[i * d + j] = static_cast<T>(0.5 * (s(i, j) + s(j, i)));
  return out;
}

// Scalar function of a flat parameter vector; fills the analytic gradient when
// the second argument is non-null.
template <typename T>
using ValGradFn = std::function<T(const std::vector<T>&, std::vector<T>*)>;

// Central-difference check of the analytic gradient. Returns the max over
// coordinates of |g_a - g_n| / max(1e-8, |g_a| + |g_n|).
template <typename T>
T grad_check(const ValGradFn<T>& f, std::vector<T> theta, T eps = T(1e-5)) {
  std::vector<T> analytic(theta.size(), T(0));
  T f0 = f(theta, &analytic);
  if (!std::isfinite(static_cast<double>(f0)))
    throw std::runtime_error("grad_check: non-finite function value");
  T worst = 0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    T orig = theta[i];
    theta[i] = orig + eps;
    T fp = f(theta, nullptr);
    theta[i] = orig - eps;
    T fm = f(theta, nullptr);
    theta[i] = orig;
    if (!std::isfinite(static_cast<double>(fp)) || !std::isfinite(static_cast<double>(fm)))
      throw std::runtime_error("grad_check: non-finite probe value");
    T gn = (fp - fm) / (2 * eps);
    T ga = analytic[i];
    T denom = std::max(T(1e-8), std::abs(ga) + std::abs(gn));
    worst = std::max(worst, std::abs(ga - gn) / denom);
  }
  return worst;
}

}  // namespace t2ic
