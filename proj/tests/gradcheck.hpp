#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "scanconv/rng.hpp"
#include "scanconv/tensor.hpp"

namespace scanconv::testing {

using TensorD = ag::Tensor<double>;
using TapeD = ag::Tape<double>;
using MatD = ag::Matrix<double>;

inline MatD random_matrix(Rng& rng, ag::Index rows, ag::Index cols, double scale = 1.0) {
  MatD m(rows, cols);
  for (ag::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, scale);
  return m;
}

/// Scalar loss sum(out .* weights) for a fixed random `weights`, so every
/// output entry gets a distinct upstream gradient.
inline TensorD project(TapeD& tape, const TensorD& out, Rng& rng) {
  const TensorD w = TensorD::constant(random_matrix(rng, out.rows(), out.cols()));
  return ag::sum(tape, ag::mul(tape, out, w));
}

struct GradCheck {
  double rel_error = 0.0;  // |analytic - numeric| / max(|analytic|, |numeric|) over checked coords
  std::size_t checked = 0;
};

/// Compares backprop gradients of `loss` against central differences with
/// step eps. `loss` must be a deterministic function of the parameter values.
/// At most `max_coords` coordinates are probed, chosen by `pick`.
inline GradCheck check_gradients(const std::function<TensorD(TapeD&)>& loss, std::vector<TensorD> params,
                                 double eps = 1e-5, std::size_t max_coords = 0, Rng* pick = nullptr) {
  for (auto& p : params) p.zero_grad();
  {
    TapeD tape;
    const TensorD l = loss(tape);
    tape.backward(l);
  }
  std::vector<MatD> analytic;
  for (const auto& p : params) analytic.push_back(p.grad_or_zero());

  std::vector<std::pair<std::size_t, ag::Index>> coords;
  for (std::size_t k = 0; k < params.size(); ++k)
    for (ag::Index i = 0; i < params[k].size(); ++i) coords.emplace_back(k, i);
  if (max_coords > 0 && coords.size() > max_coords && pick) {
    for (std::size_t i = 0; i < max_coords; ++i)
      std::swap(coords[i], coords[i + pick->below(coords.size() - i)]);
    coords.resize(max_coords);
  }

  double diff_sq = 0.0, a_sq = 0.0, n_sq = 0.0;
  for (const auto& [k, i] : coords) {
    double& v = params[k].mutable_value().data()[i];
    const double saved = v;
    TapeD off(false);
    v = saved + eps;
    const double up = loss(off).item();
    v = saved - eps;
    const double down = loss(off).item();
    v = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic[k].data()[i];
    diff_sq += (a - numeric) * (a - numeric);
    a_sq += a * a;
    n_sq += numeric * numeric;
  }
  for (auto& p : params) p.zero_grad();
  const double denom = std::max({std::sqrt(a_sq), std::sqrt(n_sq), 1e-300});
  return {std::sqrt(diff_sq) / denom, coords.size()};
}

}  // namespace scanconv::testing
