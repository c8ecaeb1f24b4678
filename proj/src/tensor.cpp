#include "kgdialog/tensor.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace kgdialog::neural {

Tensor::Tensor(std::vector<std::size_t> shape_in, double fill)
    : shape(std::move(shape_in)) {
  std::size_t total = 1;
  for (std::size_t dim : shape) {
    if (dim == 0) throw std::invalid_argument("Tensor: zero dimension");
    total *= dim;
  }
  values.assign(total, fill);
}

Tensor Tensor::scalar(double v) {
  Tensor t({1});
  t.values[0] = v;
  return t;
}

Tensor Tensor::from(std::vector<double> v) {
  Tensor t;
  t.shape = {v.size()};
  t.values = std::move(v);
  return t;
}

std::size_t Tensor::rows() const {
  if (shape.size() != 2) throw std::logic_error("Tensor: not a matrix");
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (shape.size() != 2) throw std::logic_error("Tensor: not a matrix");
  return shape[1];
}

double& Tensor::at(std::size_t r, std::size_t c) {
  return values[r * cols() + c];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return values[r * cols() + c];
}

bool Tensor::all_finite() const {
  for (double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double v) {
  for (double& x : values) x = v;
}

double Rng::normal(double mean, double stddev) {
  // Draw u1 in (0, 1] to keep the log finite.
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 == 0.0);
  const double u2 = uniform();
  const double mag = std::sqrt(-2.0 * std::log(u1));
  return mean + stddev * mag * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::index: n must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v = 0;
  do {
    v = engine_();
  } while (v >= limit);
  return static_cast<std::size_t>(v % n);
}

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  for (double& v : t.values) v = rng.normal(0.0, stddev);
  return t;
}

}  // namespace kgdialog::neural
