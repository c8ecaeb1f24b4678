#pragma once
// Dense 64-bit real tensors (vectors and matrices in practice) plus a fully
// pinned random number generator so trained parameters are reproducible
// across platforms for a given seed.

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace kgdialog::neural {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape_in, double fill = 0.0);

  static Tensor scalar(double v);
  static Tensor from(std::vector<double> v);  // 1-D

  std::size_t size() const { return values.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool is_scalar() const { return values.size() == 1 && shape.size() == 1; }

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
  void fill(double v);

  bool operator==(const Tensor&) const = default;
};

// mt19937_64 driven, but uniform/normal transforms are implemented here
// rather than through std distributions, whose output is
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // [0, 1), 53-bit resolution
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller
  double normal(double mean = 0.0, double stddev = 1.0);

  // uniform over [0, n), rejection sampled
  std::size_t index(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng,
                     double stddev = 0.1);

}  // namespace kgdialog::neural
