#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace almh {

// Signal t -> x_t on a uniform grid, piecewise linear in between.
struct XPath {
  double dt = 1.0;
  std::vector<double> values;  // values[n] = x(n * dt)

  XPath() = default;
  XPath(double dt_, std::vector<double> v) : dt(dt_), values(std::move(v)) {}

  static XPath constant(double T, double dt, double value) {
    auto n = static_cast<std::size_t>(std::llround(T / dt));
    return XPath(dt, std::vector<double>(n + 1, value));
  }

  std::size_t size() const { return values.size(); }
  double T() const { return values.empty() ? 0.0 : dt * (values.size() - 1); }
  double time(std::size_t n) const { return dt * n; }

  double operator()(double t) const {
    if (values.empty()) throw std::logic_error("XPath: empty");
    double u = t / dt;
    if (u <= 0) return values.front();
    auto last = values.size() - 1;
    if (u >= last) {
      if (u > last * (1 + 1e-9) + 1e-9) throw std::out_of_range("XPath: time beyond horizon");
      return values.back();
    }
    auto i = static_cast<std::size_t>(u);
    double w = u - i;
    return (1 - w) * values[i] + w * values[i + 1];
  }
};

}  // namespace almh
