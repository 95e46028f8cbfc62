#ifndef NMTREE_ADAM_HPP
#define NMTREE_ADAM_HPP

#include <cmath>
#include <stdexcept>
#include <string>

#include "nmtree/tensor.hpp"

namespace nmtree {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update of every parameter from its accumulated grad.
// Each parameter keeps its own step counter, so the update does not depend on
// visiting order.
template <class T>
void adam_step(ParameterStore<T>& store, double lr, const AdamConfig& cfg = {}) {
  if (!(lr >= 0.0)) throw std::invalid_argument("adam_step: learning rate must be non-negative");
  for (auto& [name, e] : store.entries()) {
    auto& p = e.tensor;
    p.ensure_grad();
    for (std::size_t i = 0; i < p.grad.size(); ++i)
      if (!std::isfinite(static_cast<double>(p.grad[i])))
        throw std::runtime_error("adam_step: non-finite gradient in parameter '" + name +
                                 "' at index " + std::to_string(i));
  }
  for (auto& [name, e] : store.entries()) {
    auto& p = e.tensor;
    auto& st = e.state;
    if (st.m.size() != p.size()) st.m.assign(p.size(), T(0));
    if (st.v.size() != p.size()) st.v.assign(p.size(), T(0));
    ++st.step_count;
    const double t = static_cast<double>(st.step_count);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = static_cast<double>(p.grad[i]);
      const double m = cfg.beta1 * static_cast<double>(st.m[i]) + (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * static_cast<double>(st.v[i]) + (1.0 - cfg.beta2) * g * g;
      st.m[i] = static_cast<T>(m);
      st.v[i] = static_cast<T>(v);
      const double mhat = m / c1;
      const double vhat = v / c2;
      p.values[i] = static_cast<T>(static_cast<double>(p.values[i]) -
                                   lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

}  // namespace nmtree

#endif  // NMTREE_ADAM_HPP
