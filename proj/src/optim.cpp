#include "jdm/optim.hpp"

#include <cmath>

namespace jdm {

void adam_step(std::vector<Tensor>& params, OptimState& state, double lr, double beta1,
               double beta2, double eps) {
  if (state.first_moment.empty()) {
    state.first_moment.reserve(params.size());
    state.second_moment.reserve(params.size());
    for (const auto& p : params) {
      state.first_moment.push_back(Array::Zero(p.size()));
      state.second_moment.push_back(Array::Zero(p.size()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  }
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step_count));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    if (state.first_moment[k].size() != p.size()) {
      throw ShapeError("adam_step: accumulator shape mismatch at parameter " + std::to_string(k));
    }
    const Array& g = p.grad();
    Array& m = state.first_moment[k];
    Array& v = state.second_moment[k];
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.square();
    Array mhat = m / bc1;
    Array vhat = v / bc2;
    p.raw() -= lr * mhat / (vhat.sqrt() + eps);
  }
}

}  // namespace jdm
