#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "uvnmt/tensor.hpp"

namespace uvnmt_test {

struct GradCheckResult {
  std::size_t checked = 0;
  double max_rel = 0.0;
  std::string worst;
  bool ok = true;
};

// Central-finite-difference oracle: rebuilds the loss from scratch around each
// perturbed parameter value and compares (f(x+e) - f(x-e)) / (2e) against the
// tape gradient. loss_fn(tape) must be a pure function of the parameter
// values.
template <typename S, typename LossFn>
GradCheckResult check_gradients(
    const std::vector<std::pair<std::string, uvnmt::Tensor<S>>>& params, LossFn loss_fn,
    S eps, double rtol, double atol) {
  using uvnmt::Tape;
  using uvnmt::Tensor;

  std::vector<std::vector<S>> tape_grads;
  {
    Tape<S> tape;
    Tensor<S> loss = loss_fn(tape);
    tape.backward(loss);
    for (const auto& [name, p] : params) {
      auto g = p.grad_view();
      tape_grads.emplace_back(g.begin(), g.end());
      if (tape_grads.back().empty()) tape_grads.back().assign(p.size(), S{0});
    }
  }
  for (auto& [name, p] : params) {
    const_cast<Tensor<S>&>(p).clear_grad();
  }

  auto eval = [&]() {
    Tape<S> tape;
    return static_cast<double>(loss_fn(tape).at(0));
  };

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<S>& p = const_cast<Tensor<S>&>(params[pi].second);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const S saved = p.at(i);
      p.at(i) = saved + eps;
      const double up = eval();
      p.at(i) = saved - eps;
      const double down = eval();
      p.at(i) = saved;
      const double fd = (up - down) / (2.0 * static_cast<double>(eps));
      const double tg = static_cast<double>(tape_grads[pi][i]);
      const double err = std::abs(fd - tg);
      const double tol = atol + rtol * std::max(std::abs(fd), std::abs(tg));
      ++result.checked;
      if (err / tol > result.max_rel) {
        result.max_rel = err / tol;
        result.worst = params[pi].first + "[" + std::to_string(i) + "] fd=" +
                       std::to_string(fd) + " tape=" + std::to_string(tg) + " err=" +
                       std::to_string(err) + " tol=" + std::to_string(tol);
      }
      if (err > tol) result.ok = false;
    }
  }
  return result;
}

}  // namespace uvnmt_test
