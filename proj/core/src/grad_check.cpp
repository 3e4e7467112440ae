#include "kcal/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "kcal/ops.hpp"
#include "kcal/rng.hpp"

namespace kcal {

namespace {

double projected(const TensorD& out, const std::vector<double>& weights) {
  double acc = 0;
  for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * weights[i];
  return acc;
}

std::vector<TensorD> make_inputs(const std::vector<std::vector<double>>& values,
                                 const std::vector<Shape>& shapes, bool requires_grad) {
  std::vector<TensorD> inputs;
  inputs.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) inputs.emplace_back(shapes[i], values[i], requires_grad);
  return inputs;
}

}  // namespace

GradCheckReport grad_check(const GradCheckFn& fn, const std::vector<Shape>& input_shapes,
                           double tolerance, const GradCheckOptions& options) {
  RandomStream rng(options.seed, {0x67726164ULL});
  std::vector<std::vector<double>> values;
  for (const auto& shape : input_shapes) {
    std::vector<double> v(numel(shape));
    for (auto& x : v) {
      do {
        x = rng.uniform(-options.input_scale, options.input_scale);
      } while (std::abs(x) < options.min_abs_input);
    }
    values.push_back(std::move(v));
  }

  // Analytic pass.
  std::vector<std::vector<double>> analytic;
  std::vector<double> projection;
  {
    TapeD tape;
    TapeD::Scope scope(tape);
    auto inputs = make_inputs(values, input_shapes, true);
    TensorD out = fn(inputs);
    RandomStream prng = rng.derive(0x70726f6aULL);
    projection.resize(out.size());
    for (auto& w : projection) w = prng.uniform(0.5, 1.5) * (prng.uniform() < 0.5 ? -1.0 : 1.0);
    TensorD weights(out.shape(), projection);
    TensorD loss = ops::sum(ops::mul(out, weights));
    tape.backward(loss);
    for (auto& in : inputs) {
      auto g = in.grad();
      analytic.emplace_back(g.begin(), g.end());
    }
  }

  GradCheckReport report;
  report.tolerance = tolerance;
  TapeD::Pause pause;
  for (std::size_t i = 0; i < values.size(); ++i) {
    double worst = 0;
    for (std::size_t j = 0; j < values[i].size(); ++j) {
      const double saved = values[i][j];
      values[i][j] = saved + options.step;
      const double up = projected(fn(make_inputs(values, input_shapes, false)), projection);
      values[i][j] = saved - options.step;
      const double down = projected(fn(make_inputs(values, input_shapes, false)), projection);
      values[i][j] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[i][j];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.relative_floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    report.max_rel_error.push_back(worst);
    report.worst = std::max(report.worst, worst);
  }
  report.passed = report.worst < tolerance;
  return report;
}

}  // namespace kcal
