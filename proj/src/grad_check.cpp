#include "dgstmtl/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "dgstmtl/rng.hpp"

namespace dgstmtl {

GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<Tensor>& params, double eps,
                           double sample_fraction, std::uint64_t seed) {
  if (eps <= 0.0) throw ConfigError("grad_check: eps must be positive");
  if (sample_fraction <= 0.0 || sample_fraction > 1.0)
    throw ConfigError("grad_check: sample_fraction must be in (0, 1]");

  for (auto& p : params) {
    if (!p.requires_grad())
      throw InputError("grad_check: every parameter must require gradients");
    Tensor(p).zero_grad();
  }

  Tensor loss = f();
  const double base = loss.item();
  if (!std::isfinite(base))
    throw NumericError("grad_check aborted: non-finite loss at base point");
  loss.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    const auto g = p.grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(p.size(), 0.0);
  }

  std::size_t total = 0;
  for (const auto& p : params) total += p.size();

  // Global coordinate ids, optionally subsampled.
  std::vector<std::size_t> coords;
  if (sample_fraction >= 1.0) {
    coords.resize(total);
    for (std::size_t i = 0; i < total; ++i) coords[i] = i;
  } else {
    const std::size_t want = std::max<std::size_t>(
        1, std::size_t(std::llround(sample_fraction * double(total))));
    Rng rng(derive_seed(seed, SeedStream::grad_check));
    std::vector<bool> taken(total, false);
    while (coords.size() < want) {
      const std::size_t c = std::size_t(rng.below(total));
      if (!taken[c]) {
        taken[c] = true;
        coords.push_back(c);
      }
    }
    std::sort(coords.begin(), coords.end());
  }

  GradCheckReport report;
  report.coords_checked = coords.size();

  auto eval = [&]() {
    NoGradGuard ng;
    const double v = f().item();
    if (!std::isfinite(v))
      throw NumericError("grad_check aborted: non-finite loss at probe point");
    return v;
  };

  std::size_t param_idx = 0, param_base = 0;
  for (std::size_t c : coords) {
    while (c >= param_base + params[param_idx].size()) {
      param_base += params[param_idx].size();
      ++param_idx;
    }
    Tensor p = params[param_idx];
    const std::size_t local = c - param_base;
    double* cell = &p.values_mut()[local];
    const double orig = *cell;
    *cell = orig + eps;
    const double up = eval();
    *cell = orig - eps;
    const double down = eval();
    *cell = orig;
    const double fd = (up - down) / (2.0 * eps);
    const double an = analytic[param_idx][local];
    const double rel = std::abs(an - fd) / std::max(1.0, std::abs(fd));
    report.max_rel_error = std::max(report.max_rel_error, rel);
  }
  return report;
}

}  // namespace dgstmtl
