// Shared helpers for the test suites: finite-difference gradient checking
// against the autodiff engine, and small matrix builders.

#ifndef UTTS_TESTS_TEST_SUPPORT_HPP_
#define UTTS_TESTS_TEST_SUPPORT_HPP_

#include <functional>
#include <vector>

#include "utts/autodiff.hpp"
#include "utts/nn.hpp"
#include "utts/rng.hpp"

namespace utts::testing {

// Central finite differences of `loss_fn` w.r.t. every parameter in `params`,
// compared against `analytic`. Returns the worst relative error, where the
// denominator is max(|analytic|, |numeric|, floor).
struct FdReport {
  double max_rel_err = 0.0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::string worst_param;
};

inline FdReport check_gradients(
    nn::ParamStore& params, const std::function<double()>& loss_fn,
    const ad::Gradients& analytic, double eps = 1e-5, double floor = 1e-6) {
  FdReport report;
  for (const auto& [name, t] : params.items()) {
    const Mat* g = analytic.find(t);
    for (Eigen::Index r = 0; r < t->rows(); ++r) {
      for (Eigen::Index c = 0; c < t->cols(); ++c) {
        const double orig = t->val(r, c);
        t->val(r, c) = orig + eps;
        const double up = loss_fn();
        t->val(r, c) = orig - eps;
        const double down = loss_fn();
        t->val(r, c) = orig;
        const double numeric = (up - down) / (2.0 * eps);
        const double an = g ? (*g)(r, c) : 0.0;
        const double denom = std::max({std::abs(an), std::abs(numeric), floor});
        const double rel = std::abs(an - numeric) / denom;
        if (rel > report.max_rel_err) {
          report.max_rel_err = rel;
          report.worst_analytic = an;
          report.worst_numeric = numeric;
          report.worst_param = name;
        }
      }
    }
  }
  return report;
}

}  // namespace utts::testing

#endif  // UTTS_TESTS_TEST_SUPPORT_HPP_
