#include "ehd/gradcheck.hpp"

#include <cmath>

namespace ehd::ad {

double grad_check(const std::function<Value(const std::vector<Value>&)>& f,
                  std::vector<Value> inputs, double step) {
  zero_grad(inputs);
  Value root = f(inputs);
  backward(root);

  double worst = 0.0;
  for (auto& in : inputs) {
    for (Eigen::Index i = 0; i < in->rows(); ++i) {
      for (Eigen::Index j = 0; j < in->cols(); ++j) {
        const double orig = in->val(i, j);
        in->val(i, j) = orig + step;
        double up = f(inputs)->scalar();
        in->val(i, j) = orig - step;
        double dn = f(inputs)->scalar();
        in->val(i, j) = orig;
        double fd = (up - dn) / (2.0 * step);
        double an = in->grad(i, j);
        double rel = std::abs(an - fd) /
                     std::max({std::abs(an), std::abs(fd), 1e-8});
        worst = std::max(worst, rel);
      }
    }
  }
  return worst;
}

}  // namespace ehd::ad
