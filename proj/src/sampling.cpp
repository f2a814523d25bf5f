#include "ehd/sampling.hpp"

#include <cmath>
#include <stdexcept>

namespace ehd::ad {

Value gumbel_softmax_st(const Value& logits, double tau, Rng& rng) {
  if (tau <= 0.0)
    throw std::invalid_argument("gumbel_softmax_st: temperature must be > 0");
  if (!logits->val.allFinite())
    throw std::invalid_argument("gumbel_softmax_st: non-finite logits");

  const Eigen::Index n = logits->rows();
  const Eigen::Index c = logits->cols();
  Mat noise(n, c);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < c; ++j) noise(i, j) = rng.gumbel();

  Mat perturbed = logits->val + noise;
  Mat hard = Mat::Zero(n, c);
  Mat soft(n, c);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index arg;
    perturbed.row(i).maxCoeff(&arg);
    hard(i, arg) = 1.0;
    Eigen::ArrayXd z = (perturbed.row(i).array() - perturbed.row(i).maxCoeff()) / tau;
    Eigen::ArrayXd e = z.exp();
    soft.row(i) = (e / e.sum()).matrix();
  }

  bool req = logits->requires_grad;
  auto out = std::make_shared<Node>(std::move(hard), req);
  if (req) {
    out->parents = {logits};
    Value lg = logits;
    double inv_tau = 1.0 / tau;
    out->backprop = [lg, soft, inv_tau](Node& n_) {
      // Jacobian of softmax((logits + g)/tau) w.r.t. logits
      for (Eigen::Index i = 0; i < n_.grad.rows(); ++i) {
        double dot = n_.grad.row(i).dot(soft.row(i));
        lg->grad.row(i) +=
            inv_tau *
            soft.row(i).cwiseProduct((n_.grad.row(i).array() - dot).matrix());
      }
    };
  }
  return out;
}

}  // namespace ehd::ad
