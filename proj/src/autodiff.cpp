#include "ehd/autodiff.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace ehd::ad {

Value leaf(Mat v) { return std::make_shared<Node>(std::move(v), true); }

Value constant(Mat v) { return std::make_shared<Node>(std::move(v), false); }

Value constant(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return constant(m);
}

void shape_error(const char* op, const Node& a, const Node& b) {
  std::ostringstream os;
  os << op << ": shape mismatch (" << a.rows() << "x" << a.cols() << " vs "
     << b.rows() << "x" << b.cols() << ")";
  throw std::invalid_argument(os.str());
}

namespace {

Value make(Mat v, std::vector<Value> parents, std::function<void(Node&)> bp) {
  bool req = false;
  for (const auto& p : parents) req = req || p->requires_grad;
  auto n = std::make_shared<Node>(std::move(v), req);
  if (req) {
    n->parents = std::move(parents);
    n->backprop = std::move(bp);
  }
  return n;
}

void topo(const Value& root, std::vector<Node*>& order) {
  std::unordered_set<Node*> seen;
  // iterative post-order DFS
  std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

}  // namespace

void backward(const Value& root) {
  if (root->rows() != 1 || root->cols() != 1)
    throw std::invalid_argument("backward: root must be a 1x1 scalar");
  if (!root->requires_grad) return;
  std::vector<Node*> order;
  topo(root, order);
  // order is post-order: parents before children; walk in reverse
  root->grad.setConstant(1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

void zero_grad(const std::vector<Value>& leaves) {
  for (const auto& l : leaves) l->grad.setZero();
}

// ---- arithmetic ------------------------------------------------------------

Value add(const Value& a, const Value& b) {
  if (a->rows() != b->rows() || a->cols() != b->cols())
    shape_error("add", *a, *b);
  return make(a->val + b->val, {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->grad += n.grad;
    if (b->requires_grad) b->grad += n.grad;
  });
}

Value sub(const Value& a, const Value& b) {
  if (a->rows() != b->rows() || a->cols() != b->cols())
    shape_error("sub", *a, *b);
  return make(a->val - b->val, {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->grad += n.grad;
    if (b->requires_grad) b->grad -= n.grad;
  });
}

Value mul(const Value& a, const Value& b) {
  if (a->rows() != b->rows() || a->cols() != b->cols())
    shape_error("mul", *a, *b);
  return make(a->val.cwiseProduct(b->val), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->grad += n.grad.cwiseProduct(b->val);
    if (b->requires_grad) b->grad += n.grad.cwiseProduct(a->val);
  });
}

Value div(const Value& a, const Value& b) {
  if (a->rows() != b->rows() || a->cols() != b->cols())
    shape_error("div", *a, *b);
  return make(a->val.cwiseQuotient(b->val), {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->grad += n.grad.cwiseQuotient(b->val);
    if (b->requires_grad)
      b->grad -= n.grad.cwiseProduct(a->val).cwiseQuotient(
          b->val.cwiseProduct(b->val));
  });
}

Value neg(const Value& a) {
  return make(-a->val, {a}, [a](Node& n) {
    if (a->requires_grad) a->grad -= n.grad;
  });
}

Value matmul(const Value& a, const Value& b) {
  if (a->cols() != b->rows()) shape_error("matmul", *a, *b);
  return make(a->val * b->val, {a, b}, [a, b](Node& n) {
    if (a->requires_grad) a->grad += n.grad * b->val.transpose();
    if (b->requires_grad) b->grad += a->val.transpose() * n.grad;
  });
}

Value transpose(const Value& a) {
  return make(a->val.transpose(), {a}, [a](Node& n) {
    if (a->requires_grad) a->grad += n.grad.transpose();
  });
}

Value add_scalar(const Value& a, double s) {
  return make(a->val.array() + s, {a}, [a](Node& n) {
    if (a->requires_grad) a->grad += n.grad;
  });
}

Value mul_scalar(const Value& a, double s) {
  return make(a->val * s, {a}, [a, s](Node& n) {
    if (a->requires_grad) a->grad += n.grad * s;
  });
}

Value add_rowvec(const Value& a, const Value& rv) {
  if (rv->rows() != 1 || rv->cols() != a->cols())
    shape_error("add_rowvec", *a, *rv);
  return make(a->val.rowwise() + rv->val.row(0), {a, rv}, [a, rv](Node& n) {
    if (a->requires_grad) a->grad += n.grad;
    if (rv->requires_grad) rv->grad += n.grad.colwise().sum();
  });
}

Value mul_colvec(const Value& a, const Value& cv) {
  if (cv->cols() != 1 || cv->rows() != a->rows())
    shape_error("mul_colvec", *a, *cv);
  Mat out = a->val.array().colwise() * cv->val.col(0).array();
  return make(std::move(out), {a, cv}, [a, cv](Node& n) {
    if (a->requires_grad)
      a->grad += (n.grad.array().colwise() * cv->val.col(0).array()).matrix();
    if (cv->requires_grad)
      cv->grad += n.grad.cwiseProduct(a->val).rowwise().sum();
  });
}

// ---- elementwise nonlinearities --------------------------------------------

Value exp(const Value& a) {
  Mat out = a->val.array().exp();
  return make(out, {a}, [a, out](Node& n) {
    if (a->requires_grad) a->grad += n.grad.cwiseProduct(out);
  });
}

Value log(const Value& a) {
  if ((a->val.array() <= 0.0).any())
    throw std::domain_error("log: non-positive input");
  return make(a->val.array().log(), {a}, [a](Node& n) {
    if (a->requires_grad) a->grad += n.grad.cwiseQuotient(a->val);
  });
}

Value log_clamped(const Value& a, double floor) {
  Mat clamped = a->val.cwiseMax(floor);
  Mat out = clamped.array().log();
  Mat pass = (a->val.array() >= floor).cast<double>();
  return make(std::move(out), {a}, [a, clamped, pass](Node& n) {
    if (a->requires_grad)
      a->grad += n.grad.cwiseProduct(pass).cwiseQuotient(clamped);
  });
}

namespace {
inline double softplus1(double x) {
  return x > 30.0 ? x : std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
}
inline double sigmoid1(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

Value softplus(const Value& a) {
  Mat out = a->val.unaryExpr([](double x) { return softplus1(x); });
  return make(std::move(out), {a}, [a](Node& n) {
    if (a->requires_grad)
      a->grad += n.grad.cwiseProduct(
          a->val.unaryExpr([](double x) { return sigmoid1(x); }));
  });
}

Value sigmoid(const Value& a) {
  Mat out = a->val.unaryExpr([](double x) { return sigmoid1(x); });
  return make(out, {a}, [a, out](Node& n) {
    if (a->requires_grad)
      a->grad += n.grad.cwiseProduct(
          out.cwiseProduct((1.0 - out.array()).matrix()));
  });
}

Value tanh(const Value& a) {
  Mat out = a->val.array().tanh();
  return make(out, {a}, [a, out](Node& n) {
    if (a->requires_grad)
      a->grad +=
          n.grad.cwiseProduct((1.0 - out.array().square()).matrix());
  });
}

Value relu(const Value& a) {
  Mat mask = (a->val.array() > 0.0).cast<double>();
  return make(a->val.cwiseMax(0.0), {a}, [a, mask](Node& n) {
    if (a->requires_grad) a->grad += n.grad.cwiseProduct(mask);
  });
}

// ---- softmax family --------------------------------------------------------

Value softmax_rows(const Value& a) {
  Mat out(a->rows(), a->cols());
  for (Eigen::Index i = 0; i < a->rows(); ++i) {
    Eigen::ArrayXd z = a->val.row(i).array() - a->val.row(i).maxCoeff();
    Eigen::ArrayXd e = z.exp();
    out.row(i) = (e / e.sum()).matrix();
  }
  return make(out, {a}, [a, out](Node& n) {
    if (!a->requires_grad) return;
    for (Eigen::Index i = 0; i < n.grad.rows(); ++i) {
      double dot = n.grad.row(i).dot(out.row(i));
      a->grad.row(i) +=
          out.row(i).cwiseProduct((n.grad.row(i).array() - dot).matrix());
    }
  });
}

Value log_softmax_rows(const Value& a) {
  Mat out(a->rows(), a->cols());
  Mat sm(a->rows(), a->cols());
  for (Eigen::Index i = 0; i < a->rows(); ++i) {
    double mx = a->val.row(i).maxCoeff();
    Eigen::ArrayXd z = a->val.row(i).array() - mx;
    double lse = std::log(z.exp().sum());
    out.row(i) = (z - lse).matrix();
    sm.row(i) = (z - lse).exp().matrix();
  }
  return make(out, {a}, [a, sm](Node& n) {
    if (!a->requires_grad) return;
    for (Eigen::Index i = 0; i < n.grad.rows(); ++i) {
      double gsum = n.grad.row(i).sum();
      a->grad.row(i) += n.grad.row(i) - gsum * sm.row(i);
    }
  });
}

// ---- layer norm ------------------------------------------------------------

Value layer_norm_rows(const Value& a, double eps) {
  const Eigen::Index m = a->cols();
  Mat out(a->rows(), m);
  Mat inv_std(a->rows(), 1);
  for (Eigen::Index i = 0; i < a->rows(); ++i) {
    double mu = a->val.row(i).mean();
    double var = (a->val.row(i).array() - mu).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_std(i, 0) = is;
    out.row(i) = ((a->val.row(i).array() - mu) * is).matrix();
  }
  return make(out, {a}, [a, out, inv_std, m](Node& n) {
    if (!a->requires_grad) return;
    for (Eigen::Index i = 0; i < n.grad.rows(); ++i) {
      // dL/dx = is/m * (m*g - sum(g) - xhat * sum(g .* xhat))
      double gsum = n.grad.row(i).sum();
      double gdot = n.grad.row(i).dot(out.row(i));
      a->grad.row(i) += (inv_std(i, 0) / static_cast<double>(m)) *
                        (static_cast<double>(m) * n.grad.row(i).array() -
                         gsum - out.row(i).array() * gdot)
                            .matrix();
    }
  });
}

// ---- sequence-axis ops -----------------------------------------------------

Value cumsum_rows(const Value& a) {
  Mat out = a->val;
  for (Eigen::Index i = 1; i < out.rows(); ++i) out.row(i) += out.row(i - 1);
  return make(std::move(out), {a}, [a](Node& n) {
    if (!a->requires_grad) return;
    Mat g = n.grad;
    for (Eigen::Index i = g.rows() - 2; i >= 0; --i) g.row(i) += g.row(i + 1);
    a->grad += g;
  });
}

Value diff_rows_prepend_zero(const Value& a) {
  Mat out = a->val;
  for (Eigen::Index i = out.rows() - 1; i >= 1; --i)
    out.row(i) -= a->val.row(i - 1);
  return make(std::move(out), {a}, [a](Node& n) {
    if (!a->requires_grad) return;
    Mat g = n.grad;
    for (Eigen::Index i = 0; i + 1 < g.rows(); ++i) g.row(i) -= n.grad.row(i + 1);
    a->grad += g;
  });
}

// ---- reductions ------------------------------------------------------------

Value sum_all(const Value& a) {
  Mat out(1, 1);
  out(0, 0) = a->val.sum();
  return make(std::move(out), {a}, [a](Node& n) {
    if (a->requires_grad) a->grad.array() += n.grad(0, 0);
  });
}

Value mean_all(const Value& a) {
  const double inv = 1.0 / static_cast<double>(a->val.size());
  Mat out(1, 1);
  out(0, 0) = a->val.mean();
  return make(std::move(out), {a}, [a, inv](Node& n) {
    if (a->requires_grad) a->grad.array() += n.grad(0, 0) * inv;
  });
}

Value sum_rows(const Value& a) {
  Mat out = a->val.colwise().sum();
  return make(std::move(out), {a}, [a](Node& n) {
    if (a->requires_grad) a->grad += n.grad.row(0).replicate(a->rows(), 1);
  });
}

Value sum_cols(const Value& a) {
  Mat out = a->val.rowwise().sum();
  return make(std::move(out), {a}, [a](Node& n) {
    if (a->requires_grad) a->grad += n.grad.col(0).replicate(1, a->cols());
  });
}

Value mean_rows(const Value& a) {
  const double inv = 1.0 / static_cast<double>(a->rows());
  Mat out = a->val.colwise().mean();
  return make(std::move(out), {a}, [a, inv](Node& n) {
    if (a->requires_grad)
      a->grad += (n.grad.row(0) * inv).replicate(a->rows(), 1);
  });
}

Value masked_sum(const Value& a, const Value& mask) {
  if (a->rows() != mask->rows() || a->cols() != mask->cols())
    shape_error("masked_sum", *a, *mask);
  return sum_all(mul(a, mask));
}

Value masked_mean(const Value& a, const Value& mask) {
  if (a->rows() != mask->rows() || a->cols() != mask->cols())
    shape_error("masked_mean", *a, *mask);
  double cnt = mask->val.sum();
  if (cnt <= 0.0) throw std::invalid_argument("masked_mean: empty mask");
  return mul_scalar(sum_all(mul(a, mask)), 1.0 / cnt);
}

// ---- structural ops --------------------------------------------------------

Value concat_rows(const Value& a, const Value& b) {
  if (a->cols() != b->cols()) shape_error("concat_rows", *a, *b);
  Mat out(a->rows() + b->rows(), a->cols());
  out << a->val, b->val;
  const Eigen::Index na = a->rows();
  return make(std::move(out), {a, b}, [a, b, na](Node& n) {
    if (a->requires_grad) a->grad += n.grad.topRows(na);
    if (b->requires_grad) b->grad += n.grad.bottomRows(n.rows() - na);
  });
}

Value concat_cols(const Value& a, const Value& b) {
  if (a->rows() != b->rows()) shape_error("concat_cols", *a, *b);
  Mat out(a->rows(), a->cols() + b->cols());
  out << a->val, b->val;
  const Eigen::Index ca = a->cols();
  return make(std::move(out), {a, b}, [a, b, ca](Node& n) {
    if (a->requires_grad) a->grad += n.grad.leftCols(ca);
    if (b->requires_grad) b->grad += n.grad.rightCols(n.cols() - ca);
  });
}

Value slice_rows(const Value& a, Eigen::Index start, Eigen::Index len) {
  if (start < 0 || len < 0 || start + len > a->rows())
    throw std::out_of_range("slice_rows: range out of bounds");
  Mat out = a->val.middleRows(start, len);
  return make(std::move(out), {a}, [a, start, len](Node& n) {
    if (a->requires_grad) a->grad.middleRows(start, len) += n.grad;
  });
}

Value slice_cols(const Value& a, Eigen::Index start, Eigen::Index len) {
  if (start < 0 || len < 0 || start + len > a->cols())
    throw std::out_of_range("slice_cols: range out of bounds");
  Mat out = a->val.middleCols(start, len);
  return make(std::move(out), {a}, [a, start, len](Node& n) {
    if (a->requires_grad) a->grad.middleCols(start, len) += n.grad;
  });
}

Value gather_rows(const Value& a, const std::vector<Eigen::Index>& idx) {
  Mat out(static_cast<Eigen::Index>(idx.size()), a->cols());
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= a->rows())
      throw std::out_of_range("gather_rows: index out of bounds");
    out.row(static_cast<Eigen::Index>(i)) = a->val.row(idx[i]);
  }
  return make(std::move(out), {a}, [a, idx](Node& n) {
    if (!a->requires_grad) return;
    for (size_t i = 0; i < idx.size(); ++i)
      a->grad.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
  });
}

}  // namespace ehd::ad
