#include "ehd/optimizer.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace ehd {

ad::Value ParamStore::add(const std::string& name, ad::Mat init) {
  if (params_.count(name))
    throw std::invalid_argument("ParamStore: duplicate parameter " + name);
  auto v = ad::leaf(std::move(init));
  params_[name] = v;
  return v;
}

ad::Value ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::out_of_range("ParamStore: unknown parameter " + name);
  return it->second;
}

std::vector<ad::Value> ParamStore::leaves() const {
  std::vector<ad::Value> out;
  out.reserve(params_.size());
  for (const auto& [k, v] : params_) out.push_back(v);
  return out;
}

void ParamStore::zero_grad() const {
  for (const auto& [k, v] : params_) v->grad.setZero();
}

Adam::Adam(const ParamStore& store, AdamConfig cfg)
    : params_(store.leaves()), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.push_back(ad::Mat::Zero(p->rows(), p->cols()));
    v_.push_back(ad::Mat::Zero(p->rows(), p->cols()));
  }
}

double Adam::effective_lr() const {
  long s = step_ + 1;
  if (cfg_.warmup_steps > 0 && s <= cfg_.warmup_steps)
    return cfg_.lr * static_cast<double>(s) /
           static_cast<double>(cfg_.warmup_steps);
  return cfg_.lr;
}

bool Adam::step() {
  for (const auto& p : params_) {
    if (!p->grad.allFinite()) {
      std::fprintf(stderr,
                   "[optimizer] non-finite gradient at step %ld; update "
                   "aborted\n",
                   step_ + 1);
      return false;
    }
  }
  const double lr = effective_lr();
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, step_);
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p->grad;
    v_[i] = cfg_.beta2 * v_[i].array().matrix() +
            (1.0 - cfg_.beta2) * p->grad.cwiseProduct(p->grad);
    ad::Mat mhat = m_[i] / bc1;
    ad::Mat vhat = v_[i] / bc2;
    p->val -= lr * mhat.cwiseQuotient(
                       (vhat.array().sqrt() + cfg_.eps).matrix());
  }
  return true;
}

}  // namespace ehd
