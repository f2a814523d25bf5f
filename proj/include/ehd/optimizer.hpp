#pragma once

#include <map>
#include <string>
#include <vector>

#include "ehd/autodiff.hpp"

namespace ehd {

// Named trainable leaves. Graphs reference these leaves across steps; the
// store itself is mutated only between steps.
class ParamStore {
 public:
  ad::Value add(const std::string& name, ad::Mat init);
  ad::Value get(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) > 0; }

  const std::map<std::string, ad::Value>& all() const { return params_; }
  std::vector<ad::Value> leaves() const;
  void zero_grad() const;

 private:
  std::map<std::string, ad::Value> params_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long warmup_steps = 0;  // linear warmup from 0 to lr, then constant
};

class Adam {
 public:
  Adam(const ParamStore& store, AdamConfig cfg);

  // Applies one moment-tracked update from the gradients currently stored on
  // the parameters. Returns false (and leaves parameters untouched) if any
  // gradient is non-finite; the incident is logged with the step index.
  bool step();

  long steps_taken() const { return step_; }
  double effective_lr() const;

 private:
  std::vector<ad::Value> params_;
  std::vector<ad::Mat> m_, v_;
  AdamConfig cfg_;
  long step_ = 0;
};

}  // namespace ehd
