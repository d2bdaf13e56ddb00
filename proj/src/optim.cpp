#include "srl/optim.hpp"

#include <cmath>
#include <string_view>

namespace srl::opt {

Adam::Adam(const ad::ParameterSet& params, AdamConfig config) : config_(config) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const ad::Parameter& p : params) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void Adam::step(ad::ParameterSet& params) {
  if (params.size() != m_.size()) throw ShapeError("adam: parameter count changed");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Parameter& p = params[i];
    if (p.size() != m_[i].size()) throw ShapeError("adam: shape mismatch for " + p.name);
    double* value = p.value->data();
    double* grad = p.grad->data();
    double* m = m_[i].data();
    double* v = v_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = grad[j];
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double mhat = m[j] / bias1;
      const double vhat = v[j] / bias2;
      value[j] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
    p.zero_grad();
  }
}

namespace {

// "value.gru.wz" -> "gru.wz"; target copies differ only in the net prefix.
std::string_view strip_net_prefix(const std::string& name) {
  const std::size_t dot = name.find('.');
  return dot == std::string::npos ? std::string_view(name)
                                  : std::string_view(name).substr(dot + 1);
}

}  // namespace

void polyak_update(ad::ParameterSet& target, const ad::ParameterSet& online, double sigma) {
  if (!(sigma > 0.0 && sigma <= 1.0)) throw ConfigError("polyak: sigma must be in (0,1]");
  if (target.size() != online.size()) throw ShapeError("polyak: parameter manifests disagree");
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i].shape != online[i].shape ||
        strip_net_prefix(target[i].name) != strip_net_prefix(online[i].name)) {
      throw ShapeError("polyak: parameter manifests disagree at \"" + target[i].name + "\"");
    }
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    double* t = target[i].value->data();
    const double* o = online[i].value->data();
    for (std::size_t j = 0; j < target[i].size(); ++j) {
      t[j] = sigma * o[j] + (1.0 - sigma) * t[j];
    }
  }
}

}  // namespace srl::opt
