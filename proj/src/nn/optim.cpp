#include "dannet/nn/optim.hpp"

#include <cmath>

namespace dannet::nn {

Sgd::Sgd(std::vector<NamedParam> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  for (const auto& p : params_) {
    momentum_buf_.emplace_back(p.var.value().shape());
    decay_.push_back(p.name.ends_with(".weight"));
  }
}

void Sgd::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var& p = params_[i].var;
    Tensor& w = p.mutable_value();
    Tensor& buf = momentum_buf_[i];
    const Tensor& g = p.grad();
    const float wd = decay_[i] ? static_cast<float>(weight_decay_) : 0.0f;
    const float mu = static_cast<float>(momentum_);
    const float step = static_cast<float>(lr);
    for (std::size_t j = 0; j < w.size(); ++j) {
      buf[j] = mu * buf[j] + (g[j] + wd * w[j]);
      w[j] -= step * buf[j];
    }
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

std::vector<NamedBuffer> Sgd::state() {
  std::vector<NamedBuffer> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({params_[i].name + ".momentum", &momentum_buf_[i]});
  }
  return out;
}

Adam::Adam(std::vector<NamedParam> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.var.value().shape());
    v_.emplace_back(p.var.value().shape());
  }
}

void Adam::step(double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var& p = params_[i].var;
    Tensor& w = p.mutable_value();
    const Tensor& g = p.grad();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m_[i][j] = b1 * m_[i][j] + (1 - b1) * g[j];
      v_[i][j] = b2 * v_[i][j] + (1 - b2) * g[j] * g[j];
      const double mhat = m_[i][j] / c1;
      const double vhat = v_[i][j] / c2;
      w[j] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

std::vector<NamedBuffer> Adam::state() {
  std::vector<NamedBuffer> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({params_[i].name + ".adam_m", &m_[i]});
    out.push_back({params_[i].name + ".adam_v", &v_[i]});
  }
  return out;
}

}  // namespace dannet::nn
