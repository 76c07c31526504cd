#include "ddf/params.hpp"

#include <cmath>
#include <stdexcept>

#include "ddf/kernels.hpp"

namespace ddf {

ad::Var ParamStore::create(const std::string& group, const std::string& name, Tensor init) {
  if (by_name_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
  ad::Var v = ad::param(std::move(init));
  by_name_.emplace(name, v);
  group_.emplace(name, group);
  order_.push_back(name);
  return v;
}

ad::Var ParamStore::get(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::invalid_argument("ParamStore: unknown name " + name);
  return it->second;
}

const std::string& ParamStore::group_of(const std::string& name) const {
  auto it = group_.find(name);
  if (it == group_.end()) throw std::invalid_argument("ParamStore: unknown name " + name);
  return it->second;
}

std::set<std::string> ParamStore::groups() const {
  std::set<std::string> g;
  for (const auto& [name, grp] : group_) g.insert(grp);
  return g;
}

std::vector<std::string> ParamStore::names_in_group(const std::string& group) const {
  std::vector<std::string> out;
  for (const auto& name : order_)
    if (group_.at(name) == group) out.push_back(name);
  return out;
}

void ParamStore::zero_grads() {
  for (auto& [name, v] : by_name_) const_cast<ad::Var&>(v).zero_grad();
}

std::size_t ParamStore::total_params() const {
  std::size_t n = 0;
  for (const auto& [name, v] : by_name_) n += v.numel();
  return n;
}

std::uint64_t ParamStore::group_hash(const std::string& group) const {
  std::uint64_t h = fnv1a(group);
  for (const auto& name : order_) {
    if (group_.at(name) != group) continue;
    const Tensor& t = by_name_.at(name).value();
    h = fnv1a(t.data(), t.numel() * sizeof(double), h);
  }
  return h;
}

void ParamStore::load_values(const std::map<std::string, Tensor>& values) {
  for (const auto& name : order_) {
    auto it = values.find(name);
    if (it == values.end()) throw std::invalid_argument("ParamStore: snapshot missing " + name);
    ad::Var v = by_name_.at(name);
    if (!v.value().same_shape(it->second))
      throw std::invalid_argument("ParamStore: shape mismatch for " + name);
    v.mutable_value() = it->second;
  }
}

std::map<std::string, Tensor> ParamStore::snapshot() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, v] : by_name_) out.emplace(name, v.value());
  return out;
}

void ParamStore::reinit_group(const std::string& group, std::mt19937_64& rng) {
  for (const auto& name : order_) {
    if (group_.at(name) != group) continue;
    ad::Var v = by_name_.at(name);
    Tensor& t = v.mutable_value();
    if (t.rank() <= 1) {
      t.fill(0.0);  // biases and norm offsets restart at zero
    } else {
      std::size_t fan_in = t.numel() / t.dim(0), fan_out = t.dim(0);
      if (t.rank() == 2) {
        fan_in = t.dim(0);
        fan_out = t.dim(1);
      }
      t = xavier_init(t.shape(), fan_in, fan_out, rng);
    }
  }
}

Tensor xavier_init(std::vector<std::size_t> shape, std::size_t fan_in, std::size_t fan_out,
                   std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
  return t;
}

Tensor zeros_init(std::vector<std::size_t> shape) { return Tensor::zeros(std::move(shape)); }

}  // namespace ddf
