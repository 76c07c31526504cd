#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ddf/autodiff.hpp"

namespace ddf {

/// Set of parameter-group names excluded from optimizer updates. Frozen
/// groups receive no update, no optimizer state and no weight decay.
using FreezeMask = std::set<std::string>;

/// Named registry of trainable leaves. Each parameter belongs to exactly one
/// group ("backbone", "predictor", "branch:OCC", "afm", "efm", ...); groups
/// are the unit of learning-rate selection and freezing. Registration order
/// is fixed by model construction, which keeps seeded initialization
/// deterministic. Parameter mutation is single-writer.
class ParamStore {
public:
  ad::Var create(const std::string& group, const std::string& name, Tensor init);

  ad::Var get(const std::string& name) const;
  bool has(const std::string& name) const { return by_name_.count(name) > 0; }
  const std::string& group_of(const std::string& name) const;

  const std::vector<std::string>& names() const { return order_; }
  std::set<std::string> groups() const;
  std::vector<std::string> names_in_group(const std::string& group) const;

  void zero_grads();
  std::size_t total_params() const;

  /// FNV-1a over the raw bytes of every tensor in the group, in registration
  /// order. Used by the freeze-soundness checks.
  std::uint64_t group_hash(const std::string& group) const;

  /// Copies values in place; missing names throw. Extra snapshot entries are
  /// ignored so partial restores stay possible.
  void load_values(const std::map<std::string, Tensor>& values);
  std::map<std::string, Tensor> snapshot() const;

  /// Re-draws every tensor of one group from `rng` (Xavier-uniform weights,
  /// zero biases), preserving shapes. Used when a stage randomly
  /// re-initializes a module.
  void reinit_group(const std::string& group, std::mt19937_64& rng);

private:
  std::map<std::string, ad::Var> by_name_;
  std::map<std::string, std::string> group_;
  std::vector<std::string> order_;
};

/// Xavier-uniform initialization with explicit fan-in/out.
Tensor xavier_init(std::vector<std::size_t> shape, std::size_t fan_in, std::size_t fan_out,
                   std::mt19937_64& rng);
Tensor zeros_init(std::vector<std::size_t> shape);

}  // namespace ddf
