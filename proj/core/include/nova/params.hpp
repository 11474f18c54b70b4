#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "nova/tensor.hpp"

namespace nova {

// Named registry of learnable tensors. Registration order is the canonical
// iteration order for the optimizer and the checkpoint writer, so it must be
// deterministic given a model configuration.
template <typename T>
class ParamSet {
 public:
  void add(const std::string& name, const Tensor<T>& t) {
    if (index_.count(name))
      throw ContractError("ParamSet: duplicate parameter " + name);
    index_[name] = items_.size();
    items_.push_back({name, t});
  }

  std::size_t size() const { return items_.size(); }

  const std::string& name(std::size_t i) const { return items_[i].first; }
  Tensor<T>& tensor(std::size_t i) { return items_[i].second; }
  const Tensor<T>& tensor(std::size_t i) const { return items_[i].second; }

  bool contains(const std::string& name) const { return index_.count(name); }
  Tensor<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end())
      throw ContractError("ParamSet: unknown parameter " + name);
    return items_[it->second].second;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : items_) n += t.size();
    return n;
  }

  void zero_grad() {
    for (auto& [_, t] : items_) t.zero_grad();
  }

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace nova
