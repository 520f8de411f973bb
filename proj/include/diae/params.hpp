#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "diae/autodiff.hpp"
#include "diae/tensor.hpp"

namespace diae {

// Named parameter set with a stable iteration order (insertion order), so
// optimizer updates, checkpoints and gradient checks all walk parameters the
// same way.
template <class T>
class ParamStore {
public:
    int add(std::string name, Tensor<T> t) {
        require(index_.find(name) == index_.end(), "duplicate parameter " + name);
        index_[name] = int(items_.size());
        items_.push_back({std::move(name), std::move(t)});
        return int(items_.size()) - 1;
    }

    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    Tensor<T>& at(const std::string& name) {
        auto it = index_.find(name);
        require(it != index_.end(), "unknown parameter " + name);
        return items_[size_t(it->second)].tensor;
    }
    const Tensor<T>& at(const std::string& name) const {
        return const_cast<ParamStore*>(this)->at(name);
    }

    size_t size() const { return items_.size(); }
    const std::string& name(size_t i) const { return items_[i].name; }
    Tensor<T>& tensor(size_t i) { return items_[i].tensor; }
    const Tensor<T>& tensor(size_t i) const { return items_[i].tensor; }

    size_t total_scalars() const {
        size_t n = 0;
        for (const auto& it : items_) n += it.tensor.numel();
        return n;
    }

    template <class U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (const auto& it : items_) out.add(it.name, it.tensor.template cast<U>());
        return out;
    }

private:
    struct Item {
        std::string name;
        Tensor<T> tensor;
    };
    std::vector<Item> items_;
    std::unordered_map<std::string, int> index_;
};

// Leaf ids of a ParamStore bound into one Graph.
template <class T>
struct BoundParams {
    std::unordered_map<std::string, int> ids;

    int operator[](const std::string& name) const {
        auto it = ids.find(name);
        require(it != ids.end(), "parameter not bound: " + name);
        return it->second;
    }
};

template <class T>
BoundParams<T> bind_params(Graph<T>& g, const ParamStore<T>& store,
                           bool trainable = true) {
    BoundParams<T> bound;
    for (size_t i = 0; i < store.size(); ++i)
        bound.ids[store.name(i)] = g.leaf(store.tensor(i), trainable, store.name(i));
    return bound;
}

} // namespace diae
