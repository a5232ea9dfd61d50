#pragma once

#include <map>
#include <string>

#include "emotok/tensor.hpp"

namespace emotok {

// Named parameter tensors shared by the trainable modules. Ordered map so
// every iteration (optimizer steps, checkpoints, gradient checks) visits
// parameters in one deterministic order.
class ParameterStore {
public:
    struct Entry {
        Tensor value;
        bool trainable = true;
    };

    Tensor& add(const std::string& name, Tensor init, bool trainable = true) {
        auto [it, inserted] = entries_.insert_or_assign(name, Entry{std::move(init), trainable});
        return it->second.value;
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }

    Tensor& get(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ParameterError("unknown parameter: " + name);
        return it->second.value;
    }

    const Tensor& get(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ParameterError("unknown parameter: " + name);
        return it->second.value;
    }

    bool trainable(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ParameterError("unknown parameter: " + name);
        return it->second.trainable;
    }

    void set_trainable(const std::string& name, bool trainable) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw ParameterError("unknown parameter: " + name);
        it->second.trainable = trainable;
    }

    // Flip the trainable flag for every parameter whose name starts with prefix.
    void set_trainable_prefix(const std::string& prefix, bool trainable) {
        for (auto& [name, entry] : entries_) {
            if (name.rfind(prefix, 0) == 0) entry.trainable = trainable;
        }
    }

    std::map<std::string, Entry>& entries() { return entries_; }
    const std::map<std::string, Entry>& entries() const { return entries_; }

    std::size_t size() const { return entries_.size(); }

private:
    std::map<std::string, Entry> entries_;
};

}  // namespace emotok
