#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "omd/mat.hpp"

namespace omd {

// One learnable array. Gradient buffer has the same shape and is owned here
// so the training loop can accumulate over a batch and step in place.
struct Param {
    std::string name;
    Mat value;
    Mat grad;

    Param(std::string n, int rows, int cols)
        : name(std::move(n)), value(rows, cols), grad(rows, cols) {}
};

// Registry of named parameter arrays. Creation order is the canonical order
// for listings, checkpoints and checksums; names are hierarchical with the
// owning module as the first dotted component (the "parameter group").
class ParamStore {
public:
    Param& create(const std::string& name, int rows, int cols) {
        if (by_name_.count(name))
            throw ValidationError("duplicate parameter name: " + name);
        params_.push_back(std::make_unique<Param>(name, rows, cols));
        by_name_[name] = params_.back().get();
        return *params_.back();
    }

    Param* find(const std::string& name) {
        auto it = by_name_.find(name);
        return it == by_name_.end() ? nullptr : it->second;
    }
    const Param* find(const std::string& name) const {
        auto it = by_name_.find(name);
        return it == by_name_.end() ? nullptr : it->second;
    }

    const std::vector<std::unique_ptr<Param>>& all() const { return params_; }

    std::vector<Param*> group(const std::string& group_name) {
        std::vector<Param*> out;
        const std::string prefix = group_name + ".";
        for (auto& p : params_)
            if (p->name.rfind(prefix, 0) == 0) out.push_back(p.get());
        return out;
    }

    std::vector<std::string> group_names() const {
        std::vector<std::string> out;
        for (const auto& p : params_) {
            std::string g = p->name.substr(0, p->name.find('.'));
            if (out.empty() || out.back() != g) {
                bool seen = false;
                for (const auto& s : out)
                    if (s == g) seen = true;
                if (!seen) out.push_back(g);
            }
        }
        return out;
    }

    void zero_grads() {
        for (auto& p : params_) p->grad.fill(0.0);
    }

    std::size_t total_elements() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p->value.size();
        return n;
    }

    // Bitwise checksum of all arrays in a group, in creation order.
    std::uint64_t group_checksum(const std::string& group_name) const {
        const std::string prefix = group_name + ".";
        std::uint64_t h = 1469598103934665603ull;
        for (const auto& p : params_)
            if (p->name.rfind(prefix, 0) == 0)
                h = fnv1a64(p->value.data(), p->value.size() * sizeof(double), h);
        return h;
    }

private:
    std::vector<std::unique_ptr<Param>> params_;
    std::unordered_map<std::string, Param*> by_name_;
};

}  // namespace omd
