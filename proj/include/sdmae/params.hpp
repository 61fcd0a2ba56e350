#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "sdmae/common.hpp"
#include "sdmae/rng.hpp"

namespace sdmae {

// A learnable tensor plus its gradient and Adam moments, addressed by a
// hierarchical name like "encoder.block0.attn.wq".
struct Param {
    std::string name;
    Mat value;
    Mat grad;
    Mat adam_m;
    Mat adam_v;
    bool weight_decay = true;  // matrices decay, biases/norm gains/tokens do not
    bool trainable = true;     // false for momentum copies: no grads, no optimizer step

    Param(std::string n, int rows, int cols, bool decay, bool train = true)
        : name(std::move(n)), value(rows, cols), grad(rows, cols),
          adam_m(rows, cols), adam_v(rows, cols), weight_decay(decay), trainable(train) {}

    size_t count() const { return value.size(); }
};

enum class Init { Zero, TruncNormal002, One, XavierUniform };

// Owns parameters in registration order. Registration order is fixed by the
// model builders, which pins initialization draws, optimizer traversal and
// checkpoint layout — all three must be deterministic.
class ParamStore {
public:
    Param& add(const std::string& name, int rows, int cols, Init init, Rng& rng, bool decay,
               bool trainable = true) {
        if (index_.count(name)) throw_config("duplicate parameter name: " + name);
        auto p = std::make_unique<Param>(name, rows, cols, decay, trainable);
        switch (init) {
            case Init::Zero:
                break;
            case Init::One:
                p->value.fill(1.0);
                break;
            case Init::TruncNormal002:
                for (auto& v : p->value.data) v = rng.truncated_normal(0.02);
                break;
            case Init::XavierUniform: {
                const double bound = std::sqrt(6.0 / (rows + cols));
                for (auto& v : p->value.data) v = (2.0 * rng.uniform() - 1.0) * bound;
                break;
            }
        }
        index_[name] = params_.size();
        params_.push_back(std::move(p));
        return *params_.back();
    }

    Param* find(const std::string& name) {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : params_[it->second].get();
    }
    const Param* find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : params_[it->second].get();
    }

    Param& get(const std::string& name) {
        Param* p = find(name);
        if (!p) throw_config("unknown parameter: " + name);
        return *p;
    }

    std::vector<std::unique_ptr<Param>>& all() { return params_; }
    const std::vector<std::unique_ptr<Param>>& all() const { return params_; }

    size_t total_count() const {
        size_t n = 0;
        for (const auto& p : params_) n += p->count();
        return n;
    }

    void zero_grads() {
        for (auto& p : params_) p->grad.fill(0.0);
    }

private:
    std::vector<std::unique_ptr<Param>> params_;
    std::unordered_map<std::string, size_t> index_;
};

}  // namespace sdmae
