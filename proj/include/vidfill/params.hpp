#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace vidfill {

// Generic dense n-d array used for model parameters and gradients.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        v.assign(n, 0.0);
    }
    std::size_t size() const { return v.size(); }
    double* data() { return v.data(); }
    const double* data() const { return v.data(); }
};

// Ordered collection of named tensors. Iteration order is insertion order,
// which makes optimizer sweeps and serialization deterministic.
class NamedTensors {
public:
    Tensor& add(const std::string& name, std::vector<std::size_t> shape) {
        if (index_.count(name)) throw std::invalid_argument("duplicate tensor name: " + name);
        index_[name] = tensors_.size();
        names_.push_back(name);
        tensors_.emplace_back(std::move(shape));
        return tensors_.back();
    }
    Tensor& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::invalid_argument("unknown tensor: " + name);
        return tensors_[it->second];
    }
    const Tensor& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::invalid_argument("unknown tensor: " + name);
        return tensors_[it->second];
    }
    bool has(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t count() const { return tensors_.size(); }
    const std::string& name(std::size_t i) const { return names_[i]; }
    Tensor& tensor(std::size_t i) { return tensors_[i]; }
    const Tensor& tensor(std::size_t i) const { return tensors_[i]; }

    std::size_t total_scalars() const {
        std::size_t n = 0;
        for (const auto& t : tensors_) n += t.size();
        return n;
    }

    NamedTensors zeros_like() const {
        NamedTensors out;
        for (std::size_t i = 0; i < count(); ++i) out.add(names_[i], tensors_[i].shape);
        return out;
    }

    void accumulate(const NamedTensors& other, double scale = 1.0) {
        if (other.count() != count()) throw std::invalid_argument("tensor collection mismatch");
        for (std::size_t i = 0; i < count(); ++i) {
            auto& dst = tensors_[i].v;
            const auto& src = other.tensors_[i].v;
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += scale * src[j];
        }
    }

    void scale(double s) {
        for (auto& t : tensors_)
            for (double& x : t.v) x *= s;
    }

private:
    std::vector<std::string> names_;
    std::vector<Tensor> tensors_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace vidfill
