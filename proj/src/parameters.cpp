#include "dstf/parameters.hpp"

#include <cmath>
#include <stdexcept>

namespace dstf {

ParamId ParameterStore::add(const std::string& name, Matrix value) {
    if (lookup_.contains(name)) throw std::logic_error("duplicate parameter name: " + name);
    const int idx = static_cast<int>(values_.size());
    names_.push_back(name);
    values_.push_back(std::move(value));
    lookup_.emplace(name, idx);
    return ParamId{idx};
}

ParamId ParameterStore::add_uniform(const std::string& name, ad::Index rows, ad::Index cols, double fan_in,
                                    std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix m(rows, cols);
    for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return add(name, std::move(m));
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
    return n;
}

ParamId ParameterStore::find(const std::string& name) const {
    auto it = lookup_.find(name);
    return it == lookup_.end() ? ParamId{} : ParamId{it->second};
}

void ParameterStore::set_all_zero() {
    for (auto& v : values_) v.setZero();
}

Gradients Gradients::zeros_like(const ParameterStore& store) {
    Gradients g;
    g.grads.reserve(store.size());
    for (std::size_t i = 0; i < store.size(); ++i) {
        g.grads.push_back(Matrix::Zero(store.value(i).rows(), store.value(i).cols()));
    }
    return g;
}

void Gradients::add(const Gradients& other) {
    for (std::size_t i = 0; i < grads.size(); ++i) grads[i] += other.grads[i];
}

void Gradients::scale(double s) {
    for (auto& g : grads) g *= s;
}

double Gradients::norm() const {
    double sq = 0.0;
    for (const auto& g : grads) sq += g.squaredNorm();
    return std::sqrt(sq);
}

Binder::Binder(ad::Tape& tape, const ParameterStore& store, bool track_gradients)
    : tape_(&tape), store_(&store), bound_(store.size()), track_(track_gradients) {}

ad::Var Binder::operator()(ParamId id) {
    if (!id.valid()) throw std::logic_error("binding an absent parameter");
    auto& slot = bound_.at(static_cast<std::size_t>(id.index));
    if (!slot.valid()) slot = track_ ? tape_->leaf(store_->value(id)) : tape_->constant(store_->value(id));
    return slot;
}

void Binder::collect(Gradients& out) const {
    for (std::size_t i = 0; i < bound_.size(); ++i) {
        if (!bound_[i].valid()) continue;
        const auto& g = bound_[i].grad();
        if (g.size() != 0) out.grads[i] += g;
    }
}

}  // namespace dstf
