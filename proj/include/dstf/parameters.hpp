#pragma once

#include "dstf/autodiff.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace dstf {

using ad::Matrix;

// Handle into a ParameterStore. Default-constructed handles are "absent".
struct ParamId {
    int index = -1;
    [[nodiscard]] bool valid() const { return index >= 0; }
};

// Named, ordered collection of trainable matrices.
class ParameterStore {
public:
    ParamId add(const std::string& name, Matrix value);
    // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    ParamId add_uniform(const std::string& name, ad::Index rows, ad::Index cols, double fan_in, std::mt19937_64& rng);

    [[nodiscard]] std::size_t size() const { return values_.size(); }
    [[nodiscard]] std::size_t scalar_count() const;
    [[nodiscard]] const std::string& name(ParamId id) const { return names_.at(static_cast<std::size_t>(id.index)); }
    [[nodiscard]] const std::string& name(std::size_t i) const { return names_.at(i); }
    [[nodiscard]] Matrix& value(ParamId id) { return values_.at(static_cast<std::size_t>(id.index)); }
    [[nodiscard]] const Matrix& value(ParamId id) const { return values_.at(static_cast<std::size_t>(id.index)); }
    [[nodiscard]] Matrix& value(std::size_t i) { return values_.at(i); }
    [[nodiscard]] const Matrix& value(std::size_t i) const { return values_.at(i); }
    [[nodiscard]] ParamId find(const std::string& name) const;

    void set_all_zero();

private:
    std::vector<std::string> names_;
    std::vector<Matrix> values_;
    std::unordered_map<std::string, int> lookup_;
};

// Gradient buffers shaped like a ParameterStore.
struct Gradients {
    std::vector<Matrix> grads;

    static Gradients zeros_like(const ParameterStore& store);
    void add(const Gradients& other);
    void scale(double s);
    [[nodiscard]] double norm() const;
};

// Binds parameters of a store as differentiable leaves on a tape, lazily.
class Binder {
public:
    // With `track_gradients` false parameters are bound as constants (inference).
    Binder(ad::Tape& tape, const ParameterStore& store, bool track_gradients = true);

    ad::Var operator()(ParamId id);
    [[nodiscard]] ad::Tape& tape() const { return *tape_; }
    [[nodiscard]] ad::Var constant(Matrix m) const { return tape_->constant(std::move(m)); }

    // Reads back gradients of every bound leaf after backward().
    void collect(Gradients& out) const;

private:
    ad::Tape* tape_;
    const ParameterStore* store_;
    std::vector<ad::Var> bound_;
    bool track_;
};

}  // namespace dstf
