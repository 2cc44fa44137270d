#pragma once

#include "dstf/autodiff.hpp"
#include "dstf/data.hpp"
#include "dstf/model.hpp"
#include "dstf/parameters.hpp"
#include "dstf/synthetic.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace dstf::testing {

inline Matrix random_matrix(ad::Index rows, ad::Index cols, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Matrix m(rows, cols);
    for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

struct GroupError {
    std::string name;
    double analytic_norm = 0.0;
    double numeric_norm = 0.0;
    double relative = 0.0;
};

// Compares tape gradients of a scalar loss with central differences for
// every parameter of `store`, grouped by parameter tensor.
inline std::vector<GroupError> gradient_check(ParameterStore& store, const std::function<ad::Var(Binder&)>& loss,
                                              double step = 1e-5) {
    Gradients analytic = Gradients::zeros_like(store);
    {
        ad::Tape tape;
        Binder binder(tape, store);
        const ad::Var l = loss(binder);
        tape.backward(l);
        binder.collect(analytic);
    }
    auto evaluate = [&] {
        ad::Tape tape;
        Binder binder(tape, store, false);
        return loss(binder).value()(0, 0);
    };
    std::vector<GroupError> out;
    for (std::size_t p = 0; p < store.size(); ++p) {
        Matrix& value = store.value(p);
        Matrix numeric(value.rows(), value.cols());
        for (ad::Index k = 0; k < value.size(); ++k) {
            const double saved = value.data()[k];
            value.data()[k] = saved + step;
            const double up = evaluate();
            value.data()[k] = saved - step;
            const double down = evaluate();
            value.data()[k] = saved;
            numeric.data()[k] = (up - down) / (2.0 * step);
        }
        GroupError e;
        e.name = store.name(p);
        e.analytic_norm = analytic.grads[p].norm();
        e.numeric_norm = numeric.norm();
        const double scale = std::max({e.analytic_norm, e.numeric_norm, 1e-12});
        e.relative = (analytic.grads[p] - numeric).norm() / scale;
        out.push_back(e);
    }
    return out;
}

// A small dataset plus its windows, for model-level tests.
struct SyntheticWindows {
    std::shared_ptr<TrafficDataset> dataset;
    Matrix adjacency;
    std::vector<SampleWindow> windows;
};

inline SyntheticWindows synthetic_windows(const SyntheticSpec& spec, int input_len, int output_len) {
    auto data = make_synthetic(spec);
    SyntheticWindows out;
    out.dataset = std::make_shared<TrafficDataset>(std::move(data.dataset));
    out.adjacency = data.adjacency;
    out.windows = make_windows(out.dataset, input_len, output_len);
    return out;
}

}  // namespace dstf::testing
