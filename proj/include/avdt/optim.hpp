#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "avdt/autodiff.hpp"

namespace avdt {

template <typename T>
struct SgdOptimizer {
    T lr = T(1e-4);

    void step(ParamStore<T>& ps) {
        for (std::size_t i = 0; i < ps.size(); ++i) {
            Parameter<T>& p = ps.at(i);
            if (p.node->grad.empty())
                throw NumericError("sgd: missing gradient for " + p.name);
            Tensor<T>& v = p.value();
            const Tensor<T>& g = p.node->grad;
            for (std::size_t j = 0; j < v.numel(); ++j) v[j] -= lr * g[j];
            v.require_finite("sgd step");
        }
    }
};

template <typename T>
struct AdamOptimizer {
    T lr = T(1e-4);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    std::size_t t = 0; // completed steps

    std::vector<Tensor<T>> m, v;

    void ensure_state(ParamStore<T>& ps) {
        if (m.size() == ps.size()) return;
        m.clear();
        v.clear();
        for (std::size_t i = 0; i < ps.size(); ++i) {
            m.emplace_back(ps.at(i).value().shape());
            v.emplace_back(ps.at(i).value().shape());
        }
    }

    void step(ParamStore<T>& ps) {
        ensure_state(ps);
        ++t;
        T bc1 = T(1) - std::pow(beta1, T(t));
        T bc2 = T(1) - std::pow(beta2, T(t));
        for (std::size_t i = 0; i < ps.size(); ++i) {
            Parameter<T>& p = ps.at(i);
            if (p.node->grad.empty())
                throw NumericError("adam: missing gradient for " + p.name);
            Tensor<T>& val = p.value();
            const Tensor<T>& g = p.node->grad;
            Tensor<T>& mi = m[i];
            Tensor<T>& vi = v[i];
            for (std::size_t j = 0; j < val.numel(); ++j) {
                mi[j] = beta1 * mi[j] + (T(1) - beta1) * g[j];
                vi[j] = beta2 * vi[j] + (T(1) - beta2) * g[j] * g[j];
                T mhat = mi[j] / bc1;
                T vhat = vi[j] / bc2;
                val[j] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
            val.require_finite("adam step");
        }
    }
};

} // namespace avdt
