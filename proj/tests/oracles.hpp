#pragma once

// Reference implementations used only by tests. They are written from the
// definitions, not from the library code, and favour clarity over speed.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "hcil/feature_store.hpp"
#include "hcil/hierarchy.hpp"
#include "hcil/linear_svm.hpp"

namespace oracle {

// Greedy herding in exact integer arithmetic. With S the sum of the chosen
// vectors and T the class total, the distance between the class mean T/n and
// the exemplar mean (S+f)/k orders like |k*T - n*(S+f)|^2.
inline std::vector<std::size_t> herd_exact(const std::vector<std::vector<long long>>& f, std::size_t m) {
    const std::size_t n = f.size();
    m = std::min(m, n);
    if (n == 0) return {};
    const std::size_t d = f[0].size();
    std::vector<long long> total(d, 0);
    for (const auto& v : f)
        for (std::size_t j = 0; j < d; ++j) total[j] += v[j];
    std::vector<long long> chosen_sum(d, 0);
    std::vector<std::size_t> picked;
    for (std::size_t k = 1; k <= m; ++k) {
        bool have = false;
        __int128 best = 0;
        std::size_t best_i = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (std::find(picked.begin(), picked.end(), i) != picked.end()) continue;
            __int128 dist = 0;
            for (std::size_t j = 0; j < d; ++j) {
                const __int128 diff = static_cast<__int128>(k) * total[j] -
                                      static_cast<__int128>(n) * (chosen_sum[j] + f[i][j]);
                dist += diff * diff;
            }
            if (!have || dist < best) {
                have = true;
                best = dist;
                best_i = i;
            }
        }
        picked.push_back(best_i);
        for (std::size_t j = 0; j < d; ++j) chosen_sum[j] += f[best_i][j];
    }
    return picked;
}

// Greedy herding on real vectors, recomputing both means from scratch in long
// double at every step.
inline std::vector<std::size_t> herd_naive(const std::vector<std::vector<float>>& f, std::size_t m) {
    const std::size_t n = f.size();
    m = std::min(m, n);
    if (n == 0) return {};
    const std::size_t d = f[0].size();
    std::vector<long double> mu(d, 0.0L);
    for (const auto& v : f)
        for (std::size_t j = 0; j < d; ++j) mu[j] += v[j];
    for (auto& x : mu) x /= static_cast<long double>(n);

    std::vector<std::size_t> picked;
    for (std::size_t k = 1; k <= m; ++k) {
        long double best = std::numeric_limits<long double>::infinity();
        std::size_t best_i = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (std::find(picked.begin(), picked.end(), i) != picked.end()) continue;
            long double dist = 0.0L;
            for (std::size_t j = 0; j < d; ++j) {
                long double mean = f[i][j];
                for (std::size_t p : picked) mean += f[p][j];
                mean /= static_cast<long double>(k);
                dist += (mu[j] - mean) * (mu[j] - mean);
            }
            if (dist < best) {
                best = dist;
                best_i = i;
            }
        }
        picked.push_back(best_i);
    }
    return picked;
}

// b + w0*x0 + w1*x1 + ... accumulated left to right.
inline double dot_margin(const std::vector<double>& w, double b, const std::vector<float>& x) {
    std::vector<double> xd(x.begin(), x.end());
    return std::inner_product(w.begin(), w.end(), xd.begin(), b);
}

inline double logistic(double a, double b, double m) {
    return 1.0 / (1.0 + std::exp(a * m + b));
}

// Two points x=-1 (label -1) and x=+1 (label +1), bias as an augmented
// weight. By symmetry b=0; the primal reduces to w^2/2 + 2C*max(0, 1-w),
// minimized at w = min(1, 2C).
struct Line {
    double w;
    double b;
};
inline Line two_point_solution(double c) { return {std::min(1.0, 2.0 * c), 0.0}; }

// Hinge-loss primal with the augmented bias and explicit per-example C_i.
inline double primal(const hcil::SvmProblem& p, const std::vector<double>& w, double b,
                     const std::vector<double>& c_i) {
    double reg = b * b;
    for (double v : w) reg += v * v;
    double loss = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        double s = b;
        for (std::size_t j = 0; j < p.dimension; ++j) s += w[j] * p.features[i * p.dimension + j];
        loss += c_i[i] * std::max(0.0, 1.0 - p.labels[i] * s);
    }
    return 0.5 * reg + loss;
}

// Cross-entropy of the logistic map against the given targets.
inline double log_loss(const std::vector<double>& margins, const std::vector<double>& targets, double a,
                       double b) {
    double total = 0.0;
    for (std::size_t i = 0; i < margins.size(); ++i) {
        const double p = std::clamp(logistic(a, b, margins[i]), 1e-300, 1.0 - 1e-16);
        total -= targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p);
    }
    return total;
}

inline std::vector<double> smoothed_targets(const std::vector<int>& labels) {
    double pos = 0, neg = 0;
    for (int y : labels) (y > 0 ? pos : neg) += 1;
    std::vector<double> t;
    for (int y : labels) t.push_back(y > 0 ? (pos + 1) / (pos + 2) : 1 / (neg + 2));
    return t;
}

// Hard routing evaluated SVM by SVM from the serialized parameters.
inline hcil::HierPrediction route(const hcil::HierarchicalModel& model, const std::vector<float>& x) {
    // Confidence is increasing in the log-odds; comparing log-odds avoids
    // saturated confidences comparing equal.
    hcil::HierPrediction out;
    bool first = true;
    double best = 0.0;
    for (const auto& [g, svm] : model.coarse_bank()) {
        const double z = -(svm.calib_a * dot_margin(svm.weights, svm.bias, x) + svm.calib_b);
        if (first || z > best) {
            first = false;
            out.group_id = g;
            best = z;
        }
    }
    out.group_confidence = 1.0 / (1.0 + std::exp(-best));
    const auto& bank = model.fine_banks().at(out.group_id);
    if (bank.seen.size() == 1 || bank.svms.empty()) {
        out.species_id = bank.seen.front();
        out.species_confidence = out.group_confidence;
        return out;
    }
    first = true;
    for (const auto& [s, svm] : bank.svms) {
        const double z = -(svm.calib_a * dot_margin(svm.weights, svm.bias, x) + svm.calib_b);
        if (first || z > best) {
            first = false;
            out.species_id = s;
            best = z;
        }
    }
    out.species_confidence = 1.0 / (1.0 + std::exp(-best));
    return out;
}

// Byte image of a feature file built field by field.
inline std::string feature_file_bytes(std::uint32_t dimension, const std::vector<hcil::FeatureRecord>& records,
                                      std::uint64_t declared_count) {
    static_assert(std::endian::native == std::endian::little);
    std::string out = "HCF1";
    auto put = [&out](const auto& v) { out.append(reinterpret_cast<const char*>(&v), sizeof v); };
    put(std::uint32_t{1});
    put(dimension);
    put(declared_count);
    for (const auto& r : records) {
        put(r.fish_id);
        put(r.frame_id);
        put(r.group_id);
        put(r.species_id);
        for (float v : r.feature) put(v);
    }
    return out;
}

}  // namespace oracle
