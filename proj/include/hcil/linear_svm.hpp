#pragma once

#include <compare>
#include <concepts>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "hcil/error.hpp"

namespace hcil {

enum class SvmLevel : std::uint8_t { coarse = 0, fine = 1 };

// Which class an SVM is positive for: a group (coarse) or a species (fine).
// Ordering puts every coarse SVM before every fine SVM, then by label id.
struct SvmIdentity {
    SvmLevel level = SvmLevel::coarse;
    std::uint16_t label = 0;

    auto operator<=>(const SvmIdentity&) const = default;

    std::string to_string() const;
};

// Dense binary training set. Labels are +1 / -1; features are stored
// row-major without the bias component.
struct SvmProblem {
    std::size_t dimension = 0;
    std::vector<double> features;
    std::vector<int> labels;
    double c = 1.0;

    explicit SvmProblem(std::size_t dim = 0, double c_value = 1.0) : dimension(dim), c(c_value) {}

    template <std::floating_point T>
    void add(std::span<const T> x, int label) {
        if (x.size() != dimension) {
            throw ValidationError("training vector has dimension " + std::to_string(x.size()) +
                                  ", expected " + std::to_string(dimension));
        }
        features.insert(features.end(), x.begin(), x.end());
        labels.push_back(label);
    }

    std::size_t size() const { return labels.size(); }
    std::span<const double> row(std::size_t i) const {
        return {features.data() + i * dimension, dimension};
    }

    // Throws ValidationError (shape, labels, non-finite values, C) or
    // DegenerateError (only one class present).
    void validate() const;
};

struct SvmOptions {
    double tol = 1e-6;           // duality gap target
    int max_iter = 10000;        // epochs
    std::uint64_t seed = 0;      // coordinate order
    bool balance_classes = true; // C+ = C * n- / n+, C- = C
    bool shrinking = true;       // skip bound variables; convergence is still certified on all rows
};

struct CalibratedSvm {
    SvmIdentity identity;
    std::vector<double> weights;
    double bias = 0.0;
    // confidence = 1 / (1 + exp(calib_a * margin + calib_b)); calib_a < 0.
    double calib_a = -1.0;
    double calib_b = 0.0;

    std::size_t dimension() const { return weights.size(); }

    nlohmann::json to_json() const;
    static CalibratedSvm from_json(const nlohmann::json& j);

    bool operator==(const CalibratedSvm&) const = default;
};

// Per-epoch solver observations, for tests and diagnostics.
struct SolverTrace {
    std::vector<double> dual_objective;
    bool alpha_in_box = true;  // every alpha_i in [0, C_i] after every update
};

struct SvmFit {
    CalibratedSvm svm;  // calibration still the fixed map
    double primal = 0.0;
    double dual = 0.0;
    double duality_gap = 0.0;
    int epochs = 0;
    bool converged = false;
    std::vector<double> alpha;
    std::vector<double> upper_bound;  // per-example box limit C_i
};

// Dual coordinate descent on the hinge-loss dual. The bias is learned as the
// weight of a constant feature of value 1, so it is regularized along with w.
SvmFit train(const SvmProblem& problem, const SvmOptions& options = {},
             SolverTrace* trace = nullptr);

// Per-example box limits used by train() for the given options.
std::vector<double> box_limits(const SvmProblem& problem, bool balance_classes);

template <std::floating_point T>
double margin(const CalibratedSvm& svm, std::span<const T> x) {
    if (x.size() != svm.weights.size()) {
        throw ValidationError("input has dimension " + std::to_string(x.size()) + ", SVM expects " +
                              std::to_string(svm.weights.size()));
    }
    double s = svm.bias;
    for (std::size_t i = 0; i < x.size(); ++i) {
        s += svm.weights[i] * static_cast<double>(x[i]);
    }
    return s;
}

// Log-odds of the calibrated confidence, -(calib_a * m + calib_b). Strictly
// increasing in the margin and free of the saturation that makes distinct
// confidences compare equal near 0 and 1, so argmax and ranking use it.
double calibrated_logit(const CalibratedSvm& svm, double m);

// Logistic of the log-odds, 1 / (1 + exp(-z)), stable for either sign.
double logistic(double z);

// Logistic map applied to a raw margin.
double confidence_from_margin(const CalibratedSvm& svm, double m);

template <std::floating_point T>
double confidence(const CalibratedSvm& svm, std::span<const T> x) {
    return confidence_from_margin(svm, margin(svm, x));
}

struct LogisticMap {
    double a = -1.0;
    double b = 0.0;
    bool fallback = false;
};

// Regularized maximum-likelihood fit of the logistic map on margins, with
// smoothed targets (N+ + 1)/(N+ + 2) and 1/(N- + 2). Single-class input or a
// non-decreasing fit falls back to a = -1, b = 0.
LogisticMap fit_logistic(std::span<const double> margins, std::span<const int> labels);

CalibratedSvm calibrate(CalibratedSvm svm, std::span<const double> margins,
                        std::span<const int> labels);
// Calibrates on the margins of the problem's own training rows.
CalibratedSvm calibrate(CalibratedSvm svm, const SvmProblem& problem);

}  // namespace hcil
