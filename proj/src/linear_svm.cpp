#include "hcil/linear_svm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hcil/log.hpp"
#include "hcil/rng.hpp"

namespace hcil {

namespace {

constexpr double kBiasFeature = 1.0;
constexpr int kGapInterval = 10;

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// w = sum_i alpha_i y_i x_i over the augmented rows (last slot is the bias).
void rebuild_weights(const SvmProblem& p, std::span<const double> alpha, std::vector<double>& w) {
    std::fill(w.begin(), w.end(), 0.0);
    const std::size_t d = p.dimension;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (alpha[i] == 0.0) continue;
        const double coef = alpha[i] * p.labels[i];
        const auto x = p.row(i);
        for (std::size_t k = 0; k < d; ++k) w[k] += coef * x[k];
        w[d] += coef * kBiasFeature;
    }
}

double augmented_dot(std::span<const double> w, std::span<const double> x) {
    return dot(w.first(x.size()), x) + w[x.size()] * kBiasFeature;
}

struct Objectives {
    double primal;
    double dual;
};

Objectives objectives(const SvmProblem& p, std::span<const double> alpha,
                      std::span<const double> upper, std::span<const double> w) {
    const double half_norm = 0.5 * dot(w, w);
    double hinge = 0.0;
    double alpha_sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double slack = 1.0 - p.labels[i] * augmented_dot(w, p.row(i));
        if (slack > 0.0) hinge += upper[i] * slack;
        alpha_sum += alpha[i];
    }
    return {half_norm + hinge, alpha_sum - half_norm};
}

}  // namespace

std::string SvmIdentity::to_string() const {
    return std::string(level == SvmLevel::coarse ? "coarse:" : "fine:") + std::to_string(label);
}

void SvmProblem::validate() const {
    if (dimension == 0) {
        throw ValidationError("SVM problem has dimension 0");
    }
    if (features.size() != labels.size() * dimension) {
        throw ValidationError("SVM problem feature and label counts disagree");
    }
    if (!(c > 0.0) || !std::isfinite(c)) {
        throw ValidationError("SVM regularization C must be positive and finite");
    }
    std::size_t pos = 0;
    std::size_t neg = 0;
    for (int y : labels) {
        if (y == 1) {
            ++pos;
        } else if (y == -1) {
            ++neg;
        } else {
            throw ValidationError("SVM labels must be +1 or -1");
        }
    }
    for (double v : features) {
        if (!std::isfinite(v)) {
            throw ValidationError("SVM problem contains a non-finite feature value");
        }
    }
    if (pos == 0 || neg == 0) {
        throw DegenerateError("SVM problem has only " + std::string(pos == 0 ? "negative" : "positive") +
                              " examples");
    }
}

std::vector<double> box_limits(const SvmProblem& problem, bool balance_classes) {
    const auto pos = static_cast<double>(std::count(problem.labels.begin(), problem.labels.end(), 1));
    const auto neg = static_cast<double>(problem.size()) - pos;
    const double c_pos = balance_classes && pos > 0 ? problem.c * neg / pos : problem.c;
    std::vector<double> upper(problem.size());
    for (std::size_t i = 0; i < problem.size(); ++i) {
        upper[i] = problem.labels[i] == 1 ? c_pos : problem.c;
    }
    return upper;
}

SvmFit train(const SvmProblem& problem, const SvmOptions& options, SolverTrace* trace) {
    problem.validate();
    if (!(options.tol > 0.0) || options.max_iter <= 0) {
        throw ValidationError("solver tolerance and iteration limit must be positive");
    }

    const std::size_t n = problem.size();
    const std::size_t d = problem.dimension;
    SvmFit fit;
    fit.upper_bound = box_limits(problem, options.balance_classes);
    fit.alpha.assign(n, 0.0);
    std::vector<double> w(d + 1, 0.0);
    std::vector<double> diag(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = problem.row(i);
        diag[i] = dot(x, x) + kBiasFeature * kBiasFeature;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(options.seed);
    auto& alpha = fit.alpha;
    const auto& upper = fit.upper_bound;

    // Shrinking state: variables stuck at a bound whose gradient points
    // outward beyond last epoch's extreme projected gradients leave the active
    // prefix of `order`. Everything is restored once the active problem is
    // solved to `shrink_eps`, which then tightens.
    std::size_t active = n;
    double pg_max_old = std::numeric_limits<double>::infinity();
    double pg_min_old = -std::numeric_limits<double>::infinity();
    double shrink_eps = 0.1;

    for (int epoch = 1; epoch <= options.max_iter; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order.data(), active));
        double pg_max = -std::numeric_limits<double>::infinity();
        double pg_min = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < active;) {
            const std::size_t i = order[s];
            const auto x = problem.row(i);
            const double y = problem.labels[i];
            const double grad = y * augmented_dot(w, x) - 1.0;
            double projected = grad;
            if (alpha[i] == 0.0) {
                if (options.shrinking && grad > pg_max_old) {
                    std::swap(order[s], order[--active]);
                    continue;
                }
                projected = std::min(grad, 0.0);
            } else if (alpha[i] == upper[i]) {
                if (options.shrinking && grad < pg_min_old) {
                    std::swap(order[s], order[--active]);
                    continue;
                }
                projected = std::max(grad, 0.0);
            }
            pg_max = std::max(pg_max, projected);
            pg_min = std::min(pg_min, projected);
            ++s;
            if (std::abs(projected) < 1e-14) continue;

            const double old = alpha[i];
            alpha[i] = std::clamp(old - grad / diag[i], 0.0, upper[i]);
            const double delta = (alpha[i] - old) * y;
            for (std::size_t k = 0; k < d; ++k) w[k] += delta * x[k];
            w[d] += delta * kBiasFeature;
            if (trace && (alpha[i] < 0.0 || alpha[i] > upper[i])) trace->alpha_in_box = false;
        }

        if (options.shrinking) {
            if (pg_max - pg_min <= shrink_eps && active < n) {
                active = n;
                pg_max_old = std::numeric_limits<double>::infinity();
                pg_min_old = -std::numeric_limits<double>::infinity();
                shrink_eps = std::max(shrink_eps * 0.1, 1e-12);
            } else {
                pg_max_old = pg_max <= 0.0 ? std::numeric_limits<double>::infinity() : pg_max;
                pg_min_old = pg_min >= 0.0 ? -std::numeric_limits<double>::infinity() : pg_min;
            }
        }

        // The certificate costs two passes, so after the first few epochs it
        // is only evaluated every kGapInterval epochs (and on the last one).
        fit.epochs = epoch;
        if (trace) {
            const double alpha_sum = std::accumulate(alpha.begin(), alpha.end(), 0.0);
            trace->dual_objective.push_back(alpha_sum - 0.5 * dot(w, w));
        }
        if (epoch > kGapInterval && epoch % kGapInterval != 0 && epoch != options.max_iter) continue;

        // Rebuilding w from alpha removes drift from the incremental updates so
        // the gap certifies the returned weights exactly.
        rebuild_weights(problem, alpha, w);
        const auto obj = objectives(problem, alpha, upper, w);
        fit.primal = obj.primal;
        fit.dual = obj.dual;
        fit.duality_gap = obj.primal - obj.dual;
        if (fit.duality_gap <= options.tol) {
            fit.converged = true;
            break;
        }
    }
    if (!fit.converged) {
        logger().debug("SVM solver stopped after {} epochs with duality gap {:.3e}", fit.epochs,
                       fit.duality_gap);
    }

    fit.svm.weights.assign(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(d));
    fit.svm.bias = w[d] * kBiasFeature;
    return fit;
}

double calibrated_logit(const CalibratedSvm& svm, double m) { return -(svm.calib_a * m + svm.calib_b); }

double logistic(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double confidence_from_margin(const CalibratedSvm& svm, double m) { return logistic(calibrated_logit(svm, m)); }

LogisticMap fit_logistic(std::span<const double> margins, std::span<const int> labels) {
    if (margins.size() != labels.size()) {
        throw ValidationError("calibration margins and labels differ in length");
    }
    const auto n = margins.size();
    const auto prior1 = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
    const double prior0 = static_cast<double>(n) - prior1;
    if (prior1 == 0.0 || prior0 == 0.0) {
        logger().warn("calibration data holds a single class; using the fixed logistic map");
        return {-1.0, 0.0, true};
    }

    const double hi = (prior1 + 1.0) / (prior1 + 2.0);
    const double lo = 1.0 / (prior0 + 2.0);
    std::vector<double> target(n);
    for (std::size_t i = 0; i < n; ++i) target[i] = labels[i] == 1 ? hi : lo;

    auto objective = [&](double a, double b) {
        double f = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = margins[i] * a + b;
            f += z >= 0.0 ? target[i] * z + std::log1p(std::exp(-z))
                          : (target[i] - 1.0) * z + std::log1p(std::exp(z));
        }
        return f;
    };

    // Newton's method with backtracking line search on the two parameters.
    constexpr int kMaxIter = 100;
    constexpr double kMinStep = 1e-10;
    constexpr double kSigma = 1e-12;
    constexpr double kEps = 1e-5;
    double a = 0.0;
    double b = std::log((prior0 + 1.0) / (prior1 + 1.0));
    double fval = objective(a, b);
    for (int iter = 0; iter < kMaxIter; ++iter) {
        double h11 = kSigma, h22 = kSigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = margins[i] * a + b;
            double p, q;
            if (z >= 0.0) {
                const double e = std::exp(-z);
                p = e / (1.0 + e);
                q = 1.0 / (1.0 + e);
            } else {
                const double e = std::exp(z);
                p = 1.0 / (1.0 + e);
                q = e / (1.0 + e);
            }
            const double d2 = p * q;
            h11 += margins[i] * margins[i] * d2;
            h22 += d2;
            h21 += margins[i] * d2;
            const double d1 = target[i] - p;
            g1 += margins[i] * d1;
            g2 += d1;
        }
        if (std::abs(g1) < kEps && std::abs(g2) < kEps) break;

        const double det = h11 * h22 - h21 * h21;
        const double da = -(h22 * g1 - h21 * g2) / det;
        const double db = -(-h21 * g1 + h11 * g2) / det;
        const double gd = g1 * da + g2 * db;
        double step = 1.0;
        while (step >= kMinStep) {
            const double na = a + step * da;
            const double nb = b + step * db;
            const double nf = objective(na, nb);
            if (nf < fval + 1e-4 * step * gd) {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if (step < kMinStep) break;
    }

    if (!(a < 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
        logger().warn("calibration produced a non-increasing map (a = {}); using the fixed logistic map", a);
        return {-1.0, 0.0, true};
    }
    return {a, b, false};
}

CalibratedSvm calibrate(CalibratedSvm svm, std::span<const double> margins, std::span<const int> labels) {
    const auto map = fit_logistic(margins, labels);
    svm.calib_a = map.a;
    svm.calib_b = map.b;
    return svm;
}

CalibratedSvm calibrate(CalibratedSvm svm, const SvmProblem& problem) {
    std::vector<double> margins(problem.size());
    for (std::size_t i = 0; i < problem.size(); ++i) {
        margins[i] = margin(svm, problem.row(i));
    }
    return calibrate(std::move(svm), margins, problem.labels);
}

nlohmann::json CalibratedSvm::to_json() const {
    return {{"level", identity.level == SvmLevel::coarse ? "coarse" : "fine"},
            {"label", identity.label},
            {"dimension", weights.size()},
            {"weights", weights},
            {"bias", bias},
            {"calib_a", calib_a},
            {"calib_b", calib_b}};
}

CalibratedSvm CalibratedSvm::from_json(const nlohmann::json& j) {
    CalibratedSvm svm;
    const auto level = j.at("level").get<std::string>();
    if (level != "coarse" && level != "fine") {
        throw FormatError("unknown SVM level '" + level + "'");
    }
    svm.identity.level = level == "coarse" ? SvmLevel::coarse : SvmLevel::fine;
    svm.identity.label = j.at("label").get<std::uint16_t>();
    svm.weights = j.at("weights").get<std::vector<double>>();
    if (svm.weights.size() != j.at("dimension").get<std::size_t>()) {
        throw CorruptionError("SVM " + svm.identity.to_string() + " weight count disagrees with its dimension");
    }
    svm.bias = j.at("bias").get<double>();
    svm.calib_a = j.at("calib_a").get<double>();
    svm.calib_b = j.at("calib_b").get<double>();
    return svm;
}

}  // namespace hcil
