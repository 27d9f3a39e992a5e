#include "mrgbsde/reflection.hpp"

#include <algorithm>
#include <cmath>

namespace mrgbsde {

Weights::Weights(std::vector<double> theta_values) : theta(std::move(theta_values)) {
    if (theta.empty()) throw AssumptionViolated("weights must be non-empty");
    double sum = 0.0;
    for (double w : theta) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw AssumptionViolated("weights must be nonnegative");
        }
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
        throw AssumptionViolated("weights must sum to one");
    }
}

double Weights::sum_sq() const {
    double s = 0.0;
    for (double w : theta) s += w * w;
    return s;
}

double h_value(const std::vector<double>& x, const std::vector<double>& means,
               const Weights& weights) {
    const std::size_t n = weights.theta.size();
    if (x.size() != n || means.size() != n) {
        throw DimensionMismatch("h_value arity mismatch");
    }
    double h = 0.0;
    for (std::size_t l = 0; l < n; ++l) h += weights.theta[l] * (means[l] - x[l]);
    return h;
}

std::vector<double> project_l(const std::vector<double>& means, const Weights& weights) {
    const std::size_t n = weights.theta.size();
    if (means.size() != n) throw DimensionMismatch("project_l arity mismatch");
    double agg = 0.0;
    for (std::size_t l = 0; l < n; ++l) agg += weights.theta[l] * means[l];
    const double pos = std::max(agg, 0.0);
    const double scale = pos / weights.sum_sq();
    std::vector<double> out(n);
    for (std::size_t l = 0; l < n; ++l) out[l] = weights.theta[l] * scale;
    return out;
}

double projection_norm(const std::vector<double>& means, const Weights& weights) {
    const std::size_t n = weights.theta.size();
    if (means.size() != n) throw DimensionMismatch("projection_norm arity mismatch");
    double agg = 0.0;
    for (std::size_t l = 0; l < n; ++l) agg += weights.theta[l] * means[l];
    return std::max(agg, 0.0) / std::sqrt(weights.sum_sq());
}

MeanPath negated_mean_path(const std::vector<std::vector<LatticeField>>& y,
                           int start_slice, const TreeGrid& grid,
                           const VolatilityBand& band,
                           const ExpectationBackend& backend) {
    if (y.empty()) throw DimensionMismatch("mean path needs at least one component");
    const std::size_t count = y.front().size();
    for (const auto& comp : y) {
        if (comp.size() != count) throw DimensionMismatch("ragged y fields");
    }
    MeanPath mp;
    mp.start_slice = start_slice;
    mp.m.assign(count, std::vector<double>(y.size(), 0.0));
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t l = 0; l < y.size(); ++l) {
            mp.m[i][l] = backend.expect(negate(y[l][i]), grid, band);
        }
    }
    return mp;
}

double mean_path_modulus(const MeanPath& means, const Weights& weights) {
    const std::size_t n = weights.theta.size();
    double modulus = 0.0;
    double prev = 0.0;
    for (std::size_t i = 0; i < means.m.size(); ++i) {
        if (means.m[i].size() != n) throw DimensionMismatch("mean path arity mismatch");
        double s = 0.0;
        for (std::size_t l = 0; l < n; ++l) s += weights.theta[l] * means.m[i][l];
        if (i > 0) modulus = std::max(modulus, std::abs(s - prev));
        prev = s;
    }
    return modulus;
}

ReflectionPath build_reflection(const MeanPath& means, const Weights& weights) {
    const std::size_t count = means.m.size();
    const std::size_t n = weights.theta.size();
    if (count == 0) throw DimensionMismatch("reflection needs at least one slice");

    ReflectionPath path;
    path.start_slice = means.start_slice;
    path.r.assign(count, std::vector<double>(n, 0.0));
    path.shift.assign(count, std::vector<double>(n, 0.0));
    path.r_norm.assign(count, 0.0);

    std::vector<double> running(n, 0.0);
    std::vector<double> future_norm(count, 0.0);
    double running_norm = 0.0;
    for (std::size_t ri = 0; ri < count; ++ri) {
        const std::size_t i = count - 1 - ri;
        const std::vector<double> proj = project_l(means.m[i], weights);
        const double norm = projection_norm(means.m[i], weights);
        if (ri == 0) {
            running = proj;
            running_norm = norm;
        } else {
            for (std::size_t l = 0; l < n; ++l) {
                running[l] = std::max(running[l], proj[l]);
            }
            running_norm = std::max(running_norm, norm);
        }
        path.shift[i] = running;
        future_norm[i] = running_norm;
    }
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t l = 0; l < n; ++l) {
            path.r[i][l] = path.shift[0][l] - path.shift[i][l];
        }
        path.r_norm[i] = future_norm[0] - future_norm[i];
    }
    return path;
}

std::vector<BsdeSolution> shift_solution(std::vector<BsdeSolution> base,
                                         const ReflectionPath& reflection) {
    const std::size_t n = base.size();
    if (n == 0) throw DimensionMismatch("shift_solution needs components");
    const std::size_t count = reflection.r.size();
    for (std::size_t l = 0; l < n; ++l) {
        if (base[l].start_slice != reflection.start_slice ||
            base[l].y.size() != count) {
            throw DimensionMismatch("solution and reflection ranges differ");
        }
        if (reflection.r.front().size() != n) {
            throw DimensionMismatch("reflection arity differs from solution");
        }
        for (std::size_t i = 0; i < count; ++i) {
            const double offset = reflection.shift[i][l];
            for (double& v : base[l].y[i].values) v += offset;
        }
    }
    return base;
}

std::vector<double> check_constraint(const std::vector<std::vector<LatticeField>>& y,
                                     int start_slice, const Weights& weights,
                                     const TreeGrid& grid, const VolatilityBand& band,
                                     const ExpectationBackend& backend, int stride) {
    if (stride < 1) throw InvalidConfig("constraint stride must be >= 1");
    const std::size_t n = weights.theta.size();
    if (y.size() != n) throw DimensionMismatch("constraint arity mismatch");
    const std::size_t count = y.front().size();
    auto sample = [&](std::size_t i) {
        double acc = 0.0;
        for (std::size_t l = 0; l < n; ++l) {
            acc += weights.theta[l] * backend.expect(negate(y[l][i]), grid, band);
        }
        return acc;
    };
    std::vector<double> s;
    s.reserve(count / static_cast<std::size_t>(stride) + 2);
    std::size_t i = 0;
    for (; i < count; i += static_cast<std::size_t>(stride)) s.push_back(sample(i));
    if (count > 0 && i - static_cast<std::size_t>(stride) != count - 1) {
        s.push_back(sample(count - 1));  // always sample the final slice
    }
    (void)start_slice;
    return s;
}

double check_flatness(const std::vector<double>& constraint_path,
                      const ReflectionPath& reflection) {
    if (constraint_path.size() != reflection.r_norm.size()) {
        throw DimensionMismatch("flatness needs one constraint sample per slice");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < constraint_path.size(); ++i) {
        acc += constraint_path[i] * (reflection.r_norm[i + 1] - reflection.r_norm[i]);
    }
    return acc;
}

}  // namespace mrgbsde
