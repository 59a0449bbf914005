#include "wbsde/drivers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace wbsde {

namespace {

constexpr double kDomainEps = 1e-12;

bool near(double a, double b) { return std::abs(a - b) <= kDomainEps; }

double softplus_shifted(double z) {
    // log(1 + e^z) - log 2, stable for large |z|
    const double sp = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    return sp - std::numbers::ln2;
}

// w log w + (1 - w) log(1 - w) on [0, 1]: the conjugate of log(1 + e^z).
double binary_entropy_neg(double w) {
    w = std::clamp(w, 0.0, 1.0);
    double out = 0.0;
    if (w > 0.0) out += w * std::log(w);
    if (w < 1.0) out += (1.0 - w) * std::log1p(-w);
    return out;
}

Shape shape_for_sign(double kappa) {
    if (kappa > 0.0) return Shape::convex;
    if (kappa < 0.0) return Shape::concave;
    return Shape::affine;
}

void require_param_count(std::string_view name, std::span<const double> params, std::size_t lo,
                         std::size_t hi) {
    if (params.size() < lo || params.size() > hi) {
        throw std::invalid_argument("driver '" + std::string(name) + "' expects " +
                                    std::to_string(lo) + (lo == hi ? "" : "-" + std::to_string(hi)) +
                                    " parameter(s), got " + std::to_string(params.size()));
    }
}

std::vector<double> grid_points(double half, double step) {
    if (half <= 0.0) return {0.0};
    const auto n = static_cast<std::size_t>(std::llround(2.0 * half / step)) + 1;
    std::vector<double> pts(std::max<std::size_t>(n, 2));
    for (std::size_t i = 0; i < pts.size(); ++i) {
        pts[i] = -half + 2.0 * half * static_cast<double>(i) / static_cast<double>(pts.size() - 1);
    }
    pts.front() = -half;
    pts.back() = half;
    return pts;
}

}  // namespace

bool is_concave(Shape s) { return s == Shape::concave || s == Shape::affine; }
bool is_convex(Shape s) { return s == Shape::convex || s == Shape::affine; }

Driver::Driver(std::string name, DriverKind kind, std::vector<double> params, double ly, double lz,
               Shape shape)
    : name_(std::move(name)), kind_(kind), params_(std::move(params)), lip_y_(ly), lip_z_(lz),
      shape_(shape) {}

Driver Driver::zero() { return Driver("zero", DriverKind::zero, {}, 0.0, 0.0, Shape::affine); }

Driver Driver::linear(double a, double b) {
    return Driver("linear", DriverKind::linear, {a, b}, std::abs(a), std::abs(b), Shape::affine);
}

Driver Driver::abs(double kappa) {
    return Driver("abs", DriverKind::abs, {kappa}, 0.0, std::abs(kappa), shape_for_sign(kappa));
}

Driver Driver::smooth_abs(double kappa) {
    return Driver("smooth_abs", DriverKind::smooth_abs, {kappa}, 0.0, std::abs(kappa),
                  shape_for_sign(kappa));
}

Driver Driver::softplus(double kappa) {
    return Driver("softplus", DriverKind::softplus, {kappa}, 0.0, std::abs(kappa),
                  shape_for_sign(kappa));
}

Driver Driver::sine(double kappa) {
    return Driver("sine", DriverKind::sine, {kappa}, 0.0, std::abs(kappa),
                  kappa == 0.0 ? Shape::affine : Shape::none);
}

Driver Driver::custom(std::string name, Evaluator eval, double lipschitz_y, double lipschitz_z,
                      Shape shape) {
    if (!eval) throw std::invalid_argument("custom driver needs an evaluator");
    if (lipschitz_y < 0.0 || lipschitz_z < 0.0) {
        throw std::invalid_argument("Lipschitz constants must be non-negative");
    }
    Driver d(std::move(name), DriverKind::custom, {}, lipschitz_y, lipschitz_z, shape);
    d.custom_ = std::move(eval);
    return d;
}

double Driver::operator()(double t, double y, double z) const {
    if (!std::isfinite(t) || !std::isfinite(y) || !std::isfinite(z)) {
        throw std::invalid_argument("driver '" + name_ + "' evaluated at non-finite input");
    }
    switch (kind_) {
        case DriverKind::zero: return 0.0;
        case DriverKind::linear: return params_[0] * y + params_[1] * z;
        case DriverKind::abs: return params_[0] * std::abs(z);
        case DriverKind::smooth_abs: return params_[0] * (std::hypot(1.0, z) - 1.0);
        case DriverKind::softplus: return params_[0] * softplus_shifted(z);
        case DriverKind::sine: return params_[0] * std::sin(z);
        case DriverKind::custom: return custom_(t, y, z);
    }
    return 0.0;
}

bool Driver::monotone_step(double dt, double sqrt_dt) const {
    return lip_z_ * sqrt_dt + lip_y_ * dt <= 1.0 + 1e-15;
}

std::pair<double, double> Driver::domain_anchor() const {
    switch (kind_) {
        case DriverKind::linear: return {params_[0], params_[1]};
        case DriverKind::softplus: return {0.0, 0.5 * params_[0]};
        default: return {0.0, 0.0};
    }
}

double Driver::closed_concave_conjugate(double p, double q) const {
    switch (kind_) {
        case DriverKind::zero: return near(p, 0.0) && near(q, 0.0) ? 0.0 : -kInf;
        case DriverKind::linear: return near(p, params_[0]) && near(q, params_[1]) ? 0.0 : -kInf;
        default: break;
    }
    const double k = std::abs(params_.empty() ? 0.0 : params_[0]);
    if (!near(p, 0.0)) return -kInf;
    switch (kind_) {
        case DriverKind::abs: return std::abs(q) <= k + kDomainEps ? 0.0 : -kInf;
        case DriverKind::smooth_abs:
            if (std::abs(q) > k + kDomainEps) return -kInf;
            return std::sqrt(std::max(0.0, k * k - q * q)) - k;
        case DriverKind::softplus:
            if (q > kDomainEps || q < -k - kDomainEps) return -kInf;
            return -k * binary_entropy_neg(-q / k) - k * std::numbers::ln2;
        default: break;
    }
    throw std::logic_error("driver '" + name_ + "' has no closed-form concave conjugate");
}

double Driver::closed_convex_conjugate(double u, double v) const {
    switch (kind_) {
        case DriverKind::zero: return near(u, 0.0) && near(v, 0.0) ? 0.0 : kInf;
        case DriverKind::linear: return near(u, params_[0]) && near(v, params_[1]) ? 0.0 : kInf;
        default: break;
    }
    const double k = std::abs(params_.empty() ? 0.0 : params_[0]);
    if (!near(u, 0.0)) return kInf;
    switch (kind_) {
        case DriverKind::abs: return std::abs(v) <= k + kDomainEps ? 0.0 : kInf;
        case DriverKind::smooth_abs:
            if (std::abs(v) > k + kDomainEps) return kInf;
            return k - std::sqrt(std::max(0.0, k * k - v * v));
        case DriverKind::softplus:
            if (v < -kDomainEps || v > k + kDomainEps) return kInf;
            return k * binary_entropy_neg(v / k) + k * std::numbers::ln2;
        default: break;
    }
    throw std::logic_error("driver '" + name_ + "' has no closed-form convex conjugate");
}

Driver make_driver(std::string_view name, std::span<const double> params) {
    if (name == "zero") {
        require_param_count(name, params, 0, 0);
        return Driver::zero();
    }
    if (name == "linear") {
        require_param_count(name, params, 1, 2);
        return Driver::linear(params[0], params.size() > 1 ? params[1] : 0.0);
    }
    if (name == "abs") {
        require_param_count(name, params, 1, 1);
        return Driver::abs(params[0]);
    }
    if (name == "smooth_abs") {
        require_param_count(name, params, 1, 1);
        return Driver::smooth_abs(params[0]);
    }
    if (name == "softplus") {
        require_param_count(name, params, 1, 1);
        return Driver::softplus(params[0]);
    }
    if (name == "sine") {
        require_param_count(name, params, 1, 1);
        return Driver::sine(params[0]);
    }
    throw std::invalid_argument("unknown driver '" + std::string(name) + "'");
}

bool ConjugateBox::contains(double a, double b, double slack) const {
    return std::abs(a) <= y_half + slack && std::abs(b) <= z_half + slack;
}

namespace {

// inf over the grid of `objective`; returns -inf when the inner half box
// already misses the full-box value (the infimum escapes to infinity).
template <class Objective>
double grid_infimum(Objective&& objective, double radius, const NumericConjugateOptions& opts) {
    const auto n = static_cast<long long>(std::llround(2.0 * radius / opts.step)) + 1;
    const double h = 2.0 * radius / static_cast<double>(n - 1);
    const double inner = 0.5 * radius + 0.5 * h;
    double full = kInf;
    double half = kInf;
    for (long long i = 0; i < n; ++i) {
        const double x = -radius + h * static_cast<double>(i);
        const bool x_inner = std::abs(x) <= inner;
        for (long long j = 0; j < n; ++j) {
            const double pi = -radius + h * static_cast<double>(j);
            const double v = objective(x, pi);
            if (v < full) full = v;
            if (x_inner && std::abs(pi) <= inner && v < half) half = v;
        }
    }
    if (std::abs(full) > opts.divergence) return -kInf;
    if (full < half - 1e-3 * (1.0 + std::abs(half))) return -kInf;
    return full;
}

double default_radius(const Driver& d, const NumericConjugateOptions& opts) {
    return opts.radius > 0.0 ? opts.radius : 50.0 * (1.0 + d.lipschitz_y() + d.lipschitz_z());
}

}  // namespace

double numeric_concave_conjugate(const Driver& f, double p, double q,
                                 const NumericConjugateOptions& opts) {
    return grid_infimum([&](double x, double pi) { return x * p + pi * q - f(0.0, x, pi); },
                        default_radius(f, opts), opts);
}

double numeric_convex_conjugate(const Driver& g, double u, double v,
                                const NumericConjugateOptions& opts) {
    return -grid_infimum([&](double y, double z) { return g(0.0, y, z) - y * u - z * v; },
                         default_radius(g, opts), opts);
}

double concave_conjugate_f(const Driver& f, double p, double q) {
    if (!is_concave(f.shape())) {
        throw std::invalid_argument("driver '" + f.name() + "' is not concave: no concave conjugate");
    }
    if (f.has_closed_form_conjugate()) return f.closed_concave_conjugate(p, q);
    return numeric_concave_conjugate(f, p, q);
}

double convex_conjugate_g(const Driver& g, double u, double v) {
    if (!is_convex(g.shape())) {
        throw std::invalid_argument("driver '" + g.name() + "' is not convex: no convex conjugate");
    }
    if (g.has_closed_form_conjugate()) return g.closed_convex_conjugate(u, v);
    return numeric_convex_conjugate(g, u, v);
}

double fenchel_recover(const Driver& d, double x, double pi, double step) {
    const auto box = ConjugateBox::of(d);
    const auto ys = grid_points(box.y_half, step);
    const auto zs = grid_points(box.z_half, step);
    const bool concave = is_concave(d.shape());
    if (!concave && !is_convex(d.shape())) {
        throw std::invalid_argument("driver '" + d.name() + "' has no conjugate structure");
    }
    double best = concave ? kInf : -kInf;
    bool any = false;
    for (double a : ys) {
        for (double b : zs) {
            if (concave) {
                const double c = concave_conjugate_f(d, a, b);
                if (!std::isfinite(c)) continue;
                best = std::min(best, a * x + b * pi - c);
            } else {
                const double c = convex_conjugate_g(d, a, b);
                if (!std::isfinite(c)) continue;
                best = std::max(best, a * x + b * pi - c);
            }
            any = true;
        }
    }
    if (!any) {
        // Point domains (affine drivers) need not fall on the grid.
        const auto [a, b] = d.domain_anchor();
        const double c = concave ? concave_conjugate_f(d, a, b) : convex_conjugate_g(d, a, b);
        if (!std::isfinite(c)) throw std::runtime_error("empty conjugate domain for '" + d.name() + "'");
        return a * x + b * pi - c;
    }
    return best;
}

}  // namespace wbsde
