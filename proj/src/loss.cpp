#include "wbsde/drivers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace wbsde {

LossPair LossPair::identity() {
    LossPair lp;
    lp.name_ = "identity";
    lp.kind_ = LossKind::identity;
    lp.km_ = {0.0, 1.0};
    lp.kphi_ = {0.0, 1.0};
    lp.finalize_piecewise();
    return lp;
}

LossPair LossPair::power(double p) {
    if (!(p >= 1.0) || !std::isfinite(p)) {
        throw std::invalid_argument("power loss needs exponent p >= 1, got " + std::to_string(p));
    }
    if (p == 1.0) {
        LossPair lp = identity();
        lp.name_ = "power";
        lp.params_ = {p};
        return lp;
    }
    LossPair lp;
    lp.name_ = "power";
    lp.kind_ = LossKind::power;
    lp.params_ = {p};
    lp.exponent_ = p;
    lp.lipschitz_ = p;
    lp.convex_ = true;
    return lp;
}

LossPair LossPair::call(double a) {
    if (!(a >= 0.0 && a < 1.0)) throw std::invalid_argument("call loss needs strike a in [0, 1)");
    LossPair lp;
    lp.name_ = "call";
    lp.kind_ = LossKind::call;
    lp.params_ = {a};
    lp.km_ = {0.0, a, 1.0};
    lp.kphi_ = {0.0, 0.0, 1.0};
    if (a == 0.0) {
        lp.km_ = {0.0, 1.0};
        lp.kphi_ = {0.0, 1.0};
    }
    lp.finalize_piecewise();
    return lp;
}

LossPair LossPair::call_spread(double a, double b) {
    if (!(a > 0.0 && a < b && b < 1.0)) {
        throw std::invalid_argument("call_spread loss needs 0 < a < b < 1");
    }
    LossPair lp;
    lp.name_ = "call_spread";
    lp.kind_ = LossKind::call_spread;
    lp.params_ = {a, b};
    lp.km_ = {0.0, a, b, 1.0};
    lp.kphi_ = {0.0, 0.0, 1.0, 1.0};
    lp.finalize_piecewise();
    return lp;
}

LossPair LossPair::piecewise(std::vector<double> knots_m, std::vector<double> knots_phi) {
    if (knots_m.size() < 2 || knots_m.size() != knots_phi.size()) {
        throw std::invalid_argument("piecewise loss needs at least two (m, phi) knots");
    }
    if (knots_m.front() != 0.0 || knots_m.back() != 1.0) {
        throw std::invalid_argument("piecewise loss knots must start at m = 0 and end at m = 1");
    }
    for (std::size_t i = 0; i < knots_m.size(); ++i) {
        if (knots_phi[i] < 0.0 || knots_phi[i] > 1.0) {
            throw std::invalid_argument("piecewise loss values must lie in [0, 1]");
        }
        if (i > 0 && (knots_m[i] <= knots_m[i - 1] || knots_phi[i] < knots_phi[i - 1])) {
            throw std::invalid_argument("piecewise loss must be non-decreasing with increasing knots");
        }
    }
    LossPair lp;
    lp.name_ = "piecewise";
    lp.kind_ = LossKind::piecewise;
    for (std::size_t i = 0; i < knots_m.size(); ++i) {
        lp.params_.push_back(knots_m[i]);
        lp.params_.push_back(knots_phi[i]);
    }
    lp.km_ = std::move(knots_m);
    lp.kphi_ = std::move(knots_phi);
    lp.finalize_piecewise();
    return lp;
}

void LossPair::finalize_piecewise() {
    lipschitz_ = 0.0;
    convex_ = true;
    double prev_slope = -kInf;
    for (std::size_t i = 1; i < km_.size(); ++i) {
        const double slope = (kphi_[i] - kphi_[i - 1]) / (km_[i] - km_[i - 1]);
        lipschitz_ = std::max(lipschitz_, slope);
        if (slope < prev_slope - 1e-12) convex_ = false;
        prev_slope = slope;
    }
}

double LossPair::phi(double m) const {
    m = std::clamp(m, 0.0, 1.0);
    if (kind_ == LossKind::power) return std::pow(m, exponent_);
    const auto it = std::upper_bound(km_.begin(), km_.end(), m);
    if (it == km_.end()) return kphi_.back();
    const auto i = static_cast<std::size_t>(it - km_.begin());
    const double w = (m - km_[i - 1]) / (km_[i] - km_[i - 1]);
    return kphi_[i - 1] + w * (kphi_[i] - kphi_[i - 1]);
}

double LossPair::psi(double y) const {
    if (y < 0.0) return -kInf;
    if (kind_ == LossKind::power) return std::min(std::pow(y, 1.0 / exponent_), 1.0);
    if (kphi_.back() <= y) return 1.0;
    if (kphi_.front() > y) return 0.0;
    // first knot strictly above y; the level set {phi <= y} ends inside the segment before it
    std::size_t i = 1;
    while (kphi_[i] <= y) ++i;
    const double w = (y - kphi_[i - 1]) / (kphi_[i] - kphi_[i - 1]);
    return km_[i - 1] + w * (km_[i] - km_[i - 1]);
}

double LossPair::polar(double l) const {
    if (kind_ == LossKind::power) {
        if (l <= 0.0) return 0.0;
        const double m = std::min(std::pow(l / exponent_, 1.0 / (exponent_ - 1.0)), 1.0);
        return m * l - std::pow(m, exponent_);
    }
    // sup of an affine-minus-piecewise-linear function is attained at a knot
    double best = -kInf;
    for (std::size_t i = 0; i < km_.size(); ++i) best = std::max(best, km_[i] * l - kphi_[i]);
    return best;
}

std::optional<double> LossPair::polar_gradient(double l) const {
    if (!polar_smooth()) return std::nullopt;
    if (l <= 0.0) return 0.0;
    return std::min(std::pow(l / exponent_, 1.0 / (exponent_ - 1.0)), 1.0);
}

LossPair make_loss(std::string_view name, std::span<const double> params) {
    auto expect = [&](std::size_t n) {
        if (params.size() != n) {
            throw std::invalid_argument("loss '" + std::string(name) + "' expects " + std::to_string(n) +
                                        " parameter(s), got " + std::to_string(params.size()));
        }
    };
    if (name == "identity") {
        expect(0);
        return LossPair::identity();
    }
    if (name == "power") {
        expect(1);
        return LossPair::power(params[0]);
    }
    if (name == "call") {
        expect(1);
        return LossPair::call(params[0]);
    }
    if (name == "call_spread") {
        expect(2);
        return LossPair::call_spread(params[0], params[1]);
    }
    if (name == "piecewise") {
        if (params.size() < 4 || params.size() % 2 != 0) {
            throw std::invalid_argument("loss 'piecewise' expects an even list of (m, phi) knots");
        }
        std::vector<double> m, phi;
        for (std::size_t i = 0; i < params.size(); i += 2) {
            m.push_back(params[i]);
            phi.push_back(params[i + 1]);
        }
        return LossPair::piecewise(std::move(m), std::move(phi));
    }
    throw std::invalid_argument("unknown loss '" + std::string(name) + "'");
}

double polar_phi(const LossPair& lp, double l) {
    if (!std::isfinite(l)) throw std::invalid_argument("polar evaluated at non-finite slope");
    return lp.polar(l);
}

double numeric_polar_phi(const LossPair& lp, double l, double step) {
    const auto n = static_cast<long long>(std::llround(1.0 / step));
    double best = -kInf;
    for (long long i = 0; i <= n; ++i) {
        const double m = static_cast<double>(i) / static_cast<double>(n);
        best = std::max(best, m * l - lp.phi(m));
    }
    return best;
}

}  // namespace wbsde
