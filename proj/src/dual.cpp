#include "wbsde/dual.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

namespace wbsde {

DualControls DualControls::zeros(int steps, double l) {
    const auto n = static_cast<std::size_t>(steps);
    return {l, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
            std::vector<double>(n, 0.0)};
}

bool factors_positive(const Lattice& lat, const DualControls& dc, int k) {
    const double dt = lat.dt();
    const double s = lat.sqrt_dt();
    const double ld = 1.0 + dc.u[k] * dt;
    return ld + dc.v[k] * s >= kPositivityMargin && ld - dc.v[k] * s >= kPositivityMargin &&
           1.0 + dc.q[k] * s >= kPositivityMargin && 1.0 - dc.q[k] * s >= kPositivityMargin &&
           1.0 - dc.p[k] * dt >= kPositivityMargin;
}

void check_dual_controls(const Lattice& lat, const DualControls& dc) {
    const auto n = static_cast<std::size_t>(lat.steps());
    if (dc.u.size() != n || dc.v.size() != n || dc.p.size() != n || dc.q.size() != n) {
        throw std::invalid_argument("dual controls need one (u, v, p, q) per lattice step");
    }
    if (!(dc.l > 0.0) || !std::isfinite(dc.l)) throw std::invalid_argument("dual multiplier l must be > 0");
    for (int k = 0; k < lat.steps(); ++k) {
        if (!factors_positive(lat, dc, k)) {
            throw std::invalid_argument("adjoint factor below the positivity margin at step " +
                                        std::to_string(k));
        }
    }
}

AdjointPath adjoint_forward(const Lattice& lat, const DualControls& dc, PathId path) {
    check_dual_controls(lat, dc);
    AdjointPath out;
    out.a.reserve(static_cast<std::size_t>(lat.steps()) + 1);
    out.l.reserve(static_cast<std::size_t>(lat.steps()) + 1);
    // A is l times the running factor product, so A^l = l A^1 holds bitwise.
    double density = 1.0;
    out.a.push_back(dc.l);
    out.l.push_back(1.0);
    for (int k = 0; k < lat.steps(); ++k) {
        const double dw = path.sign(k) * lat.sqrt_dt();
        density *= (1.0 + dc.q[k] * dw) / (1.0 - dc.p[k] * lat.dt());
        out.a.push_back(dc.l * density);
        out.l.push_back(out.l.back() * (1.0 + dc.u[k] * lat.dt() + dc.v[k] * dw));
    }
    return out;
}

bool dual_available(const Driver& f, const Driver& g) {
    return is_concave(f.shape()) && is_convex(g.shape());
}

namespace {

/// Objective with conjugates cached per step; nullopt when infeasible.
class Objective {
public:
    Objective(const Lattice& lat, const Driver& f, const Driver& g, const LossPair& lp)
        : lat_(lat), f_(f), g_(g), lp_(lp) {
        const std::size_t leaves = std::size_t{1} << lat.steps();
        a_.resize(leaves);
        l_.resize(leaves);
    }

    double f_conj(double p, double q) const { return concave_conjugate_f(f_, p, q); }
    double g_conj(double u, double v) const { return convex_conjugate_g(g_, u, v); }

    std::optional<double> operator()(const DualControls& dc) {
        const int n = lat_.steps();
        const double dt = lat_.dt();
        const double s = lat_.sqrt_dt();
        double running = 0.0;
        double mean_l = 1.0;
        double mean_a = dc.l;
        for (int k = 0; k < n; ++k) {
            if (!factors_positive(lat_, dc, k)) return std::nullopt;
            const double ft = f_conj(dc.p[k], dc.q[k]);
            const double gt = g_conj(dc.u[k], dc.v[k]);
            if (!std::isfinite(ft) || !std::isfinite(gt)) return std::nullopt;
            const double shrink = 1.0 / (1.0 - dc.p[k] * dt);
            running += mean_l * gt * dt - mean_a * ft * dt * shrink;
            mean_l *= 1.0 + dc.u[k] * dt;
            mean_a *= shrink;
        }
        // Leaves indexed by sign bitmask, built level by level in place.
        a_[0] = dc.l;
        l_[0] = 1.0;
        for (int k = 0; k < n; ++k) {
            const std::size_t width = std::size_t{1} << k;
            const double shrink = 1.0 / (1.0 - dc.p[k] * dt);
            const double a_up = (1.0 + dc.q[k] * s) * shrink;
            const double a_dn = (1.0 - dc.q[k] * s) * shrink;
            const double l_up = 1.0 + dc.u[k] * dt + dc.v[k] * s;
            const double l_dn = 1.0 + dc.u[k] * dt - dc.v[k] * s;
            for (std::size_t i = 0; i < width; ++i) {
                a_[i | width] = a_[i] * a_up;
                l_[i | width] = l_[i] * l_up;
                a_[i] *= a_dn;
                l_[i] *= l_dn;
            }
        }
        double terminal = 0.0;
        const std::size_t leaves = std::size_t{1} << n;
        for (std::size_t i = 0; i < leaves; ++i) terminal += l_[i] * lp_.polar(a_[i] / l_[i]);
        return running + terminal / static_cast<double>(leaves);
    }

private:
    const Lattice& lat_;
    const Driver& f_;
    const Driver& g_;
    const LossPair& lp_;
    std::vector<double> a_, l_;
};

void require_shapes(const Driver& f, const Driver& g) {
    if (!is_concave(f.shape())) {
        throw std::invalid_argument("dual needs a concave f; driver '" + f.name() + "' is not");
    }
    if (!is_convex(g.shape())) {
        throw std::invalid_argument("dual needs a convex g; driver '" + g.name() + "' is not");
    }
}

}  // namespace

double dual_objective(const Lattice& lat, const DualControls& dc, const Driver& f, const Driver& g,
                      const LossPair& lp) {
    require_enumerable(lat);
    require_shapes(f, g);
    check_dual_controls(lat, dc);
    Objective obj(lat, f, g, lp);
    for (int k = 0; k < lat.steps(); ++k) {
        if (!std::isfinite(obj.f_conj(dc.p[k], dc.q[k]))) {
            throw std::invalid_argument("conjugate of f is -inf at step " + std::to_string(k));
        }
        if (!std::isfinite(obj.g_conj(dc.u[k], dc.v[k]))) {
            throw std::invalid_argument("conjugate of g is +inf at step " + std::to_string(k));
        }
    }
    return *obj(dc);
}

DualValue dual_value(const Lattice& lat, double l, const Driver& f, const Driver& g,
                     const LossPair& lp, const DualSearchOptions& opts,
                     std::vector<DualCandidate>* log) {
    require_enumerable(lat);
    require_shapes(f, g);
    if (!(l > 0.0)) throw std::invalid_argument("dual value needs l > 0");
    if (opts.rounds < 1) throw std::invalid_argument("dual search needs at least one round");

    const int n = lat.steps();
    Objective obj(lat, f, g, lp);
    DualControls dc = DualControls::zeros(n, l);
    if (!std::isfinite(obj.f_conj(0.0, 0.0))) {
        const auto [p0, q0] = f.domain_anchor();
        std::fill(dc.p.begin(), dc.p.end(), p0);
        std::fill(dc.q.begin(), dc.q.end(), q0);
    }
    if (!std::isfinite(obj.g_conj(0.0, 0.0))) {
        const auto [u0, v0] = g.domain_anchor();
        std::fill(dc.u.begin(), dc.u.end(), u0);
        std::fill(dc.v.begin(), dc.v.end(), v0);
    }

    DualValue out;
    auto evaluate = [&](const DualControls& c) {
        const auto v = obj(c);
        ++out.evaluations;
        if (v && log) log->push_back({c.l, *v});
        return v;
    };
    const auto start = evaluate(dc);
    if (!start) throw std::runtime_error("dual search has no feasible starting point");
    double best = *start;

    const ConjugateBox fb = ConjugateBox::of(f);
    const ConjugateBox gb = ConjugateBox::of(g);
    struct Coord {
        std::vector<double> DualControls::*field;
        double half;
    };
    const Coord coords[] = {{&DualControls::u, gb.y_half},
                            {&DualControls::v, gb.z_half},
                            {&DualControls::p, fb.y_half},
                            {&DualControls::q, fb.z_half}};

    bool first_sweep_done = false;
    for (int round = 1; round <= opts.rounds; ++round) {
        const int res = (1 << round) + 1;
        for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
            bool improved = false;
            for (int k = 0; k < n; ++k) {
                for (const Coord& c : coords) {
                    if (c.half <= 0.0) continue;
                    auto& slot = (dc.*c.field)[k];
                    const double keep = slot;
                    double best_val = keep;
                    for (int i = 0; i < res; ++i) {
                        const double cand = -c.half + 2.0 * c.half * i / (res - 1);
                        if (cand == keep) continue;
                        if (out.evaluations >= opts.max_evaluations) {
                            if (!first_sweep_done) {
                                throw std::runtime_error("dual search budget exhausted before a full sweep");
                            }
                            slot = best_val;
                            out.value = best;
                            out.controls = dc;
                            return out;
                        }
                        slot = cand;
                        const auto v = evaluate(dc);
                        if (v && *v < best - 1e-14) {
                            best = *v;
                            best_val = cand;
                            improved = true;
                        }
                    }
                    slot = best_val;
                }
            }
            first_sweep_done = true;
            if (!improved) break;
        }
    }
    out.value = best;
    out.controls = std::move(dc);
    return out;
}

DualBound dual_bound(const Lattice& lat, double m, const Driver& f, const Driver& g,
                     const LossPair& lp, const DualBoundOptions& opts,
                     std::vector<DualCandidate>* log) {
    if (!(opts.l_max > 0.0)) throw std::invalid_argument("l_max must be positive");
    const Corridor corridor = compute_corridor(lat, f, Scheme::implicit_step);
    if (m < corridor.floor(0, 0) - 1e-12 || m > corridor.ceiling(0, 0) + 1e-12) {
        throw std::invalid_argument("m = " + std::to_string(m) + " outside the root corridor");
    }

    std::map<double, DualValue> memo;
    DualBound best;
    best.m = m;
    best.bound = -kInf;
    auto h = [&](double l) {
        auto it = memo.find(l);
        if (it == memo.end()) it = memo.emplace(l, dual_value(lat, l, f, g, lp, opts.search, log)).first;
        const double value = l * m - it->second.value;
        if (value > best.bound) {
            best.bound = value;
            best.l_star = l;
            best.x0 = it->second.value;
            best.controls = it->second.controls;
        }
        return value;
    };

    constexpr double kInvPhi = 0.6180339887498949;
    double a = opts.l_max * 1e-6;
    double b = opts.l_max;
    h(a);
    h(b);
    double c = b - kInvPhi * (b - a);
    double d = a + kInvPhi * (b - a);
    double hc = h(c);
    double hd = h(d);
    while (b - a > opts.l_tol) {
        if (hc >= hd) {
            b = d;
            d = c;
            hd = hc;
            c = b - kInvPhi * (b - a);
            hc = h(c);
        } else {
            a = c;
            c = d;
            hc = hd;
            d = a + kInvPhi * (b - a);
            hd = h(d);
        }
    }
    return best;
}

double FocResiduals::max() const {
    double out = std::max({f_driver, g_driver, terminal_conjugacy});
    if (terminal_available) out = std::max(out, terminal);
    return out;
}

FocResiduals foc_residuals(const Lattice& lat, const DualControls& dc, const Driver& f,
                           const Driver& g, const LossPair& lp, const ControlPolicy& alpha,
                           double mu0, Scheme g_scheme) {
    require_shapes(f, g);
    check_dual_controls(lat, dc);
    const int n = lat.steps();
    const auto tree = simulate_tree(lat, f, mu0, alpha);
    const auto& m_leaves = tree.m[static_cast<std::size_t>(n)];
    std::vector<double> payoff(m_leaves.size());
    for (std::size_t i = 0; i < payoff.size(); ++i) payoff[i] = lp.phi(m_leaves[i]);
    const auto yz = solve_on_path_tree(lat, g, payoff, g_scheme);

    FocResiduals r;
    std::vector<double> a{dc.l}, l{1.0};
    for (int k = 0; k < n; ++k) {
        const double t = lat.time(k);
        const double ft = concave_conjugate_f(f, dc.p[k], dc.q[k]);
        const double gt = convex_conjugate_g(g, dc.u[k], dc.v[k]);
        const std::size_t width = std::size_t{1} << k;
        for (std::size_t s = 0; s < width; ++s) {
            const double m = tree.m[k][s];
            const double al = alpha.at(k, static_cast<std::uint32_t>(s));
            r.f_driver = std::max(r.f_driver, std::abs(f(t, m, al) - (dc.p[k] * m + dc.q[k] * al - ft)));
            const double up = yz.y[k + 1][s | width];
            const double down = yz.y[k + 1][s];
            const double y = g_scheme == Scheme::explicit_step ? 0.5 * (up + down) : yz.y[k][s];
            const double z = yz.z[k][s];
            r.g_driver = std::max(r.g_driver, std::abs(g(t, y, z) - (dc.u[k] * y + dc.v[k] * z - gt)));
        }
        std::vector<double> a_next(2 * width), l_next(2 * width);
        const double shrink = 1.0 / (1.0 - dc.p[k] * lat.dt());
        for (std::size_t s = 0; s < width; ++s) {
            a_next[s | width] = a[s] * (1.0 + dc.q[k] * lat.sqrt_dt()) * shrink;
            a_next[s] = a[s] * (1.0 - dc.q[k] * lat.sqrt_dt()) * shrink;
            l_next[s | width] = l[s] * (1.0 + dc.u[k] * lat.dt() + dc.v[k] * lat.sqrt_dt());
            l_next[s] = l[s] * (1.0 + dc.u[k] * lat.dt() - dc.v[k] * lat.sqrt_dt());
        }
        a = std::move(a_next);
        l = std::move(l_next);
    }
    r.terminal_available = lp.polar_smooth();
    for (std::size_t s = 0; s < m_leaves.size(); ++s) {
        const double ratio = a[s] / l[s];
        const double m = m_leaves[s];
        r.terminal_conjugacy =
            std::max(r.terminal_conjugacy, std::abs(lp.phi(m) - (m * ratio - lp.polar(ratio))));
        if (r.terminal_available) {
            r.terminal = std::max(r.terminal, std::abs(m - *lp.polar_gradient(ratio)));
        }
    }
    if (!r.terminal_available) r.terminal = std::nan("");
    return r;
}

}  // namespace wbsde
