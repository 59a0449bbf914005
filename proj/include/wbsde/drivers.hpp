#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wbsde {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Joint shape of a driver in (y, z). `affine` is both concave and convex.
enum class Shape { none, concave, convex, affine };

bool is_concave(Shape s);
bool is_convex(Shape s);

enum class DriverKind { zero, linear, abs, smooth_abs, softplus, sine, custom };

/// Lipschitz coefficient (t, y, z) -> R, deterministic in omega.
///
/// Catalogue drivers carry closed-form conjugates; custom drivers fall back
/// to the grid-based conjugates below.
class Driver {
public:
    using Evaluator = std::function<double(double t, double y, double z)>;

    static Driver zero();
    /// a*y + b*z
    static Driver linear(double a, double b = 0.0);
    /// kappa*|z|; concave for kappa < 0, convex for kappa > 0.
    static Driver abs(double kappa);
    /// kappa*(sqrt(1 + z^2) - 1), a smooth version of kappa*|z|.
    static Driver smooth_abs(double kappa);
    /// kappa*(log(1 + e^z) - log 2).
    static Driver softplus(double kappa);
    /// kappa*sin(z); Lipschitz but neither concave nor convex.
    static Driver sine(double kappa);
    static Driver custom(std::string name, Evaluator eval, double lipschitz_y, double lipschitz_z,
                         Shape shape);

    double operator()(double t, double y, double z) const;

    const std::string& name() const { return name_; }
    DriverKind kind() const { return kind_; }
    std::span<const double> params() const { return params_; }
    double lipschitz_y() const { return lip_y_; }
    double lipschitz_z() const { return lip_z_; }
    Shape shape() const { return shape_; }
    bool has_closed_form_conjugate() const { return kind_ != DriverKind::custom && kind_ != DriverKind::sine; }

    /// Lipschitz bound of one explicit BSDE step; the discrete comparison
    /// theorem needs lipschitz_z*sqrt(dt) + lipschitz_y*dt <= 1.
    bool monotone_step(double dt, double sqrt_dt) const;

    /// A point of the conjugate domain (the gradient at the origin).
    std::pair<double, double> domain_anchor() const;

    /// Closed-form concave conjugate inf_{x,pi}(x p + pi q - f); -inf off domain.
    double closed_concave_conjugate(double p, double q) const;
    /// Closed-form convex conjugate sup_{y,z}(y u + z v - g); +inf off domain.
    double closed_convex_conjugate(double u, double v) const;

private:
    Driver(std::string name, DriverKind kind, std::vector<double> params, double ly, double lz,
           Shape shape);

    std::string name_;
    DriverKind kind_ = DriverKind::zero;
    std::vector<double> params_;
    double lip_y_ = 0.0;
    double lip_z_ = 0.0;
    Shape shape_ = Shape::affine;
    Evaluator custom_;
};

/// Catalogue lookup by name; throws std::invalid_argument naming the unknown identifier.
Driver make_driver(std::string_view name, std::span<const double> params);

/// Rectangle containing the conjugate domain: half-widths are the Lipschitz constants.
struct ConjugateBox {
    double y_half = 0.0;
    double z_half = 0.0;

    static ConjugateBox of(const Driver& d) { return {d.lipschitz_y(), d.lipschitz_z()}; }
    bool contains(double a, double b, double slack = 1e-12) const;
};

struct NumericConjugateOptions {
    /// Half-width of the (x, pi) search box; <= 0 selects 50*(1 + C).
    double radius = 0.0;
    double step = 1e-2;
    /// Values beyond this magnitude are reported as infinite.
    double divergence = 1e6;
};

double concave_conjugate_f(const Driver& f, double p, double q);
double convex_conjugate_g(const Driver& g, double u, double v);

/// Grid infimum over (x, pi) in the box; a value still decreasing between the
/// half box and the full box is treated as divergent.
double numeric_concave_conjugate(const Driver& f, double p, double q,
                                 const NumericConjugateOptions& opts = {});
double numeric_convex_conjugate(const Driver& g, double u, double v,
                                const NumericConjugateOptions& opts = {});

/// min over the conjugate box grid of (p x + q pi - f~(p, q)) for concave
/// drivers, max of (u y + v z - g~(u, v)) for convex ones. Verification oracle.
double fenchel_recover(const Driver& d, double x, double pi, double step = 1e-3);

enum class LossKind { identity, power, call, call_spread, piecewise };

/// Non-decreasing loss map Psi with its right-inverse Phi : [0,1] -> [0,1].
class LossPair {
public:
    static LossPair identity();
    /// Phi(m) = m^p, p >= 1.
    static LossPair power(double p);
    /// Phi(m) = max(m - a, 0) / (1 - a).
    static LossPair call(double a);
    /// Phi(m) = clamp((m - a) / (b - a), 0, 1); S-shaped, not convex.
    static LossPair call_spread(double a, double b);
    /// Piecewise-linear Phi through knots (m_i, phi_i), m_0 = 0, m_last = 1.
    static LossPair piecewise(std::vector<double> knots_m, std::vector<double> knots_phi);

    const std::string& name() const { return name_; }
    LossKind kind() const { return kind_; }
    std::span<const double> params() const { return params_; }

    double phi(double m) const;
    /// sup{m in [0,1] : Phi(m) <= y} for y >= 0, -inf for y < 0.
    double psi(double y) const;
    /// Polar sup_{m in [0,1]} (m l - Phi(m)), closed form.
    double polar(double l) const;
    /// Derivative of the polar when it is smooth; nullopt otherwise.
    std::optional<double> polar_gradient(double l) const;

    bool phi_continuous() const { return true; }
    bool phi_lipschitz() const { return true; }
    double phi_lipschitz_constant() const { return lipschitz_; }
    bool phi_convex() const { return convex_; }
    bool polar_smooth() const { return kind_ == LossKind::power && exponent_ > 1.0; }

private:
    LossPair() = default;
    void finalize_piecewise();

    std::string name_;
    LossKind kind_ = LossKind::identity;
    std::vector<double> params_;
    double exponent_ = 1.0;
    std::vector<double> km_;
    std::vector<double> kphi_;
    double lipschitz_ = 1.0;
    bool convex_ = true;
};

LossPair make_loss(std::string_view name, std::span<const double> params);

double polar_phi(const LossPair& lp, double l);
/// Grid supremum over m in [0,1]; verification oracle for the closed forms.
double numeric_polar_phi(const LossPair& lp, double l, double step = 1e-4);

}  // namespace wbsde
