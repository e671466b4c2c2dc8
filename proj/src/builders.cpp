#include "canlab/builders.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace canlab {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_finite(double v, const char* what, double x) {
    if (!std::isfinite(v))
        throw std::runtime_error(std::string(what) + " overflowed near x = " + std::to_string(x));
}

} // namespace

double SchrodingerBasis::wronskian_dev() const {
    double dev = 0.0;
    for (std::size_t i = 0; i < grid.n_points; ++i)
        dev = std::max(dev, std::abs(wronskian_at(i) - 1.0));
    return dev;
}

SchrodingerBasis solve_schrodinger_basis(const RealFn& q, const SpaceGrid& g) {
    SchrodingerBasis b;
    b.grid = g;
    b.y1.resize(g.n_points);
    b.y1p.resize(g.n_points);
    b.y2.resize(g.n_points);
    b.y2p.resize(g.n_points);
    b.y1[0] = 1.0;
    b.y1p[0] = 0.0;
    b.y2[0] = 0.0;
    b.y2p[0] = 1.0;

    const double h = g.h();
    // y'' = q y as a first-order pair, RK4 with the grid step
    auto rhs = [&q](double x, double y, double yp, double& dy, double& dyp) {
        dy = yp;
        dyp = q(x) * y;
    };
    for (std::size_t i = 0; i + 1 < g.n_points; ++i) {
        const double x = g.x(i);
        double y[2] = {b.y1[i], b.y2[i]};
        double yp[2] = {b.y1p[i], b.y2p[i]};
        for (int c = 0; c < 2; ++c) {
            double k1y, k1p, k2y, k2p, k3y, k3p, k4y, k4p;
            rhs(x, y[c], yp[c], k1y, k1p);
            rhs(x + 0.5 * h, y[c] + 0.5 * h * k1y, yp[c] + 0.5 * h * k1p, k2y, k2p);
            rhs(x + 0.5 * h, y[c] + 0.5 * h * k2y, yp[c] + 0.5 * h * k2p, k3y, k3p);
            rhs(x + h, y[c] + h * k3y, yp[c] + h * k3p, k4y, k4p);
            y[c] += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
            yp[c] += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
            check_finite(y[c], "solve_schrodinger_basis", x);
        }
        b.y1[i + 1] = y[0];
        b.y1p[i + 1] = yp[0];
        b.y2[i + 1] = y[1];
        b.y2p[i + 1] = yp[1];
    }
    return b;
}

PotentialHamiltonian build_H_from_potential(const RealFn& q, const SpaceGrid& g) {
    SchrodingerBasis b = solve_schrodinger_basis(q, g);
    std::vector<double> h00(g.n_points), h01(g.n_points), h11(g.n_points);
    for (std::size_t i = 0; i < g.n_points; ++i) {
        h00[i] = b.y1[i] * b.y1[i];
        h01[i] = b.y1[i] * b.y2[i];
        h11[i] = b.y2[i] * b.y2[i];
    }
    HamiltonianField H = HamiltonianField::sampled(g, std::move(h00), std::move(h01),
                                                   std::move(h11),
                                                   HamiltonianClass::Rank1Degenerate);
    return {std::move(H), std::move(b)};
}

HamiltonianField build_H_from_density(const RealFn& rho, const SpaceGrid& g, double delta) {
    std::vector<double> h00(g.n_points), h01(g.n_points, 0.0), h11(g.n_points, 1.0);
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g.n_points; ++i) {
        h00[i] = rho(g.x(i));
        if (!(h00[i] >= delta))
            throw std::invalid_argument("build_H_from_density: density must satisfy rho >= delta > 0");
        lo = std::min(lo, h00[i]);
    }
    return HamiltonianField::sampled(g, std::move(h00), std::move(h01), std::move(h11),
                                     HamiltonianClass::StrictlyPositive, std::min(lo, 1.0));
}

double DiracFundamental::det_dev() const {
    double dev = 0.0;
    for (const Mat2d& m : A) dev = std::max(dev, std::abs(m.det() - 1.0));
    return dev;
}

DiracHamiltonian build_H_from_dirac(const RealFn& p, const RealFn& q, const SpaceGrid& g) {
    DiracFundamental f;
    f.grid = g;
    f.A.resize(g.n_points);
    f.A[0] = Mat2d::identity();

    // J Y' + V Y = 0  =>  Y' = J V Y,  J V = [[q, -p], [-p, -q]]
    auto coeff = [&](double x) {
        const double pv = p(x), qv = q(x);
        return Mat2d{qv, -pv, -pv, -qv};
    };
    const double h = g.h();
    for (std::size_t i = 0; i + 1 < g.n_points; ++i) {
        const double x = g.x(i);
        const Mat2d m1 = coeff(x), m2 = coeff(x + 0.5 * h), m4 = coeff(x + h);
        const Mat2d& a = f.A[i];
        const Mat2d k1 = m1 * a;
        const Mat2d k2 = m2 * (a + k1 * (0.5 * h));
        const Mat2d k3 = m2 * (a + k2 * (0.5 * h));
        const Mat2d k4 = m4 * (a + k3 * h);
        f.A[i + 1] = a + (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
        check_finite(f.A[i + 1].max_abs(), "build_H_from_dirac", x);
    }

    std::vector<double> h00(g.n_points), h01(g.n_points), h11(g.n_points);
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g.n_points; ++i) {
        const Mat2d gram = f.A[i].transpose() * f.A[i];
        h00[i] = gram.m00;
        h01[i] = 0.5 * (gram.m01 + gram.m10);
        h11[i] = gram.m11;
        lo = std::min(lo, gram.min_eig_sym());
    }
    HamiltonianField H = HamiltonianField::sampled(g, std::move(h00), std::move(h01),
                                                   std::move(h11),
                                                   HamiltonianClass::StrictlyPositive, lo);
    return {std::move(H), std::move(f)};
}

double JacobiSystem::node(std::size_t j) const {
    double b = 0.0;
    for (std::size_t i = 0; i < j; ++i) b += lengths[i];
    return b;
}

cplx JacobiSystem::apply_row(std::size_t n, const std::vector<cplx>& v) const {
    if (n < 1 || n > rows()) throw std::out_of_range("JacobiSystem::apply_row");
    auto get = [&v](std::size_t k) { return k < v.size() ? v[k] : cplx(0.0); };
    cplx s = q[n - 1] * get(n);
    if (n >= 2) s += rho[n - 2] * get(n - 1);
    s += rho[n - 1] * get(n + 1);
    return s;
}

double JacobiSystem::norm_bound() const {
    double m = 0.0;
    for (std::size_t n = 1; n <= rows(); ++n) {
        double r = std::abs(q[n - 1]) + std::abs(rho[n - 1]);
        if (n >= 2) r += std::abs(rho[n - 2]);
        m = std::max(m, r);
    }
    return m;
}

JacobiSystem build_jacobi_from_partition(std::vector<double> lengths,
                                         std::vector<Vec2d> units,
                                         std::optional<double> q1_override) {
    if (lengths.size() != units.size() || lengths.size() < 2)
        throw std::invalid_argument("build_jacobi_from_partition: need at least 2 intervals");
    for (double l : lengths)
        if (!(l > 0.0)) throw std::invalid_argument("build_jacobi_from_partition: nonpositive length");
    for (const Vec2d& e : units)
        if (std::abs(e.norm() - 1.0) > 1e-12)
            throw std::invalid_argument("build_jacobi_from_partition: unit vector not normalized");
    const std::size_t m = lengths.size();
    for (std::size_t j = 0; j + 1 < m; ++j) {
        if (std::abs(units[j + 1].dot(units[j].perp())) < 1e-8)
            throw std::invalid_argument(
                "build_jacobi_from_partition: degenerate partition, adjacent directions parallel");
    }

    JacobiSystem sys;
    sys.lengths = std::move(lengths);
    sys.units = std::move(units);
    sys.q.resize(m - 1);
    sys.rho.resize(m - 1);
    for (std::size_t j = 1; j < m; ++j) {
        // 1-based j; rho_j couples intervals j and j+1
        const Vec2d& ej = sys.units[j - 1];
        const Vec2d& en = sys.units[j];
        sys.rho[j - 1] = -1.0 / (en.dot(ej.perp()) * std::sqrt(sys.lengths[j - 1] * sys.lengths[j]));
    }
    for (std::size_t j = 2; j < m; ++j) {
        const Vec2d& ep = sys.units[j - 2];
        const Vec2d& ej = sys.units[j - 1];
        const Vec2d& en = sys.units[j];
        sys.q[j - 1] = (ej.dot(en) / ej.perp().dot(en) - ej.dot(ep) / ej.perp().dot(ep)) /
                       sys.lengths[j - 1];
    }
    if (q1_override) {
        sys.q[0] = *q1_override;
    } else {
        // no left neighbor at the origin: keep only the forward term
        sys.q[0] = sys.units[0].dot(sys.units[1]) /
                   (sys.units[0].perp().dot(sys.units[1]) * sys.lengths[0]);
    }
    return sys;
}

std::vector<Vec2d> units_from_angles(const std::vector<double>& angles) {
    static const Vec2d axis[4] = {{1.0, 0.0}, {0.0, 1.0}, {-1.0, 0.0}, {0.0, -1.0}};
    std::vector<Vec2d> units(angles.size());
    for (std::size_t j = 0; j < angles.size(); ++j) {
        const double a = angles[j];
        const double k = a / (0.5 * kPi);
        const double kr = std::round(k);
        if (std::abs(k - kr) < 1e-12) {
            const long long idx = static_cast<long long>(kr) % 4;
            units[j] = axis[(idx + 4) % 4];
        } else {
            units[j] = {std::cos(a), std::sin(a)};
        }
    }
    return units;
}

JacobiSystem jacobi_quarter_turns(std::size_t intervals) {
    std::vector<double> angles(intervals);
    for (std::size_t j = 0; j < intervals; ++j) angles[j] = 0.5 * kPi * static_cast<double>(j);
    return build_jacobi_from_partition(std::vector<double>(intervals, 1.0),
                                       units_from_angles(angles));
}

HamiltonianField build_H_jacobi(const JacobiSystem& sys) {
    return HamiltonianField::piecewise_rank1(sys.lengths, sys.units);
}

double DiracReduction::max_speed() const {
    double s = 0.0;
    for (std::size_t i = 0; i < d1.size(); ++i) s = std::max(s, 1.0 / std::sqrt(d1[i] * d2[i]));
    return s;
}

double DiracReduction::tau_rate_max() const {
    double s = 0.0;
    for (std::size_t i = 0; i < d1.size(); ++i) s = std::max(s, std::sqrt(d1[i] * d2[i]));
    return s;
}

DiracReduction diagonalize_H(const HamiltonianField& H) {
    if (H.cls() != HamiltonianClass::StrictlyPositive)
        throw std::invalid_argument("diagonalize_H: strictly positive Hamiltonian required");
    const SpaceGrid& g = H.grid();
    const std::size_t n = g.n_points;

    DiracReduction red;
    red.grid = g;
    red.d1.resize(n);
    red.d2.resize(n);
    red.phi.resize(n);
    red.psi.resize(n);

    // Near-degenerate samples (eigenvalue gap at noise level) leave the
    // rotation angle unconstrained: any angle reconstructs H there. Unwrap
    // over the well-separated samples and interpolate across the gaps.
    std::vector<double> principal(n);
    std::vector<bool> defined(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Mat2d h = H.at(i);
        const double mean = 0.5 * (h.m00 + h.m11);
        const double diff = 0.5 * (h.m00 - h.m11);
        const double r = std::sqrt(diff * diff + h.m01 * h.m01);
        red.d1[i] = mean + r;
        red.d2[i] = mean - r;
        if (!(red.d2[i] > 0.0))
            throw std::invalid_argument("diagonalize_H: eigenvalue not strictly positive");
        defined[i] = r > 1e-10 * std::max(1.0, h.trace());
        // principal branch: phi in (-pi/2, pi/2], inside (-pi/4, pi/4] when
        // the diagonal dominates
        principal[i] = defined[i] ? 0.5 * std::atan2(h.m01, diff) : 0.0;
    }
    // pass 1: unwrap across the defined samples
    std::size_t prev = n;
    for (std::size_t i = 0; i < n; ++i) {
        if (!defined[i]) continue;
        double phi = principal[i];
        if (prev < n) {
            // the ordered decomposition is pi-periodic in phi; unwrap to the
            // nearest branch
            phi += kPi * std::round((red.phi[prev] - phi) / kPi);
            if (std::abs(phi - red.phi[prev]) > 0.25 * kPi)
                throw std::runtime_error(
                    "diagonalize_H: rotation angle jump too large, grid too coarse");
        }
        red.phi[i] = phi;
        prev = i;
    }
    // pass 2: fill degenerate runs by interpolation between their neighbors
    std::size_t left = n;
    for (std::size_t i = 0; i < n; ++i) {
        if (defined[i]) {
            left = i;
            continue;
        }
        std::size_t right = i + 1;
        while (right < n && !defined[right]) ++right;
        const double lo = left < n ? red.phi[left] : (right < n ? red.phi[right] : 0.0);
        const double hi = right < n ? red.phi[right] : lo;
        const std::size_t a = left < n ? left : i;
        const std::size_t b = right < n ? right : i;
        red.phi[i] = b > a ? lo + (hi - lo) * static_cast<double>(i - a) /
                                      static_cast<double>(b - a)
                           : lo;
    }
    red.delta = *std::min_element(red.d2.begin(), red.d2.end());

    const double h = g.h();
    for (std::size_t i = 0; i < n; ++i) {
        if (i == 0)
            red.psi[i] = (-3.0 * red.phi[0] + 4.0 * red.phi[1] - red.phi[2]) / (2.0 * h);
        else if (i + 1 == n)
            red.psi[i] = (3.0 * red.phi[n - 1] - 4.0 * red.phi[n - 2] + red.phi[n - 3]) / (2.0 * h);
        else
            red.psi[i] = (red.phi[i + 1] - red.phi[i - 1]) / (2.0 * h);
    }

    // reconstruction guard
    double dev = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Mat2d u = Mat2d::rotation(red.phi[i]);
        const Mat2d d{red.d1[i], 0.0, 0.0, red.d2[i]};
        dev = std::max(dev, (u * d * u.transpose() - H.at(i)).max_abs());
    }
    if (dev > 1e-10)
        throw std::runtime_error("diagonalize_H: reconstruction check failed");
    return red;
}

DiracReduction make_reduction(const SpaceGrid& g,
                              std::vector<double> d1,
                              std::vector<double> d2,
                              std::vector<double> psi) {
    if (d1.size() != g.n_points || d2.size() != g.n_points || psi.size() != g.n_points)
        throw std::invalid_argument("make_reduction: sample count mismatch");
    DiracReduction red;
    red.grid = g;
    red.d1 = std::move(d1);
    red.d2 = std::move(d2);
    red.psi = std::move(psi);
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g.n_points; ++i) {
        if (!(red.d1[i] > 0.0) || !(red.d2[i] > 0.0))
            throw std::invalid_argument("make_reduction: diagonal entries must be positive");
        lo = std::min(lo, std::min(red.d1[i], red.d2[i]));
    }
    red.delta = lo;
    return red;
}

double Eikonal::tau_at(double x) const {
    const double h = grid.h();
    if (x <= 0.0) return tau.front();
    if (x >= grid.x_max) return tau.back();
    const std::size_t i = static_cast<std::size_t>(x / h);
    const double w = (x - grid.x(i)) / h;
    return tau[i] * (1.0 - w) + tau[std::min(i + 1, tau.size() - 1)] * w;
}

std::optional<double> Eikonal::x_of_tau(double t) const {
    if (t < tau.front() || t > tau.back()) return std::nullopt;
    // tau is nondecreasing; locate the bracketing strictly increasing segment
    const auto it = std::lower_bound(tau.begin(), tau.end(), t);
    std::size_t i = static_cast<std::size_t>(it - tau.begin());
    if (i == 0) return grid.x(0);
    const std::size_t lo = i - 1;
    if (!(tau[i] > tau[lo])) return std::nullopt;   // flat segment, inverse undefined
    const double w = (t - tau[lo]) / (tau[i] - tau[lo]);
    return grid.x(lo) + w * grid.h();
}

Eikonal eikonal(const HamiltonianField& H) {
    const SpaceGrid& g = H.grid();
    std::vector<double> rate(g.n_points);
    for (std::size_t i = 0; i < g.n_points; ++i) rate[i] = std::sqrt(std::max(0.0, H.det_at(i)));
    Eikonal e;
    e.grid = g;
    e.tau = cumulative_trapezoid(rate, g.h());
    return e;
}

Eikonal eikonal(const DiracReduction& red) {
    std::vector<double> rate(red.grid.n_points);
    for (std::size_t i = 0; i < rate.size(); ++i) rate[i] = std::sqrt(red.d1[i] * red.d2[i]);
    Eikonal e;
    e.grid = red.grid;
    e.tau = cumulative_trapezoid(rate, red.grid.h());
    return e;
}

double TraceNormalization::xtilde_of_x(double x, const SpaceGrid& original) const {
    const double h = original.h();
    if (x <= 0.0) return xtilde.front();
    if (x >= original.x_max) return xtilde.back();
    const std::size_t i = static_cast<std::size_t>(x / h);
    const double w = (x - original.x(i)) / h;
    return xtilde[i] * (1.0 - w) + xtilde[std::min(i + 1, xtilde.size() - 1)] * w;
}

TraceNormalization normalize_trace(const HamiltonianField& H) {
    const SpaceGrid& g = H.grid();
    for (std::size_t i = 0; i < g.n_points; ++i)
        if (!(H.trace_at(i) > 1e-14))
            throw std::invalid_argument("normalize_trace: trace vanishes");

    TraceNormalization out;
    out.xtilde = cumulative_trapezoid(H.trace_samples(), g.h());

    const SpaceGrid ng(out.xtilde.back(), g.n_points);
    std::vector<double> h00(ng.n_points), h01(ng.n_points), h11(ng.n_points);
    // invert the monotone map by walking the original grid
    std::size_t seg = 0;
    for (std::size_t i = 0; i < ng.n_points; ++i) {
        const double xt = ng.x(i);
        while (seg + 2 <= out.xtilde.size() - 1 && out.xtilde[seg + 1] < xt) ++seg;
        const double span = out.xtilde[seg + 1] - out.xtilde[seg];
        const double w = span > 0.0 ? (xt - out.xtilde[seg]) / span : 0.0;
        const double x = g.x(seg) + w * g.h();
        const Mat2d m = H.value(x);
        const double tr = m.trace();
        h00[i] = m.m00 / tr;
        h01[i] = m.m01 / tr;
        h11[i] = m.m11 / tr;
    }
    HamiltonianClass cls = H.cls();
    double delta = 0.0;
    if (cls == HamiltonianClass::StrictlyPositive) {
        double lo = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < ng.n_points; ++i)
            lo = std::min(lo, Mat2d::sym(h00[i], h01[i], h11[i]).min_eig_sym());
        delta = lo;
    }
    out.normalized = HamiltonianField::sampled(ng, std::move(h00), std::move(h01),
                                               std::move(h11), cls, delta);
    return out;
}

std::vector<Vec2c> solve_amplitude_A(const DiracReduction& red, Vec2c A0) {
    const SpaceGrid& g = red.grid;
    const double h = g.h();
    std::vector<Vec2c> a(g.n_points);
    a[0] = A0;

    auto sample = [](const std::vector<double>& v, double pos) {
        // pos in grid index units, linear interpolation
        const std::size_t i = static_cast<std::size_t>(pos);
        if (i + 1 >= v.size()) return v.back();
        const double w = pos - static_cast<double>(i);
        return v[i] * (1.0 - w) + v[i + 1] * w;
    };
    auto rhs = [&](double pos, const Vec2c& v) {
        const double d1 = sample(red.d1, pos), d2 = sample(red.d2, pos);
        const double psi = sample(red.psi, pos);
        if (!(d1 > 0.0) || !(d2 > 0.0))
            throw std::runtime_error("solve_amplitude_A: singular coefficient");
        const cplx i_unit(0.0, 1.0);
        return Vec2c{0.5 * psi * (v.b + i_unit * std::sqrt(d2 / d1) * v.a),
                     0.5 * psi * (i_unit * std::sqrt(d1 / d2) * v.b - v.a)};
    };
    for (std::size_t i = 0; i + 1 < g.n_points; ++i) {
        const double p = static_cast<double>(i);
        const Vec2c k1 = rhs(p, a[i]);
        const Vec2c k2 = rhs(p + 0.5, a[i] + 0.5 * h * k1);
        const Vec2c k3 = rhs(p + 0.5, a[i] + 0.5 * h * k2);
        const Vec2c k4 = rhs(p + 1.0, a[i] + h * k3);
        a[i + 1] = a[i] + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return a;
}

RealFn random_smooth_function(std::uint64_t seed, double amplitude, double x_span) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> c(3), s(3);
    double total = 0.0;
    for (int k = 0; k < 3; ++k) {
        c[k] = u(rng);
        s[k] = u(rng);
        total += std::abs(c[k]) + std::abs(s[k]);
    }
    if (total == 0.0) total = 1.0;
    const double scale = amplitude / total;
    return [c, s, scale, x_span](double x) {
        double v = 0.0;
        for (int k = 0; k < 3; ++k) {
            const double w = kPi * static_cast<double>(k + 1) * x / x_span;
            v += c[k] * std::cos(w) + s[k] * std::sin(w);
        }
        return scale * v;
    };
}

HamiltonianField random_strictly_positive_H(std::uint64_t seed, const SpaceGrid& g, double delta) {
    if (!(delta > 0.0) || !(delta < 0.5))
        throw std::invalid_argument("random_strictly_positive_H: need 0 < delta < 1/2");
    // keep d1 - d2 bounded away from zero so the eigenvalue branches never cross
    const double span = 0.5 - delta;
    const RealFn gap = random_smooth_function(seed * 2 + 1, 0.35 * span, g.x_max);
    const RealFn ang = random_smooth_function(seed * 2 + 2, 0.5, g.x_max);
    std::vector<double> h00(g.n_points), h01(g.n_points), h11(g.n_points);
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g.n_points; ++i) {
        const double x = g.x(i);
        const double d1 = 0.5 + 0.6 * span + gap(x);
        const double d2 = 1.0 - d1;
        const double phi = ang(x);
        const double c = std::cos(phi), s = std::sin(phi);
        h00[i] = c * c * d1 + s * s * d2;
        h01[i] = c * s * (d1 - d2);
        h11[i] = s * s * d1 + c * c * d2;
        lo = std::min(lo, std::min(d1, d2));
    }
    return HamiltonianField::sampled(g, std::move(h00), std::move(h01), std::move(h11),
                                     HamiltonianClass::StrictlyPositive, lo);
}

DiracReduction random_smooth_reduction(std::uint64_t seed, const SpaceGrid& g, double delta) {
    const double span = 0.5 - delta;
    const RealFn gap = random_smooth_function(seed * 3 + 1, 0.35 * span, g.x_max);
    const RealFn pot = random_smooth_function(seed * 3 + 2, 1.0, g.x_max);
    std::vector<double> d1(g.n_points), d2(g.n_points), psi(g.n_points);
    for (std::size_t i = 0; i < g.n_points; ++i) {
        const double x = g.x(i);
        d1[i] = 0.5 + 0.6 * span + gap(x);
        d2[i] = 1.0 - d1[i];
        psi[i] = pot(x);
    }
    return make_reduction(g, std::move(d1), std::move(d2), std::move(psi));
}

} // namespace canlab
