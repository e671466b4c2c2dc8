#include "canlab/frequency.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace canlab {

namespace {

const cplx kI(0.0, 1.0);
constexpr double kOverflowGuard = 1e150;

Mat2c flow_matrix(const Mat2d& h, cplx lambda) {
    // lambda J H with J = [[0,1],[-1,0]]
    return {lambda * h.m10, lambda * h.m11, -lambda * h.m00, -lambda * h.m01};
}

// One RK4 sweep of Y' = lambda J H(x) Y accumulating the fundamental matrix.
Mat2c integrate_fundamental(const HamiltonianField& H, double x_extent, cplx lambda) {
    if (!H.is_sampled()) throw std::invalid_argument("solve_transfer: sampled Hamiltonian required");
    const SpaceGrid& g = H.grid();
    if (x_extent < 0.0 || x_extent > g.x_max + 1e-12)
        throw std::invalid_argument("solve_transfer: extent outside the grid");
    const double h = g.h();
    const std::size_t steps = std::min<std::size_t>(
        g.n_points - 1, static_cast<std::size_t>(std::llround(x_extent / h)));

    Mat2c m = Mat2c::identity();
    for (std::size_t i = 0; i < steps; ++i) {
        const double x = g.x(i);
        const Mat2c a1 = flow_matrix(H.value(x), lambda);
        const Mat2c am = flow_matrix(H.value(x + 0.5 * h), lambda);
        const Mat2c a4 = flow_matrix(H.value(x + h), lambda);
        const Mat2c k1 = a1 * m;
        const Mat2c k2 = am * (m + k1 * cplx(0.5 * h));
        const Mat2c k3 = am * (m + k2 * cplx(0.5 * h));
        const Mat2c k4 = a4 * (m + k3 * cplx(h));
        m = m + (k1 + (k2 + k3) * cplx(2.0) + k4) * cplx(h / 6.0);
        const double mag = std::max(std::abs(m.m00), std::max(std::abs(m.m01),
                            std::max(std::abs(m.m10), std::abs(m.m11))));
        if (!(mag < kOverflowGuard))
            throw std::runtime_error("solve_transfer: overflow near x = " + std::to_string(x));
    }
    return m;
}

} // namespace

Vec2c solve_transfer(const HamiltonianField& H, double x_extent, cplx lambda, Vec2c C0) {
    if (C0.norm_sq() == 0.0) throw std::invalid_argument("solve_transfer: C must be nonzero");
    return integrate_fundamental(H, x_extent, lambda).apply(C0);
}

Mat2c transfer_fundamental(const HamiltonianField& H, double x_extent, cplx lambda) {
    return integrate_fundamental(H, x_extent, lambda);
}

DeBrangesFunction DeBrangesFunction::from_hamiltonian(const HamiltonianField& H,
                                                      double x_extent, Vec2c C0) {
    if (C0.norm_sq() == 0.0)
        throw std::invalid_argument("DeBrangesFunction: C must be nonzero");
    HamiltonianField copy = H.is_sampled() ? H : H.resample(SpaceGrid(x_extent, 1001));
    DeBrangesFunction f;
    f.extent_ = x_extent;
    f.cache_ = std::make_shared<Cache>();
    f.eval_ = [copy = std::move(copy), x_extent, C0](cplx lambda) {
        const Vec2c y = solve_transfer(copy, x_extent, lambda, C0);
        return y.a + kI * y.b;
    };
    return f;
}

DeBrangesFunction DeBrangesFunction::from_callable(std::function<cplx(cplx)> fn) {
    DeBrangesFunction f;
    f.cache_ = std::make_shared<Cache>();
    f.eval_ = std::move(fn);
    return f;
}

cplx DeBrangesFunction::operator()(cplx lambda) const {
    const std::pair<double, double> key{lambda.real(), lambda.imag()};
    {
        std::lock_guard<std::mutex> lock(cache_->mutex);
        const auto it = cache_->values.find(key);
        if (it != cache_->values.end()) return it->second;
    }
    const cplx v = eval_(lambda);
    std::lock_guard<std::mutex> lock(cache_->mutex);
    cache_->values.emplace(key, v);
    return v;
}

HBReport hb_check(const DeBrangesFunction& e, const std::vector<cplx>& zs) {
    HBReport rep;
    rep.points = zs;
    rep.margins.resize(zs.size());
    rep.min_margin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < zs.size(); ++i) {
        if (!(zs[i].imag() > 0.0))
            throw std::invalid_argument("hb_check: samples must lie in the upper half-plane");
        rep.margins[i] = std::abs(e(zs[i])) - std::abs(e(std::conj(zs[i])));
        rep.min_margin = std::min(rep.min_margin, rep.margins[i]);
    }
    rep.pass = rep.min_margin > 0.0;
    return rep;
}

std::vector<cplx> standard_hb_grid() {
    std::vector<cplx> zs;
    for (int a = -5; a <= 5; ++a)
        for (double b : {0.1, 1.0, 10.0}) zs.emplace_back(static_cast<double>(a), b);
    return zs;
}

namespace {

cplx kernel_formula(const DeBrangesFunction& e, cplx z, cplx xi) {
    const cplx num = std::conj(e(z)) * e(xi) - e(std::conj(z)) * std::conj(e(std::conj(xi)));
    return num / (2.0 * kI * (std::conj(z) - xi));
}

} // namespace

cplx reproducing_kernel(const DeBrangesFunction& e, cplx z, cplx xi) {
    const cplx zb = std::conj(z);
    if (std::abs(zb - xi) >= 1e-6) return kernel_formula(e, z, xi);
    // removable point: J -> (i/2) N'(zb) with N the numerator; centered
    // differences at r and r/2, Richardson to O(r^4)
    auto num = [&](cplx w) {
        return std::conj(e(z)) * e(w) - e(zb) * std::conj(e(std::conj(w)));
    };
    const double r = 1e-4;
    const cplx d1 = (num(zb + r) - num(zb - r)) / (2.0 * r);
    const cplx d2 = (num(zb + 0.5 * r) - num(zb - 0.5 * r)) / r;
    const cplx nprime = (4.0 * d2 - d1) / 3.0;
    return 0.5 * kI * nprime;
}

KernelSample kernel_gram(const DeBrangesFunction& e, const std::vector<cplx>& points) {
    if (points.empty()) throw std::invalid_argument("kernel_gram: need at least one point");
    KernelSample ks;
    ks.points = points;
    ks.gram = DenseMatrix(points.size(), points.size());
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = 0; j < points.size(); ++j)
            ks.gram.at(i, j) = reproducing_kernel(e, points[i], points[j]);
    ks.hermiticity_dev = ks.gram.hermiticity_dev();
    const auto ev = hermitian_eigenvalues(ks.gram);
    ks.min_eigenvalue = ev.front();
    ks.scale = std::max(std::abs(ev.front()), std::abs(ev.back()));
    ks.psd = ks.min_eigenvalue >= -1e-10 * std::max(ks.scale, 1e-300);
    return ks;
}

std::vector<Vec2c> solve_theta_dirichlet(const DiracReduction& red, cplx z) {
    const SpaceGrid& g = red.grid;
    const double h = g.h();
    std::vector<Vec2c> theta(g.n_points);
    theta[0] = {0.0, 1.0};

    auto sample = [](const std::vector<double>& v, double pos) {
        const std::size_t i = static_cast<std::size_t>(pos);
        if (i + 1 >= v.size()) return v.back();
        const double w = pos - static_cast<double>(i);
        return v[i] * (1.0 - w) + v[i + 1] * w;
    };
    // J theta' + psi theta = z D theta  =>  theta' = J (psi I - z D) theta
    auto rhs = [&](double pos, const Vec2c& th) {
        const double psi = sample(red.psi, pos);
        const cplx m0 = psi - z * sample(red.d1, pos);
        const cplx m1 = psi - z * sample(red.d2, pos);
        // J diag(m0, m1) th = (m1 th2, -m0 th1)
        return Vec2c{m1 * th.b, -m0 * th.a};
    };
    for (std::size_t i = 0; i + 1 < g.n_points; ++i) {
        const double p = static_cast<double>(i);
        const Vec2c k1 = rhs(p, theta[i]);
        const Vec2c k2 = rhs(p + 0.5, theta[i] + 0.5 * h * k1);
        const Vec2c k3 = rhs(p + 0.5, theta[i] + 0.5 * h * k2);
        const Vec2c k4 = rhs(p + 1.0, theta[i] + h * k3);
        theta[i + 1] = theta[i] + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!(theta[i + 1].norm_sq() < kOverflowGuard))
            throw std::runtime_error("solve_theta_dirichlet: overflow near x = " +
                                     std::to_string(g.x(i)));
    }
    return theta;
}

double theta_det_dev(const DiracReduction& red, cplx z) {
    const std::vector<Vec2c> th = solve_theta_dirichlet(red, z);
    // companion with theta(0) = (1,0)
    std::vector<Vec2c> co(th.size());
    {
        const SpaceGrid& g = red.grid;
        const double h = g.h();
        co[0] = {1.0, 0.0};
        auto sample = [](const std::vector<double>& v, double pos) {
            const std::size_t i = static_cast<std::size_t>(pos);
            if (i + 1 >= v.size()) return v.back();
            const double w = pos - static_cast<double>(i);
            return v[i] * (1.0 - w) + v[i + 1] * w;
        };
        auto rhs = [&](double pos, const Vec2c& th2) {
            const double psi = sample(red.psi, pos);
            const cplx m0 = psi - z * sample(red.d1, pos);
            const cplx m1 = psi - z * sample(red.d2, pos);
            return Vec2c{m1 * th2.b, -m0 * th2.a};
        };
        for (std::size_t i = 0; i + 1 < g.n_points; ++i) {
            const double p = static_cast<double>(i);
            const Vec2c k1 = rhs(p, co[i]);
            const Vec2c k2 = rhs(p + 0.5, co[i] + 0.5 * h * k1);
            const Vec2c k3 = rhs(p + 0.5, co[i] + 0.5 * h * k2);
            const Vec2c k4 = rhs(p + 1.0, co[i] + h * k3);
            co[i + 1] = co[i] + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
    }
    double dev = 0.0;
    const cplx w0 = co[0].a * th[0].b - co[0].b * th[0].a;
    for (std::size_t i = 0; i < th.size(); ++i) {
        const cplx w = co[i].a * th[i].b - co[i].b * th[i].a;
        dev = std::max(dev, std::abs(w - w0));
    }
    return dev;
}

std::vector<cplx> fourier_image(const std::vector<Vec2c>& state, const DiracReduction& red,
                                const std::vector<double>& lambda_grid) {
    if (state.size() != red.grid.n_points)
        throw std::invalid_argument("fourier_image: state not on the reduction grid");
    const auto w = trapezoid_weights(red.grid);
    std::vector<cplx> out(lambda_grid.size());
    for (std::size_t l = 0; l < lambda_grid.size(); ++l) {
        const std::vector<Vec2c> theta = solve_theta_dirichlet(red, lambda_grid[l]);
        cplx s = 0.0;
        for (std::size_t i = 0; i < state.size(); ++i)
            s += w[i] * (state[i].a * theta[i].a + state[i].b * theta[i].b);
        out[l] = s;
    }
    return out;
}

WeightedInnerResult debranges_inner(const std::vector<cplx>& F, const std::vector<cplx>& G,
                                    const std::vector<cplx>& E_on_grid,
                                    const std::vector<double>& lambda_grid) {
    const std::size_t n = lambda_grid.size();
    if (F.size() != n || G.size() != n || E_on_grid.size() != n)
        throw std::invalid_argument("debranges_inner: grid mismatch");
    if (n < 3) throw std::invalid_argument("debranges_inner: grid too short");

    constexpr double kPi = 3.14159265358979323846;
    WeightedInnerResult res;
    cplx s = 0.0;
    double max_tail_sample = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e2 = std::norm(E_on_grid[i]);
        if (!(e2 > 0.0)) throw std::invalid_argument("debranges_inner: E vanishes on the grid");
        const double step_w = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
        const cplx integrand = std::conj(F[i]) * G[i] / e2;
        s += step_w * integrand;
        // integrand magnitude near the window ends, scaled by lambda^2
        if (i < 8 || i + 8 >= n)
            max_tail_sample = std::max(max_tail_sample,
                                       std::abs(integrand) * lambda_grid[i] * lambda_grid[i]);
    }
    const double step = lambda_grid[1] - lambda_grid[0];
    res.value = s * step / kPi;
    const double L = std::max(std::abs(lambda_grid.front()), std::abs(lambda_grid.back()));
    // |integrand| <~ c / lambda^2 outside the window, c estimated from the edges
    res.tail_bound = 2.0 * max_tail_sample / (kPi * L);
    return res;
}

} // namespace canlab
