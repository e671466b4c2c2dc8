#include "canlab/timedomain.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace canlab {

std::string coefficient_hash(const std::vector<const std::vector<double>*>& arrays) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
        for (int b = 0; b < 8; ++b) {
            h ^= (v >> (8 * b)) & 0xff;
            h *= 1099511628211ull;
        }
    };
    for (const auto* arr : arrays) {
        mix(arr->size());
        for (double x : *arr) {
            std::uint64_t bits;
            std::memcpy(&bits, &x, sizeof(bits));
            mix(bits);
        }
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

const cplx kI(0.0, 1.0);

void require_truncation(double x_max, double h, double t_max, double max_speed,
                        const char* who) {
    if (x_max < max_speed * t_max + 10.0 * h)
        throw std::invalid_argument(std::string(who) +
                                    ": grid too short, need x_max >= max_speed * T + 10 h");
}

// value of the control at t_k + dt/2, 4-point interpolation
cplx control_midpoint(const BoundaryControl& f, std::size_t k) {
    const auto& s = f.samples;
    const std::size_t n = s.size();
    const cplx fm1 = k > 0 ? s[k - 1] : cplx(0.0);
    const cplx f0 = s[k];
    const cplx f1 = k + 1 < n ? s[k + 1] : cplx(0.0);
    const cplx f2 = k + 2 < n ? s[k + 2] : cplx(0.0);
    return (-fm1 + 9.0 * f0 + 9.0 * f1 - f2) / 16.0;
}

// Characteristics-aligned engine for the first-order 2x2 systems. The solve
// runs in the travel-time coordinate y = tau(x) on a grid with spacing
// dy = dt, so both characteristic families advance exactly one cell per step
// and the numerical domain of dependence coincides with the physical cone:
// ahead-of-front values are exact zeros. The zero-order coupling is
// integrated along the characteristics with a Heun corrector (second order).
struct CharProblem {
    std::size_t ny = 0;
    double dt = 0.0;
    // coupling source (S_alpha, S_beta) at a y-node for given (alpha, beta)
    std::function<void(std::size_t, cplx, cplx, cplx&, cplx&)> coupling;
    // incoming characteristic value at y = 0 from the outgoing one and the control
    std::function<cplx(cplx alpha0, cplx fval)> boundary;
};

struct CharState {
    std::vector<cplx> alpha, beta;   // left- and right-moving families
};

void char_step(CharState& s, const CharProblem& p, cplx f_next) {
    const std::size_t n = p.ny;
    const double dt = p.dt;
    static thread_local std::vector<cplx> sa, sb, pa, pb, qa, qb;
    sa.assign(n, 0.0);
    sb.assign(n, 0.0);
    pa.assign(n, 0.0);
    pb.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) p.coupling(j, s.alpha[j], s.beta[j], sa[j], sb[j]);

    // predictor: exact shift plus the foot-point source
    for (std::size_t j = 1; j < n; ++j) pb[j] = s.beta[j - 1] + dt * sb[j - 1];
    for (std::size_t j = 0; j + 1 < n; ++j) pa[j] = s.alpha[j + 1] + dt * sa[j + 1];
    pa[n - 1] = 0.0;
    pb[0] = p.boundary(pa[0], f_next);

    // corrector: trapezoid along each characteristic
    qa.assign(n, 0.0);
    qb.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        cplx ca, cb;
        p.coupling(j, pa[j], pb[j], ca, cb);
        qa[j] = ca;
        qb[j] = cb;
    }
    for (std::size_t j = n; j-- > 1;)
        s.beta[j] = s.beta[j - 1] + 0.5 * dt * (sb[j - 1] + qb[j]);
    for (std::size_t j = 0; j + 1 < n; ++j)
        s.alpha[j] = s.alpha[j + 1] + 0.5 * dt * (sa[j + 1] + qa[j]);
    s.alpha[n - 1] = 0.0;
    s.beta[0] = p.boundary(s.alpha[0], f_next);
}

// shared driver: run the characteristic scheme and resample each snapshot onto
// the caller's space grid through the monotone map y = tau(x)
EvolutionResult run_characteristic(const SpaceGrid& sg, const TimeGrid& tg,
                                   const BoundaryControl& f, const CharProblem& prob,
                                   const std::vector<double>& y_of_x,
                                   const std::function<Vec2c(std::size_t, cplx, cplx)>& assemble,
                                   const SolveOptions& opt, const std::string& scheme,
                                   double max_speed, const std::string& coeff_hash) {
    EvolutionResult res;
    res.space = sg;
    res.time = tg;
    res.meta = {scheme, max_speed * tg.dt() / sg.h(), sg.h(), tg.dt(), coeff_hash};
    if (opt.store_field) res.field = EvolutionField(sg, tg);
    res.boundary1.resize(tg.n_samples());
    res.boundary2.resize(tg.n_samples());

    CharState st{std::vector<cplx>(prob.ny, 0.0), std::vector<cplx>(prob.ny, 0.0)};
    st.beta[0] = prob.boundary(0.0, f.samples[0]);

    // y-node interpolation weights per space node
    std::vector<std::size_t> base(sg.n_points);
    std::vector<double> frac(sg.n_points);
    for (std::size_t i = 0; i < sg.n_points; ++i) {
        const double pos = y_of_x[i] / tg.dt();
        std::size_t b = static_cast<std::size_t>(pos);
        if (b + 1 >= prob.ny) b = prob.ny - 2;
        base[i] = b;
        frac[i] = std::min(1.0, std::max(0.0, pos - static_cast<double>(b)));
    }

    res.final_state.resize(sg.n_points);
    auto record = [&](std::size_t k) {
        const Vec2c w0 = assemble(0, st.alpha[0], st.beta[0]);
        res.boundary1[k] = w0.a;
        res.boundary2[k] = w0.b;
        const bool last = k == tg.n_steps;
        if (opt.store_field || last) {
            for (std::size_t i = 0; i < sg.n_points; ++i) {
                const std::size_t b = base[i];
                const double w = frac[i];
                // assemble at both neighbors, then interpolate the physical field
                const Vec2c lo = assemble(b, st.alpha[b], st.beta[b]);
                const Vec2c hi = assemble(b + 1, st.alpha[b + 1], st.beta[b + 1]);
                const Vec2c v = (1.0 - w) * lo + w * hi;
                if (opt.store_field) res.field.at(i, k) = v;
                if (last) res.final_state[i] = v;
            }
        }
    };
    record(0);
    for (std::size_t k = 0; k < tg.n_steps; ++k) {
        char_step(st, prob, f.samples[k + 1]);
        record(k + 1);
    }
    return res;
}

} // namespace

EvolutionResult solve_wave_potential(const RealFn& q, const BoundaryControl& f,
                                     const SpaceGrid& sg, const TimeGrid& tg,
                                     const SolveOptions& opt) {
    const double h = sg.h(), dt = tg.dt();
    if (dt > h * (1.0 + 1e-12))
        throw std::invalid_argument("solve_wave_potential: CFL violation, need dt <= h");
    require_truncation(sg.x_max, h, tg.t_max, 1.0, "solve_wave_potential");
    if (!(f.grid == tg)) throw std::invalid_argument("solve_wave_potential: control grid mismatch");

    const std::size_t n = sg.n_points, nt = tg.n_samples();
    std::vector<double> qv(n);
    for (std::size_t i = 0; i < n; ++i) {
        qv[i] = q(sg.x(i));
        if (!std::isfinite(qv[i]))
            throw std::invalid_argument("solve_wave_potential: non-finite potential sample");
    }

    EvolutionResult res;
    res.space = sg;
    res.time = tg;
    res.meta = {"leapfrog", dt / h, h, dt, coefficient_hash({&qv})};
    if (opt.store_field) res.field = EvolutionField(sg, tg);
    res.boundary1.resize(nt);
    res.response.resize(nt);

    std::vector<cplx> up(n, 0.0), uc(n, 0.0), un(n, 0.0);
    const double r2 = dt * dt / (h * h);

    auto record = [&](std::size_t k, const std::vector<cplx>& u) {
        res.boundary1[k] = u[0];
        res.response[k] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
        if (opt.store_field)
            for (std::size_t i = 0; i < n; ++i) res.field.at(i, k) = {u[i], 0.0};
        if (k + 1 == nt) {
            res.final_state.resize(n);
            for (std::size_t i = 0; i < n; ++i) res.final_state[i] = {u[i], 0.0};
        }
    };

    uc[0] = f.samples[0];
    record(0, uc);
    // first step: zero initial data make the interior Taylor start vanish
    if (nt > 1) {
        un = std::vector<cplx>(n, 0.0);
        un[0] = f.samples[1];
        up = uc;
        uc = un;
        record(1, uc);
    }
    for (std::size_t k = 1; k + 1 < nt; ++k) {
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const cplx lap = uc[i + 1] - 2.0 * uc[i] + uc[i - 1];
            un[i] = 2.0 * uc[i] - up[i] + r2 * lap - dt * dt * qv[i] * uc[i];
        }
        un[0] = f.samples[k + 1];
        un[n - 1] = 0.0;
        up.swap(uc);
        uc.swap(un);
        record(k + 1, uc);
    }
    res.boundary2 = res.response;
    return res;
}

EvolutionResult solve_wave_density(const RealFn& rho, const BoundaryControl& f,
                                   const SpaceGrid& sg, const TimeGrid& tg,
                                   const SolveOptions& opt) {
    const double h = sg.h(), dt = tg.dt();
    const std::size_t n = sg.n_points, nt = tg.n_samples();
    std::vector<double> rv(n);
    double rho_min = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        rv[i] = rho(sg.x(i));
        if (!(rv[i] > 0.0))
            throw std::invalid_argument("solve_wave_density: density must be positive");
        rho_min = std::min(rho_min, rv[i]);
    }
    if (dt > h * std::sqrt(rho_min) * (1.0 + 1e-12))
        throw std::invalid_argument("solve_wave_density: CFL violation, need dt <= h sqrt(min rho)");
    require_truncation(sg.x_max, h, tg.t_max, 1.0 / std::sqrt(rho_min), "solve_wave_density");
    if (!(f.grid == tg)) throw std::invalid_argument("solve_wave_density: control grid mismatch");

    EvolutionResult res;
    res.space = sg;
    res.time = tg;
    res.meta = {"leapfrog", dt / (h * std::sqrt(rho_min)), h, dt, coefficient_hash({&rv})};
    if (opt.store_field) res.field = EvolutionField(sg, tg);
    res.boundary1.resize(nt);
    res.response.resize(nt);

    std::vector<cplx> up(n, 0.0), uc(n, 0.0), un(n, 0.0);
    auto record = [&](std::size_t k, const std::vector<cplx>& u) {
        res.boundary1[k] = u[0];
        res.response[k] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
        if (opt.store_field)
            for (std::size_t i = 0; i < n; ++i) res.field.at(i, k) = {u[i], 0.0};
        if (k + 1 == nt) {
            res.final_state.resize(n);
            for (std::size_t i = 0; i < n; ++i) res.final_state[i] = {u[i], 0.0};
        }
    };

    uc[0] = f.samples[0];
    record(0, uc);
    if (nt > 1) {
        un = std::vector<cplx>(n, 0.0);
        un[0] = f.samples[1];
        up = uc;
        uc = un;
        record(1, uc);
    }
    for (std::size_t k = 1; k + 1 < nt; ++k) {
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const cplx lap = uc[i + 1] - 2.0 * uc[i] + uc[i - 1];
            un[i] = 2.0 * uc[i] - up[i] + dt * dt / (h * h * rv[i]) * lap;
        }
        un[0] = f.samples[k + 1];
        un[n - 1] = 0.0;
        up.swap(uc);
        uc.swap(un);
        record(k + 1, uc);
    }
    res.boundary2 = res.response;
    return res;
}

EvolutionResult solve_dirac(const RealFn& p, const RealFn& q, const BoundaryControl& f,
                            const SpaceGrid& sg, const TimeGrid& tg, const SolveOptions& opt) {
    const double h = sg.h(), dt = tg.dt();
    if (dt > h * (1.0 + 1e-12))
        throw std::invalid_argument("solve_dirac: CFL violation, need dt <= h");
    require_truncation(sg.x_max, h, tg.t_max, 1.0, "solve_dirac");
    if (!(f.grid == tg)) throw std::invalid_argument("solve_dirac: control grid mismatch");

    // i u_t + J u_x + V u = 0 in characteristic variables
    //   alpha = (u1 + i u2)/2 (left-moving), beta = (u1 - i u2)/2 (right-moving):
    //   alpha_t = +alpha_x + (ip - q) beta
    //   beta_t  = -beta_x  + (ip + q) alpha
    // Unit speeds, so the internal grid is y = x with spacing dt.
    CharProblem prob;
    prob.dt = dt;
    prob.ny = static_cast<std::size_t>(std::ceil(sg.x_max / dt)) + 2;
    std::vector<double> pv(prob.ny), qv(prob.ny);
    for (std::size_t j = 0; j < prob.ny; ++j) {
        const double x = std::min(static_cast<double>(j) * dt, sg.x_max);
        pv[j] = p(x);
        qv[j] = q(x);
        if (!std::isfinite(pv[j]) || !std::isfinite(qv[j]))
            throw std::invalid_argument("solve_dirac: non-finite potential sample");
    }
    prob.coupling = [&pv, &qv](std::size_t j, cplx a, cplx b, cplx& sa, cplx& sb) {
        sa = (kI * pv[j] - qv[j]) * b;
        sb = (kI * pv[j] + qv[j]) * a;
    };
    prob.boundary = [](cplx alpha0, cplx fval) { return fval - alpha0; };

    std::vector<double> y_of_x(sg.n_points);
    for (std::size_t i = 0; i < sg.n_points; ++i) y_of_x[i] = sg.x(i);
    auto assemble = [](std::size_t, cplx a, cplx b) {
        return Vec2c{a + b, -kI * (a - b)};
    };
    EvolutionResult res =
        run_characteristic(sg, tg, f, prob, y_of_x, assemble, opt, "characteristic-heun", 1.0,
                           coefficient_hash({&pv, &qv}));
    res.response = res.boundary2;
    return res;
}

namespace {

// characteristic data for i D W_t = s (J W_x + psi W), s = +1 forward, -1 auxiliary
struct ReductionCharData {
    CharProblem prob;
    std::vector<double> y_of_x;
    std::vector<double> rr;   // sqrt(d1/d2) on the y-grid
    double s = 1.0;
};

ReductionCharData make_reduction_char(const DiracReduction& red, const TimeGrid& tg, double s) {
    const SpaceGrid& sg = red.grid;
    const std::size_t nx = sg.n_points;
    const double h = sg.h(), dt = tg.dt();

    // travel time and log-impedance derivative on the x-grid
    std::vector<double> rate(nx), lr(nx);
    for (std::size_t i = 0; i < nx; ++i) {
        rate[i] = std::sqrt(red.d1[i] * red.d2[i]);
        lr[i] = 0.5 * (std::log(red.d1[i]) - std::log(red.d2[i]));
    }
    const std::vector<double> tau = cumulative_trapezoid(rate, h);
    std::vector<double> mu(nx);   // c r'/(2r) = (ln r)' / (2 tau')
    for (std::size_t i = 0; i < nx; ++i) {
        double dlr;
        if (i == 0) dlr = (-3.0 * lr[0] + 4.0 * lr[1] - lr[2]) / (2.0 * h);
        else if (i + 1 == nx) dlr = (3.0 * lr[nx - 1] - 4.0 * lr[nx - 2] + lr[nx - 3]) / (2.0 * h);
        else dlr = (lr[i + 1] - lr[i - 1]) / (2.0 * h);
        mu[i] = 0.5 * dlr / rate[i];
    }

    ReductionCharData data;
    data.s = s;
    data.prob.dt = dt;
    data.prob.ny = static_cast<std::size_t>(std::ceil(tau.back() / dt)) + 2;
    data.y_of_x = tau;

    // resample coefficients onto the y-grid through the inverse eikonal map
    std::vector<double> muv(data.prob.ny), pv(data.prob.ny), mv(data.prob.ny);
    data.rr.resize(data.prob.ny);
    std::size_t seg = 0;
    for (std::size_t j = 0; j < data.prob.ny; ++j) {
        const double y = std::min(static_cast<double>(j) * dt, tau.back());
        while (seg + 2 <= nx - 1 && tau[seg + 1] < y) ++seg;
        const double span = tau[seg + 1] - tau[seg];
        const double w = span > 0.0 ? std::min(1.0, std::max(0.0, (y - tau[seg]) / span)) : 0.0;
        auto lerp = [&](const std::vector<double>& v) {
            return v[seg] * (1.0 - w) + v[seg + 1] * w;
        };
        const double d1 = lerp(red.d1), d2 = lerp(red.d2), psi = lerp(red.psi);
        muv[j] = lerp(mu);
        pv[j] = 0.5 * psi * (1.0 / d1 + 1.0 / d2);
        mv[j] = 0.5 * psi * (1.0 / d1 - 1.0 / d2);
        data.rr[j] = std::sqrt(d1 / d2);
    }

    const cplx si = s * kI;
    data.prob.coupling = [muv, pv, mv, si](std::size_t j, cplx a, cplx b, cplx& sa, cplx& sb) {
        const cplx mix = muv[j] * (a - b);
        sa = mix + si * (pv[j] * a + mv[j] * b);
        sb = mix + si * (mv[j] * a + pv[j] * b);
    };
    return data;
}

} // namespace

EvolutionResult solve_dirac_type(const DiracReduction& red, const BoundaryControl& f,
                                 DiracTypeSign sign, const TimeGrid& tg,
                                 const SolveOptions& opt) {
    const SpaceGrid& sg = red.grid;
    const double h = sg.h(), dt = tg.dt();
    const double speed = red.max_speed();
    if (dt * speed > h * (1.0 + 1e-12))
        throw std::invalid_argument("solve_dirac_type: CFL violation, need dt <= h / max_speed");
    require_truncation(sg.x_max, h, tg.t_max, speed, "solve_dirac_type");
    if (!(f.grid == tg)) throw std::invalid_argument("solve_dirac_type: control grid mismatch");

    const double s = sign == DiracTypeSign::Forward ? 1.0 : -1.0;
    ReductionCharData data = make_reduction_char(red, tg, s);
    data.prob.boundary = [](cplx alpha0, cplx fval) { return fval - alpha0; };
    const cplx si = s * kI;
    const std::vector<double>& rr = data.rr;
    auto assemble = [&rr, si](std::size_t j, cplx a, cplx b) {
        return Vec2c{a + b, -si * rr[j] * (a - b)};
    };
    EvolutionResult res = run_characteristic(
        sg, tg, f, data.prob, data.y_of_x, assemble, opt,
        sign == DiracTypeSign::Forward ? "characteristic-heun-forward"
                                       : "characteristic-heun-auxiliary",
        speed, coefficient_hash({&red.d1, &red.d2, &red.psi}));
    res.response = res.boundary2;
    return res;
}

CanonicalResult solve_canonical_i(const HamiltonianField& H, const BoundaryControl& f,
                                  const TimeGrid& tg, const SolveOptions& opt) {
    DiracReduction red = diagonalize_H(H);
    const SpaceGrid& sg = red.grid;
    const double h = sg.h(), dt = tg.dt();
    const double speed = red.max_speed();
    if (dt * speed > h * (1.0 + 1e-12))
        throw std::invalid_argument("solve_canonical_i: CFL violation, need dt <= h / max_speed");
    require_truncation(sg.x_max, h, tg.t_max, speed, "solve_canonical_i");
    if (!(f.grid == tg)) throw std::invalid_argument("solve_canonical_i: control grid mismatch");

    // rotated frame W = R(phi)^T Y solves i D W_t - J W_x - psi W = 0 with
    // psi = phi'; the physical condition y1(0,t) = f couples both components:
    //   cos(phi0) w1(0,t) - sin(phi0) w2(0,t) = f(t),
    // which fixes the incoming characteristic value at the boundary.
    ReductionCharData data = make_reduction_char(red, tg, -1.0);
    const double c0 = std::cos(red.phi[0]), s0 = std::sin(red.phi[0]);
    const double r0 = data.rr[0];
    const cplx num_coef = c0 - kI * s0 * r0;
    const cplx denom = c0 + kI * s0 * r0;
    data.prob.boundary = [num_coef, denom](cplx alpha0, cplx fval) {
        return (fval - alpha0 * num_coef) / denom;
    };
    const std::vector<double>& rr = data.rr;
    auto assemble = [&rr](std::size_t j, cplx a, cplx b) {
        return Vec2c{a + b, kI * rr[j] * (a - b)};
    };
    EvolutionResult rotated =
        run_characteristic(sg, tg, f, data.prob, data.y_of_x, assemble, opt,
                           "characteristic-heun-rotated", speed,
                           coefficient_hash({&red.d1, &red.d2, &red.psi}));

    CanonicalResult out;
    out.rotated_boundary1 = rotated.boundary1;
    out.rotated_boundary2 = rotated.boundary2;

    EvolutionResult& res = out.evolution;
    res.space = sg;
    res.time = tg;
    res.meta = rotated.meta;
    res.boundary1.resize(tg.n_samples());
    res.boundary2.resize(tg.n_samples());
    res.response.resize(tg.n_samples());
    for (std::size_t k = 0; k < tg.n_samples(); ++k) {
        res.boundary1[k] = c0 * rotated.boundary1[k] - s0 * rotated.boundary2[k];
        res.boundary2[k] = s0 * rotated.boundary1[k] + c0 * rotated.boundary2[k];
        res.response[k] = res.boundary2[k];
    }
    res.final_state.resize(sg.n_points);
    for (std::size_t i = 0; i < sg.n_points; ++i) {
        const Mat2d u = Mat2d::rotation(red.phi[i]);
        res.final_state[i] = u.apply(rotated.final_state[i]);
    }
    if (opt.store_field) {
        res.field = EvolutionField(sg, tg);
        for (std::size_t k = 0; k < tg.n_samples(); ++k)
            for (std::size_t i = 0; i < sg.n_points; ++i) {
                const Mat2d u = Mat2d::rotation(red.phi[i]);
                res.field.at(i, k) = u.apply(rotated.field.at(i, k));
            }
    }
    out.reduction = std::move(red);
    return out;
}

LatticeEvolution solve_jacobi_continuous(const JacobiSystem& sys, const BoundaryControl& h,
                                         std::size_t truncation, const TimeGrid& tg,
                                         double tail_threshold) {
    if (truncation < 2)
        throw std::invalid_argument("solve_jacobi_continuous: need truncation >= 2");
    if (truncation > sys.rows())
        throw std::invalid_argument("solve_jacobi_continuous: truncation beyond partition");
    if (tg.dt() * sys.norm_bound() > 0.5)
        throw std::invalid_argument("solve_jacobi_continuous: dt too large, need dt ||A|| <= 1/2");
    if (!(h.grid == tg)) throw std::invalid_argument("solve_jacobi_continuous: control grid mismatch");

    const std::size_t N = truncation;
    const double dt = tg.dt();
    LatticeEvolution out;
    out.time = tg;
    out.n = N;
    out.data.resize(N * tg.n_samples());
    out.response.resize(tg.n_samples());

    // logical vector v[1..N], v[0] unused, v1 pinned to the control
    std::vector<cplx> v(N + 1, 0.0), k1(N + 1), k2(N + 1), k3(N + 1), k4(N + 1), tmp(N + 1);
    auto rhs = [&](const std::vector<cplx>& src, std::vector<cplx>& out_k) {
        for (std::size_t n = 2; n <= N; ++n) out_k[n] = -kI * sys.apply_row(n, src);
        out_k[0] = out_k[1] = 0.0;
    };
    auto record = [&](std::size_t k) {
        for (std::size_t n = 1; n <= N; ++n) out.data[k * N + (n - 1)] = v[n];
        out.response[k] = v[2];
        out.tail_max = std::max(out.tail_max, std::abs(v[N]));
    };

    v[1] = h.samples[0];
    record(0);
    for (std::size_t k = 0; k < tg.n_steps; ++k) {
        const cplx fm = control_midpoint(h, k);
        auto stage = [&](const std::vector<cplx>& kv, double c, cplx bval) {
            for (std::size_t n = 0; n <= N; ++n) tmp[n] = v[n] + c * kv[n];
            tmp[1] = bval;
        };
        v[1] = h.samples[k];
        rhs(v, k1);
        stage(k1, 0.5 * dt, fm);
        rhs(tmp, k2);
        stage(k2, 0.5 * dt, fm);
        rhs(tmp, k3);
        stage(k3, dt, h.samples[k + 1]);
        rhs(tmp, k4);
        for (std::size_t n = 2; n <= N; ++n)
            v[n] += dt / 6.0 * (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n]);
        v[1] = h.samples[k + 1];
        record(k + 1);
    }
    out.tail_warning = out.tail_max > tail_threshold;
    return out;
}

DiscreteLatticeEvolution solve_jacobi_discrete(const JacobiSystem& sys,
                                               const std::vector<cplx>& h,
                                               std::size_t truncation, std::size_t steps,
                                               DiscreteTimeRule rule) {
    if (steps < 2) throw std::invalid_argument("solve_jacobi_discrete: need steps >= 2");
    if (truncation < 2) throw std::invalid_argument("solve_jacobi_discrete: need truncation >= 2");
    if (truncation > sys.rows())
        throw std::invalid_argument("solve_jacobi_discrete: truncation beyond partition");
    if (h.size() < steps + 1)
        throw std::invalid_argument("solve_jacobi_discrete: control too short");

    const std::size_t N = truncation;
    DiscreteLatticeEvolution out;
    out.n = N;
    out.steps = steps;
    out.data.assign(N * (steps + 1), 0.0);
    out.response.assign(steps + 1, 0.0);

    const double prev_sign = rule == DiscreteTimeRule::Sum ? 1.0 : -1.0;
    // interior rows n = 2..N of (A - I) v_t = prev_sign * v_{t-1} - rho_1 h_t e_2;
    // partial pivoting: the tridiagonal step matrix can have singular leading
    // minors even when invertible
    const std::size_t m = N - 1;
    DenseMatrix step(m, m);
    for (std::size_t r = 0; r < m; ++r) {
        const std::size_t n = r + 2;
        step.at(r, r) = sys.q[n - 1] - 1.0;
        if (r > 0) step.at(r, r - 1) = sys.rho[n - 2];
        if (r + 1 < m) step.at(r, r + 1) = sys.rho[n - 1];
    }

    std::vector<cplx> rhsv(m), vprev(N + 1, 0.0), vcur(N + 1, 0.0);
    auto record = [&](std::size_t t) {
        for (std::size_t n = 1; n <= N; ++n) out.data[t * N + (n - 1)] = vcur[n];
        out.response[t] = vcur[2];
    };
    record(0);
    record(1);

    for (std::size_t t = 2; t <= steps; ++t) {
        vprev = vcur;
        for (std::size_t r = 0; r < m; ++r) {
            const std::size_t n = r + 2;
            rhsv[r] = prev_sign * vprev[n];
            if (n == 2) rhsv[r] -= sys.rho[0] * h[t];
        }
        std::vector<cplx> sol;
        try {
            sol = solve_dense(step, rhsv);
        } catch (const std::runtime_error&) {
            throw std::runtime_error("solve_jacobi_discrete: singular tridiagonal system at t = " +
                                     std::to_string(t));
        }
        for (std::size_t n = 2; n <= N; ++n) vcur[n] = sol[n - 2];
        vcur[1] = h[t];
        record(t);
    }
    return out;
}

EvolutionField canonical_fields_from_wave(const EvolutionResult& wave,
                                          const SchrodingerBasis& basis) {
    if (wave.field.empty())
        throw std::invalid_argument("canonical_fields_from_wave: stored field required");
    if (!(wave.space == basis.grid))
        throw std::invalid_argument("canonical_fields_from_wave: grid mismatch");
    const std::size_t n = wave.space.n_points, nt = wave.time.n_samples();
    const double h = wave.space.h();
    EvolutionField c(wave.space, wave.time);
    for (std::size_t k = 0; k < nt; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            const cplx u = wave.field.at(i, k).a;
            cplx ux;
            if (i == 0)
                ux = (-3.0 * wave.field.at(0, k).a + 4.0 * wave.field.at(1, k).a -
                      wave.field.at(2, k).a) / (2.0 * h);
            else if (i + 1 == n)
                ux = (3.0 * wave.field.at(n - 1, k).a - 4.0 * wave.field.at(n - 2, k).a +
                      wave.field.at(n - 3, k).a) / (2.0 * h);
            else
                ux = (wave.field.at(i + 1, k).a - wave.field.at(i - 1, k).a) / (2.0 * h);
            c.at(i, k) = {basis.y2p[i] * u - basis.y2[i] * ux,
                          -basis.y1p[i] * u + basis.y1[i] * ux};
        }
    }
    return c;
}

EvolutionField canonical_fields_from_density_wave(const EvolutionResult& wave) {
    if (wave.field.empty())
        throw std::invalid_argument("canonical_fields_from_density_wave: stored field required");
    const std::size_t n = wave.space.n_points, nt = wave.time.n_samples();
    const double h = wave.space.h(), dt = wave.time.dt();
    EvolutionField c(wave.space, wave.time);
    for (std::size_t k = 0; k < nt; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            cplx ut, ux;
            if (k == 0)
                ut = (-3.0 * wave.field.at(i, 0).a + 4.0 * wave.field.at(i, 1).a -
                      wave.field.at(i, 2).a) / (2.0 * dt);
            else if (k + 1 == nt)
                ut = (3.0 * wave.field.at(i, nt - 1).a - 4.0 * wave.field.at(i, nt - 2).a +
                      wave.field.at(i, nt - 3).a) / (2.0 * dt);
            else
                ut = (wave.field.at(i, k + 1).a - wave.field.at(i, k - 1).a) / (2.0 * dt);
            if (i == 0)
                ux = (-3.0 * wave.field.at(0, k).a + 4.0 * wave.field.at(1, k).a -
                      wave.field.at(2, k).a) / (2.0 * h);
            else if (i + 1 == n)
                ux = (3.0 * wave.field.at(n - 1, k).a - 4.0 * wave.field.at(n - 2, k).a +
                      wave.field.at(n - 3, k).a) / (2.0 * h);
            else
                ux = (wave.field.at(i + 1, k).a - wave.field.at(i - 1, k).a) / (2.0 * h);
            c.at(i, k) = {ut, kI * ux};
        }
    }
    return c;
}

EvolutionField canonical_fields_from_dirac(const EvolutionResult& dirac,
                                           const DiracFundamental& fundamental) {
    if (dirac.field.empty())
        throw std::invalid_argument("canonical_fields_from_dirac: stored field required");
    if (!(dirac.space == fundamental.grid))
        throw std::invalid_argument("canonical_fields_from_dirac: grid mismatch");
    const std::size_t n = dirac.space.n_points, nt = dirac.time.n_samples();
    EvolutionField c(dirac.space, dirac.time);
    for (std::size_t i = 0; i < n; ++i) {
        const Mat2d inv = fundamental.A[i].inverse();
        for (std::size_t k = 0; k < nt; ++k) c.at(i, k) = inv.apply(dirac.field.at(i, k));
    }
    return c;
}

LatticeField::LatticeField(const JacobiSystem& sys, LatticeDynamics dyn, std::size_t n_times,
                           std::size_t usable)
    : sys_(sys), dyn_(dyn), n_times_(n_times), usable_(usable),
      fj_(n_times * usable), gj_(n_times * usable), sj_(n_times * usable) {}

Vec2c LatticeField::eval(double x, std::size_t k) const {
    std::size_t j = 1;
    double b = sys_.lengths[0];
    while (j < usable_ && x >= b) {
        b += sys_.lengths[j];
        ++j;
    }
    const Vec2d e = sys_.units[j - 1];
    const Vec2d ep = e.perp();
    const cplx xi = s(k, j) + g(k, j) * (b - x);
    return {f(k, j) * e.x + xi * ep.x, f(k, j) * e.y + xi * ep.y};
}

double LatticeField::continuity_defect(std::size_t k) const {
    double dev = 0.0;
    double b = 0.0;
    for (std::size_t j = 1; j < usable_; ++j) {
        b += sys_.lengths[j - 1];
        const Vec2d el = sys_.units[j - 1], epl = el.perp();
        const Vec2d er = sys_.units[j], epr = er.perp();
        const cplx xl = s(k, j);
        const cplx xr = s(k, j + 1) + g(k, j + 1) * sys_.lengths[j];
        const Vec2c left{f(k, j) * el.x + xl * epl.x, f(k, j) * el.y + xl * epl.y};
        const Vec2c right{f(k, j + 1) * er.x + xr * epr.x, f(k, j + 1) * er.y + xr * epr.y};
        dev = std::max(dev, (left - right).norm());
    }
    return dev;
}

LatticeField assemble_lattice_field(const JacobiSystem& sys, LatticeDynamics dyn,
                                    const std::vector<std::vector<cplx>>& vu) {
    // vu holds pairs of logical vectors: vu[2k] = v at time k, vu[2k+1] = u at time k
    const std::size_t n_times = vu.size() / 2;
    const std::size_t N = vu[0].size() - 1;
    if (N < 2) throw std::invalid_argument("assemble_lattice_field: need at least two entries");
    const std::size_t usable = N - 1;
    LatticeField field(sys, dyn, n_times, usable);
    for (std::size_t k = 0; k < n_times; ++k) {
        const auto& v = vu[2 * k];
        const auto& u = vu[2 * k + 1];
        for (std::size_t j = 1; j <= usable; ++j) {
            const double lj = sys.lengths[j - 1];
            const double ln = sys.lengths[j];
            const cplx fj = v[j] / std::sqrt(lj);
            const cplx fn = v[j + 1] / std::sqrt(ln);
            const Vec2d ej = sys.units[j - 1];
            const Vec2d en = sys.units[j];
            field.fj_[field.idx(k, j)] = fj;
            field.gj_[field.idx(k, j)] = u[j] / std::sqrt(lj);
            field.sj_[field.idx(k, j)] = (fn - fj * en.dot(ej)) / en.dot(ej.perp());
        }
    }
    return field;
}

LatticeField jacobi_fields_from_v(const JacobiSystem& sys, const LatticeEvolution& ev) {
    std::vector<std::vector<cplx>> vu;
    vu.reserve(2 * ev.time.n_samples());
    for (std::size_t k = 0; k < ev.time.n_samples(); ++k) {
        std::vector<cplx> v(ev.n + 1, 0.0), u(ev.n + 1, 0.0);
        for (std::size_t n = 1; n <= ev.n; ++n) v[n] = ev.at(k, n);
        // u = i dv/dt realized through the dynamics, u = A v
        for (std::size_t n = 1; n <= std::min(ev.n, sys.rows()); ++n) u[n] = sys.apply_row(n, v);
        vu.push_back(std::move(v));
        vu.push_back(std::move(u));
    }
    return assemble_lattice_field(sys, LatticeDynamics::Continuous, vu);
}

LatticeField jacobi_fields_from_v(const JacobiSystem& sys, const DiscreteLatticeEvolution& ev) {
    std::vector<std::vector<cplx>> vu;
    vu.reserve(2 * (ev.steps + 1));
    for (std::size_t t = 0; t <= ev.steps; ++t) {
        std::vector<cplx> v(ev.n + 1, 0.0), u(ev.n + 1, 0.0);
        for (std::size_t n = 1; n <= ev.n; ++n) {
            v[n] = ev.at(t, n);
            u[n] = t > 0 ? ev.at(t, n) + ev.at(t - 1, n) : ev.at(t, n);
        }
        vu.push_back(std::move(v));
        vu.push_back(std::move(u));
    }
    return assemble_lattice_field(sys, LatticeDynamics::Discrete, vu);
}

LatticeField jacobi_fields_from_snapshot(const JacobiSystem& sys, const std::vector<cplx>& v) {
    std::vector<cplx> u(v.size(), 0.0);
    const std::size_t N = v.size() - 1;
    for (std::size_t n = 1; n <= std::min(N, sys.rows()); ++n) u[n] = sys.apply_row(n, v);
    return assemble_lattice_field(sys, LatticeDynamics::Continuous, {v, u});
}

std::vector<cplx> lattice_boundary_trace(const JacobiSystem& sys, const std::vector<cplx>& v2,
                                         const std::vector<cplx>& h) {
    if (v2.size() != h.size())
        throw std::invalid_argument("lattice_boundary_trace: trace length mismatch");
    const double l1 = sys.lengths[0], l2 = sys.lengths[1];
    const double e2e1p = sys.units[1].dot(sys.units[0].perp());
    std::vector<cplx> out(v2.size());
    for (std::size_t t = 0; t < v2.size(); ++t) {
        const cplx f2 = v2[t] / std::sqrt(l2);
        const cplx f1 = h[t] / std::sqrt(l1);
        const cplx s1 = f2 / e2e1p - f1;
        const cplx g1l1 = kI * h[t] * std::sqrt(l1);
        out[t] = s1 + g1l1;
    }
    return out;
}

std::vector<cplx> lattice_boundary_closed_form(const JacobiSystem& sys,
                                               const std::vector<cplx>& v2,
                                               const std::vector<cplx>& h) {
    if (v2.size() != h.size())
        throw std::invalid_argument("lattice_boundary_closed_form: trace length mismatch");
    const double l1 = sys.lengths[0];
    const double rho1 = sys.rho[0];
    std::vector<cplx> out(v2.size());
    for (std::size_t t = 0; t < v2.size(); ++t)
        out[t] = -rho1 * v2[t] * std::sqrt(l1) -
                 h[t] * (1.0 / std::sqrt(l1) - kI * std::sqrt(l1));
    return out;
}

ResidualReport canonical_residual(const HamiltonianField& H, const EvolutionField& C,
                                  CanonicalDynamics dyn, double front_time_offset) {
    if (!H.is_sampled() || !(H.grid() == C.space()))
        throw std::invalid_argument("canonical_residual: sampled Hamiltonian on the field grid required");
    const std::size_t n = C.space().n_points, nt = C.time().n_samples();
    const double h = C.space().h(), dt = C.time().dt();
    const Eikonal eik = eikonal(H);
    const double margin = 2.0 * std::max(h, dt);

    ResidualReport rep;
    rep.h = h;
    rep.dt = dt;
    double sum = 0.0;
    for (std::size_t k = 1; k + 1 < nt; ++k) {
        const double t = C.time().t(k);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            if (std::abs(eik.tau[i] - (t - front_time_offset)) <= margin) continue;
            const Vec2c ct = (1.0 / (2.0 * dt)) * (C.at(i, k + 1) - C.at(i, k - 1));
            const Vec2c ctt = (1.0 / (dt * dt)) *
                              (C.at(i, k + 1) - 2.0 * C.at(i, k) + C.at(i, k - 1));
            const Vec2c cx = (1.0 / (2.0 * h)) * (C.at(i + 1, k) - C.at(i - 1, k));
            const Vec2c cxx = (1.0 / (h * h)) *
                              (C.at(i + 1, k) - 2.0 * C.at(i, k) + C.at(i - 1, k));
            const Mat2d hm = H.at(i);
            const Vec2c jcx{cx.b, -cx.a};
            Vec2c r;
            switch (dyn) {
                case CanonicalDynamics::SecondOrder:
                    r = hm.apply(ctt) - jcx;
                    break;
                case CanonicalDynamics::FirstOrderI:
                    r = kI * hm.apply(ct) - jcx;
                    break;
                case CanonicalDynamics::OneVelocity: {
                    const double det = H.det_at(i);
                    const Mat2d inv_p = H.at(i + 1).inverse();
                    const Mat2d inv_m = H.at(i - 1).inverse();
                    const Mat2d dinv = (inv_p - inv_m) * (1.0 / (2.0 * h));
                    // det H * H^{-1} J (H^{-1})' J
                    const Mat2d jm{0.0, 1.0, -1.0, 0.0};
                    const Mat2d coeff = (hm.inverse() * jm * dinv * jm) * det;
                    r = det * ctt - cxx + coeff.apply(cx);
                    break;
                }
            }
            const double mag2 = r.norm_sq();
            sum += mag2 * h * dt;
            rep.max = std::max(rep.max, std::sqrt(mag2));
            ++rep.cells;
        }
    }
    rep.l2 = std::sqrt(sum);
    return rep;
}

double residual_slope(const ResidualReport& coarse, const ResidualReport& fine) {
    if (!(coarse.l2 > 0.0) || !(fine.l2 > 0.0)) return std::numeric_limits<double>::infinity();
    return std::log2(coarse.l2 / fine.l2);
}

ResidualReport lattice_canonical_residual(const LatticeField& field, double dt) {
    const std::size_t nt = field.n_times();
    ResidualReport rep;
    rep.dt = dt;
    double sum = 0.0;
    const bool discrete = field.dynamics() == LatticeDynamics::Discrete;
    for (std::size_t k = 1; k + 1 < nt; ++k) {
        for (std::size_t j = 2; j <= field.usable_intervals(); ++j) {
            cplx r;
            if (discrete) {
                r = (field.f(k, j) + field.f(k - 1, j)) - field.g(k, j);
            } else {
                const cplx ft = (field.f(k + 1, j) - field.f(k - 1, j)) / (2.0 * dt);
                r = kI * ft - field.g(k, j);
            }
            const double w = field.system().lengths[j - 1] * (discrete ? 1.0 : dt);
            sum += std::norm(r) * w;
            rep.max = std::max(rep.max, std::abs(r));
            ++rep.cells;
        }
    }
    rep.l2 = std::sqrt(sum);
    return rep;
}

ResponseMatrix response_matrix(const ResponseRunner& run, const TimeGrid& tg,
                               std::size_t n_basis, double bump_width) {
    if (n_basis == 0) throw std::invalid_argument("response_matrix: need at least one basis control");
    const double w = bump_width > 0.0 ? bump_width : 6.0 * tg.dt();
    const double lo = w + tg.dt(), hi = tg.t_max - w - tg.dt();
    if (!(hi > lo)) throw std::invalid_argument("response_matrix: bump width too large for the window");

    ResponseMatrix rm;
    rm.grid = tg;
    rm.bump_width = w;
    rm.matrix = DenseMatrix(tg.n_samples(), n_basis);
    rm.col_centers.resize(n_basis);
    for (std::size_t j = 0; j < n_basis; ++j) {
        const double c = lo + (static_cast<double>(j) + 0.5) * (hi - lo) / static_cast<double>(n_basis);
        rm.col_centers[j] = c;
        const std::vector<cplx> trace = run(smoothed_delta(tg, c, w));
        if (trace.size() != tg.n_samples())
            throw std::runtime_error("response_matrix: runner returned a trace of wrong length");
        for (std::size_t i = 0; i < trace.size(); ++i) rm.matrix.at(i, j) = trace[i];
    }
    return rm;
}

ResponseComparison compare_responses(const ResponseMatrix& r1, const ResponseMatrix& r2,
                                     const ResponseRelation& rel) {
    if (!(r1.grid == r2.grid) || r1.matrix.cols() != r2.matrix.cols())
        throw std::invalid_argument("compare_responses: layout mismatch");
    const std::size_t rows = r1.matrix.rows(), cols = r1.matrix.cols();
    DenseMatrix diff(rows, cols);
    for (std::size_t j = 0; j < cols; ++j) {
        BoundaryControl bump = smoothed_delta(r1.grid, r1.col_centers[j], r1.bump_width);
        for (std::size_t i = 0; i < rows; ++i)
            diff.at(i, j) = r2.matrix.at(i, j) - rel.scale * r1.matrix.at(i, j) -
                            rel.shift * bump.samples[i];
    }
    ResponseComparison cmp;
    const auto sd = singular_values(diff);
    const auto s2 = singular_values(r2.matrix);
    cmp.rel_operator = s2.empty() || s2[0] == 0.0 ? 0.0 : sd[0] / s2[0];
    cmp.rel_frobenius = r2.matrix.frobenius() == 0.0
                            ? 0.0
                            : diff.frobenius() / r2.matrix.frobenius();
    for (std::size_t j = 0; j < cols; ++j) {
        double dn = 0.0, rn = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
            dn += std::norm(diff.at(i, j));
            rn += std::norm(r2.matrix.at(i, j));
        }
        if (rn > 0.0) cmp.max_column_rel = std::max(cmp.max_column_rel, std::sqrt(dn / rn));
    }
    return cmp;
}

double relative_l2(const std::vector<cplx>& a, const std::vector<cplx>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("relative_l2: length mismatch");
    double dn = 0.0, rn = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dn += std::norm(a[i] - b[i]);
        rn += std::norm(b[i]);
    }
    return rn > 0.0 ? std::sqrt(dn / rn) : std::sqrt(dn);
}

std::vector<cplx> extrapolate_trace_to_boundary(const EvolutionField& f, int component) {
    const std::size_t nt = f.time().n_samples();
    std::vector<cplx> out(nt);
    for (std::size_t k = 0; k < nt; ++k) {
        auto comp = [&](std::size_t i) {
            return component == 0 ? f.at(i, k).a : f.at(i, k).b;
        };
        out[k] = 3.0 * comp(1) - 3.0 * comp(2) + comp(3);
    }
    return out;
}

double max_ahead_of_front(const EvolutionField& f, const Eikonal& eik, double t_onset,
                          double margin) {
    double m = 0.0;
    const std::size_t n = f.space().n_points, nt = f.time().n_samples();
    for (std::size_t k = 0; k < nt; ++k) {
        const double t = f.time().t(k);
        for (std::size_t i = 0; i < n; ++i) {
            if (eik.tau[i] > (t - t_onset) + margin)
                m = std::max(m, std::sqrt(f.at(i, k).norm_sq()));
        }
    }
    return m;
}

std::vector<cplx> derivative(const std::vector<cplx>& f, double step) {
    const std::size_t n = f.size();
    std::vector<cplx> out(n);
    if (n < 3) throw std::invalid_argument("derivative: need at least 3 samples");
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * step);
    for (std::size_t i = 1; i + 1 < n; ++i) out[i] = (f[i + 1] - f[i - 1]) / (2.0 * step);
    out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * step);
    return out;
}

} // namespace canlab
