#include "canlab/bcmethod.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "canlab/frequency.hpp"

namespace canlab {

namespace {

cplx control_inner(const std::vector<double>& w, const std::vector<cplx>& a,
                   const std::vector<cplx>& b) {
    cplx s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += w[i] * std::conj(a[i]) * b[i];
    return s;
}

} // namespace

std::vector<BoundaryControl> make_control_basis(const TimeGrid& tg, std::size_t count,
                                                double width) {
    if (count == 0) throw std::invalid_argument("make_control_basis: need at least one control");
    const double dt = tg.dt();
    double w = width;
    if (!(w > 0.0)) {
        // widest non-overlapping spacing the window allows
        w = 0.45 * (tg.t_max - 2.0 * dt) / static_cast<double>(count);
        w = std::max(w, 4.0 * dt);
    }
    if (w < 4.0 * dt)
        throw std::invalid_argument("make_control_basis: width under-resolved on this grid");
    const double lo = w + dt, hi = tg.t_max - w - dt;
    if (!(hi > lo)) throw std::invalid_argument("make_control_basis: window too small");

    std::vector<BoundaryControl> basis;
    basis.reserve(count);
    for (std::size_t j = 0; j < count; ++j) {
        const double c = lo + (static_cast<double>(j) + 0.5) * (hi - lo) / static_cast<double>(count);
        basis.push_back(smoothed_delta(tg, c, w));
    }

    // Gram-Schmidt in discrete L2(0, T)
    const auto tw = trapezoid_weights(tg);
    for (std::size_t j = 0; j < count; ++j) {
        for (std::size_t k = 0; k < j; ++k) {
            const cplx proj = control_inner(tw, basis[k].samples, basis[j].samples);
            if (proj == cplx(0.0)) continue;
            for (std::size_t i = 0; i < basis[j].samples.size(); ++i)
                basis[j].samples[i] -= proj * basis[k].samples[i];
            basis[j].support_begin = std::min(basis[j].support_begin, basis[k].support_begin);
            basis[j].support_end = std::max(basis[j].support_end, basis[k].support_end);
        }
        const double nrm = std::sqrt(control_inner(tw, basis[j].samples, basis[j].samples).real());
        if (nrm < 1e-12)
            throw std::runtime_error("make_control_basis: basis became numerically dependent");
        for (cplx& v : basis[j].samples) v /= nrm;
    }
    return basis;
}

ControlOperatorMatrix control_operator(const DiracReduction& red, const TimeGrid& tg,
                                       ControlMode mode, std::size_t n_controls,
                                       double width) {
    ControlOperatorMatrix op;
    op.mode = mode;
    op.reduction = red;
    op.tgrid = tg;
    op.basis = make_control_basis(tg, n_controls, width);

    const SpaceGrid& sg = red.grid;
    const std::size_t nx = sg.n_points;
    const std::size_t cols = mode == ControlMode::Extended ? 2 * n_controls : n_controls;
    op.states = DenseMatrix(2 * nx, cols);

    // travel-time measure sqrt(d1 d2) dx
    op.weights = trapezoid_weights(sg);
    for (std::size_t i = 0; i < nx; ++i)
        op.weights[i] *= std::sqrt(red.d1[i] * red.d2[i]);

    const Eikonal eik = eikonal(red);
    op.reach_limit = eik.x_of_tau(std::min(tg.t_max, eik.tau_max())).value_or(sg.x_max);

    SolveOptions opts;
    opts.store_field = false;
    for (std::size_t j = 0; j < n_controls; ++j) {
        const EvolutionResult fwd = solve_dirac_type(red, op.basis[j], DiracTypeSign::Forward,
                                                     tg, opts);
        for (std::size_t i = 0; i < nx; ++i) {
            op.states.at(2 * i, j) = fwd.final_state[i].a;
            op.states.at(2 * i + 1, j) = fwd.final_state[i].b;
        }
        if (mode == ControlMode::Extended) {
            const EvolutionResult aux = solve_dirac_type(red, op.basis[j],
                                                         DiracTypeSign::Auxiliary, tg, opts);
            for (std::size_t i = 0; i < nx; ++i) {
                op.states.at(2 * i, n_controls + j) = aux.final_state[i].a;
                op.states.at(2 * i + 1, n_controls + j) = aux.final_state[i].b;
            }
        }
    }
    return op;
}

ReachabilityReport reachability_defect(const ControlOperatorMatrix& w) {
    if (w.mode != ControlMode::Single)
        throw std::invalid_argument("reachability_defect: single-mode operator required");

    // resample the reachable states onto travel-time cells so the state
    // dimension is commensurate with the control count
    const std::size_t m = w.n_controls();
    const Eikonal eik = eikonal(w.reduction);
    const double tau_reach = std::min(w.tgrid.t_max, eik.tau_max());
    const SpaceGrid& sg = w.reduction.grid;

    DenseMatrix cells(2 * m, m);
    for (std::size_t k = 0; k < m; ++k) {
        const double tau_c = (static_cast<double>(k) + 0.5) * tau_reach / static_cast<double>(m);
        const double xc = eik.x_of_tau(tau_c).value_or(sg.x_max);
        const double pos = xc / sg.h();
        const std::size_t i0 = std::min(static_cast<std::size_t>(pos), sg.n_points - 2);
        const double fr = pos - static_cast<double>(i0);
        for (std::size_t j = 0; j < m; ++j) {
            for (int comp = 0; comp < 2; ++comp) {
                const cplx lo = w.states.at(2 * i0 + comp, j);
                const cplx hi = w.states.at(2 * (i0 + 1) + comp, j);
                cells.at(2 * k + comp, j) = lo * (1.0 - fr) + hi * fr;
            }
        }
    }

    // spectrum of the state-space Gram (cell weight tau_reach / m)
    DenseMatrix gram = cells * cells.adjoint();
    const double cw = tau_reach / static_cast<double>(m);
    for (std::size_t i = 0; i < gram.rows(); ++i)
        for (std::size_t j = 0; j < gram.cols(); ++j) gram.at(i, j) *= cw;

    ReachabilityReport rep;
    rep.state_dim = 2 * m;
    const auto ev = hermitian_eigenvalues(gram);
    rep.singular_values.resize(ev.size());
    for (std::size_t i = 0; i < ev.size(); ++i)
        rep.singular_values[i] = std::sqrt(std::max(0.0, ev[ev.size() - 1 - i]));
    const double smax = rep.singular_values.front();
    std::size_t low = 0;
    for (double s : rep.singular_values)
        if (s < 1e-6 * smax) ++low;
    rep.defect = static_cast<double>(low) / static_cast<double>(rep.singular_values.size());
    return rep;
}

IsomorphismReport controllability_check(const ControlOperatorMatrix& w, double floor_ratio) {
    if (w.mode != ControlMode::Extended)
        throw std::invalid_argument("controllability_check: extended-mode operator required");
    const ConnectingOperatorMatrix ct = connecting_operator(w);
    IsomorphismReport rep;
    rep.singular_values.resize(ct.eigenvalues.size());
    for (std::size_t i = 0; i < ct.eigenvalues.size(); ++i)
        rep.singular_values[i] =
            std::sqrt(std::max(0.0, ct.eigenvalues[ct.eigenvalues.size() - 1 - i]));
    rep.sigma_max = rep.singular_values.front();
    rep.sigma_min = rep.singular_values.back();
    rep.floor = floor_ratio * rep.sigma_max;
    rep.pass = rep.sigma_min > rep.floor;
    return rep;
}

ConnectingOperatorMatrix connecting_operator(const ControlOperatorMatrix& w) {
    if (w.mode != ControlMode::Extended)
        throw std::invalid_argument("connecting_operator: extended-mode operator required");
    const std::size_t cols = w.states.cols();
    const std::size_t nx = w.n_nodes();

    ConnectingOperatorMatrix ct;
    ct.matrix = DenseMatrix(cols, cols);
    for (std::size_t a = 0; a < cols; ++a) {
        for (std::size_t b = a; b < cols; ++b) {
            cplx s = 0.0;
            for (std::size_t i = 0; i < nx; ++i) {
                s += w.weights[i] * (std::conj(w.states.at(2 * i, a)) * w.states.at(2 * i, b) +
                                     std::conj(w.states.at(2 * i + 1, a)) *
                                         w.states.at(2 * i + 1, b));
            }
            ct.matrix.at(a, b) = s;
            ct.matrix.at(b, a) = std::conj(s);
        }
    }
    ct.hermiticity_dev = ct.matrix.hermiticity_dev();
    ct.eigenvalues = hermitian_eigenvalues(ct.matrix);
    ct.min_eigenvalue = ct.eigenvalues.front();
    ct.norm = std::max(std::abs(ct.eigenvalues.front()), std::abs(ct.eigenvalues.back()));
    return ct;
}

BTElement bt_element(const ControlOperatorMatrix& w,
                     std::shared_ptr<const ConnectingOperatorMatrix> backing,
                     const BoundaryControl& k1, const BoundaryControl& k2,
                     const std::vector<double>& lambda_grid) {
    if (w.mode != ControlMode::Extended)
        throw std::invalid_argument("bt_element: extended-mode operator required");
    if (!(k1.grid == w.tgrid) || !(k2.grid == w.tgrid))
        throw std::invalid_argument("bt_element: controls not on the operator time grid");

    SolveOptions opts;
    opts.store_field = false;
    const EvolutionResult fwd = solve_dirac_type(w.reduction, k1, DiracTypeSign::Forward,
                                                 w.tgrid, opts);
    const EvolutionResult aux = solve_dirac_type(w.reduction, k2, DiracTypeSign::Auxiliary,
                                                 w.tgrid, opts);
    std::vector<Vec2c> state(fwd.final_state.size());
    for (std::size_t i = 0; i < state.size(); ++i)
        state[i] = fwd.final_state[i] + aux.final_state[i];

    BTElement el;
    el.lambda = lambda_grid;
    el.K = fourier_image(state, w.reduction, lambda_grid);
    el.backing = std::move(backing);

    const auto tw = trapezoid_weights(w.tgrid);
    const std::size_t m = w.n_controls();
    el.coords.resize(2 * m);
    for (std::size_t j = 0; j < m; ++j) {
        el.coords[j] = control_inner(tw, w.basis[j].samples, k1.samples);
        el.coords[m + j] = control_inner(tw, w.basis[j].samples, k2.samples);
    }
    return el;
}

cplx bt_inner(const BTElement& a, const BTElement& b) {
    if (!a.backing || a.backing != b.backing)
        throw std::invalid_argument("bt_inner: elements have different backing operators");
    const std::vector<cplx> ca = a.backing->matrix.apply(a.coords);
    cplx s = 0.0;
    for (std::size_t i = 0; i < ca.size(); ++i) s += std::conj(b.coords[i]) * ca[i];
    return s;
}

WavefrontReport wavefront_amplitude(const EvolutionResult& run, const DiracReduction& red,
                                    const std::vector<Vec2c>& amplitude,
                                    double bump_center, double bump_width) {
    if (run.field.empty())
        throw std::invalid_argument("wavefront_amplitude: stored field required");
    if (!(bump_width < 0.2 * run.time.t_max))
        throw std::invalid_argument("wavefront_amplitude: bump too wide relative to T");
    const Eikonal eik = eikonal(red);
    const SpaceGrid& sg = red.grid;
    const TimeGrid& tg = run.time;
    const double window = bump_width + 4.0 * tg.dt();

    auto front_mag = [&](std::size_t i) {
        const double tf = eik.tau[i] + bump_center;
        double m = 0.0;
        const double t_lo = tf - window, t_hi = tf + window;
        const std::size_t k_lo = static_cast<std::size_t>(std::max(0.0, t_lo / tg.dt()));
        const std::size_t k_hi = std::min<std::size_t>(tg.n_samples() - 1,
                                                       static_cast<std::size_t>(t_hi / tg.dt()) + 1);
        for (std::size_t k = k_lo; k <= k_hi; ++k)
            m = std::max(m, std::sqrt(run.field.at(i, k).norm_sq()));
        return m;
    };

    WavefrontReport rep;
    const double base_field = front_mag(0);
    const double base_amp = amplitude[0].norm();
    if (!(base_field > 0.0) || !(base_amp > 0.0))
        throw std::invalid_argument("wavefront_amplitude: vanishing reference amplitude");

    for (std::size_t i = 0; i < sg.n_points; ++i) {
        // keep the whole observation window inside the simulated time span
        if (eik.tau[i] + bump_center + window >= tg.t_max) break;
        rep.x.push_back(sg.x(i));
        rep.field_ratio.push_back(front_mag(i) / base_field);
        rep.amp_ratio.push_back(amplitude[i].norm() / base_amp);
        const double dev = std::abs(rep.field_ratio.back() - rep.amp_ratio.back()) /
                           rep.amp_ratio.back();
        rep.max_rel_dev = std::max(rep.max_rel_dev, dev);
    }
    return rep;
}

} // namespace canlab
