#include "canlab/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace canlab {

SpaceGrid::SpaceGrid(double x_max_, std::size_t n_points_) : x_max(x_max_), n_points(n_points_) {
    if (n_points < 3) throw std::invalid_argument("SpaceGrid: need at least 3 points");
    if (!(x_max > 0.0)) throw std::invalid_argument("SpaceGrid: x_max must be positive");
}

TimeGrid::TimeGrid(double t_max_, std::size_t n_steps_) : t_max(t_max_), n_steps(n_steps_) {
    if (n_steps < 2) throw std::invalid_argument("TimeGrid: need at least 2 steps");
    if (!(t_max > 0.0)) throw std::invalid_argument("TimeGrid: t_max must be positive");
}

TimeGrid make_time_grid(const SpaceGrid& g, double t_max, double max_speed, double cfl) {
    if (!(max_speed > 0.0)) throw std::invalid_argument("make_time_grid: max_speed must be positive");
    if (!(cfl > 0.0)) throw std::invalid_argument("make_time_grid: cfl must be positive");
    const double dt_target = cfl * g.h() / max_speed;
    const std::size_t n = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(t_max / dt_target)));
    return TimeGrid(t_max, n);
}

VectorField2::VectorField2(const SpaceGrid& g, std::vector<Vec2c> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.n_points)
        throw std::invalid_argument("VectorField2: sample count does not match grid");
}

cplx quad_inner(const VectorField2& a, const VectorField2& b) {
    if (!(a.grid == b.grid)) throw std::invalid_argument("quad_inner: grid mismatch");
    const double h = a.grid.h();
    cplx s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double w = (i == 0 || i + 1 == a.size()) ? 0.5 : 1.0;
        s += w * (std::conj(a.values[i].a) * b.values[i].a +
                  std::conj(a.values[i].b) * b.values[i].b);
    }
    return s * h;
}

std::vector<double> trapezoid_weights(const SpaceGrid& g) {
    std::vector<double> w(g.n_points, g.h());
    w.front() *= 0.5;
    w.back() *= 0.5;
    return w;
}

std::vector<double> trapezoid_weights(const TimeGrid& g) {
    std::vector<double> w(g.n_samples(), g.dt());
    w.front() *= 0.5;
    w.back() *= 0.5;
    return w;
}

std::vector<double> cumulative_trapezoid(const std::vector<double>& f, double step) {
    std::vector<double> out(f.size(), 0.0);
    for (std::size_t i = 1; i < f.size(); ++i)
        out[i] = out[i - 1] + 0.5 * step * (f[i - 1] + f[i]);
    return out;
}

namespace {

constexpr double kPsdTol = 1e-12;      // floor for the minimal eigenvalue

} // namespace

HamiltonianField HamiltonianField::sampled(const SpaceGrid& g,
                                           std::vector<double> h00,
                                           std::vector<double> h01,
                                           std::vector<double> h11,
                                           HamiltonianClass cls,
                                           double delta) {
    if (cls == HamiltonianClass::PiecewiseRank1)
        throw std::invalid_argument("HamiltonianField::sampled: wrong class tag");
    if (h00.size() != g.n_points || h01.size() != g.n_points || h11.size() != g.n_points)
        throw std::invalid_argument("HamiltonianField::sampled: sample count mismatch");

    HamiltonianField f;
    f.cls_ = cls;
    f.delta_ = delta;
    f.grid_ = g;
    f.h00_ = std::move(h00);
    f.h01_ = std::move(h01);
    f.h11_ = std::move(h11);
    f.det_.resize(g.n_points);
    f.trace_.resize(g.n_points);
    for (std::size_t i = 0; i < g.n_points; ++i) {
        if (!std::isfinite(f.h00_[i]) || !std::isfinite(f.h01_[i]) || !std::isfinite(f.h11_[i]))
            throw std::invalid_argument("HamiltonianField: non-finite sample");
        f.det_[i] = f.h00_[i] * f.h11_[i] - f.h01_[i] * f.h01_[i];
        f.trace_[i] = f.h00_[i] + f.h11_[i];
        const double lo = f.at(i).min_eig_sym();
        if (lo < -kPsdTol)
            throw std::invalid_argument("HamiltonianField: not positive semidefinite");
        if (cls == HamiltonianClass::StrictlyPositive && lo < delta - 1e-12)
            throw std::invalid_argument("HamiltonianField: eigenvalue below the declared delta");
    }
    return f;
}

HamiltonianField HamiltonianField::piecewise_rank1(std::vector<double> lengths,
                                                   std::vector<Vec2d> units) {
    if (lengths.size() != units.size() || lengths.empty())
        throw std::invalid_argument("HamiltonianField::piecewise_rank1: bad partition");

    HamiltonianField f;
    f.cls_ = HamiltonianClass::PiecewiseRank1;
    f.units_ = std::move(units);
    f.nodes_.resize(lengths.size() + 1);
    f.nodes_[0] = 0.0;
    for (std::size_t j = 0; j < lengths.size(); ++j) {
        if (!(lengths[j] > 0.0))
            throw std::invalid_argument("HamiltonianField::piecewise_rank1: nonpositive interval");
        f.nodes_[j + 1] = f.nodes_[j] + lengths[j];
    }
    for (const Vec2d& e : f.units_) {
        if (std::abs(e.norm() - 1.0) > 1e-12)
            throw std::invalid_argument("HamiltonianField::piecewise_rank1: unit vector not normalized");
    }
    return f;
}

const SpaceGrid& HamiltonianField::grid() const {
    if (!is_sampled()) throw std::logic_error("HamiltonianField: piecewise field has no grid");
    return grid_;
}

Mat2d HamiltonianField::at(std::size_t i) const {
    if (!is_sampled()) throw std::logic_error("HamiltonianField::at: piecewise field");
    return Mat2d::sym(h00_[i], h01_[i], h11_[i]);
}

Mat2d HamiltonianField::value(double x) const {
    if (is_sampled()) {
        const double h = grid_.h();
        if (x <= 0.0) return at(0);
        if (x >= grid_.x_max) return at(grid_.n_points - 1);
        const std::size_t i = static_cast<std::size_t>(x / h);
        const double w = (x - grid_.x(i)) / h;
        const std::size_t j = std::min(i + 1, grid_.n_points - 1);
        return Mat2d::sym(h00_[i] * (1 - w) + h00_[j] * w,
                          h01_[i] * (1 - w) + h01_[j] * w,
                          h11_[i] * (1 - w) + h11_[j] * w);
    }
    std::size_t j = 0;
    while (j + 1 < units_.size() && x >= nodes_[j + 1]) ++j;
    return Mat2d::outer(units_[j]);
}

HamiltonianField HamiltonianField::resample(const SpaceGrid& g) const {
    std::vector<double> a(g.n_points), b(g.n_points), d(g.n_points);
    for (std::size_t i = 0; i < g.n_points; ++i) {
        const Mat2d m = value(g.x(i));
        a[i] = m.m00;
        b[i] = m.m01;
        d[i] = m.m11;
    }
    const HamiltonianClass cls =
        is_sampled() ? cls_ : HamiltonianClass::Rank1Degenerate;
    return sampled(g, std::move(a), std::move(b), std::move(d), cls, delta_);
}

double HamiltonianField::min_eigenvalue() const {
    double lo = std::numeric_limits<double>::infinity();
    if (is_sampled()) {
        for (std::size_t i = 0; i < grid_.n_points; ++i) lo = std::min(lo, at(i).min_eig_sym());
    } else {
        for (const Vec2d& e : units_) lo = std::min(lo, Mat2d::outer(e).min_eig_sym());
    }
    return lo;
}

double HamiltonianField::idempotency_dev() const {
    double dev = 0.0;
    auto check = [&dev](const Mat2d& m) { dev = std::max(dev, (m * m - m).max_abs()); };
    if (is_sampled()) {
        for (std::size_t i = 0; i < grid_.n_points; ++i) check(at(i));
    } else {
        for (const Vec2d& e : units_) check(Mat2d::outer(e));
    }
    return dev;
}

BoundaryControl::BoundaryControl(const TimeGrid& g, std::vector<cplx> s, double t0, double t1)
    : grid(g), samples(std::move(s)), support_begin(t0), support_end(t1) {
    if (samples.size() != grid.n_samples())
        throw std::invalid_argument("BoundaryControl: sample count mismatch");
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const double t = grid.t(k);
        if ((t < support_begin || t > support_end) && samples[k] != cplx(0.0))
            throw std::invalid_argument("BoundaryControl: nonzero sample outside support");
    }
}

double BoundaryControl::energy() const {
    double s = 0.0;
    const auto w = trapezoid_weights(grid);
    for (std::size_t k = 0; k < samples.size(); ++k) s += w[k] * std::norm(samples[k]);
    return s;
}

BoundaryControl BoundaryControl::conjugated() const {
    BoundaryControl c = *this;
    for (cplx& v : c.samples) v = std::conj(v);
    return c;
}

BoundaryControl BoundaryControl::scaled(cplx s) const {
    BoundaryControl c = *this;
    for (cplx& v : c.samples) v *= s;
    return c;
}

namespace {

double bump_profile(double s) {
    const double r = 1.0 - s * s;
    return r > 0.0 ? std::exp(-1.0 / r) : 0.0;
}

} // namespace

BoundaryControl smooth_bump(const TimeGrid& g, double center, double width, cplx amplitude) {
    if (!(width > 0.0)) throw std::invalid_argument("smooth_bump: width must be positive");
    std::vector<cplx> s(g.n_samples());
    const double peak = bump_profile(0.0);
    for (std::size_t k = 0; k < s.size(); ++k)
        s[k] = amplitude * (bump_profile((g.t(k) - center) / width) / peak);
    return BoundaryControl(g, std::move(s), center - width, center + width);
}

BoundaryControl smoothed_delta(const TimeGrid& g, double center, double width) {
    if (width < 4.0 * g.dt())
        throw std::invalid_argument("smoothed_delta: width under-resolved (need >= 4 dt)");
    if (!(center - width > 0.0) || !(center + width < g.t_max))
        throw std::invalid_argument("smoothed_delta: support not inside (0, T)");
    std::vector<cplx> s(g.n_samples());
    for (std::size_t k = 0; k < s.size(); ++k)
        s[k] = bump_profile((g.t(k) - center) / width);
    const auto w = trapezoid_weights(g);
    double integral = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) integral += w[k] * s[k].real();
    if (!(integral > 0.0)) throw std::invalid_argument("smoothed_delta: width under-resolved");
    for (cplx& v : s) v /= integral;
    return BoundaryControl(g, std::move(s), center - width, center + width);
}

double ResponseMatrix::causality_defect() const {
    double dev = 0.0;
    for (std::size_t j = 0; j < matrix.cols(); ++j) {
        const double onset = col_centers[j] - bump_width;
        for (std::size_t i = 0; i < matrix.rows(); ++i) {
            if (grid.t(i) < onset) dev = std::max(dev, std::abs(matrix.at(i, j)));
        }
    }
    return dev;
}

} // namespace canlab
