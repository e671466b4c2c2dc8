#ifndef CANLAB_TEST_SUPPORT_HPP
#define CANLAB_TEST_SUPPORT_HPP

#include <cmath>
#include <random>

#include "canlab/builders.hpp"
#include "canlab/core.hpp"

namespace canlab::testing {

// C-infinity bump on (-1,1) and its first three derivatives, used to build
// closed-form reference solutions.
inline double bump(double s) {
    const double r = 1.0 - s * s;
    return r > 0.0 ? std::exp(-1.0 / r) : 0.0;
}

inline double bump_d1(double s) {
    const double r = 1.0 - s * s;
    if (!(r > 0.0)) return 0.0;
    return bump(s) * (-2.0 * s / (r * r));
}

inline double bump_d2(double s) {
    const double r = 1.0 - s * s;
    if (!(r > 0.0)) return 0.0;
    const double a = -2.0 * s / (r * r);
    const double ap = (-2.0 * r * r - (-2.0 * s) * 2.0 * r * (-2.0 * s)) / (r * r * r * r);
    return bump(s) * (a * a + ap);
}

// scaled control pulse f(t) = amp * bump((t - c)/w), with derivatives in t
struct Pulse {
    double center = 0.0, width = 1.0, amplitude = 1.0;

    double operator()(double t) const { return amplitude * bump((t - center) / width); }
    double d1(double t) const { return amplitude / width * bump_d1((t - center) / width); }
    double d2(double t) const {
        return amplitude / (width * width) * bump_d2((t - center) / width);
    }
};

inline BoundaryControl pulse_control(const TimeGrid& tg, const Pulse& p) {
    std::vector<cplx> s(tg.n_samples());
    for (std::size_t k = 0; k < s.size(); ++k) s[k] = p(tg.t(k));
    return BoundaryControl(tg, std::move(s), p.center - p.width, p.center + p.width);
}

inline std::vector<double> random_lengths(std::mt19937_64& rng, std::size_t m) {
    std::uniform_real_distribution<double> u(0.3, 2.0);
    std::vector<double> l(m);
    for (double& v : l) v = u(rng);
    return l;
}

// random unit directions with adjacent pairs kept safely non-parallel
inline std::vector<Vec2d> random_units(std::mt19937_64& rng, std::size_t m) {
    std::uniform_real_distribution<double> u(0.35, 2.6);
    std::uniform_int_distribution<int> sign(0, 1);
    std::vector<Vec2d> e(m);
    double angle = u(rng);
    e[0] = {std::cos(angle), std::sin(angle)};
    for (std::size_t j = 1; j < m; ++j) {
        angle += (sign(rng) ? 1.0 : -1.0) * u(rng);
        e[j] = {std::cos(angle), std::sin(angle)};
    }
    return e;
}

} // namespace canlab::testing

#endif
