#ifndef CANLAB_TIMEDOMAIN_HPP
#define CANLAB_TIMEDOMAIN_HPP

#include "canlab/builders.hpp"
#include "canlab/core.hpp"

#include <functional>
#include <optional>
#include <string>

namespace canlab {

// Space-time 2-vector field, t-major storage.
class EvolutionField {
public:
    EvolutionField() = default;
    EvolutionField(const SpaceGrid& s, const TimeGrid& t)
        : space_(s), time_(t), data_(s.n_points * t.n_samples()) {}

    const SpaceGrid& space() const { return space_; }
    const TimeGrid& time() const { return time_; }
    Vec2c& at(std::size_t i, std::size_t k) { return data_[k * space_.n_points + i]; }
    const Vec2c& at(std::size_t i, std::size_t k) const { return data_[k * space_.n_points + i]; }
    bool empty() const { return data_.empty(); }

private:
    SpaceGrid space_;
    TimeGrid time_;
    std::vector<Vec2c> data_;
};

struct SolverMeta {
    std::string scheme;
    double cfl = 0.0;
    double h = 0.0, dt = 0.0;
    std::string coefficient_hash;   // FNV-1a over the sampled coefficients
};

std::string coefficient_hash(const std::vector<const std::vector<double>*>& arrays);

struct EvolutionResult {
    SpaceGrid space;
    TimeGrid time;
    EvolutionField field;              // empty unless store_field
    std::vector<Vec2c> final_state;    // snapshot at t = T
    std::vector<cplx> boundary1;       // first component at x = 0
    std::vector<cplx> boundary2;       // second component at x = 0
    std::vector<cplx> response;        // system-specific response trace
    SolverMeta meta;
};

struct SolveOptions {
    bool store_field = true;
};

// Wave equation with a potential: u_tt - u_xx + q u = 0, u(0,t) = f(t), zero
// initial data, explicit leapfrog. Response: one-sided u_x(0,t).
EvolutionResult solve_wave_potential(const RealFn& q, const BoundaryControl& f,
                                     const SpaceGrid& sg, const TimeGrid& tg,
                                     const SolveOptions& opt = {});

// Wave equation with a density: rho u_tt - u_xx = 0.
EvolutionResult solve_wave_density(const RealFn& rho, const BoundaryControl& f,
                                   const SpaceGrid& sg, const TimeGrid& tg,
                                   const SolveOptions& opt = {});

// Dirac system i u_t + J u_x + V u = 0, V = [[p,q],[q,-p]], u1(0,t) = f.
// Response: u2(0,t). Method of lines, centered differences, RK4.
EvolutionResult solve_dirac(const RealFn& p, const RealFn& q, const BoundaryControl& f,
                            const SpaceGrid& sg, const TimeGrid& tg,
                            const SolveOptions& opt = {});

enum class DiracTypeSign {
    Forward,     // i D V_t + J V_x + psi V = 0
    Auxiliary,   // i D U_t - J U_x - psi U = 0
};

EvolutionResult solve_dirac_type(const DiracReduction& red, const BoundaryControl& f,
                                 DiracTypeSign sign, const TimeGrid& tg,
                                 const SolveOptions& opt = {});

// Canonical system i H Y_t - J Y_x = 0 with y1(0,t) = f for a smooth strictly
// positive H: diagonalized internally, stepped in rotated variables with the
// physical condition cos(phi0) w1 - sin(phi0) w2 = f resolved along the
// incoming characteristic, rotated back. Response: y2(0,t).
struct CanonicalResult {
    EvolutionResult evolution;
    DiracReduction reduction;
    std::vector<cplx> rotated_boundary1;   // g(t) in the rotated frame
    std::vector<cplx> rotated_boundary2;
};

CanonicalResult solve_canonical_i(const HamiltonianField& H, const BoundaryControl& f,
                                  const TimeGrid& tg, const SolveOptions& opt = {});

// Lattice evolution i v_t - A v = 0 with v1 pinned to the control and
// Dirichlet truncation v_{N+1} = 0; RK4 in time. Response: v2.
struct LatticeEvolution {
    TimeGrid time;
    std::size_t n = 0;                 // tracked entries v_1..v_N
    std::vector<cplx> data;            // t-major, v_n at (k, n-1)
    std::vector<cplx> response;        // v_2 trace
    double tail_max = 0.0;             // max |v_N|, truncation diagnostic
    bool tail_warning = false;

    cplx at(std::size_t k, std::size_t n1) const { return data[k * n + (n1 - 1)]; }
};

LatticeEvolution solve_jacobi_continuous(const JacobiSystem& sys, const BoundaryControl& h,
                                         std::size_t truncation, const TimeGrid& tg,
                                         double tail_threshold = 1e-6);

// Discrete-time lattice: v_{n,t} + v_{n,t-1} = (A v_{.,t})_n for n = 2..N,
// v_{1,t} = h_t, v_{N+1,t} = 0, v_{.,0} = v_{.,1} = 0. Implicit tridiagonal
// solve per step. Response: v_{2,t}.
enum class DiscreteTimeRule { Sum, Difference };

struct DiscreteLatticeEvolution {
    std::size_t n = 0;                 // entries v_1..v_N
    std::size_t steps = 0;             // time indices 0..steps
    std::vector<cplx> data;            // t-major
    std::vector<cplx> response;        // v_{2,t}, t = 0..steps

    cplx at(std::size_t t, std::size_t n1) const { return data[t * n + (n1 - 1)]; }
};

DiscreteLatticeEvolution solve_jacobi_discrete(const JacobiSystem& sys,
                                               const std::vector<cplx>& h,
                                               std::size_t truncation, std::size_t steps,
                                               DiscreteTimeRule rule = DiscreteTimeRule::Sum);

// c1 = y2' u - y2 u_x, c2 = -y1' u + y1 u_x (unit-Wronskian inversion of the
// representation u = c1 y1 + c2 y2). u_x: centered inside, one-sided at the ends.
EvolutionField canonical_fields_from_wave(const EvolutionResult& wave,
                                          const SchrodingerBasis& basis);

// C = (u_t, i u_x) for the density wave picture.
EvolutionField canonical_fields_from_density_wave(const EvolutionResult& wave);

// C = A(x)^{-1} u for the Dirac picture (A the fundamental matrix, det = 1).
EvolutionField canonical_fields_from_dirac(const EvolutionResult& dirac,
                                           const DiracFundamental& fundamental);

enum class LatticeDynamics { Continuous, Discrete };

// Piecewise canonical field assembled from a lattice evolution:
//   f(x,.) = f_j e_j + xi_j(x) e_j^perp on (b_{j-1}, b_j),
//   xi_j(x) = s_j + g_j (b_j - x),
// with f_j = v_j / sqrt(l_j), g_j from the dynamics relation and s_j from the
// interface continuity conditions.
class LatticeField {
public:
    LatticeField(const JacobiSystem& sys, LatticeDynamics dyn, std::size_t n_times,
                 std::size_t usable_intervals);

    const JacobiSystem& system() const { return sys_; }
    LatticeDynamics dynamics() const { return dyn_; }
    std::size_t n_times() const { return n_times_; }
    std::size_t usable_intervals() const { return usable_; }

    cplx f(std::size_t k, std::size_t j) const { return fj_[idx(k, j)]; }       // j = 1..usable
    cplx g(std::size_t k, std::size_t j) const { return gj_[idx(k, j)]; }
    cplx s(std::size_t k, std::size_t j) const { return sj_[idx(k, j)]; }

    Vec2c eval(double x, std::size_t k) const;
    // max mismatch of the two one-sided limits over interior nodes b_1..b_{usable-1}
    double continuity_defect(std::size_t k) const;

    friend LatticeField assemble_lattice_field(const JacobiSystem&, LatticeDynamics,
                                               const std::vector<std::vector<cplx>>&);

private:
    std::size_t idx(std::size_t k, std::size_t j) const { return k * usable_ + (j - 1); }

    JacobiSystem sys_;
    LatticeDynamics dyn_;
    std::size_t n_times_ = 0, usable_ = 0;
    std::vector<cplx> fj_, gj_, sj_;
};

// Low-level assembly from interleaved logical vectors (v, u) per time sample.
LatticeField assemble_lattice_field(const JacobiSystem& sys, LatticeDynamics dyn,
                                    const std::vector<std::vector<cplx>>& vu);

LatticeField jacobi_fields_from_v(const JacobiSystem& sys, const LatticeEvolution& ev);
LatticeField jacobi_fields_from_v(const JacobiSystem& sys, const DiscreteLatticeEvolution& ev);
// Snapshot variant for algebra checks: v is a logical 1-based vector, u = A v.
LatticeField jacobi_fields_from_snapshot(const JacobiSystem& sys, const std::vector<cplx>& v);

// The displayed boundary identity of the lattice canonical picture:
//   trace_t = s1 + g1 l1 with s1 = f2/(e2,e1^perp) - f1 and g1 = i h / sqrt(l1),
// which collapses to -rho1 v2 sqrt(l1) - h (1/sqrt(l1) - i sqrt(l1)).
std::vector<cplx> lattice_boundary_trace(const JacobiSystem& sys,
                                         const std::vector<cplx>& v2,
                                         const std::vector<cplx>& h);
std::vector<cplx> lattice_boundary_closed_form(const JacobiSystem& sys,
                                               const std::vector<cplx>& v2,
                                               const std::vector<cplx>& h);

enum class CanonicalDynamics {
    SecondOrder,   // H C_tt - J C_x
    FirstOrderI,   // i H C_t - J C_x
    OneVelocity,   // det H Y_tt - Y_xx + det H H^{-1} J (H^{-1})' J Y_x
};

struct ResidualReport {
    double l2 = 0.0;
    double max = 0.0;
    double h = 0.0, dt = 0.0;
    std::size_t cells = 0;
};

// Centered-difference residual of the tagged equation over interior cells,
// excluding a band around the wavefront t = tau(x) + t0 of half-width
// 2 max(h * max tau', dt).
ResidualReport canonical_residual(const HamiltonianField& H, const EvolutionField& C,
                                  CanonicalDynamics dyn,
                                  double front_time_offset = 0.0);

// Convergence slope log2(coarse/fine) for two residual levels.
double residual_slope(const ResidualReport& coarse, const ResidualReport& fine);

// Lattice residual of i H f_t - J f_x = 0 (continuous) or H (f_t + f_{t-1}) - J f_x = 0
// (discrete) evaluated on the piecewise representation at interval midpoints.
ResidualReport lattice_canonical_residual(const LatticeField& field, double dt);

using ResponseRunner = std::function<std::vector<cplx>(const BoundaryControl&)>;

// Discretized response operator: one solver run per smoothed-delta basis column.
ResponseMatrix response_matrix(const ResponseRunner& run, const TimeGrid& tg,
                               std::size_t n_basis, double bump_width = 0.0);

struct ResponseRelation {
    cplx scale{1.0, 0.0};          // R2 ~ scale * R1 + shift * Id
    cplx shift{0.0, 0.0};

    static ResponseRelation identity() { return {}; }
    static ResponseRelation affine(cplx a, cplx b) { return {a, b}; }
};

struct ResponseComparison {
    double rel_operator = 0.0;     // spectral norm ratio
    double rel_frobenius = 0.0;
    double max_column_rel = 0.0;
};

ResponseComparison compare_responses(const ResponseMatrix& r1, const ResponseMatrix& r2,
                                     const ResponseRelation& rel = {});

// Trace helpers shared by the equivalence suites.
double relative_l2(const std::vector<cplx>& a, const std::vector<cplx>& b);
// Quadratic extrapolation of a field component to x = 0 from the first three
// interior nodes; keeps transformed traces independent of the boundary stencil.
std::vector<cplx> extrapolate_trace_to_boundary(const EvolutionField& f, int component);

// max |field| over the region strictly ahead of the wavefront
// tau(x) > (t - t_onset) + margin.
double max_ahead_of_front(const EvolutionField& f, const Eikonal& eik, double t_onset,
                          double margin);

std::vector<cplx> derivative(const std::vector<cplx>& f, double step);

} // namespace canlab

#endif
