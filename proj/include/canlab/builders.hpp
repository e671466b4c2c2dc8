#ifndef CANLAB_BUILDERS_HPP
#define CANLAB_BUILDERS_HPP

#include "canlab/core.hpp"

#include <cstdint>
#include <functional>
#include <optional>

namespace canlab {

using RealFn = std::function<double(double)>;

// Fundamental solutions of -y'' + q y = 0 with y1(0)=1, y1'(0)=0, y2(0)=0, y2'(0)=1.
struct SchrodingerBasis {
    SpaceGrid grid;
    std::vector<double> y1, y1p, y2, y2p;

    double wronskian_at(std::size_t i) const { return y1[i] * y2p[i] - y1p[i] * y2[i]; }
    double wronskian_dev() const;   // max |W - 1|
};

SchrodingerBasis solve_schrodinger_basis(const RealFn& q, const SpaceGrid& g);

struct PotentialHamiltonian {
    HamiltonianField H;          // rank-1 degenerate: [[y1^2, y1 y2],[y1 y2, y2^2]]
    SchrodingerBasis basis;
};

PotentialHamiltonian build_H_from_potential(const RealFn& q, const SpaceGrid& g);

// H = diag(rho, 1) for a strictly positive density.
HamiltonianField build_H_from_density(const RealFn& rho, const SpaceGrid& g, double delta = 1e-8);

// Fundamental matrix A(x) = [Y^1 Y^2] of J Y' + V Y = 0, V = [[p,q],[q,-p]], A(0) = I.
struct DiracFundamental {
    SpaceGrid grid;
    std::vector<Mat2d> A;

    double det_dev() const;   // max |det A - 1|
};

struct DiracHamiltonian {
    HamiltonianField H;          // Gram matrix A^T A, det == 1
    DiracFundamental fundamental;
};

DiracHamiltonian build_H_from_dirac(const RealFn& p, const RealFn& q, const SpaceGrid& g);

// Partition of the half-line with unit directions and the derived tridiagonal
// coefficients rho_j (off-diagonal) and q_j (diagonal).
struct JacobiSystem {
    std::vector<double> lengths;   // l_j, j = 1..M (0-based storage)
    std::vector<Vec2d> units;      // e_j
    std::vector<double> q;         // q_1..q_{M-1}
    std::vector<double> rho;       // rho_1..rho_{M-1}

    std::size_t intervals() const { return lengths.size(); }
    // usable tridiagonal dimension: rows 1..M-1
    std::size_t rows() const { return q.size(); }
    double node(std::size_t j) const;   // b_j, j = 0..M

    // (A v)_n for 1-based n in [1, rows()]; v is 1-based logical with v[0] unused,
    // entries beyond the truncation are treated as zero.
    cplx apply_row(std::size_t n, const std::vector<cplx>& v) const;
    double norm_bound() const;   // Gershgorin bound on ||A||
};

// Derived coefficients:
//   rho_j = -1 / ((e_{j+1}, e_j^perp) sqrt(l_j l_{j+1}))
//   q_j   = (1/l_j) [ (e_j, e_{j+1})/(e_j^perp, e_{j+1}) - (e_j, e_{j-1})/(e_j^perp, e_{j-1}) ]
// q_1 uses the truncated formula (no left neighbor) unless overridden.
JacobiSystem build_jacobi_from_partition(std::vector<double> lengths,
                                         std::vector<Vec2d> units,
                                         std::optional<double> q1_override = std::nullopt);

// Convenience: unit vectors from angles, with exact vectors at multiples of pi/2.
std::vector<Vec2d> units_from_angles(const std::vector<double>& angles);

// Quarter-turn preset: l_j = 1, e_j cycling (1,0),(0,1),(-1,0),(0,-1) exactly.
JacobiSystem jacobi_quarter_turns(std::size_t intervals);

HamiltonianField build_H_jacobi(const JacobiSystem& sys);

// Pointwise rotation diagonalization H = R(phi) diag(d1,d2) R(phi)^T with
// d1 >= d2, continuous (unwrapped) phi and psi = phi'.
struct DiracReduction {
    SpaceGrid grid;
    std::vector<double> d1, d2, phi, psi;
    double delta = 0.0;   // lower bound for d2

    double max_speed() const;   // max over x of 1/sqrt(d1 d2)
    double tau_rate_max() const;   // max sqrt(d1 d2)
};

DiracReduction diagonalize_H(const HamiltonianField& H);

// Direct construction from sampled coefficients (phi left empty, psi given).
DiracReduction make_reduction(const SpaceGrid& g,
                              std::vector<double> d1,
                              std::vector<double> d2,
                              std::vector<double> psi);

// Travel time tau(x) = int_0^x sqrt(det H), with the inverse map on strictly
// increasing segments.
struct Eikonal {
    SpaceGrid grid;
    std::vector<double> tau;

    double tau_at(double x) const;             // linear interpolation
    std::optional<double> x_of_tau(double t) const;
    double tau_max() const { return tau.back(); }
};

Eikonal eikonal(const HamiltonianField& H);
Eikonal eikonal(const DiracReduction& red);

// Trace normalization: new coordinate xt(x) = int_0^x tr H, H~ = H / tr H on a
// uniform grid in the new coordinate.
struct TraceNormalization {
    HamiltonianField normalized;       // tr == 1 on its own grid
    std::vector<double> xtilde;        // xt at the original grid points

    double xtilde_of_x(double x, const SpaceGrid& original) const;
};

TraceNormalization normalize_trace(const HamiltonianField& H);

// Leading wavefront amplitude A(x) of the Dirac-type system: RK4 on
//   a1_x = (psi/2)(a2 + i sqrt(d2/d1) a1)
//   a2_x = (psi/2)(i sqrt(d1/d2) a2 - a1)
// |A| is an exact invariant for real psi.
std::vector<Vec2c> solve_amplitude_A(const DiracReduction& red, Vec2c A0 = {1.0, 0.0});

// Seeded smooth random inputs shared by the CLI and the verification suites.
HamiltonianField random_strictly_positive_H(std::uint64_t seed, const SpaceGrid& g,
                                            double delta = 0.15);
DiracReduction random_smooth_reduction(std::uint64_t seed, const SpaceGrid& g,
                                       double delta = 0.15);
RealFn random_smooth_function(std::uint64_t seed, double amplitude, double x_span);

} // namespace canlab

#endif
