#ifndef CANLAB_BCMETHOD_HPP
#define CANLAB_BCMETHOD_HPP

#include "canlab/builders.hpp"
#include "canlab/core.hpp"
#include "canlab/timedomain.hpp"

#include <memory>

namespace canlab {

// Orthonormal family of smoothed-delta controls on a uniform sub-grid of (0, T),
// Gram-Schmidt in discrete L2. width <= 0 picks the widest non-overlapping
// choice that the time grid resolves.
std::vector<BoundaryControl> make_control_basis(const TimeGrid& tg, std::size_t count,
                                                double width = 0.0);

enum class ControlMode { Single, Extended };

// Discretized control operator: column j is the reachable state at t = T driven
// by the j-th basis control (forward system for the first block, auxiliary for
// the second in extended mode). State inner products carry the travel-time
// weight sqrt(d1 d2) dx.
struct ControlOperatorMatrix {
    ControlMode mode = ControlMode::Single;
    DiracReduction reduction;
    TimeGrid tgrid;
    std::vector<BoundaryControl> basis;
    DenseMatrix states;                 // rows: 2 * n_x (components interleaved)
    std::vector<double> weights;        // per-node state weight
    double reach_limit = 0.0;           // x(T), forward edge of the reachable set

    std::size_t n_controls() const { return basis.size(); }
    std::size_t n_nodes() const { return weights.size(); }
};

ControlOperatorMatrix control_operator(const DiracReduction& red, const TimeGrid& tg,
                                       ControlMode mode, std::size_t n_controls,
                                       double width = 0.0);

// Spectrum of the state-space Gram of the reachable set, resolved on a
// travel-time cell grid commensurate with the control count; the defect is the
// fraction of singular values below 1e-6 of the largest.
struct ReachabilityReport {
    std::vector<double> singular_values;   // descending
    double defect = 0.0;
    std::size_t state_dim = 0;
};

ReachabilityReport reachability_defect(const ControlOperatorMatrix& w);

struct IsomorphismReport {
    std::vector<double> singular_values;   // of the extended operator, descending
    double sigma_min = 0.0, sigma_max = 0.0;
    double floor = 0.0;
    bool pass = false;
};

IsomorphismReport controllability_check(const ControlOperatorMatrix& w,
                                        double floor_ratio = 1e-4);

struct ConnectingOperatorMatrix {
    DenseMatrix matrix;                 // Hermitian PSD Gram on the control space
    std::vector<double> eigenvalues;    // ascending
    double hermiticity_dev = 0.0;
    double min_eigenvalue = 0.0;
    double norm = 0.0;
};

ConnectingOperatorMatrix connecting_operator(const ControlOperatorMatrix& w);

// Sampled element of the frequency image of the extended reachable set:
// K(lambda) = int (state . theta(., lambda)) dx for the state driven by (k1, k2).
struct BTElement {
    std::vector<double> lambda;
    std::vector<cplx> K;
    std::vector<cplx> coords;            // basis coordinates of (k1, k2)
    std::shared_ptr<const ConnectingOperatorMatrix> backing;
};

BTElement bt_element(const ControlOperatorMatrix& w,
                     std::shared_ptr<const ConnectingOperatorMatrix> backing,
                     const BoundaryControl& k1, const BoundaryControl& k2,
                     const std::vector<double>& lambda_grid);

// [a, b] through the connecting operator quadratic form.
cplx bt_inner(const BTElement& a, const BTElement& b);

// Leading-front magnitude of a solver run driven by a narrow smoothed delta,
// compared against the amplitude profile |A(x)| along t = tau(x) + center.
struct WavefrontReport {
    std::vector<double> x;
    std::vector<double> field_ratio;   // |V_front(x)| / |V_front(0)|
    std::vector<double> amp_ratio;     // |A(x)| / |A(0)|
    double max_rel_dev = 0.0;
};

WavefrontReport wavefront_amplitude(const EvolutionResult& run, const DiracReduction& red,
                                    const std::vector<Vec2c>& amplitude,
                                    double bump_center, double bump_width);

} // namespace canlab

#endif
