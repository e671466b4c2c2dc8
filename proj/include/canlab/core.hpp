#ifndef CANLAB_CORE_HPP
#define CANLAB_CORE_HPP

#include "canlab/linalg.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace canlab {

// Uniform spatial grid on [0, x_max].
struct SpaceGrid {
    double x_max = 0.0;
    std::size_t n_points = 0;

    SpaceGrid() = default;
    SpaceGrid(double x_max_, std::size_t n_points_);

    double h() const { return x_max / static_cast<double>(n_points - 1); }
    double x(std::size_t i) const { return static_cast<double>(i) * h(); }
    bool operator==(const SpaceGrid& o) const {
        return x_max == o.x_max && n_points == o.n_points;
    }
};

// Uniform time grid on [0, t_max] with n_steps steps (n_steps + 1 samples).
struct TimeGrid {
    double t_max = 0.0;
    std::size_t n_steps = 0;

    TimeGrid() = default;
    TimeGrid(double t_max_, std::size_t n_steps_);

    double dt() const { return t_max / static_cast<double>(n_steps); }
    std::size_t n_samples() const { return n_steps + 1; }
    double t(std::size_t k) const { return static_cast<double>(k) * dt(); }
    bool operator==(const TimeGrid& o) const {
        return t_max == o.t_max && n_steps == o.n_steps;
    }
};

// Time grid with dt = cfl * h / max_speed rounded so t_max is hit exactly.
TimeGrid make_time_grid(const SpaceGrid& g, double t_max, double max_speed, double cfl = 0.45);

// Complex 2-vector snapshot on a spatial grid.
struct VectorField2 {
    SpaceGrid grid;
    std::vector<Vec2c> values;

    VectorField2() = default;
    VectorField2(const SpaceGrid& g) : grid(g), values(g.n_points) {}
    VectorField2(const SpaceGrid& g, std::vector<Vec2c> v);

    std::size_t size() const { return values.size(); }
};

// Discrete L2(0, x_max; C^2) pairing, conjugate-linear in the first slot, trapezoid weights.
cplx quad_inner(const VectorField2& a, const VectorField2& b);

// Trapezoid weights for a grid (h/2, h, ..., h, h/2).
std::vector<double> trapezoid_weights(const SpaceGrid& g);
std::vector<double> trapezoid_weights(const TimeGrid& g);

// Cumulative trapezoid integral of samples against the grid step.
std::vector<double> cumulative_trapezoid(const std::vector<double>& f, double step);

enum class HamiltonianClass {
    StrictlyPositive,   // min eigenvalue >= delta > 0
    Rank1Degenerate,    // sampled, det == 0
    PiecewiseRank1,     // piecewise constant e_j e_j^T
};

// 2x2 symmetric nonnegative matrix field, either sampled on a SpaceGrid or
// piecewise constant rank one over a partition.
class HamiltonianField {
public:
    HamiltonianField() = default;   // empty placeholder, fill via the factories

    static HamiltonianField sampled(const SpaceGrid& g,
                                    std::vector<double> h00,
                                    std::vector<double> h01,
                                    std::vector<double> h11,
                                    HamiltonianClass cls,
                                    double delta = 0.0);
    static HamiltonianField piecewise_rank1(std::vector<double> lengths,
                                            std::vector<Vec2d> units);

    HamiltonianClass cls() const { return cls_; }
    bool is_sampled() const { return cls_ != HamiltonianClass::PiecewiseRank1; }
    double delta() const { return delta_; }

    const SpaceGrid& grid() const;
    Mat2d at(std::size_t i) const;             // sampled access
    Mat2d value(double x) const;               // both representations
    double det_at(std::size_t i) const { return det_[i]; }
    double trace_at(std::size_t i) const { return trace_[i]; }
    const std::vector<double>& det_samples() const { return det_; }
    const std::vector<double>& trace_samples() const { return trace_; }

    // Piecewise representation access.
    const std::vector<double>& partition() const { return nodes_; }   // b_0..b_M
    const std::vector<Vec2d>& units() const { return units_; }
    std::size_t intervals() const { return units_.size(); }

    // Sample a piecewise field onto a uniform grid (midpoint lookup).
    HamiltonianField resample(const SpaceGrid& g) const;

    double min_eigenvalue() const;
    double idempotency_dev() const;   // max |H^2 - H| over samples/intervals

private:
    HamiltonianClass cls_ = HamiltonianClass::StrictlyPositive;
    double delta_ = 0.0;
    // sampled storage
    SpaceGrid grid_;
    std::vector<double> h00_, h01_, h11_;
    std::vector<double> det_, trace_;
    // piecewise storage
    std::vector<double> nodes_;
    std::vector<Vec2d> units_;
};

// Complex control on a time grid, zero outside its recorded support.
struct BoundaryControl {
    TimeGrid grid;
    std::vector<cplx> samples;
    double support_begin = 0.0;
    double support_end = 0.0;

    BoundaryControl() = default;
    BoundaryControl(const TimeGrid& g, std::vector<cplx> s, double t0, double t1);

    cplx at(std::size_t k) const { return samples[k]; }
    double energy() const;   // discrete L2 norm squared
    BoundaryControl conjugated() const;
    BoundaryControl scaled(cplx s) const;
};

// C-infinity bump scaled to unit discrete integral; support exactly
// [center - width, center + width], which must lie inside (0, t_max).
BoundaryControl smoothed_delta(const TimeGrid& g, double center, double width);

// Same bump without the normalization, peak value = amplitude.
BoundaryControl smooth_bump(const TimeGrid& g, double center, double width, cplx amplitude = 1.0);

// Discrete response operator: columns are response traces to a family of
// smoothed-delta basis controls.
struct ResponseMatrix {
    TimeGrid grid;
    DenseMatrix matrix;              // rows: time samples, cols: basis controls
    std::vector<double> col_centers;
    double bump_width = 0.0;

    // max |entry(i,j)| over pairs with t_i < center_j - width
    double causality_defect() const;
};

} // namespace canlab

#endif
