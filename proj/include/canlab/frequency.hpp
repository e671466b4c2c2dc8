#ifndef CANLAB_FREQUENCY_HPP
#define CANLAB_FREQUENCY_HPP

#include "canlab/builders.hpp"
#include "canlab/core.hpp"

#include <functional>
#include <map>
#include <memory>
#include <mutex>

namespace canlab {

// Cauchy problem -J Y' = lambda H Y, Y(0) = C, integrated as Y' = lambda J H Y
// by RK4 over the sampled Hamiltonian. |Y| is guarded against overflow.
Vec2c solve_transfer(const HamiltonianField& H, double x_extent, cplx lambda,
                     Vec2c C0 = {1.0, 0.0});

// Fundamental matrix of the same flow; det stays 1 (tr JH = 0).
Mat2c transfer_fundamental(const HamiltonianField& H, double x_extent, cplx lambda);

// E_x(lambda) = Y1 + i Y2 evaluated from the transfer flow, with a sample cache.
class DeBrangesFunction {
public:
    static DeBrangesFunction from_hamiltonian(const HamiltonianField& H, double x_extent,
                                              Vec2c C0 = {1.0, 0.0});
    static DeBrangesFunction from_callable(std::function<cplx(cplx)> f);

    cplx operator()(cplx lambda) const;
    double extent() const { return extent_; }

private:
    DeBrangesFunction() = default;

    // append-only sample cache behind a coarse lock; recomputation is value-identical
    struct Cache {
        std::mutex mutex;
        std::map<std::pair<double, double>, cplx> values;
    };

    std::function<cplx(cplx)> eval_;
    double extent_ = 0.0;
    std::shared_ptr<Cache> cache_;
};

struct HBReport {
    std::vector<cplx> points;
    std::vector<double> margins;    // |E(z)| - |E(conj z)|
    double min_margin = 0.0;
    bool pass = false;
};

// Hermite-Biehler margin on upper-half-plane samples.
HBReport hb_check(const DeBrangesFunction& e, const std::vector<cplx>& zs);

// The standard test grid {a + ib : a = -5..5, b in {0.1, 1, 10}}.
std::vector<cplx> standard_hb_grid();

// J_z(xi) = [conj(E(z)) E(xi) - E(conj z) conj(E(conj xi))] / (2i (conj z - xi)),
// with the removable point xi ~ conj(z) handled by a centered Richardson limit.
cplx reproducing_kernel(const DeBrangesFunction& e, cplx z, cplx xi);

struct KernelSample {
    std::vector<cplx> points;
    DenseMatrix gram;               // J_{z_i}(z_j)
    double hermiticity_dev = 0.0;
    double min_eigenvalue = 0.0;
    double scale = 0.0;             // largest |eigenvalue|
    bool psd = false;
};

KernelSample kernel_gram(const DeBrangesFunction& e, const std::vector<cplx>& points);

// Dirichlet spectral solution J theta_x + psi theta = z D theta, theta(0) = (0,1),
// sampled on the reduction grid.
std::vector<Vec2c> solve_theta_dirichlet(const DiracReduction& red, cplx z);

// Wronskian-type determinant against the companion solution theta(0) = (1,0);
// constant in x for the exact flow.
double theta_det_dev(const DiracReduction& red, cplx z);

// F(lambda) = int (f1 theta1 + f2 theta2) dx over the reduction grid per lambda.
std::vector<cplx> fourier_image(const std::vector<Vec2c>& state, const DiracReduction& red,
                                const std::vector<double>& lambda_grid);

struct WeightedInnerResult {
    cplx value{0.0, 0.0};
    double tail_bound = 0.0;   // algebraic estimate of the truncated tails
};

// [F,G] = (1/pi) int conj(F) G / |E|^2 d lambda over the truncated grid; a test
// utility for closed-form cases, not a spectral pairing.
WeightedInnerResult debranges_inner(const std::vector<cplx>& F, const std::vector<cplx>& G,
                                    const std::vector<cplx>& E_on_grid,
                                    const std::vector<double>& lambda_grid);

} // namespace canlab

#endif
