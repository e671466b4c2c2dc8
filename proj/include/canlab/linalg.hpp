#ifndef CANLAB_LINALG_HPP
#define CANLAB_LINALG_HPP

#include <complex>
#include <vector>
#include <cstddef>

namespace canlab {

using cplx = std::complex<double>;

// 2-vectors and 2x2 matrices; everything here is by value.

struct Vec2d {
    double x = 0.0, y = 0.0;

    double dot(const Vec2d& o) const { return x * o.x + y * o.y; }
    double norm() const;
    // e_perp = J e with J = [[0,1],[-1,0]]
    Vec2d perp() const { return {y, -x}; }
};

struct Vec2c {
    cplx a{0.0, 0.0}, b{0.0, 0.0};

    Vec2c operator+(const Vec2c& o) const { return {a + o.a, b + o.b}; }
    Vec2c operator-(const Vec2c& o) const { return {a - o.a, b - o.b}; }
    Vec2c operator*(cplx s) const { return {a * s, b * s}; }
    double norm() const;
    double norm_sq() const { return std::norm(a) + std::norm(b); }
};

inline Vec2c operator*(cplx s, const Vec2c& v) { return v * s; }

// Real symmetric-friendly 2x2 (general storage, used for Hamiltonians and rotations).
struct Mat2d {
    double m00 = 0.0, m01 = 0.0, m10 = 0.0, m11 = 0.0;

    static Mat2d identity() { return {1.0, 0.0, 0.0, 1.0}; }
    static Mat2d sym(double a, double b, double d) { return {a, b, b, d}; }
    static Mat2d rotation(double phi);   // [[cos,-sin],[sin,cos]]
    static Mat2d outer(const Vec2d& e) { return {e.x * e.x, e.x * e.y, e.y * e.x, e.y * e.y}; }

    double det() const { return m00 * m11 - m01 * m10; }
    double trace() const { return m00 + m11; }
    double sym_dev() const { return m01 > m10 ? m01 - m10 : m10 - m01; }
    double min_eig_sym() const;
    double max_abs() const;

    Mat2d transpose() const { return {m00, m10, m01, m11}; }
    Mat2d operator*(const Mat2d& o) const;
    Mat2d operator*(double s) const { return {m00 * s, m01 * s, m10 * s, m11 * s}; }
    Mat2d operator+(const Mat2d& o) const { return {m00 + o.m00, m01 + o.m01, m10 + o.m10, m11 + o.m11}; }
    Mat2d operator-(const Mat2d& o) const { return {m00 - o.m00, m01 - o.m01, m10 - o.m10, m11 - o.m11}; }
    Mat2d inverse() const;
    Vec2d apply(const Vec2d& v) const { return {m00 * v.x + m01 * v.y, m10 * v.x + m11 * v.y}; }
    Vec2c apply(const Vec2c& v) const { return {m00 * v.a + m01 * v.b, m10 * v.a + m11 * v.b}; }
};

struct Mat2c {
    cplx m00{0.0}, m01{0.0}, m10{0.0}, m11{0.0};

    static Mat2c identity() { return {1.0, 0.0, 0.0, 1.0}; }
    cplx det() const { return m00 * m11 - m01 * m10; }
    Mat2c operator*(const Mat2c& o) const;
    Mat2c operator*(cplx s) const { return {m00 * s, m01 * s, m10 * s, m11 * s}; }
    Mat2c operator+(const Mat2c& o) const { return {m00 + o.m00, m01 + o.m01, m10 + o.m10, m11 + o.m11}; }
    Vec2c apply(const Vec2c& v) const { return {m00 * v.a + m01 * v.b, m10 * v.a + m11 * v.b}; }
};

// Dense complex matrix, row-major.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    cplx& at(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    const cplx& at(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
    const std::vector<cplx>& data() const { return data_; }

    DenseMatrix adjoint() const;
    DenseMatrix operator*(const DenseMatrix& o) const;
    DenseMatrix operator-(const DenseMatrix& o) const;
    std::vector<cplx> apply(const std::vector<cplx>& v) const;

    double frobenius() const;
    double max_abs() const;
    // max_i sum_j |a_ij|, crude operator-norm bound
    double hermiticity_dev() const;

    static DenseMatrix identity(std::size_t n);

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<cplx> data_;
};

// Eigenvalues (ascending) of a Hermitian matrix by cyclic complex Jacobi sweeps.
// The input is symmetrized; sizes used in this project stay small (<= ~200).
std::vector<double> hermitian_eigenvalues(const DenseMatrix& a);

// Singular values (descending) of a general matrix via eigenvalues of A^H A.
std::vector<double> singular_values(const DenseMatrix& a);

// Solve A x = b by Gaussian elimination with partial pivoting; throws on a
// numerically singular matrix.
std::vector<cplx> solve_dense(DenseMatrix a, std::vector<cplx> b);

} // namespace canlab

#endif
