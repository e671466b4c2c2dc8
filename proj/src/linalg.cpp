#include "canlab/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace canlab {

double Vec2d::norm() const { return std::sqrt(x * x + y * y); }

double Vec2c::norm() const { return std::sqrt(norm_sq()); }

Mat2d Mat2d::rotation(double phi) {
    const double c = std::cos(phi), s = std::sin(phi);
    return {c, -s, s, c};
}

double Mat2d::min_eig_sym() const {
    const double mean = 0.5 * (m00 + m11);
    const double diff = 0.5 * (m00 - m11);
    const double off = 0.5 * (m01 + m10);
    return mean - std::sqrt(diff * diff + off * off);
}

double Mat2d::max_abs() const {
    return std::max(std::max(std::abs(m00), std::abs(m01)),
                    std::max(std::abs(m10), std::abs(m11)));
}

Mat2d Mat2d::operator*(const Mat2d& o) const {
    return {m00 * o.m00 + m01 * o.m10, m00 * o.m01 + m01 * o.m11,
            m10 * o.m00 + m11 * o.m10, m10 * o.m01 + m11 * o.m11};
}

Mat2d Mat2d::inverse() const {
    const double d = det();
    if (d == 0.0) throw std::domain_error("Mat2d::inverse: singular matrix");
    return {m11 / d, -m01 / d, -m10 / d, m00 / d};
}

Mat2c Mat2c::operator*(const Mat2c& o) const {
    return {m00 * o.m00 + m01 * o.m10, m00 * o.m01 + m01 * o.m11,
            m10 * o.m00 + m11 * o.m10, m10 * o.m01 + m11 * o.m11};
}

DenseMatrix DenseMatrix::adjoint() const {
    DenseMatrix r(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) r.at(j, i) = std::conj(at(i, j));
    return r;
}

DenseMatrix DenseMatrix::operator*(const DenseMatrix& o) const {
    if (cols_ != o.rows_) throw std::invalid_argument("DenseMatrix: dimension mismatch in product");
    DenseMatrix r(rows_, o.cols_);
    for (std::size_t i = 0; i < rows_; ++i) {
        for (std::size_t k = 0; k < cols_; ++k) {
            const cplx aik = at(i, k);
            if (aik == cplx(0.0)) continue;
            for (std::size_t j = 0; j < o.cols_; ++j) r.at(i, j) += aik * o.at(k, j);
        }
    }
    return r;
}

DenseMatrix DenseMatrix::operator-(const DenseMatrix& o) const {
    if (rows_ != o.rows_ || cols_ != o.cols_)
        throw std::invalid_argument("DenseMatrix: dimension mismatch in difference");
    DenseMatrix r(rows_, cols_);
    for (std::size_t i = 0; i < data_.size(); ++i) r.data_[i] = data_[i] - o.data_[i];
    return r;
}

std::vector<cplx> DenseMatrix::apply(const std::vector<cplx>& v) const {
    if (v.size() != cols_) throw std::invalid_argument("DenseMatrix::apply: dimension mismatch");
    std::vector<cplx> r(rows_);
    for (std::size_t i = 0; i < rows_; ++i) {
        cplx s = 0.0;
        for (std::size_t j = 0; j < cols_; ++j) s += at(i, j) * v[j];
        r[i] = s;
    }
    return r;
}

double DenseMatrix::frobenius() const {
    double s = 0.0;
    for (const cplx& v : data_) s += std::norm(v);
    return std::sqrt(s);
}

double DenseMatrix::max_abs() const {
    double m = 0.0;
    for (const cplx& v : data_) m = std::max(m, std::abs(v));
    return m;
}

double DenseMatrix::hermiticity_dev() const {
    if (rows_ != cols_) throw std::invalid_argument("hermiticity_dev: matrix not square");
    double m = 0.0;
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j <= i; ++j)
            m = std::max(m, std::abs(at(i, j) - std::conj(at(j, i))));
    return m;
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix r(n, n);
    for (std::size_t i = 0; i < n; ++i) r.at(i, i) = 1.0;
    return r;
}

std::vector<double> hermitian_eigenvalues(const DenseMatrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("hermitian_eigenvalues: matrix not square");
    const std::size_t n = a.rows();
    if (n == 0) return {};

    // Work on the symmetrized copy (A + A^H)/2.
    DenseMatrix w(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) w.at(i, j) = 0.5 * (a.at(i, j) + std::conj(a.at(j, i)));

    auto off_norm = [&]() {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                if (i != j) s += std::norm(w.at(i, j));
        return std::sqrt(s);
    };

    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(w.at(i, i)));
    scale = std::max(scale, off_norm());
    if (scale == 0.0) return std::vector<double>(n, 0.0);

    const double tol = 1e-14 * scale;
    for (int sweep = 0; sweep < 100 && off_norm() > tol; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const cplx apq = w.at(p, q);
                const double abs_apq = std::abs(apq);
                if (abs_apq <= tol * 1e-2) continue;
                const double app = w.at(p, p).real();
                const double aqq = w.at(q, q).real();
                // Unitary 2x2 annihilating the (p,q) entry:
                //   [c, -conj(s); s, c] with s = e^{i arg(apq)} sin(theta).
                const double theta = 0.5 * std::atan2(2.0 * abs_apq, app - aqq);
                const cplx phase = apq / abs_apq;
                const double c = std::cos(theta);
                const cplx s = phase * std::sin(theta);
                for (std::size_t k = 0; k < n; ++k) {
                    const cplx wkp = w.at(k, p), wkq = w.at(k, q);
                    w.at(k, p) = c * wkp + std::conj(s) * wkq;
                    w.at(k, q) = -s * wkp + c * wkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const cplx wpk = w.at(p, k), wqk = w.at(q, k);
                    w.at(p, k) = c * wpk + s * wqk;
                    w.at(q, k) = -std::conj(s) * wpk + c * wqk;
                }
            }
        }
    }

    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = w.at(i, i).real();
    std::sort(ev.begin(), ev.end());
    return ev;
}

std::vector<double> singular_values(const DenseMatrix& a) {
    const DenseMatrix g = a.adjoint() * a;
    std::vector<double> ev = hermitian_eigenvalues(g);
    std::vector<double> sv(ev.size());
    for (std::size_t i = 0; i < ev.size(); ++i)
        sv[i] = std::sqrt(std::max(0.0, ev[ev.size() - 1 - i]));
    return sv;
}

std::vector<cplx> solve_dense(DenseMatrix a, std::vector<cplx> b) {
    const std::size_t n = a.rows();
    if (a.cols() != n || b.size() != n)
        throw std::invalid_argument("solve_dense: dimension mismatch");
    double scale = a.max_abs();
    if (scale == 0.0) throw std::runtime_error("solve_dense: zero matrix");

    for (std::size_t k = 0; k < n; ++k) {
        std::size_t piv = k;
        for (std::size_t i = k + 1; i < n; ++i)
            if (std::abs(a.at(i, k)) > std::abs(a.at(piv, k))) piv = i;
        if (std::abs(a.at(piv, k)) < 1e-13 * scale)
            throw std::runtime_error("solve_dense: matrix is numerically singular");
        if (piv != k) {
            for (std::size_t j = 0; j < n; ++j) std::swap(a.at(k, j), a.at(piv, j));
            std::swap(b[k], b[piv]);
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            const cplx m = a.at(i, k) / a.at(k, k);
            if (m == cplx(0.0)) continue;
            for (std::size_t j = k; j < n; ++j) a.at(i, j) -= m * a.at(k, j);
            b[i] -= m * b[k];
        }
    }
    std::vector<cplx> x(n);
    for (std::size_t k = n; k-- > 0;) {
        cplx s = b[k];
        for (std::size_t j = k + 1; j < n; ++j) s -= a.at(k, j) * x[j];
        x[k] = s / a.at(k, k);
    }
    return x;
}

} // namespace canlab
