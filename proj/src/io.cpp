#include "canlab/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace canlab {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    return out;
}

} // namespace

void write_hamiltonian_csv(const std::string& path, const HamiltonianField& H) {
    const HamiltonianField& f = H;
    std::ofstream out = open_out(path);
    out << "x,h00,h01,h10,h11,det,trace,tau\n";
    if (f.is_sampled()) {
        const Eikonal eik = eikonal(f);
        const SpaceGrid& g = f.grid();
        for (std::size_t i = 0; i < g.n_points; ++i) {
            const Mat2d m = f.at(i);
            out << format_double(g.x(i)) << ',' << format_double(m.m00) << ','
                << format_double(m.m01) << ',' << format_double(m.m10) << ','
                << format_double(m.m11) << ',' << format_double(f.det_at(i)) << ','
                << format_double(f.trace_at(i)) << ',' << format_double(eik.tau[i]) << '\n';
        }
    } else {
        const auto& nodes = f.partition();
        for (std::size_t j = 0; j < f.intervals(); ++j) {
            const Mat2d m = Mat2d::outer(f.units()[j]);
            const double mid = 0.5 * (nodes[j] + nodes[j + 1]);
            out << format_double(mid) << ',' << format_double(m.m00) << ','
                << format_double(m.m01) << ',' << format_double(m.m10) << ','
                << format_double(m.m11) << ",0,1,0\n";
        }
    }
}

void write_reduction_csv(const std::string& path, const DiracReduction& red) {
    std::ofstream out = open_out(path);
    out << "x,d1,d2,phi,psi\n";
    for (std::size_t i = 0; i < red.grid.n_points; ++i) {
        out << format_double(red.grid.x(i)) << ',' << format_double(red.d1[i]) << ','
            << format_double(red.d2[i]) << ','
            << format_double(red.phi.empty() ? 0.0 : red.phi[i]) << ','
            << format_double(red.psi[i]) << '\n';
    }
}

void write_trace_csv(const std::string& path, const TimeGrid& tg,
                     const std::vector<cplx>& trace) {
    std::ofstream out = open_out(path);
    out << "t,re,im\n";
    for (std::size_t k = 0; k < trace.size(); ++k)
        out << format_double(tg.t(k)) << ',' << format_double(trace[k].real()) << ','
            << format_double(trace[k].imag()) << '\n';
}

void write_field_csv(const std::string& path, const EvolutionField& f) {
    std::ofstream out = open_out(path);
    out << "t,x,re1,im1,re2,im2\n";
    for (std::size_t k = 0; k < f.time().n_samples(); ++k) {
        for (std::size_t i = 0; i < f.space().n_points; ++i) {
            const Vec2c v = f.at(i, k);
            out << format_double(f.time().t(k)) << ',' << format_double(f.space().x(i)) << ','
                << format_double(v.a.real()) << ',' << format_double(v.a.imag()) << ','
                << format_double(v.b.real()) << ',' << format_double(v.b.imag()) << '\n';
        }
    }
}

void write_lambda_sweep_csv(const std::string& path, const std::vector<double>& lambda,
                            const std::vector<cplx>& e_values,
                            const std::vector<double>& hb_margin) {
    std::ofstream out = open_out(path);
    out << "lambda,re_e,im_e,abs_e,hb_margin\n";
    for (std::size_t i = 0; i < lambda.size(); ++i) {
        out << format_double(lambda[i]) << ',' << format_double(e_values[i].real()) << ','
            << format_double(e_values[i].imag()) << ',' << format_double(std::abs(e_values[i]))
            << ',' << format_double(hb_margin[i]) << '\n';
    }
}

void write_bt_csv(const std::string& path, const BTElement& el) {
    std::ofstream out = open_out(path);
    out << "lambda,re_k,im_k\n";
    for (std::size_t i = 0; i < el.lambda.size(); ++i)
        out << format_double(el.lambda[i]) << ',' << format_double(el.K[i].real()) << ','
            << format_double(el.K[i].imag()) << '\n';
}

json matrix_to_json(const DenseMatrix& m) {
    json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    std::vector<double> re, im;
    re.reserve(m.rows() * m.cols());
    im.reserve(m.rows() * m.cols());
    for (const cplx& v : m.data()) {
        re.push_back(v.real());
        im.push_back(v.imag());
    }
    j["re"] = re;
    j["im"] = im;
    return j;
}

json jacobi_to_json(const JacobiSystem& sys) {
    json j;
    j["lengths"] = sys.lengths;
    std::vector<double> ex, ey;
    for (const Vec2d& e : sys.units) {
        ex.push_back(e.x);
        ey.push_back(e.y);
    }
    j["e_x"] = ex;
    j["e_y"] = ey;
    j["q"] = sys.q;
    j["rho"] = sys.rho;
    return j;
}

JacobiSystem jacobi_from_json(const json& j) {
    if (!j.contains("lengths") || !j.contains("angles"))
        throw std::invalid_argument("jacobi_from_json: need lengths and angles arrays");
    const std::vector<double> lengths = j.at("lengths").get<std::vector<double>>();
    const std::vector<double> angles = j.at("angles").get<std::vector<double>>();
    if (lengths.size() != angles.size())
        throw std::invalid_argument("jacobi_from_json: lengths/angles size mismatch");
    std::optional<double> q1;
    if (j.contains("q1_override")) q1 = j.at("q1_override").get<double>();
    return build_jacobi_from_partition(lengths, units_from_angles(angles), q1);
}

JacobiSystem load_jacobi_file(const std::string& path) {
    return jacobi_from_json(load_json_file(path));
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out = open_out(path);
    out << j.dump(2) << '\n';
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    json j;
    in >> j;
    return j;
}

} // namespace canlab
