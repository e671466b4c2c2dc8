#ifndef CANLAB_IO_HPP
#define CANLAB_IO_HPP

#include "canlab/bcmethod.hpp"
#include "canlab/builders.hpp"
#include "canlab/core.hpp"
#include "canlab/timedomain.hpp"

#include <string>

// single-header nlohmann/json from vendor/
#include <json.hpp>

namespace canlab {

using json = nlohmann::json;

// CSV column layouts are documented in the README; all numeric output uses
// max-precision doubles so identical runs are byte-identical.

// columns: x,h00,h01,h11,det,trace,tau
void write_hamiltonian_csv(const std::string& path, const HamiltonianField& H);
// columns: x,d1,d2,phi,psi
void write_reduction_csv(const std::string& path, const DiracReduction& red);
// columns: t,re,im
void write_trace_csv(const std::string& path, const TimeGrid& tg, const std::vector<cplx>& trace);
// t-major rows: t,x,re1,im1,re2,im2
void write_field_csv(const std::string& path, const EvolutionField& f);
// columns: lambda,re_e,im_e,abs_e,hb_margin  (margin evaluated at lambda + i)
void write_lambda_sweep_csv(const std::string& path, const std::vector<double>& lambda,
                            const std::vector<cplx>& e_values,
                            const std::vector<double>& hb_margin);
// columns: lambda,re_k,im_k
void write_bt_csv(const std::string& path, const BTElement& el);

json matrix_to_json(const DenseMatrix& m);
json jacobi_to_json(const JacobiSystem& sys);

// JacobiSystem input file: {"lengths":[...], "angles":[...], "q1_override": x?}
JacobiSystem jacobi_from_json(const json& j);
JacobiSystem load_jacobi_file(const std::string& path);

void write_json_file(const std::string& path, const json& j);
json load_json_file(const std::string& path);

std::string format_double(double v);

} // namespace canlab

#endif
