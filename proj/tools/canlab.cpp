// canlab command line front-end: builds systems from JSON configs, runs
// simulations and verification suites, writes CSV/JSON results.
//
// Exit codes: 0 pass, 1 tolerance gate failed, 2 input or solver error.

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <thread>

#include "canlab/bcmethod.hpp"
#include "canlab/builders.hpp"
#include "canlab/core.hpp"
#include "canlab/frequency.hpp"
#include "canlab/io.hpp"
#include "canlab/timedomain.hpp"

namespace fs = std::filesystem;
using namespace canlab;

namespace {

constexpr int kSchemaVersion = 1;

struct ToleranceFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

RealFn make_preset(const std::string& name) {
    if (name == "q_zero") return [](double) { return 0.0; };
    if (name.rfind("q_const:", 0) == 0) {
        const double c = std::stod(name.substr(8));
        return [c](double) { return c; };
    }
    if (name == "rho_quad") return [](double x) { return (1.0 + x) * (1.0 + x); };
    if (name == "dirac_free") return [](double) { return 0.0; };
    throw std::invalid_argument("unknown coefficient preset: " + name);
}

RealFn coefficient_from_json(const json& j, const std::string& key, std::uint64_t seed,
                             double x_span) {
    if (!j.contains(key)) throw std::invalid_argument("missing coefficient block: " + key);
    const json& c = j.at(key);
    if (c.contains("preset")) return make_preset(c.at("preset").get<std::string>());
    if (c.contains("constant")) {
        const double v = c.at("constant").get<double>();
        return [v](double) { return v; };
    }
    if (c.contains("random_amplitude")) {
        const double a = c.at("random_amplitude").get<double>();
        return random_smooth_function(seed, a, x_span);
    }
    throw std::invalid_argument("coefficient block needs preset, constant or random_amplitude");
}

SpaceGrid grid_from_json(const json& j) {
    const json& g = j.at("grid");
    return SpaceGrid(g.at("x_max").get<double>(), g.at("n_points").get<std::size_t>());
}

BoundaryControl control_from_json(const json& j, const TimeGrid& tg) {
    const json& c = j.at("control");
    const double center = c.at("center").get<double>();
    const double width = c.at("width").get<double>();
    if (c.value("normalized", false)) return smoothed_delta(tg, center, width);
    const cplx amp(c.value("amplitude_re", 1.0), c.value("amplitude_im", 0.0));
    return smooth_bump(tg, center, width, amp);
}

HamiltonianField hamiltonian_from_json(const json& j, std::uint64_t seed) {
    const json& h = j.at("hamiltonian");
    const std::string kind = h.value("kind", "preset");
    if (kind == "preset") {
        const std::string name = h.at("preset").get<std::string>();
        const SpaceGrid g = grid_from_json(j);
        if (name == "H_half_identity") {
            std::vector<double> a(g.n_points, 0.5), b(g.n_points, 0.0), d(g.n_points, 0.5);
            return HamiltonianField::sampled(g, a, b, d, HamiltonianClass::StrictlyPositive, 0.5);
        }
        throw std::invalid_argument("unknown Hamiltonian preset: " + name);
    }
    if (kind == "random") return random_strictly_positive_H(seed, grid_from_json(j));
    if (kind == "density")
        return build_H_from_density(coefficient_from_json(h, "rho", seed,
                                                          j.at("grid").at("x_max").get<double>()),
                                    grid_from_json(j));
    throw std::invalid_argument("unknown Hamiltonian kind: " + kind);
}

DiracReduction reduction_from_json(const json& j, std::uint64_t seed) {
    const json& r = j.at("reduction");
    const SpaceGrid g = grid_from_json(j);
    const std::string kind = r.value("kind", "free");
    if (kind == "free") {
        std::vector<double> half(g.n_points, 0.5), zero(g.n_points, 0.0);
        return make_reduction(g, half, half, zero);
    }
    if (kind == "random") return random_smooth_reduction(seed, g);
    if (kind == "from_hamiltonian") return diagonalize_H(hamiltonian_from_json(j, seed));
    throw std::invalid_argument("unknown reduction kind: " + kind);
}

json solver_meta_json(const SolverMeta& m) {
    return json{{"scheme", m.scheme},
                {"cfl", m.cfl},
                {"h", m.h},
                {"dt", m.dt},
                {"coefficient_hash", m.coefficient_hash}};
}

// ---------------------------------------------------------------------------

void run_hamiltonian_scenario(const json& sc, std::uint64_t seed, const fs::path& dir) {
    const std::string system = sc.at("system").get<std::string>();
    json meta{{"schema_version", kSchemaVersion}, {"system", system}};

    if (system == "wave-potential") {
        const SpaceGrid g = grid_from_json(sc);
        const auto built = build_H_from_potential(
            coefficient_from_json(sc, "coefficients", seed, g.x_max), g);
        write_hamiltonian_csv((dir / "hamiltonian.csv").string(), built.H);
        meta["wronskian_dev"] = built.basis.wronskian_dev();
        meta["rank_class"] = "rank1-degenerate";
    } else if (system == "wave-density") {
        const SpaceGrid g = grid_from_json(sc);
        const HamiltonianField H = build_H_from_density(
            coefficient_from_json(sc, "coefficients", seed, g.x_max), g);
        write_hamiltonian_csv((dir / "hamiltonian.csv").string(), H);
        write_reduction_csv((dir / "reduction.csv").string(), diagonalize_H(H));
        meta["rank_class"] = "strictly-positive";
        meta["delta"] = H.delta();
    } else if (system == "dirac") {
        const SpaceGrid g = grid_from_json(sc);
        const auto built = build_H_from_dirac(
            coefficient_from_json(sc, "p", seed, g.x_max),
            coefficient_from_json(sc, "q", seed + 1, g.x_max), g);
        write_hamiltonian_csv((dir / "hamiltonian.csv").string(), built.H);
        write_reduction_csv((dir / "reduction.csv").string(), diagonalize_H(built.H));
        meta["det_dev"] = built.fundamental.det_dev();
        meta["rank_class"] = "strictly-positive";
    } else if (system == "jacobi") {
        JacobiSystem sys;
        if (sc.contains("file"))
            sys = load_jacobi_file(sc.at("file").get<std::string>());
        else if (sc.value("preset", "") == "jacobi_quarter_turns")
            sys = jacobi_quarter_turns(sc.value("intervals", std::size_t(8)));
        else
            sys = jacobi_from_json(sc);
        write_json_file((dir / "jacobi.json").string(), jacobi_to_json(sys));
        const HamiltonianField H = build_H_jacobi(sys);
        write_hamiltonian_csv((dir / "hamiltonian.csv").string(), H);
        meta["rank_class"] = "piecewise-rank1";
        meta["idempotency_dev"] = H.idempotency_dev();
    } else if (system == "canonical-i") {
        const HamiltonianField H = hamiltonian_from_json(sc, seed);
        write_hamiltonian_csv((dir / "hamiltonian.csv").string(), H);
        write_reduction_csv((dir / "reduction.csv").string(), diagonalize_H(H));
        meta["rank_class"] = "strictly-positive";
    } else {
        throw std::invalid_argument("unknown system: " + system);
    }
    write_json_file((dir / "meta.json").string(), meta);
}

void run_simulate_scenario(const json& sc, std::uint64_t seed, const fs::path& dir) {
    const std::string system = sc.at("system").get<std::string>();
    const bool store = sc.value("store_field", false);
    SolveOptions opts{store};
    json report{{"schema_version", kSchemaVersion}, {"system", system}};

    if (system == "jacobi-continuous" || system == "jacobi-discrete") {
        JacobiSystem sys = sc.value("preset", "") == "jacobi_quarter_turns"
                               ? jacobi_quarter_turns(sc.value("intervals", std::size_t(12)))
                               : jacobi_from_json(sc);
        const std::size_t truncation = sc.value("truncation", sys.rows());
        if (system == "jacobi-continuous") {
            const double t_max = sc.at("time").at("t_max").get<double>();
            const std::size_t steps = sc.at("time").value("n_steps", std::size_t(0));
            const TimeGrid tg = steps ? TimeGrid(t_max, steps)
                                      : TimeGrid(t_max, static_cast<std::size_t>(std::ceil(
                                                            t_max * sys.norm_bound() / 0.4)) + 2);
            const LatticeEvolution ev =
                solve_jacobi_continuous(sys, control_from_json(sc, tg), truncation, tg);
            write_trace_csv((dir / "response.csv").string(), tg, ev.response);
            report["tail_max"] = ev.tail_max;
            report["tail_warning"] = ev.tail_warning;
        } else {
            const std::size_t steps = sc.at("time").at("steps").get<std::size_t>();
            std::vector<cplx> h(steps + 1, 0.0);
            if (sc.contains("control_samples")) {
                const auto vals = sc.at("control_samples").get<std::vector<double>>();
                for (std::size_t t = 0; t < std::min(h.size(), vals.size()); ++t) h[t] = vals[t];
            } else {
                h[2] = 1.0;
            }
            const auto rule = sc.value("discrete_dt", "sum") == "difference"
                                  ? DiscreteTimeRule::Difference
                                  : DiscreteTimeRule::Sum;
            const DiscreteLatticeEvolution ev =
                solve_jacobi_discrete(sys, h, truncation, steps, rule);
            json resp = json::array();
            for (const cplx& v : ev.response)
                resp.push_back(json{{"re", v.real()}, {"im", v.imag()}});
            report["response"] = resp;
        }
        write_json_file((dir / "report.json").string(), report);
        return;
    }

    const SpaceGrid g = grid_from_json(sc);
    const double t_max = sc.at("time").at("t_max").get<double>();
    const double cfl = sc.at("time").value("cfl", 0.45);
    EvolutionResult res;
    if (system == "wave-potential") {
        const TimeGrid tg = make_time_grid(g, t_max, 1.0, std::min(cfl, 0.95));
        res = solve_wave_potential(coefficient_from_json(sc, "coefficients", seed, g.x_max),
                                   control_from_json(sc, tg), g, tg, opts);
    } else if (system == "wave-density") {
        const RealFn rho = coefficient_from_json(sc, "coefficients", seed, g.x_max);
        double rho_min = rho(0.0);
        for (std::size_t i = 0; i < g.n_points; ++i) rho_min = std::min(rho_min, rho(g.x(i)));
        const TimeGrid tg = make_time_grid(g, t_max, 1.0 / std::sqrt(rho_min), std::min(cfl, 0.95));
        res = solve_wave_density(rho, control_from_json(sc, tg), g, tg, opts);
    } else if (system == "dirac") {
        const TimeGrid tg = make_time_grid(g, t_max, 1.0, cfl);
        res = solve_dirac(coefficient_from_json(sc, "p", seed, g.x_max),
                          coefficient_from_json(sc, "q", seed + 1, g.x_max),
                          control_from_json(sc, tg), g, tg, opts);
    } else if (system == "dirac-type") {
        const DiracReduction red = reduction_from_json(sc, seed);
        const TimeGrid tg = make_time_grid(g, t_max, red.max_speed(), cfl);
        const auto sign = sc.value("auxiliary", false) ? DiracTypeSign::Auxiliary
                                                       : DiracTypeSign::Forward;
        res = solve_dirac_type(red, control_from_json(sc, tg), sign, tg, opts);
    } else if (system == "canonical-i") {
        const HamiltonianField H = hamiltonian_from_json(sc, seed);
        const DiracReduction red = diagonalize_H(H);
        const TimeGrid tg = make_time_grid(g, t_max, red.max_speed(), cfl);
        res = solve_canonical_i(H, control_from_json(sc, tg), tg, opts).evolution;
    } else {
        throw std::invalid_argument("unknown system: " + system);
    }
    write_trace_csv((dir / "response.csv").string(), res.time, res.response);
    write_trace_csv((dir / "boundary.csv").string(), res.time, res.boundary1);
    if (store) write_field_csv((dir / "field.csv").string(), res.field);
    report["meta"] = solver_meta_json(res.meta);
    write_json_file((dir / "report.json").string(), report);
}

void run_equivalence_scenario(const json& sc, std::uint64_t seed, const fs::path& dir) {
    const std::string pair = sc.at("pair").get<std::string>();
    const double tol = sc.at("tolerance").get<double>();
    if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
    double discrepancy = 0.0;
    json report{{"schema_version", kSchemaVersion}, {"pair", pair}, {"tolerance", tol}};

    if (pair == "wave-potential") {
        const SpaceGrid g = grid_from_json(sc);
        const double t_max = sc.at("time").at("t_max").get<double>();
        const TimeGrid tg = make_time_grid(g, t_max, 1.0, 0.9);
        const RealFn q = coefficient_from_json(sc, "coefficients", seed, g.x_max);
        const BoundaryControl f = control_from_json(sc, tg);
        const EvolutionResult wave = solve_wave_potential(q, f, g, tg);
        const auto basis = solve_schrodinger_basis(q, g);
        const EvolutionField c = canonical_fields_from_wave(wave, basis);
        discrepancy = relative_l2(extrapolate_trace_to_boundary(c, 1), wave.response);
    } else if (pair == "wave-density") {
        const SpaceGrid g = grid_from_json(sc);
        const double t_max = sc.at("time").at("t_max").get<double>();
        const RealFn rho = coefficient_from_json(sc, "coefficients", seed, g.x_max);
        double rho_min = rho(0.0);
        for (std::size_t i = 0; i < g.n_points; ++i) rho_min = std::min(rho_min, rho(g.x(i)));
        const TimeGrid tg = make_time_grid(g, t_max, 1.0 / std::sqrt(rho_min), 0.9);
        const EvolutionResult wave = solve_wave_density(rho, control_from_json(sc, tg), g, tg);
        const EvolutionField c = canonical_fields_from_density_wave(wave);
        std::vector<cplx> canonical = extrapolate_trace_to_boundary(c, 1);
        std::vector<cplx> direct(wave.response.size());
        const cplx i_unit(0.0, 1.0);
        for (std::size_t k = 0; k < direct.size(); ++k) direct[k] = i_unit * wave.response[k];
        discrepancy = relative_l2(canonical, direct);
    } else if (pair == "dirac") {
        const SpaceGrid g = grid_from_json(sc);
        const double t_max = sc.at("time").at("t_max").get<double>();
        const TimeGrid tg = make_time_grid(g, t_max, 1.0, 0.45);
        const RealFn p = coefficient_from_json(sc, "p", seed, g.x_max);
        const RealFn q = coefficient_from_json(sc, "q", seed + 1, g.x_max);
        const EvolutionResult dir_res = solve_dirac(p, q, control_from_json(sc, tg), g, tg);
        const auto built = build_H_from_dirac(p, q, g);
        const EvolutionField c = canonical_fields_from_dirac(dir_res, built.fundamental);
        discrepancy = relative_l2(extrapolate_trace_to_boundary(c, 1), dir_res.response);
    } else if (pair == "jacobi-discrete") {
        JacobiSystem sys = sc.value("preset", "") == "jacobi_quarter_turns"
                               ? jacobi_quarter_turns(sc.value("intervals", std::size_t(12)))
                               : jacobi_from_json(sc);
        const std::size_t steps = sc.at("time").at("steps").get<std::size_t>();
        const std::size_t truncation = sc.value("truncation", sys.rows());
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::vector<cplx> h(steps + 1, 0.0);
        for (std::size_t t = 2; t <= steps; ++t) h[t] = cplx(u(rng), u(rng));
        const DiscreteLatticeEvolution ev = solve_jacobi_discrete(sys, h, truncation, steps);
        const auto lhs = lattice_boundary_trace(sys, ev.response, h);
        const auto rhs = lattice_boundary_closed_form(sys, ev.response, h);
        discrepancy = relative_l2(lhs, rhs);
    } else if (pair == "canonical-i") {
        const HamiltonianField H = hamiltonian_from_json(sc, seed);
        const DiracReduction red = diagonalize_H(H);
        const SpaceGrid g = H.grid();
        const double t_max = sc.at("time").at("t_max").get<double>();
        const TimeGrid tg = make_time_grid(g, t_max, red.max_speed(), 0.45);
        const BoundaryControl f = control_from_json(sc, tg);
        const CanonicalResult can = solve_canonical_i(H, f, tg);
        // independent Dirichlet run of the rotated picture with the explicit data
        const double c0 = std::cos(red.phi[0]), s0 = std::sin(red.phi[0]);
        std::vector<cplx> gctl(tg.n_samples());
        for (std::size_t k = 0; k < gctl.size(); ++k)
            gctl[k] = c0 * f.samples[k] + s0 * can.evolution.response[k];
        const BoundaryControl gc(tg, gctl, 0.0, tg.t_max);
        const EvolutionResult aux = solve_dirac_type(red, gc, DiracTypeSign::Auxiliary, tg);
        std::vector<cplx> predicted(tg.n_samples());
        for (std::size_t k = 0; k < predicted.size(); ++k)
            predicted[k] = -s0 * f.samples[k] + c0 * can.evolution.response[k];
        discrepancy = relative_l2(aux.response, predicted);
    } else {
        throw std::invalid_argument("unknown pair: " + pair);
    }

    report["discrepancy"] = discrepancy;
    report["pass"] = discrepancy <= tol;
    write_json_file((dir / "equivalence.json").string(), report);
    if (discrepancy > tol)
        throw ToleranceFailure("equivalence discrepancy " + format_double(discrepancy) +
                               " above tolerance " + format_double(tol));
}

void run_debranges_scenario(const json& sc, std::uint64_t seed, const fs::path& dir) {
    const HamiltonianField H = hamiltonian_from_json(sc, seed);
    const double extent = sc.value("extent", H.grid().x_max);
    const json& lam = sc.at("lambda");
    const double lo = lam.at("min").get<double>();
    const double hi = lam.at("max").get<double>();
    const double step = lam.at("step").get<double>();
    if (!(step > 0.0) || !(hi > lo)) throw std::invalid_argument("empty lambda grid");

    const DeBrangesFunction e = DeBrangesFunction::from_hamiltonian(H, extent);
    std::vector<double> lambda;
    for (double v = lo; v <= hi + 0.5 * step; v += step) lambda.push_back(v);
    std::vector<cplx> values(lambda.size());
    std::vector<double> margins(lambda.size());
    for (std::size_t i = 0; i < lambda.size(); ++i) {
        values[i] = e(lambda[i]);
        const cplx z(lambda[i], 1.0);
        margins[i] = std::abs(e(z)) - std::abs(e(std::conj(z)));
    }
    write_lambda_sweep_csv((dir / "sweep.csv").string(), lambda, values, margins);

    const HBReport hb = hb_check(e, standard_hb_grid());
    write_json_file((dir / "hb.json").string(),
                    json{{"schema_version", kSchemaVersion},
                         {"min_margin", hb.min_margin},
                         {"pass", hb.pass}});

    std::vector<cplx> pts;
    if (sc.contains("gram_points")) {
        for (const auto& p : sc.at("gram_points"))
            pts.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    } else {
        for (int k = 0; k < 10; ++k)
            pts.emplace_back(-2.0 + 0.45 * k, 0.3 + 0.2 * ((k * 7) % 5));
    }
    const KernelSample ks = kernel_gram(e, pts);
    json gj = matrix_to_json(ks.gram);
    gj["min_eigenvalue"] = ks.min_eigenvalue;
    gj["psd"] = ks.psd;
    gj["schema_version"] = kSchemaVersion;
    write_json_file((dir / "gram.json").string(), gj);

    if (H.cls() == HamiltonianClass::StrictlyPositive && !hb.pass)
        throw ToleranceFailure("Hermite-Biehler margin not positive on the test grid");
}

void run_bcmethod_scenario(const json& sc, std::uint64_t seed, const fs::path& dir) {
    const DiracReduction red = reduction_from_json(sc, seed);
    const double t_max = sc.at("time").at("t_max").get<double>();
    const TimeGrid tg = make_time_grid(red.grid, t_max, red.max_speed(), 0.45);
    const std::size_t n_controls = sc.value("n_controls", std::size_t(12));

    const ControlOperatorMatrix wext =
        control_operator(red, tg, ControlMode::Extended, n_controls);
    const ConnectingOperatorMatrix ct = connecting_operator(wext);
    const IsomorphismReport iso = controllability_check(wext);
    const ControlOperatorMatrix wsingle =
        control_operator(red, tg, ControlMode::Single, n_controls);
    const ReachabilityReport reach = reachability_defect(wsingle);

    json ctj = matrix_to_json(ct.matrix);
    ctj["eigenvalues"] = ct.eigenvalues;
    ctj["hermiticity_dev"] = ct.hermiticity_dev;
    ctj["min_eigenvalue"] = ct.min_eigenvalue;
    write_json_file((dir / "ct.json").string(), ctj);

    json report{{"schema_version", kSchemaVersion},
                {"sigma_min", iso.sigma_min},
                {"sigma_max", iso.sigma_max},
                {"isomorphism_pass", iso.pass},
                {"single_defect", reach.defect},
                {"ct_psd", ct.min_eigenvalue >= -1e-10 * ct.norm},
                {"singular_values", iso.singular_values}};

    // wavefront check with a narrow probe
    const double probe_width = std::max(6.0 * tg.dt(), 0.02 * t_max);
    const double probe_center = probe_width + 2.0 * tg.dt();
    const BoundaryControl probe = smoothed_delta(tg, probe_center, probe_width);
    const EvolutionResult run = solve_dirac_type(red, probe, DiracTypeSign::Forward, tg);
    const WavefrontReport wf =
        wavefront_amplitude(run, red, solve_amplitude_A(red), probe_center, probe_width);
    report["wavefront_max_rel_dev"] = wf.max_rel_dev;
    {
        std::ofstream out(dir / "wavefront.csv");
        out << "x,field_ratio,amp_ratio\n";
        for (std::size_t i = 0; i < wf.x.size(); ++i)
            out << format_double(wf.x[i]) << ',' << format_double(wf.field_ratio[i]) << ','
                << format_double(wf.amp_ratio[i]) << '\n';
    }

    // sampled frequency-image element of a pair resolvable in the basis
    {
        std::vector<double> lams;
        for (double v = -6.0; v <= 6.0 + 1e-9; v += 0.25) lams.push_back(v);
        const auto ct_ptr = std::make_shared<const ConnectingOperatorMatrix>(ct);
        const BoundaryControl pair_probe =
            smoothed_delta(tg, 0.5 * t_max, 0.08 * t_max);
        const BTElement el = bt_element(wext, ct_ptr, pair_probe, pair_probe, lams);
        write_bt_csv((dir / "bt.csv").string(), el);
        const cplx norm2 = bt_inner(el, el);
        report["bt_probe_norm_sq"] = norm2.real();
    }
    write_json_file((dir / "report.json").string(), report);

    if (!iso.pass) throw ToleranceFailure("extended control operator failed the isomorphism gate");
    if (!(ct.min_eigenvalue >= -1e-10 * ct.norm))
        throw ToleranceFailure("connecting operator not positive semidefinite");
}

// ---------------------------------------------------------------------------

using ScenarioRunner = void (*)(const json&, std::uint64_t, const fs::path&);

int run_command(const std::string& config_path, const std::string& out_dir, unsigned jobs,
                ScenarioRunner runner) {
    json cfg;
    try {
        cfg = load_json_file(config_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    std::vector<json> scenarios;
    if (cfg.contains("scenarios"))
        for (const auto& sc : cfg.at("scenarios")) scenarios.push_back(sc);
    else
        scenarios.push_back(cfg);

    const std::uint64_t seed = cfg.value("seed", std::uint64_t(1));
    std::atomic<int> status{0};

    auto run_one = [&](std::size_t idx) {
        const json& sc = scenarios[idx];
        const std::string name = sc.value("name", "scenario" + std::to_string(idx));
        const fs::path dir = fs::path(out_dir) / name;
        try {
            fs::create_directories(dir);
            runner(sc, seed + idx, dir);
            std::cout << name << ": pass\n";
        } catch (const ToleranceFailure& e) {
            std::cout << name << ": tolerance failure: " << e.what() << '\n';
            int expected = 0;
            status.compare_exchange_strong(expected, 1);
        } catch (const std::exception& e) {
            std::cout << name << ": error: " << e.what() << '\n';
            status.store(2);
        }
    };

    if (jobs <= 1 || scenarios.size() <= 1) {
        for (std::size_t i = 0; i < scenarios.size(); ++i) run_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        const unsigned nthreads = std::min<unsigned>(jobs, scenarios.size());
        for (unsigned t = 0; t < nthreads; ++t)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < scenarios.size();
                     i = next.fetch_add(1))
                    run_one(i);
            });
        for (auto& th : pool) th.join();
    }

    // wall-clock stamp kept out of the deterministic reports
    try {
        const auto now = std::chrono::system_clock::now().time_since_epoch();
        json meta{{"completed_unix_ms",
                   std::chrono::duration_cast<std::chrono::milliseconds>(now).count()}};
        fs::create_directories(out_dir);
        write_json_file((fs::path(out_dir) / "run_meta.json").string(), meta);
    } catch (const std::exception&) {
        // best effort only
    }
    return status.load();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"canlab: canonical-system simulation and verification toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".";
    unsigned jobs = 1;

    ScenarioRunner runner = nullptr;
    auto bind = [&](const char* name, const char* help, ScenarioRunner fn) {
        CLI::App* cmd = app.add_subcommand(name, help);
        cmd->add_option("--config", config_path, "JSON config file")->required();
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--jobs", jobs, "parallel scenarios");
        cmd->callback([&runner, fn] { runner = fn; });
        return cmd;
    };

    bind("hamiltonian", "build Hamiltonians and diagnostics", &run_hamiltonian_scenario);
    bind("simulate", "run a forward simulation", &run_simulate_scenario);
    bind("equivalence", "run a paired-system response comparison", &run_equivalence_scenario);
    bind("debranges", "frequency-domain sweeps, HB margins, kernel Gram", &run_debranges_scenario);
    bind("bcmethod", "control/connecting operators and wavefront checks", &run_bcmethod_scenario);

    CLI11_PARSE(app, argc, argv);
    return run_command(config_path, out_dir, jobs, runner);
}
