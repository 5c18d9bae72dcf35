#pragma once

// Command-line surface: waveform / avgham / simulate / sweep subcommands over
// key=value config files. Exit codes: 0 success, 2 config or usage error,
// 3 numeric failure (commensurability, convergence).

#include <complex>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spinsim/config.hpp"
#include "spinsim/csv_io.hpp"
#include "spinsim/errors.hpp"
#include "spinsim/experiment.hpp"
#include "spinsim/hamiltonian.hpp"
#include "spinsim/parallel.hpp"
#include "spinsim/propagation.hpp"
#include "spinsim/waveform.hpp"

namespace spinsim {

namespace detail {

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("cli: cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw format_error("cli: write to '" + path + "' failed");
}

inline int nearest_condition_k(double omega1, double omega_r) {
    const double x = omega1 / omega_r;
    return (std::abs(x - 0.5) <= std::abs(x - 1.0)) ? 1 : 2;
}

}  // namespace detail

inline void cmd_waveform(const std::string& config_path, const std::string& out_path,
                         std::ostream& out) {
    const RunConfig cfg = load_config(config_path);
    if (cfg.to_family() != SequenceFamily::adnf_arnf)
        throw argument_error("waveform: requires sequence.family = adnf_arnf");
    const SequenceSpec spec = cfg.to_sequence();
    const PulseProgram program = synthesize(spec);
    export_waveform(program, out_path);
    detail::write_text_file(out_path + ".resolved.cfg", cfg.echo());

    double lo = program.samples.front().amplitude, hi = lo;
    for (const WaveformSample& s : program.samples) {
        lo = std::min(lo, s.amplitude);
        hi = std::max(hi, s.amplitude);
    }
    out << "samples = " << program.samples.size() << "\n";
    out << "amplitude_min_rad_per_s = " << detail::fmt_g17(lo) << "\n";
    out << "amplitude_max_rad_per_s = " << detail::fmt_g17(hi) << "\n";
    out << "duration_s = " << detail::fmt_g17(spec.total_duration()) << "\n";
}

inline void cmd_avgham(const std::string& config_path, const std::string& out_path,
                       std::ostream& out) {
    const RunConfig cfg = load_config(config_path);
    const SpinSystem sys = cfg.to_system();
    if (sys.n_spins != 2 || sys.couplings.size() != 1)
        throw argument_error("avgham: requires a two-spin system with one coupling");
    const DipolarCoupling& c = sys.couplings.front();
    const double omega1 = two_pi * cfg.omega1_hz;
    if (!(omega1 > 0.0)) throw argument_error("avgham: sequence.omega1_hz must be positive");

    Operator lhs, rhs;
    if (cfg.spin_rate_hz == 0.0) {
        const auto [l, r] = static_average_check(c, omega1);
        lhs = l;
        rhs = r;
        out << "mode = static\n";
    } else {
        const double omega_r = two_pi * cfg.spin_rate_hz;
        lhs = average_dipolar_numeric(c, omega1, omega_r, 1);
        const int k = detail::nearest_condition_k(omega1, omega_r);
        rhs = average_dipolar_closed(c, k, 2);
        out << "mode = spinning\n";
        out << "k = " << k << "\n";
    }
    out << "numeric_norm = " << detail::fmt_g17(lhs.norm()) << "\n";
    out << "closed_norm = " << detail::fmt_g17(rhs.norm()) << "\n";
    out << "frobenius_distance = " << detail::fmt_g17((lhs - rhs).norm()) << "\n";

    if (!out_path.empty()) {
        std::ofstream csv(out_path, std::ios::binary);
        if (!csv) throw format_error("cli: cannot open '" + out_path + "' for writing");
        csv << "row,col,numeric_re,numeric_im,closed_re,closed_im\n";
        for (Eigen::Index i = 0; i < lhs.rows(); ++i)
            for (Eigen::Index j = 0; j < lhs.cols(); ++j)
                csv << i << ',' << j << ',' << detail::fmt_g17(lhs(i, j).real()) << ','
                    << detail::fmt_g17(lhs(i, j).imag()) << ',' << detail::fmt_g17(rhs(i, j).real())
                    << ',' << detail::fmt_g17(rhs(i, j).imag()) << "\n";
        detail::write_text_file(out_path + ".resolved.cfg", cfg.echo());
    }
}

inline void cmd_simulate(const std::string& config_path, const std::string& out_dir,
                         int threads, std::ostream& out) {
    const RunConfig cfg = load_config(config_path);
    const SequenceSpec spec = cfg.to_sequence();
    const SpinSystem sys = cfg.to_system();
    const PowderScheme scheme = cfg.to_powder(sys);
    const int n_threads = resolve_threads(threads);

    std::filesystem::create_directories(out_dir);
    const auto path = [&](const char* name) {
        return (std::filesystem::path(out_dir) / name).string();
    };
    detail::write_text_file(path("resolved_config.cfg"), cfg.echo());

    const SimulationOutput result =
        simulate(spec, sys, scheme, cfg.to_family(), cfg.cycle_enabled, n_threads);
    export_trajectory(result.trajectory, path("trajectory.csv"));
    if (spec.detect == DetectMode::fid) {
        export_fid(result.fid, spec.fid_dwell, path("fid.csv"));
        const auto [freq, amp] = spectrum(result.fid, spec.fid_dwell);
        export_spectrum(freq, amp, path("spectrum.csv"));
    }

    out << "recovered_m_re = " << detail::fmt_g17(result.recovered_m.real()) << "\n";
    out << "recovered_m_im = " << detail::fmt_g17(result.recovered_m.imag()) << "\n";
    out << "recovered_m_abs = " << detail::fmt_g17(std::abs(result.recovered_m)) << "\n";
}

inline void cmd_sweep(const std::string& config_path, const std::string& param,
                      const std::string& values_csv, bool compensate, const std::string& out_path,
                      int threads, std::ostream& out) {
    const RunConfig cfg = load_config(config_path);
    const SequenceSpec spec = cfg.to_sequence();
    const SpinSystem sys = cfg.to_system();
    const PowderScheme scheme = cfg.to_powder(sys);
    const int n_threads = resolve_threads(threads);

    std::vector<double> values;
    std::size_t pos = 0;
    while (pos <= values_csv.size()) {
        std::size_t comma = values_csv.find(',', pos);
        if (comma == std::string::npos) comma = values_csv.size();
        const std::string item = detail::trim(values_csv.substr(pos, comma - pos));
        if (!item.empty()) values.push_back(detail::parse_number("--values", item));
        pos = comma + 1;
    }
    if (values.empty()) throw argument_error("sweep: --values list is empty");

    SweepResult result;
    if (param == "omega1") {
        std::vector<double> omega1_rad;
        for (double v : values) omega1_rad.push_back(two_pi * v);
        result = sweep_omega1(spec, sys, scheme, omega1_rad, n_threads);
        result.values = values;  // report the Hz values as given
    } else if (param == "retention") {
        result = sweep_retention(spec, sys, scheme, values, compensate, n_threads);
    } else {
        throw argument_error("sweep: unknown --param '" + param +
                             "' (expected omega1 or retention)");
    }
    export_sweep(result.values, result.recovered, out_path);
    detail::write_text_file(out_path + ".resolved.cfg", cfg.echo());
    out << "rows = " << result.values.size() << "\n";
}

// Entry point shared by the binary and in-process tests; args excludes argv[0].
inline int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"spin-dynamics toolkit: shaped-RF synthesis and dipolar-order simulation"};
    app.require_subcommand(1);

    std::string config_path, out_path, param, values_csv;
    int threads = 0;
    bool compensate = false;

    CLI::App* wf = app.add_subcommand("waveform", "synthesize the RF pulse program as CSV");
    wf->add_option("--config", config_path, "run configuration file")->required();
    wf->add_option("--out", out_path, "output CSV path")->required();
    wf->add_option("--threads", threads, "worker threads (0 = auto)");

    CLI::App* ah = app.add_subcommand("avgham", "compare numeric and closed-form dipolar averages");
    ah->add_option("--config", config_path, "run configuration file")->required();
    ah->add_option("--out", out_path, "optional matrix-entry CSV path");
    ah->add_option("--threads", threads, "worker threads (0 = auto)");

    CLI::App* sim = app.add_subcommand("simulate", "run the full sequence and write time series");
    sim->add_option("--config", config_path, "run configuration file")->required();
    sim->add_option("--out", out_path, "output directory")->required();
    sim->add_option("--threads", threads, "worker threads (0 = auto)");

    CLI::App* sw = app.add_subcommand("sweep", "sweep omega1 or retention time");
    sw->add_option("--config", config_path, "run configuration file")->required();
    sw->add_option("--param", param, "swept parameter: omega1 | retention")->required();
    sw->add_option("--values", values_csv, "comma-separated values (Hz for omega1, s for retention)")
        ->required();
    sw->add_flag("--compensate", compensate, "track the remagnetization phase origin");
    sw->add_option("--out", out_path, "output CSV path")->required();
    sw->add_option("--threads", threads, "worker threads (0 = auto)");

    std::vector<const char*> argv;
    argv.push_back("spinsim");
    for (const std::string& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
        if (wf->parsed()) cmd_waveform(config_path, out_path, out);
        else if (ah->parsed()) cmd_avgham(config_path, out_path, out);
        else if (sim->parsed()) cmd_simulate(config_path, out_path, threads, out);
        else cmd_sweep(config_path, param, values_csv, compensate, out_path, threads, out);
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    } catch (const commensurability_error& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const numeric_error& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const argument_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const format_error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace spinsim
