#pragma once

// Full demagnetization / retention / remagnetization runs: single-crystal and
// powder, single-shot and phase-cycled, plus parameter sweeps.

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spinsim/constants.hpp"
#include "spinsim/errors.hpp"
#include "spinsim/hamiltonian.hpp"
#include "spinsim/parallel.hpp"
#include "spinsim/propagation.hpp"
#include "spinsim/sequence.hpp"
#include "spinsim/spin_algebra.hpp"
#include "spinsim/waveform.hpp"

namespace spinsim {

struct Orientation {
    double beta_d = 0.0;   // rad, polar angle of the internuclear vector
    double gamma_d = 0.0;  // rad, azimuthal angle
    double weight = 1.0;   // quadrature weight, sums to 1 over a scheme
};

struct PowderScheme {
    enum class Kind { single_crystal, uniform_grid, golden_spiral };

    Kind kind = Kind::single_crystal;
    std::vector<Orientation> orientations;

    void validate() const {
        if (orientations.empty())
            throw argument_error("powder: scheme has no orientations");
        double sum = 0.0;
        for (const Orientation& o : orientations) {
            if (!(o.weight >= 0.0))
                throw argument_error("powder: orientation weights must be non-negative");
            sum += o.weight;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw argument_error("powder: orientation weights must sum to 1");
    }

    static PowderScheme make_single_crystal(double beta_d, double gamma_d) {
        PowderScheme s;
        s.kind = Kind::single_crystal;
        s.orientations.push_back({beta_d, gamma_d, 1.0});
        return s;
    }

    // Midpoint grid in beta, uniform in gamma, sin(beta)-weighted.
    static PowderScheme make_uniform_grid(int n_beta, int n_gamma) {
        if (n_beta < 1 || n_gamma < 1)
            throw argument_error("powder: grid sizes must be >= 1");
        PowderScheme s;
        s.kind = Kind::uniform_grid;
        double sum = 0.0;
        for (int i = 0; i < n_beta; ++i) {
            const double beta = pi * (i + 0.5) / n_beta;
            const double w = std::sin(beta);
            for (int j = 0; j < n_gamma; ++j) {
                const double gamma = two_pi * j / n_gamma;
                s.orientations.push_back({beta, gamma, w});
                sum += w;
            }
        }
        for (Orientation& o : s.orientations) o.weight /= sum;
        return s;
    }

    // Golden-spiral point set on the sphere; equal weights.
    static PowderScheme make_golden_spiral(int n) {
        if (n < 1)
            throw argument_error("powder: golden spiral needs n >= 1");
        PowderScheme s;
        s.kind = Kind::golden_spiral;
        const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
        for (int k = 0; k < n; ++k) {
            const double z = 1.0 - (2.0 * k + 1.0) / n;
            const double beta = std::acos(std::min(1.0, std::max(-1.0, z)));
            double frac = std::fmod(k * golden, 1.0);
            if (frac < 0.0) frac += 1.0;
            s.orientations.push_back({beta, two_pi * frac, 1.0 / n});
        }
        return s;
    }
};

// Replace the orientation angles of every coupling; couplings within one
// crystallite share the crystal orientation here (single internuclear axis).
inline SpinSystem with_orientation(const SpinSystem& sys, const Orientation& o) {
    SpinSystem out = sys;
    double gamma = std::fmod(o.gamma_d, two_pi);
    if (gamma < 0.0) gamma += two_pi;
    for (DipolarCoupling& c : out.couplings) {
        c.beta_d = o.beta_d;
        c.gamma_d = gamma;
    }
    out.validate();
    return out;
}

inline Orientation orientation_of(const SpinSystem& sys) {
    if (sys.couplings.empty()) return {0.0, 0.0, 1.0};
    return {sys.couplings.front().beta_d, sys.couplings.front().gamma_d, 1.0};
}

struct RunOptions {
    int record_stride = 0;                  // 0 = auto (~400 trajectory rows)
    std::optional<double> probe_time;       // snapshot time within [0, duration]
    std::optional<Operator> initial;        // rotating-frame seed; default I_z (or I_x for ADRF)
    double initial_time = 0.0;              // when the seed is injected (pathway analysis)
};

struct RunResult {
    DensityDeviation rho_final{Operator(), 0};
    TrajectoryRecord trajectory;
    Complex recovered_m{0.0, 0.0};
    std::vector<Complex> fid;               // filled when detect == fid
    std::optional<DensityDeviation> probe_rho;        // raw rotating-frame state
    std::optional<DensityDeviation> probe_rho_toggled; // frame-corrected, nutating, y-toggled
    double probe_metric = 0.0;              // dipolar order metric at probe_time
};

namespace detail {

// Reference operator for the trajectory's dipolar-order column: the effective
// dipolar average in the toggled nutating frame. Empty when no closed form
// applies (no couplings, more than two spins, or zero spinning rate off static).
inline Operator toggled_reference_average(const SpinSystem& sys, const SequenceSpec& spec) {
    if (sys.couplings.empty() || sys.n_spins != 2) return Operator();
    if (spec.static_mode) {
        const Operator h_rot = dipolar_hamiltonian_rot(sys, 0.0, 0.0, true);
        return (-0.5 * rotate_operator(h_rot, Axis::y, pi / 2.0, 2)).eval();
    }
    if (!(spec.omega_r > 0.0)) return Operator();
    const double x = spec.omega1 / spec.omega_r;
    const int k = (std::abs(x - 0.5) <= std::abs(x - 1.0)) ? 1 : 2;
    return average_dipolar_closed(sys.couplings.front(), k, 2);
}

struct Checkpoint {
    double t = 0.0;
    bool record = false;
    bool probe = false;
};

// Sorted checkpoint list: record times on a uniform stride grid, segment
// boundaries (so no integration step straddles a kink), and the probe time.
inline std::vector<Checkpoint> make_checkpoints(const SequenceSpec& spec, const RunOptions& opt) {
    const double duration = spec.total_duration();
    const long n_steps = static_cast<long>(std::ceil(duration / spec.dt - 1e-9));
    long stride = opt.record_stride;
    if (stride <= 0) stride = std::max<long>(1, n_steps / 400);
    const double rec_dt = stride * spec.dt;

    std::vector<Checkpoint> pts;
    for (long j = 1; j * rec_dt < duration * (1.0 - 1e-12); ++j)
        pts.push_back({j * rec_dt, true, false});
    pts.push_back({duration, true, false});
    if (spec.tau < duration) pts.push_back({spec.tau, false, false});
    if (spec.tau + spec.t_retention < duration)
        pts.push_back({spec.tau + spec.t_retention, false, false});
    if (opt.probe_time) {
        const double tp = *opt.probe_time;
        if (!(tp >= 0.0 && tp <= duration))
            throw argument_error("run: probe_time must lie within the sequence");
        pts.push_back({tp, false, true});
    }

    std::sort(pts.begin(), pts.end(),
              [](const Checkpoint& a, const Checkpoint& b) { return a.t < b.t; });
    std::vector<Checkpoint> merged;
    const double tol = 1e-9 * spec.dt;
    for (const Checkpoint& p : pts) {
        if (!merged.empty() && std::abs(p.t - merged.back().t) <= tol) {
            merged.back().record = merged.back().record || p.record;
            merged.back().probe = merged.back().probe || p.probe;
        } else {
            merged.push_back(p);
        }
    }
    return merged;
}

}  // namespace detail

// One demagnetization-retention-remagnetization shot on amplitude/phase
// modulated RF starting from rho0 = I_z. recovered_m reads the remagnetized
// vector in the rotating-frame (z, -y) plane where the recovery pathway lives:
// recovered_m = (Tr{rho I_z} - i Tr{rho I_y}) / Tr{I_z^2}.
inline RunResult run_adnf_arnf(const SequenceSpec& spec_in, const SpinSystem& sys_in,
                               const Orientation& orientation, const RunOptions& opt = {}) {
    SequenceSpec spec = spec_in;
    spec.zeta_arnf = spec_in.resolved_zeta_arnf();
    spec.validate();
    const SpinSystem sys = with_orientation(sys_in, orientation);
    const int n = sys.n_spins;

    CollectiveOps ops(n);
    DipolarTerms dip(sys, spec.omega_r, spec.static_mode);
    const double iz_norm = std::real((ops.iz * ops.iz).trace());

    Operator h(ops.ix.rows(), ops.ix.cols());
    auto ham = [&](double t) -> const Operator& {
        if (spec.mode == RfMode::ideal) {
            h = spec.omega1 * ops.ix;
            const SegmentRf seg = segment_at(spec, t);
            const double env = envelope(seg.env, t);
            if (env != 0.0) {
                const double arg = spec.omega1 * t + seg.zeta;
                h += (env * std::cos(arg)) * ops.iz;
                h -= (env * std::sin(arg)) * ops.iy;
            }
        } else {
            const WaveformSample s = sample_at(spec, t);
            h = (s.amplitude * std::cos(s.phase)) * ops.ix;
            h += (s.amplitude * std::sin(s.phase)) * ops.iy;
        }
        dip.add_to(h, t);
        return h;
    };

    const Operator h_ref = detail::toggled_reference_average(sys, spec);
    const bool have_ref = h_ref.size() > 0;

    // Frame-correct hardware states by the synthesis phase ledger before
    // comparing against the nutating-frame reference.
    auto toggled_state = [&](const DensityDeviation& rho, double t) {
        Operator m = rho.matrix;
        if (spec.mode == RfMode::hardware)
            m = rotate_operator(m, Axis::z, -accumulated_phase_correction(spec, t), n);
        m = to_nutating(m, t, spec.omega1, n);
        m = rotate_operator(m, Axis::y, pi / 2.0, n);
        return DensityDeviation{std::move(m), n};
    };

    RunResult out;
    auto record = [&](double t, const DensityDeviation& rho) {
        out.trajectory.times.push_back(t);
        out.trajectory.mx.push_back(std::real(expectation(rho, ops.ix)));
        out.trajectory.my.push_back(std::real(expectation(rho, ops.iy)));
        out.trajectory.mz.push_back(std::real(expectation(rho, ops.iz)));
        double d = 0.0;
        if (have_ref) d = dipolar_order_metric(toggled_state(rho, t), h_ref);
        out.trajectory.dipolar_order.push_back(d);
    };

    DensityDeviation rho = opt.initial ? make_density(*opt.initial, n)
                                       : DensityDeviation{ops.iz, n};
    const double t0 = opt.initial_time;
    if (!(t0 >= 0.0 && t0 < spec.total_duration()))
        throw argument_error("run: initial_time must lie within the sequence");
    record(t0, rho);
    double t_prev = t0;
    const double skip_tol = 1e-9 * spec.dt;
    for (const detail::Checkpoint& cp : detail::make_checkpoints(spec, opt)) {
        if (cp.t < t0 - skip_tol) continue;
        if (cp.t > t_prev) {
            const Operator u = propagate_interval(ham, t_prev, cp.t, spec.dt);
            rho = evolve(rho, u);
            t_prev = cp.t;
        }
        if (cp.probe) {
            out.probe_rho = rho;
            out.probe_rho_toggled = toggled_state(rho, cp.t);
            if (have_ref) out.probe_metric = dipolar_order_metric(*out.probe_rho_toggled, h_ref);
        }
        if (cp.record) record(cp.t, rho);
    }

    // Readout: in hardware mode the receiver tracks the programmed phase, so
    // undo the synthesis z-rotation ledger before measuring.
    DensityDeviation rho_read = rho;
    if (spec.mode == RfMode::hardware)
        rho_read.matrix = rotate_operator(
            rho.matrix, Axis::z, -accumulated_phase_correction(spec, spec.total_duration()), n);
    out.recovered_m = Complex(std::real(expectation(rho_read, ops.iz)),
                              -std::real(expectation(rho_read, ops.iy))) / iz_norm;
    if (spec.detect == DetectMode::fid)
        out.fid = detect_fid(rho_read, sys, spec.static_mode ? 0.0 : spec.omega_r,
                             spec.fid_duration, spec.fid_dwell);
    out.rho_final = std::move(rho);
    return out;
}

// Amplitude-ramp counterpart: rho0 = I_x (ideal pi/2 rotation of I_z), the
// carrier amplitude omega1 itself ramps down/up with the cosine envelope, and
// RF is off during retention. Readout is along the lock axis:
// recovered_m = (Tr{rho I_x} + i Tr{rho I_y}) / Tr{I_z^2}.
inline RunResult run_adrf_arrf(const SequenceSpec& spec_in, const SpinSystem& sys_in,
                               const Orientation& orientation, const RunOptions& opt = {}) {
    SequenceSpec spec = spec_in;
    spec.zeta_arnf = 0.0;  // unused by this sequence; freeze for reproducibility
    spec.validate();
    const SpinSystem sys = with_orientation(sys_in, orientation);
    const int n = sys.n_spins;

    CollectiveOps ops(n);
    DipolarTerms dip(sys, spec.omega_r, spec.static_mode);
    const double iz_norm = std::real((ops.iz * ops.iz).trace());

    const EnvelopeSpec ramp_down{EnvelopeKind::adnf_rampdown, spec.omega1, spec.tau, 0.0};
    const EnvelopeSpec ramp_up{EnvelopeKind::arnf_rampup, spec.omega1, spec.tau,
                               spec.tau + spec.t_retention};
    auto rf_level = [&](double t) {
        if (t < spec.tau) return envelope(ramp_down, t);
        if (t < spec.tau + spec.t_retention) return 0.0;
        return envelope(ramp_up, std::min(t, spec.total_duration()));
    };

    Operator h(ops.ix.rows(), ops.ix.cols());
    auto ham = [&](double t) -> const Operator& {
        h = rf_level(t) * ops.ix;
        dip.add_to(h, t);
        return h;
    };

    // Dipolar-order reference: the rotating-frame secular dipolar Hamiltonian
    // itself (static only; under spinning it has no static average).
    Operator h_ref;
    if (spec.static_mode && !sys.couplings.empty())
        h_ref = dipolar_hamiltonian_rot(sys, 0.0, 0.0, true);
    const bool have_ref = h_ref.size() > 0;

    RunResult out;
    auto record = [&](double t, const DensityDeviation& rho) {
        out.trajectory.times.push_back(t);
        out.trajectory.mx.push_back(std::real(expectation(rho, ops.ix)));
        out.trajectory.my.push_back(std::real(expectation(rho, ops.iy)));
        out.trajectory.mz.push_back(std::real(expectation(rho, ops.iz)));
        out.trajectory.dipolar_order.push_back(have_ref ? dipolar_order_metric(rho, h_ref) : 0.0);
    };

    DensityDeviation rho = opt.initial
                               ? make_density(*opt.initial, n)
                               : DensityDeviation{rotate_operator(ops.iz, Axis::y, pi / 2.0, n), n};
    const double t0 = opt.initial_time;
    if (!(t0 >= 0.0 && t0 < spec.total_duration()))
        throw argument_error("run: initial_time must lie within the sequence");
    record(t0, rho);
    double t_prev = t0;
    const double skip_tol = 1e-9 * spec.dt;
    for (const detail::Checkpoint& cp : detail::make_checkpoints(spec, opt)) {
        if (cp.t < t0 - skip_tol) continue;
        if (cp.t > t_prev) {
            const Operator u = propagate_interval(ham, t_prev, cp.t, spec.dt);
            rho = evolve(rho, u);
            t_prev = cp.t;
        }
        if (cp.probe) {
            out.probe_rho = rho;
            out.probe_rho_toggled = rho;
            if (have_ref) out.probe_metric = dipolar_order_metric(rho, h_ref);
        }
        if (cp.record) record(cp.t, rho);
    }

    out.recovered_m = Complex(std::real(expectation(rho, ops.ix)),
                              std::real(expectation(rho, ops.iy))) / iz_norm;
    if (spec.detect == DetectMode::fid)
        out.fid = detect_fid(rho, sys, spec.static_mode ? 0.0 : spec.omega_r,
                             spec.fid_duration, spec.fid_dwell);
    out.rho_final = std::move(rho);
    return out;
}

struct CycleResult {
    Complex recovered_m{0.0, 0.0};
    std::vector<Complex> fid;
    RunResult base_shot;  // the zeta = base shot, for trajectory output
};

// Eight-shot remagnetization phase cycle: zeta_arnf alternates base, base+pi;
// output is (sum of odd shots - sum of even shots) / 8. Identical shots are
// computed once.
inline CycleResult run_phase_cycle(const SequenceSpec& spec_in, const SpinSystem& sys,
                                   const Orientation& orientation, const RunOptions& opt = {}) {
    SequenceSpec spec = spec_in;
    const double base = spec_in.resolved_zeta_arnf();

    std::map<double, RunResult> shots;
    auto shot = [&](double zeta) -> const RunResult& {
        auto it = shots.find(zeta);
        if (it == shots.end()) {
            SequenceSpec s = spec;
            s.zeta_arnf = zeta;
            it = shots.emplace(zeta, run_adnf_arnf(s, sys, orientation, opt)).first;
        }
        return it->second;
    };

    CycleResult out;
    bool have_fid = false;
    for (int k = 1; k <= 8; ++k) {
        const double zeta = base + ((k % 2 == 0) ? pi : 0.0);
        const RunResult& r = shot(zeta);
        const double sign = (k % 2 == 1) ? 1.0 : -1.0;
        out.recovered_m += sign * r.recovered_m;
        if (!r.fid.empty()) {
            if (!have_fid) {
                out.fid.assign(r.fid.size(), Complex(0.0, 0.0));
                have_fid = true;
            }
            for (std::size_t i = 0; i < r.fid.size(); ++i) out.fid[i] += sign * r.fid[i];
        }
    }
    out.recovered_m /= 8.0;
    for (Complex& v : out.fid) v /= 8.0;
    out.base_shot = shots.at(base);
    return out;
}

struct PowderResult {
    Complex recovered_m{0.0, 0.0};
    TrajectoryRecord trajectory;
    std::vector<Complex> fid;
};

using RunHandle =
    std::function<RunResult(const SequenceSpec&, const SpinSystem&, const Orientation&)>;

namespace detail {

template <typename PerOrientation>
PowderResult powder_reduce(const PowderScheme& scheme, int threads, PerOrientation&& per) {
    scheme.validate();
    const long n = static_cast<long>(scheme.orientations.size());
    std::vector<PowderResult> partial(n);
    parallel_index_for(n, threads, [&](long i) { partial[i] = per(scheme.orientations[i]); });

    PowderResult out;
    for (long i = 0; i < n; ++i) {  // fixed order: bitwise-reproducible sums
        const double w = scheme.orientations[i].weight;
        const PowderResult& p = partial[i];
        out.recovered_m += w * p.recovered_m;
        if (i == 0) {
            out.trajectory.times = p.trajectory.times;
            out.trajectory.mx.assign(p.trajectory.times.size(), 0.0);
            out.trajectory.my.assign(p.trajectory.times.size(), 0.0);
            out.trajectory.mz.assign(p.trajectory.times.size(), 0.0);
            out.trajectory.dipolar_order.assign(p.trajectory.times.size(), 0.0);
            out.fid.assign(p.fid.size(), Complex(0.0, 0.0));
        }
        if (p.trajectory.times.size() != out.trajectory.times.size() ||
            p.fid.size() != out.fid.size())
            throw argument_error("powder: orientation runs produced mismatched records");
        for (std::size_t j = 0; j < out.trajectory.times.size(); ++j) {
            out.trajectory.mx[j] += w * p.trajectory.mx[j];
            out.trajectory.my[j] += w * p.trajectory.my[j];
            out.trajectory.mz[j] += w * p.trajectory.mz[j];
            out.trajectory.dipolar_order[j] += w * p.trajectory.dipolar_order[j];
        }
        for (std::size_t j = 0; j < out.fid.size(); ++j) out.fid[j] += w * p.fid[j];
    }
    return out;
}

}  // namespace detail

// Weighted orientation average of any single-shot run.
inline PowderResult powder_average(const RunHandle& run, const PowderScheme& scheme,
                                   const SequenceSpec& spec, const SpinSystem& sys,
                                   int threads = 1) {
    return detail::powder_reduce(scheme, threads, [&](const Orientation& o) {
        RunResult r = run(spec, sys, o);
        PowderResult p;
        p.recovered_m = r.recovered_m;
        p.trajectory = std::move(r.trajectory);
        p.fid = std::move(r.fid);
        return p;
    });
}

// Powder average of the eight-shot phase cycle; trajectory comes from the
// base-phase shots.
inline PowderResult powder_cycle(const SequenceSpec& spec, const SpinSystem& sys,
                                 const PowderScheme& scheme, int threads = 1,
                                 const RunOptions& opt = {}) {
    return detail::powder_reduce(scheme, threads, [&](const Orientation& o) {
        CycleResult c = run_phase_cycle(spec, sys, o, opt);
        PowderResult p;
        p.recovered_m = c.recovered_m;
        p.trajectory = std::move(c.base_shot.trajectory);
        p.fid = std::move(c.fid);
        return p;
    });
}

enum class SequenceFamily { adnf_arnf, adrf_arrf };

struct SimulationOutput {
    Complex recovered_m{0.0, 0.0};
    TrajectoryRecord trajectory;
    std::vector<Complex> fid;
};

// Top-level simulate entry point: powder average, optionally phase cycled
// (cycling applies to the phase-modulated family only).
inline SimulationOutput simulate(const SequenceSpec& spec, const SpinSystem& sys,
                                 const PowderScheme& scheme, SequenceFamily family,
                                 bool cycle, int threads = 1, const RunOptions& opt = {}) {
    PowderResult p;
    if (family == SequenceFamily::adrf_arrf) {
        p = powder_average(
            [&opt](const SequenceSpec& s, const SpinSystem& y, const Orientation& o) {
                return run_adrf_arrf(s, y, o, opt);
            },
            scheme, spec, sys, threads);
    } else if (cycle) {
        p = powder_cycle(spec, sys, scheme, threads, opt);
    } else {
        p = powder_average(
            [&opt](const SequenceSpec& s, const SpinSystem& y, const Orientation& o) {
                return run_adnf_arnf(s, y, o, opt);
            },
            scheme, spec, sys, threads);
    }
    SimulationOutput out;
    out.recovered_m = p.recovered_m;
    out.trajectory = std::move(p.trajectory);
    out.fid = std::move(p.fid);
    return out;
}

struct SweepResult {
    std::vector<double> values;     // swept parameter, in its natural unit
    std::vector<Complex> recovered; // phase-cycled, powder-averaged recovered_m
};

// Sweep the spin-lock amplitude omega1 (rad/s), one phase-cycled
// powder-averaged run per point.
inline SweepResult sweep_omega1(const SequenceSpec& spec_template, const SpinSystem& sys,
                                const PowderScheme& scheme, const std::vector<double>& omega1_values,
                                int threads = 1) {
    if (omega1_values.empty()) throw argument_error("sweep: no omega1 values given");
    SweepResult out;
    out.values = omega1_values;
    for (double w1 : omega1_values) {
        if (!(w1 > 0.0)) throw argument_error("sweep: omega1 values must be positive");
        SequenceSpec s = spec_template;
        s.omega1 = w1;
        out.recovered.push_back(powder_cycle(s, sys, scheme, threads).recovered_m);
    }
    return out;
}

// Sweep the retention time (s). With compensate the remagnetization phase
// origin tracks each retention value (zeta_arnf auto); otherwise the template
// value (default 0) is held fixed.
inline SweepResult sweep_retention(const SequenceSpec& spec_template, const SpinSystem& sys,
                                   const PowderScheme& scheme,
                                   const std::vector<double>& retention_values, bool compensate,
                                   int threads = 1) {
    if (retention_values.empty()) throw argument_error("sweep: no retention values given");
    SweepResult out;
    out.values = retention_values;
    for (double tr : retention_values) {
        if (!(tr >= 0.0)) throw argument_error("sweep: retention values must be non-negative");
        SequenceSpec s = spec_template;
        s.t_retention = tr;
        if (compensate)
            s.zeta_arnf.reset();
        else
            s.zeta_arnf = spec_template.zeta_arnf.value_or(0.0);
        out.recovered.push_back(powder_cycle(s, sys, scheme, threads).recovered_m);
    }
    return out;
}

}  // namespace spinsim
