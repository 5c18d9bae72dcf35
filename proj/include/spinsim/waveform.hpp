#pragma once

// Amplitude/phase waveform synthesis for the nutating-frame demagnetization
// sequence.  A transverse field omega1*Ix plus a modulation term
// omega2'(t)[Iz cos(omega1 t + zeta) - Iy sin(omega1 t + zeta)] is re-expressed
// as a single resonant RF channel with amplitude
//     omega_a(t) = sqrt(omega1^2 + (omega2'(t) sin(omega1 t + zeta))^2)
// and total phase Phi(t) = phi(t) + phi'(t), where
//     phi(t)  = atan2(-omega2'(t) sin(omega1 t + zeta), omega1)
//     phi'(t) = -integral of omega2'(t') cos(omega1 t' + zeta) dt'.
// phi' has a closed form for every envelope used here; the tests check it
// against adaptive quadrature.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "spinsim/constants.hpp"
#include "spinsim/errors.hpp"
#include "spinsim/sequence.hpp"

namespace spinsim {

enum class EnvelopeKind { adnf_rampdown, arnf_rampup, constant_level, zero };

struct EnvelopeSpec {
    EnvelopeKind kind = EnvelopeKind::zero;
    double omega2 = 0.0;   // peak depth, rad/s
    double tau = 0.0;      // ramp duration, s (ramp kinds only)
    double t_start = 0.0;  // segment start, s
};

/// Modulation depth omega2'(t) for one segment.
inline double envelope(const EnvelopeSpec& spec, double t) {
    const double u = t - spec.t_start;
    switch (spec.kind) {
        case EnvelopeKind::zero:
            return 0.0;
        case EnvelopeKind::constant_level:
            return spec.omega2;
        case EnvelopeKind::adnf_rampdown:
        case EnvelopeKind::arnf_rampup: {
            if (!(spec.tau > 0.0)) throw argument_error("envelope: ramp tau must be positive");
            const double slack = 1e-9 * spec.tau;
            if (u < -slack || u > spec.tau + slack)
                throw argument_error("envelope: t outside ramp segment");
            const double c = std::cos(pi * u / spec.tau);
            return 0.5 * spec.omega2 * (spec.kind == EnvelopeKind::adnf_rampdown ? 1.0 + c : 1.0 - c);
        }
    }
    throw argument_error("envelope: unknown kind");
}

/// omega_a(t) given the local modulation depth.
inline double rf_amplitude(double t, double omega1, double envelope_value, double zeta) {
    if (!(omega1 > 0.0)) throw argument_error("rf_amplitude: omega1 must be positive");
    const double s = envelope_value * std::sin(omega1 * t + zeta);
    return std::sqrt(omega1 * omega1 + s * s);
}

/// phi(t), range (-pi/2, pi/2) since omega1 > 0.
inline double rf_phase(double t, double omega1, double envelope_value, double zeta) {
    if (!(omega1 > 0.0)) throw argument_error("rf_phase: omega1 must be positive");
    return std::atan2(-envelope_value * std::sin(omega1 * t + zeta), omega1);
}

inline double unnormalized_sinc(double x) {
    return std::abs(x) < 1e-4 ? 1.0 - x * x / 6.0 : std::sin(x) / x;
}

namespace detail {

// integral of cos(psi + a v) dv over v in [0, u]  ==  u cos(psi + a u/2) sinc(a u/2)
inline double cos_segment_integral(double a, double psi, double u) {
    const double half = 0.5 * a * u;
    return u * std::cos(psi + half) * unnormalized_sinc(half);
}

} // namespace detail

/// phi'(t) accumulated from the segment start, in closed form.  Every envelope
/// here is c0 + c1 cos(b (t - t_start)), so the integrand splits into three
/// pure cosines; the sinc form is exact and smooth through a = 0 (the
/// degenerate point omega1 = pi/tau).
inline double phase_correction(double t, const EnvelopeSpec& spec, double omega1, double zeta) {
    if (spec.kind == EnvelopeKind::zero || spec.omega2 == 0.0) return 0.0;
    const double u = t - spec.t_start;
    const double psi = omega1 * spec.t_start + zeta;
    double c0 = 0.0, c1 = 0.0, b = 0.0;
    switch (spec.kind) {
        case EnvelopeKind::adnf_rampdown:
            c0 = 0.5 * spec.omega2; c1 = +0.5 * spec.omega2; b = pi / spec.tau; break;
        case EnvelopeKind::arnf_rampup:
            c0 = 0.5 * spec.omega2; c1 = -0.5 * spec.omega2; b = pi / spec.tau; break;
        case EnvelopeKind::constant_level:
            c0 = spec.omega2; break;
        case EnvelopeKind::zero:
            return 0.0;
    }
    if ((spec.kind == EnvelopeKind::adnf_rampdown || spec.kind == EnvelopeKind::arnf_rampup)) {
        const double slack = 1e-9 * spec.tau;
        if (u < -slack || u > spec.tau + slack)
            throw argument_error("phase_correction: t outside ramp segment");
    }
    double integral = c0 * detail::cos_segment_integral(omega1, psi, u);
    if (c1 != 0.0)
        integral += 0.5 * c1 * (detail::cos_segment_integral(omega1 + b, psi, u) +
                                detail::cos_segment_integral(omega1 - b, psi, u));
    return -integral;
}

// --- sequence segment stitching ------------------------------------------

struct SegmentRf {
    EnvelopeSpec env;
    double zeta = 0.0;
};

/// RF segment (envelope + zeta) covering sequence time t.
inline SegmentRf segment_at(const SequenceSpec& s, double t) {
    const double dur = s.total_duration();
    const double slack = 1e-9 * dur;
    if (t < -slack || t > dur + slack)
        throw argument_error("segment_at: t outside the sequence [0, 2*tau+T]");
    if (t < s.tau)
        return {{EnvelopeKind::adnf_rampdown, s.omega2, s.tau, 0.0}, s.zeta_adnf};
    if (t < s.tau + s.t_retention)
        return {{EnvelopeKind::zero, 0.0, 0.0, s.tau}, s.zeta_adnf};
    return {{EnvelopeKind::arnf_rampup, s.omega2, s.tau, s.tau + s.t_retention}, s.resolved_zeta_arnf()};
}

/// Unwrapped phi'(t) accumulated over all segments up to t.  The retention
/// segment holds the terminal ADNF value; the ARNF segment continues from it.
inline double accumulated_phase_correction(const SequenceSpec& s, double t) {
    const EnvelopeSpec adnf{EnvelopeKind::adnf_rampdown, s.omega2, s.tau, 0.0};
    if (t <= s.tau) return phase_correction(t, adnf, s.omega1, s.zeta_adnf);
    const double held = phase_correction(s.tau, adnf, s.omega1, s.zeta_adnf);
    const double t_arnf = s.tau + s.t_retention;
    if (t <= t_arnf) return held;
    const EnvelopeSpec arnf{EnvelopeKind::arnf_rampup, s.omega2, s.tau, t_arnf};
    const double t_clamped = std::min(t, s.total_duration()); // tolerate end-point roundoff
    return held + phase_correction(t_clamped, arnf, s.omega1, s.resolved_zeta_arnf());
}

// --- sampled pulse program ------------------------------------------------

struct WaveformSample {
    double t = 0.0;          // s
    double amplitude = 0.0;  // rad/s
    double phase = 0.0;      // rad; unwrapped in memory, wrapped to (-pi, pi] on export
};

struct PulseProgram {
    std::vector<WaveformSample> samples;
    double dt = 0.0;
    std::optional<SequenceSpec> meta;
    std::optional<double> carrier_hz;
};

namespace detail {

inline long exact_multiple(double interval, double dt, const char* what) {
    const double ratio = interval / dt;
    const long n = std::lround(ratio);
    if (std::abs(ratio - double(n)) > 1e-6)
        throw argument_error(std::string("synthesize: dt does not divide ") + what);
    return n;
}

} // namespace detail

/// Exact modulated-carrier sample at arbitrary t: closed-form amplitude plus
/// the full (modulation + accumulated correction) phase.  This is the
/// continuous waveform the sampled pulse program tabulates; propagation in
/// hardware mode evaluates it directly so accuracy is set by dt alone.
inline WaveformSample sample_at(const SequenceSpec& spec, double t) {
    const SegmentRf seg = segment_at(spec, t);
    const double env = envelope(seg.env, t);
    WaveformSample s;
    s.t = t;
    s.amplitude = rf_amplitude(t, spec.omega1, env, seg.zeta);
    s.phase = rf_phase(t, spec.omega1, env, seg.zeta) + accumulated_phase_correction(spec, t);
    return s;
}

/// Sample the full ADNF -> retention -> ARNF stream at uniform dt.
inline PulseProgram synthesize(const SequenceSpec& spec) {
    spec.validate();
    detail::exact_multiple(spec.tau, spec.dt, "tau");
    if (spec.t_retention > 0.0) detail::exact_multiple(spec.t_retention, spec.dt, "retention");
    const long n_total = detail::exact_multiple(spec.total_duration(), spec.dt, "the total duration");

    PulseProgram p;
    p.dt = spec.dt;
    p.meta = spec;
    p.samples.reserve(std::size_t(n_total) + 1);
    for (long k = 0; k <= n_total; ++k) {
        const double t = std::min(double(k) * spec.dt, spec.total_duration());
        WaveformSample sample = sample_at(spec, t);
        sample.t = double(k) * spec.dt;
        p.samples.push_back(sample);
    }
    return p;
}

/// Linear interpolation of a pulse program (amplitude and unwrapped phase).
struct WaveformInterpolator {
    const PulseProgram* program;

    explicit WaveformInterpolator(const PulseProgram& p) : program(&p) {
        if (p.samples.size() < 2) throw argument_error("waveform interpolation needs >= 2 samples");
    }

    WaveformSample at(double t) const {
        const auto& s = program->samples;
        const double t0 = s.front().t;
        double x = (t - t0) / program->dt;
        const double max_idx = double(s.size() - 1);
        if (x < 0.0) x = 0.0;
        if (x > max_idx) x = max_idx;
        std::size_t k = std::min(std::size_t(x), s.size() - 2);
        const double f = x - double(k);
        WaveformSample out;
        out.t = t;
        out.amplitude = (1.0 - f) * s[k].amplitude + f * s[k + 1].amplitude;
        out.phase = (1.0 - f) * s[k].phase + f * s[k + 1].phase;
        return out;
    }
};

// --- CSV I/O --------------------------------------------------------------

namespace detail {

inline std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

inline constexpr const char* waveform_csv_header = "t_s,amplitude_rad_per_s,phase_rad";

inline void export_waveform(const PulseProgram& p, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("export_waveform: cannot open " + path);
    out << waveform_csv_header << "\n";
    for (const auto& s : p.samples)
        out << detail::fmt_g17(s.t) << ',' << detail::fmt_g17(s.amplitude) << ','
            << detail::fmt_g17(wrap_angle(s.phase)) << "\n";
    if (!out) throw format_error("export_waveform: write failed for " + path);
}

inline PulseProgram import_waveform(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("import_waveform: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw format_error("import_waveform: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != waveform_csv_header)
        throw format_error("import_waveform: bad header '" + line + "'");

    PulseProgram p;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        WaveformSample s;
        char trailing = 0;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf %c", &s.t, &s.amplitude, &s.phase, &trailing) != 3)
            throw format_error("import_waveform: malformed row at line " + std::to_string(line_no));
        if (!std::isfinite(s.t) || !std::isfinite(s.amplitude) || !std::isfinite(s.phase))
            throw format_error("import_waveform: non-finite value at line " + std::to_string(line_no));
        p.samples.push_back(s);
    }
    if (p.samples.size() < 2)
        throw format_error("import_waveform: need at least two samples in " + path);

    p.dt = p.samples[1].t - p.samples[0].t;
    if (!(p.dt > 0.0)) throw format_error("import_waveform: non-increasing timestamps");
    for (std::size_t k = 1; k < p.samples.size(); ++k) {
        const double step = p.samples[k].t - p.samples[k - 1].t;
        if (!(step > 0.0)) throw format_error("import_waveform: out-of-order timestamp at sample " +
                                              std::to_string(k));
        if (std::abs(step - p.dt) > 1e-6 * p.dt)
            throw format_error("import_waveform: non-uniform dt at sample " + std::to_string(k));
    }
    // undo the export wrap: restore a continuous phase stream
    for (std::size_t k = 1; k < p.samples.size(); ++k) {
        const double jump = wrap_angle(p.samples[k].phase - p.samples[k - 1].phase);
        p.samples[k].phase = p.samples[k - 1].phase + jump;
    }
    return p;
}

} // namespace spinsim
