#include <catch2/catch_amalgamated.hpp>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "spinsim/hamiltonian.hpp"
#include "spinsim/propagation.hpp"
#include "spinsim/waveform.hpp"

using namespace spinsim;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
    fs::path p = fs::temp_directory_path() / "spinsim_waveform_tests";
    fs::create_directories(p);
    return p;
}

void write_text(const fs::path& p, const std::string& body) {
    std::ofstream out(p, std::ios::binary);
    out << body;
}

std::string read_binary(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

SequenceSpec basic_spec() {
    SequenceSpec s;
    s.omega1 = two_pi * 20e3;
    s.omega2 = two_pi * 20e3;
    s.tau = 100e-6;
    s.t_retention = 25e-6;
    s.dt = 250e-9;
    s.static_mode = true;
    return s;
}

} // namespace

TEST_CASE("envelope shapes: half-cosine ramps and flat segments", "[waveform]") {
    const double w2 = two_pi * 10e3;
    EnvelopeSpec down{EnvelopeKind::adnf_rampdown, w2, 2e-3, 0.0};
    CHECK(envelope(down, 0.0) == Approx(w2).margin(1e-9 * w2));
    CHECK(envelope(down, 1e-3) == Approx(0.5 * w2).margin(1e-9 * w2));
    CHECK(envelope(down, 2e-3) == Approx(0.0).margin(1e-9 * w2));

    EnvelopeSpec up{EnvelopeKind::arnf_rampup, w2, 2e-3, 5e-3};
    CHECK(envelope(up, 5e-3) == Approx(0.0).margin(1e-9 * w2));
    CHECK(envelope(up, 6e-3) == Approx(0.5 * w2).margin(1e-9 * w2));
    CHECK(envelope(up, 7e-3) == Approx(w2).margin(1e-9 * w2));

    EnvelopeSpec flat{EnvelopeKind::constant_level, w2, 1e-3, 0.0};
    CHECK(envelope(flat, 0.4e-3) == w2);
    EnvelopeSpec off{EnvelopeKind::zero, w2, 1e-3, 0.0};
    CHECK(envelope(off, 0.4e-3) == 0.0);

    CHECK_THROWS_AS(envelope(down, -1e-6), argument_error);
    CHECK_THROWS_AS(envelope(down, 2.1e-3), argument_error);
    EnvelopeSpec bad{EnvelopeKind::adnf_rampdown, w2, 0.0, 0.0};
    CHECK_THROWS_AS(envelope(bad, 0.0), argument_error);
}

TEST_CASE("instantaneous amplitude and phase of the modulated field", "[waveform]") {
    const double w1 = two_pi * 20e3;
    EnvelopeSpec flat{EnvelopeKind::constant_level, w1, 10e-3, 0.0};
    EnvelopeSpec off{EnvelopeKind::zero, w1, 10e-3, 0.0};

    CHECK(rf_amplitude(1e-3, w1, envelope(off, 1e-3), 0.0) == Approx(w1).epsilon(1e-12));
    CHECK(rf_phase(1e-3, w1, envelope(off, 1e-3), 0.0) == Approx(0.0).margin(1e-15));

    // quarter carrier period with matched amplitudes: field tilts by 45 degrees
    const double tq = (pi / 2.0) / w1;
    CHECK(rf_amplitude(tq, w1, envelope(flat, tq), 0.0) == Approx(std::sqrt(2.0) * w1).epsilon(1e-9));
    CHECK(rf_phase(tq, w1, envelope(flat, tq), 0.0) == Approx(-pi / 4.0).epsilon(1e-9));
    CHECK(rf_phase(3.0 * tq, w1, envelope(flat, 3.0 * tq), 0.0) == Approx(pi / 4.0).epsilon(1e-9));

    CHECK_THROWS_AS(rf_amplitude(1e-3, 0.0, envelope(flat, 1e-3), 0.0), argument_error);
    CHECK_THROWS_AS(rf_phase(1e-3, -1.0, envelope(flat, 1e-3), 0.0), argument_error);
}

TEST_CASE("phase correction reproduces the three-sinc closed form", "[waveform]") {
    struct Params { double w1, w2, tau; };
    const Params sets[] = {
        {two_pi * 20e3, two_pi * 20e3, 2e-3},
        {pi / 1.5e-3, two_pi * 9e3, 1.5e-3},  // carrier commensurate with the ramp
        {two_pi * 7.4e3, two_pi * 3e3, 0.8e-3},
    };
    for (const Params& p : sets) {
        EnvelopeSpec env{EnvelopeKind::adnf_rampdown, p.w2, p.tau, 0.0};
        const double b = pi / p.tau;
        for (int j = 1; j <= 200; ++j) {
            const double t = p.tau * j / 200.0;
            const double ref = -(p.w2 * t / 2.0) * unnormalized_sinc(p.w1 * t)
                               - (p.w2 * t / 4.0) * unnormalized_sinc((b + p.w1) * t)
                               - (p.w2 * t / 4.0) * unnormalized_sinc((b - p.w1) * t);
            CHECK(phase_correction(t, env, p.w1, 0.0) == Approx(ref).margin(1e-9));
        }
    }
}

TEST_CASE("phase correction matches adaptive quadrature for random programs", "[waveform]") {
    using quad = boost::math::quadrature::gauss_kronrod<double, 15>;
    std::mt19937 rng(42);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int set = 0; set < 4; ++set) {
        double w1 = two_pi * (5e3 + 35e3 * u01(rng));
        const double w2 = two_pi * (1e3 + 29e3 * u01(rng));
        const double tau = 0.5e-3 + 3.5e-3 * u01(rng);
        const double zeta = two_pi * u01(rng);
        if (set == 0) w1 = pi / tau;  // degenerate sideband case
        for (EnvelopeKind kind : {EnvelopeKind::adnf_rampdown, EnvelopeKind::arnf_rampup}) {
            const double t0 = (kind == EnvelopeKind::adnf_rampdown) ? 0.0 : 1.3e-3;
            EnvelopeSpec env{kind, w2, tau, t0};
            auto f = [&](double s) { return envelope(env, s) * std::cos(w1 * s + zeta); };
            double cum = 0.0;
            double prev = t0;
            for (int j = 1; j <= 120; ++j) {
                const double t = t0 + tau * j / 120.0;
                cum += quad::integrate(f, prev, t, 5, 1e-13);
                prev = t;
                CHECK(phase_correction(t, env, w1, zeta) == Approx(-cum).margin(1e-9));
            }
        }
    }
}

TEST_CASE("accumulated phase correction is continuous and flat in retention", "[waveform]") {
    SequenceSpec s = basic_spec();
    s.zeta_adnf = 0.3;
    const double tau = s.tau;
    const double T = s.t_retention;

    const double at_tau = accumulated_phase_correction(s, tau);
    CHECK(accumulated_phase_correction(s, tau + 1e-12) == Approx(at_tau).margin(1e-9));
    CHECK(accumulated_phase_correction(s, tau + 0.5 * T) == Approx(at_tau).margin(1e-12));
    CHECK(accumulated_phase_correction(s, tau + T) == Approx(at_tau).margin(1e-9));

    // the ramp-up resumes accumulating
    const double late = accumulated_phase_correction(s, tau + T + 0.9 * tau);
    CHECK(std::abs(late - at_tau) > 1e-4);
    CHECK(accumulated_phase_correction(s, 0.0) == Approx(0.0).margin(1e-15));
}

TEST_CASE("synthesized program: flat where unmodulated, peaked where matched", "[waveform]") {
    SequenceSpec flat = basic_spec();
    flat.omega2 = 0.0;
    PulseProgram p0 = synthesize(flat);
    CHECK(p0.samples.size() == static_cast<std::size_t>(std::llround(flat.total_duration() / flat.dt)) + 1);
    for (const WaveformSample& s : p0.samples) {
        CHECK(s.amplitude == Approx(flat.omega1).epsilon(1e-12));
        CHECK(s.phase == Approx(0.0).margin(1e-15));
    }

    // matched amplitudes and a sine that starts at its crest: the global
    // maximum sqrt(w1^2 + w2^2) is attained exactly at t = 0
    SequenceSpec crest = basic_spec();
    crest.tau = 2e-3;
    crest.t_retention = 2e-3;
    crest.dt = 100e-9;
    crest.zeta_adnf = pi / 2.0;
    PulseProgram p1 = synthesize(crest);
    double amax = 0.0, amin = 1e30;
    for (const WaveformSample& s : p1.samples) {
        amax = std::max(amax, s.amplitude);
        amin = std::min(amin, s.amplitude);
    }
    CHECK(p1.samples.front().amplitude == Approx(std::sqrt(2.0) * crest.omega1).epsilon(1e-9));
    CHECK(amax == Approx(std::sqrt(2.0) * crest.omega1).epsilon(1e-6));
    CHECK(amin == Approx(crest.omega1).epsilon(1e-9));

    // tail of the ramp-down decays to the plain carrier level
    const std::size_t n_tau = static_cast<std::size_t>(std::llround(crest.tau / crest.dt));
    for (std::size_t k = n_tau - n_tau / 100; k <= n_tau; ++k)
        CHECK(p1.samples[k].amplitude == Approx(crest.omega1).epsilon(1e-6));

    // retention: amplitude w1, phase frozen at the ramp-down endpoint value
    const std::size_t n_ret_end = static_cast<std::size_t>(std::llround((crest.tau + crest.t_retention) / crest.dt));
    for (std::size_t k = n_tau; k <= n_ret_end; ++k) {
        CHECK(p1.samples[k].amplitude == Approx(crest.omega1).epsilon(1e-12));
        CHECK(p1.samples[k].phase == Approx(p1.samples[n_tau].phase).margin(1e-12));
    }

    // first sample with zeta_adnf = 0: no transverse modulation yet
    SequenceSpec z0 = basic_spec();
    PulseProgram p2 = synthesize(z0);
    CHECK(p2.samples.front().amplitude == Approx(z0.omega1).epsilon(1e-12));
    CHECK(p2.samples.front().phase == Approx(0.0).margin(1e-15));

    SequenceSpec bad = basic_spec();
    bad.dt = 3e-7;  // does not divide tau
    CHECK_THROWS_AS(synthesize(bad), argument_error);
}

TEST_CASE("waveform csv round trip preserves every sample", "[waveform]") {
    SequenceSpec s = basic_spec();
    PulseProgram p = synthesize(s);
    const fs::path path = test_dir() / "roundtrip.csv";
    export_waveform(p, path.string());

    const std::string raw = read_binary(path);
    CHECK(raw.find('\r') == std::string::npos);
    CHECK(raw.back() == '\n');
    CHECK(raw.rfind(waveform_csv_header, 0) == 0);

    PulseProgram q = import_waveform(path.string());
    REQUIRE(q.samples.size() == p.samples.size());
    CHECK(q.dt == Approx(p.dt).epsilon(1e-12));
    for (std::size_t k = 0; k < p.samples.size(); ++k) {
        CHECK(q.samples[k].t == p.samples[k].t);                  // %.17g survives the round trip
        CHECK(q.samples[k].amplitude == p.samples[k].amplitude);
        CHECK(q.samples[k].phase == Approx(p.samples[k].phase).margin(1e-9));
    }
}

TEST_CASE("waveform import rejects malformed files", "[waveform]") {
    const fs::path dir = test_dir();
    auto expect_reject = [&](const char* name, const std::string& body) {
        const fs::path p = dir / name;
        write_text(p, body);
        CHECK_THROWS_AS(import_waveform(p.string()), format_error);
    };
    expect_reject("empty.csv", "");
    expect_reject("badheader.csv", "time,amp,ph\n0,1,0\n1e-6,1,0\n");
    expect_reject("short.csv", std::string(waveform_csv_header) + "\n0,1,0\n");
    expect_reject("malformed.csv", std::string(waveform_csv_header) + "\n0,1,0\n1e-6,abc,0\n");
    expect_reject("outoforder.csv", std::string(waveform_csv_header) + "\n0,1,0\n2e-6,1,0\n1e-6,1,0\n");
    expect_reject("nonuniform.csv", std::string(waveform_csv_header) + "\n0,1,0\n1e-6,1,0\n3.5e-6,1,0\n");
    expect_reject("nonfinite.csv", std::string(waveform_csv_header) + "\n0,1,0\n1e-6,nan,0\n");
    CHECK_THROWS_AS(import_waveform((dir / "missing.csv").string()), format_error);
}

TEST_CASE("amplitude never drops below the spin-lock field", "[waveform]") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        double w1 = two_pi * (5e3 + 35e3 * u01(rng));
        const double w2 = two_pi * (1e3 + 29e3 * u01(rng));
        const double tau = 0.5e-3 + 3.5e-3 * u01(rng);
        const double zeta = two_pi * u01(rng);
        if (trial == 0) w1 = pi / tau;
        EnvelopeSpec env{EnvelopeKind::adnf_rampdown, w2, tau, 0.0};
        for (int j = 0; j < 1000; ++j) {
            const double t = tau * (j + 0.5) / 1000.0;
            const double transverse = envelope(env, t) * std::sin(w1 * t + zeta);
            const double amp = rf_amplitude(t, w1, envelope(env, t), zeta);
            CHECK(amp >= w1 * (1.0 - 1e-12));
            CHECK(amp * amp == Approx(w1 * w1 + transverse * transverse).epsilon(1e-12));
            if (std::abs(transverse) > 1e-6 * w1) CHECK(amp > w1);
        }
    }
}

TEST_CASE("hardware stream reproduces the ideal propagator for a bare spin", "[waveform]") {
    SequenceSpec s = basic_spec();
    s.tau = 200e-6;
    s.t_retention = 50e-6;
    s.dt = 50e-9;
    const double t_end = s.total_duration();

    Operator u_hw = propagate_interval_cf4(
        [&](double t) { return rf_hamiltonian_hardware(sample_at(s, t), 1); }, 0.0, t_end, s.dt);
    Operator u_ideal = propagate_interval_cf4(
        [&](double t) { return rf_hamiltonian_ideal(t, s, 1); }, 0.0, t_end, s.dt);

    // undo the synthesis z-rotation ledger
    Operator iz = collective_operator(Axis::z, 1);
    Operator u_corr = expm_skew(iz, -accumulated_phase_correction(s, t_end)) * u_hw;
    CHECK((u_corr - u_ideal).norm() < 1e-6);
}
