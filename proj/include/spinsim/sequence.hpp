#pragma once

// SequenceSpec: one demagnetization -> retention -> remagnetization experiment,
// shared by waveform synthesis and sequence simulation.

#include <optional>
#include <string>

#include "spinsim/constants.hpp"
#include "spinsim/errors.hpp"

namespace spinsim {

enum class RfMode { ideal, hardware };
enum class DetectMode { none, immediate_m_plus, fid };

struct SequenceSpec {
    double omega1 = 0.0;       // spin-lock field, rad/s
    double omega2 = 0.0;       // peak modulation depth, rad/s
    double tau = 0.0;          // ramp duration, s
    double t_retention = 0.0;  // retention interval T, s
    double zeta_adnf = 0.0;    // rad
    std::optional<double> zeta_arnf;  // rad; nullopt = auto carrier compensation
    double omega_r = 0.0;      // sample spinning rate, rad/s
    bool static_mode = false;
    double dt = 25e-9;         // sample/propagation step, s
    RfMode mode = RfMode::ideal;
    DetectMode detect = DetectMode::immediate_m_plus;
    double fid_duration = 0.0; // s, detect == fid only
    double fid_dwell = 0.0;    // s

    double total_duration() const { return 2.0 * tau + t_retention; }

    // Auto compensation undoes the carrier rotation accumulated over the whole
    // sequence, so the recovered magnetization comes back with zero phase.
    double resolved_zeta_arnf() const {
        return zeta_arnf ? *zeta_arnf : wrap_angle(-omega1 * total_duration());
    }

    void validate() const {
        if (!(omega1 > 0.0)) throw argument_error("sequence: omega1 must be positive");
        if (omega2 < 0.0) throw argument_error("sequence: omega2 must be non-negative");
        if (!(tau > 0.0)) throw argument_error("sequence: tau must be positive");
        if (t_retention < 0.0) throw argument_error("sequence: retention must be non-negative");
        if (!(dt > 0.0)) throw argument_error("sequence: dt must be positive");
        // keep >= 200 propagation samples per B1 period
        const double dt_max = (two_pi / omega1) / 200.0;
        if (dt > dt_max * (1.0 + 1e-9))
            throw argument_error("sequence: dt exceeds (2*pi/omega1)/200 = " + std::to_string(dt_max));
        if (omega_r < 0.0) throw argument_error("sequence: spin_rate must be non-negative");
        if (detect == DetectMode::fid) {
            if (!(fid_duration > 0.0)) throw argument_error("sequence: fid_duration must be positive");
            if (!(fid_dwell > 0.0)) throw argument_error("sequence: fid_dwell must be positive");
            if (fid_dwell > fid_duration)
                throw argument_error("sequence: fid_dwell must not exceed fid_duration");
        }
    }
};

} // namespace spinsim
