#pragma once

// CSV writers for trajectories, FIDs, spectra, and sweeps. All numbers go out
// through one %.17g formatter so identical runs give byte-identical files.

#include <complex>
#include <fstream>
#include <string>
#include <vector>

#include "spinsim/errors.hpp"
#include "spinsim/propagation.hpp"
#include "spinsim/waveform.hpp"

namespace spinsim {

namespace detail {

inline std::ofstream open_csv(const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // binary: LF endings everywhere
    if (!out) throw format_error("csv: cannot open '" + path + "' for writing");
    return out;
}

}  // namespace detail

inline constexpr const char* trajectory_csv_header = "t_s,mx,my,mz,dipolar_order";
inline constexpr const char* fid_csv_header = "t_s,re,im";
inline constexpr const char* spectrum_csv_header = "freq_hz,re,im";
inline constexpr const char* sweep_csv_header = "param_value,recovered_re,recovered_im,recovered_abs";

inline void export_trajectory(const TrajectoryRecord& traj, const std::string& path) {
    std::ofstream out = detail::open_csv(path);
    out << trajectory_csv_header << "\n";
    for (std::size_t i = 0; i < traj.times.size(); ++i)
        out << detail::fmt_g17(traj.times[i]) << ',' << detail::fmt_g17(traj.mx[i]) << ','
            << detail::fmt_g17(traj.my[i]) << ',' << detail::fmt_g17(traj.mz[i]) << ','
            << detail::fmt_g17(traj.dipolar_order[i]) << "\n";
    if (!out) throw format_error("csv: write to '" + path + "' failed");
}

inline void export_fid(const std::vector<Complex>& fid, double dwell, const std::string& path) {
    if (!(dwell > 0.0)) throw argument_error("csv: fid dwell must be positive");
    std::ofstream out = detail::open_csv(path);
    out << fid_csv_header << "\n";
    for (std::size_t i = 0; i < fid.size(); ++i)
        out << detail::fmt_g17(i * dwell) << ',' << detail::fmt_g17(fid[i].real()) << ','
            << detail::fmt_g17(fid[i].imag()) << "\n";
    if (!out) throw format_error("csv: write to '" + path + "' failed");
}

inline void export_spectrum(const std::vector<double>& freq, const std::vector<Complex>& amp,
                            const std::string& path) {
    if (freq.size() != amp.size())
        throw argument_error("csv: spectrum axis and amplitude lengths differ");
    std::ofstream out = detail::open_csv(path);
    out << spectrum_csv_header << "\n";
    for (std::size_t i = 0; i < freq.size(); ++i)
        out << detail::fmt_g17(freq[i]) << ',' << detail::fmt_g17(amp[i].real()) << ','
            << detail::fmt_g17(amp[i].imag()) << "\n";
    if (!out) throw format_error("csv: write to '" + path + "' failed");
}

inline void export_sweep(const std::vector<double>& values, const std::vector<Complex>& recovered,
                         const std::string& path) {
    if (values.size() != recovered.size())
        throw argument_error("csv: sweep value and result lengths differ");
    std::ofstream out = detail::open_csv(path);
    out << sweep_csv_header << "\n";
    for (std::size_t i = 0; i < values.size(); ++i)
        out << detail::fmt_g17(values[i]) << ',' << detail::fmt_g17(recovered[i].real()) << ','
            << detail::fmt_g17(recovered[i].imag()) << ','
            << detail::fmt_g17(std::abs(recovered[i])) << "\n";
    if (!out) throw format_error("csv: write to '" + path + "' failed");
}

}  // namespace spinsim
