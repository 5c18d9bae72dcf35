#pragma once

// Flat key=value run configuration with dotted namespaces. Frequencies are
// ordinary Hz in files and converted to rad/s when building the domain types;
// the config struct keeps the file's natural units so the resolved-config echo
// reparses to bit-identical values.

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "spinsim/errors.hpp"
#include "spinsim/experiment.hpp"
#include "spinsim/hamiltonian.hpp"
#include "spinsim/sequence.hpp"
#include "spinsim/waveform.hpp"

namespace spinsim {

struct CouplingConfig {
    int site_i = 0;
    int site_j = 0;
    double d_hz = 0.0;
    double beta_d_rad = 0.0;
    double gamma_d_rad = 0.0;
};

struct RunConfig {
    std::string family = "adnf_arnf";  // adnf_arnf | adrf_arrf
    double omega1_hz = 0.0;
    double omega2_hz = 0.0;
    double tau_s = 0.0;
    double retention_s = 0.0;
    double zeta_adnf_rad = 0.0;
    std::optional<double> zeta_arnf_rad;  // nullopt = auto compensation
    double spin_rate_hz = 0.0;            // 0 = static sample
    double dt_s = 25e-9;
    std::string mode = "ideal";    // ideal | hardware
    std::string detect = "none";   // none | fid
    double fid_duration_s = 0.0;
    double fid_dwell_s = 0.0;

    int n_spins = 0;
    std::vector<CouplingConfig> couplings;

    std::string powder_kind = "single_crystal";  // | uniform_grid | golden_spiral
    int powder_n = 0;
    int powder_n_beta = 0;
    int powder_n_gamma = 0;
    std::optional<double> powder_beta_d_rad;   // single-crystal orientation override
    std::optional<double> powder_gamma_d_rad;

    bool cycle_enabled = true;

    SequenceFamily to_family() const {
        if (family == "adnf_arnf") return SequenceFamily::adnf_arnf;
        if (family == "adrf_arrf") return SequenceFamily::adrf_arrf;
        throw format_error("config: sequence.family must be adnf_arnf or adrf_arrf");
    }

    SequenceSpec to_sequence() const {
        SequenceSpec s;
        s.omega1 = two_pi * omega1_hz;
        s.omega2 = two_pi * omega2_hz;
        s.tau = tau_s;
        s.t_retention = retention_s;
        s.zeta_adnf = zeta_adnf_rad;
        s.zeta_arnf = zeta_arnf_rad;
        s.static_mode = (spin_rate_hz == 0.0);
        s.omega_r = s.static_mode ? 0.0 : two_pi * spin_rate_hz;
        s.dt = dt_s;
        if (mode == "ideal")
            s.mode = RfMode::ideal;
        else if (mode == "hardware")
            s.mode = RfMode::hardware;
        else
            throw format_error("config: sequence.mode must be ideal or hardware");
        if (detect == "none")
            s.detect = DetectMode::none;
        else if (detect == "fid")
            s.detect = DetectMode::fid;
        else
            throw format_error("config: sequence.detect must be none or fid");
        s.fid_duration = fid_duration_s;
        s.fid_dwell = fid_dwell_s;
        s.validate();
        return s;
    }

    SpinSystem to_system() const {
        SpinSystem sys;
        sys.n_spins = n_spins;
        for (const CouplingConfig& c : couplings)
            sys.couplings.push_back({c.site_i, c.site_j, two_pi * c.d_hz, c.beta_d_rad,
                                     c.gamma_d_rad});
        sys.validate();
        return sys;
    }

    PowderScheme to_powder(const SpinSystem& sys) const {
        if (powder_kind == "single_crystal") {
            Orientation o = orientation_of(sys);
            if (powder_beta_d_rad) o.beta_d = *powder_beta_d_rad;
            if (powder_gamma_d_rad) o.gamma_d = *powder_gamma_d_rad;
            return PowderScheme::make_single_crystal(o.beta_d, o.gamma_d);
        }
        if (powder_kind == "uniform_grid") {
            if (powder_n_beta < 1 || powder_n_gamma < 1)
                throw format_error(
                    "config: powder.n_beta and powder.n_gamma are required for uniform_grid");
            return PowderScheme::make_uniform_grid(powder_n_beta, powder_n_gamma);
        }
        if (powder_kind == "golden_spiral") {
            if (powder_n < 1)
                throw format_error("config: powder.n is required for golden_spiral");
            return PowderScheme::make_golden_spiral(powder_n);
        }
        throw format_error(
            "config: powder.kind must be single_crystal, uniform_grid, or golden_spiral");
    }

    // Canonical key order, %.17g numbers: reparsing reproduces this struct
    // exactly, so reruns from the echo are byte-identical.
    std::string echo() const {
        std::ostringstream out;
        auto num = [&](const std::string& k, double v) {
            out << k << " = " << detail::fmt_g17(v) << "\n";
        };
        auto str = [&](const std::string& k, const std::string& v) {
            out << k << " = " << v << "\n";
        };
        str("sequence.family", family);
        num("sequence.omega1_hz", omega1_hz);
        num("sequence.omega2_hz", omega2_hz);
        num("sequence.tau_s", tau_s);
        num("sequence.retention_s", retention_s);
        num("sequence.zeta_adnf_rad", zeta_adnf_rad);
        if (zeta_arnf_rad)
            num("sequence.zeta_arnf", *zeta_arnf_rad);
        else
            str("sequence.zeta_arnf", "auto");
        num("sequence.spin_rate_hz", spin_rate_hz);
        num("sequence.dt_s", dt_s);
        str("sequence.mode", mode);
        str("sequence.detect", detect);
        if (detect == "fid") {
            num("sequence.fid_duration_s", fid_duration_s);
            num("sequence.fid_dwell_s", fid_dwell_s);
        }
        out << "system.n_spins = " << n_spins << "\n";
        for (std::size_t i = 0; i < couplings.size(); ++i) {
            const std::string p = "system.coupling." + std::to_string(i) + ".";
            out << p << "site_i = " << couplings[i].site_i << "\n";
            out << p << "site_j = " << couplings[i].site_j << "\n";
            num(p + "d_hz", couplings[i].d_hz);
            num(p + "beta_d_rad", couplings[i].beta_d_rad);
            num(p + "gamma_d_rad", couplings[i].gamma_d_rad);
        }
        str("powder.kind", powder_kind);
        if (powder_kind == "golden_spiral") out << "powder.n = " << powder_n << "\n";
        if (powder_kind == "uniform_grid") {
            out << "powder.n_beta = " << powder_n_beta << "\n";
            out << "powder.n_gamma = " << powder_n_gamma << "\n";
        }
        if (powder_beta_d_rad) num("powder.beta_d_rad", *powder_beta_d_rad);
        if (powder_gamma_d_rad) num("powder.gamma_d_rad", *powder_gamma_d_rad);
        str("cycle.enabled", cycle_enabled ? "true" : "false");
        return out.str();
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline double parse_number(const std::string& key, const std::string& value) {
    const char* begin = value.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || !std::isfinite(v))
        throw format_error("config: key '" + key + "' has non-numeric value '" + value + "'");
    return v;
}

inline int parse_int(const std::string& key, const std::string& value) {
    const char* begin = value.c_str();
    char* end = nullptr;
    const long v = std::strtol(begin, &end, 10);
    if (end == begin || *end != '\0')
        throw format_error("config: key '" + key + "' has non-integer value '" + value + "'");
    if (v < -1000000 || v > 1000000)
        throw format_error("config: key '" + key + "' is out of range");
    return static_cast<int>(v);
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    throw format_error("config: key '" + key + "' must be true or false, got '" + value + "'");
}

struct CouplingDraft {
    std::optional<int> site_i, site_j;
    std::optional<double> d_hz, beta_d_rad, gamma_d_rad;
};

}  // namespace detail

inline RunConfig parse_config_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw format_error("config: line " + std::to_string(line_no) +
                               " is not a key=value pair");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty())
            throw format_error("config: line " + std::to_string(line_no) + " has an empty key");
        if (!kv.emplace(key, value).second)
            throw format_error("config: duplicate key '" + key + "'");
    }

    RunConfig cfg;
    std::map<std::size_t, detail::CouplingDraft> drafts;
    std::set<std::string> seen;

    for (const auto& [key, value] : kv) {
        seen.insert(key);
        if (key == "sequence.family") cfg.family = value;
        else if (key == "sequence.omega1_hz") cfg.omega1_hz = detail::parse_number(key, value);
        else if (key == "sequence.omega2_hz") cfg.omega2_hz = detail::parse_number(key, value);
        else if (key == "sequence.tau_s") cfg.tau_s = detail::parse_number(key, value);
        else if (key == "sequence.retention_s") cfg.retention_s = detail::parse_number(key, value);
        else if (key == "sequence.zeta_adnf_rad") cfg.zeta_adnf_rad = detail::parse_number(key, value);
        else if (key == "sequence.zeta_arnf") {
            if (value == "auto")
                cfg.zeta_arnf_rad.reset();
            else
                cfg.zeta_arnf_rad = detail::parse_number(key, value);
        }
        else if (key == "sequence.spin_rate_hz") cfg.spin_rate_hz = detail::parse_number(key, value);
        else if (key == "sequence.dt_s") cfg.dt_s = detail::parse_number(key, value);
        else if (key == "sequence.mode") cfg.mode = value;
        else if (key == "sequence.detect") cfg.detect = value;
        else if (key == "sequence.fid_duration_s") cfg.fid_duration_s = detail::parse_number(key, value);
        else if (key == "sequence.fid_dwell_s") cfg.fid_dwell_s = detail::parse_number(key, value);
        else if (key == "system.n_spins") cfg.n_spins = detail::parse_int(key, value);
        else if (key.rfind("system.coupling.", 0) == 0) {
            const std::string rest = key.substr(16);
            const std::size_t dot = rest.find('.');
            if (dot == std::string::npos || dot == 0)
                throw format_error("config: unknown key '" + key + "'");
            const std::string idx_s = rest.substr(0, dot);
            const std::string field = rest.substr(dot + 1);
            char* end = nullptr;
            const long idx = std::strtol(idx_s.c_str(), &end, 10);
            if (end == idx_s.c_str() || *end != '\0' || idx < 0 || idx > 63)
                throw format_error("config: unknown key '" + key + "'");
            detail::CouplingDraft& d = drafts[static_cast<std::size_t>(idx)];
            if (field == "site_i") d.site_i = detail::parse_int(key, value);
            else if (field == "site_j") d.site_j = detail::parse_int(key, value);
            else if (field == "d_hz") d.d_hz = detail::parse_number(key, value);
            else if (field == "beta_d_rad") d.beta_d_rad = detail::parse_number(key, value);
            else if (field == "gamma_d_rad") d.gamma_d_rad = detail::parse_number(key, value);
            else throw format_error("config: unknown key '" + key + "'");
        }
        else if (key == "powder.kind") cfg.powder_kind = value;
        else if (key == "powder.n") cfg.powder_n = detail::parse_int(key, value);
        else if (key == "powder.n_beta") cfg.powder_n_beta = detail::parse_int(key, value);
        else if (key == "powder.n_gamma") cfg.powder_n_gamma = detail::parse_int(key, value);
        else if (key == "powder.beta_d_rad") cfg.powder_beta_d_rad = detail::parse_number(key, value);
        else if (key == "powder.gamma_d_rad") cfg.powder_gamma_d_rad = detail::parse_number(key, value);
        else if (key == "cycle.enabled") cfg.cycle_enabled = detail::parse_bool(key, value);
        else throw format_error("config: unknown key '" + key + "'");
    }

    auto require = [&](const char* key) {
        if (!seen.count(key))
            throw format_error(std::string("config: missing required key '") + key + "'");
    };
    require("sequence.omega1_hz");
    require("sequence.tau_s");
    require("sequence.retention_s");
    require("system.n_spins");
    if (cfg.family != "adrf_arrf") require("sequence.omega2_hz");
    if (cfg.detect == "fid") {
        require("sequence.fid_duration_s");
        require("sequence.fid_dwell_s");
    }

    std::size_t next = 0;
    for (const auto& [idx, d] : drafts) {
        if (idx != next)
            throw format_error("config: coupling indices must be contiguous from 0; missing index " +
                               std::to_string(next));
        ++next;
        const std::string p = "system.coupling." + std::to_string(idx) + ".";
        if (!d.site_i) throw format_error("config: missing required key '" + p + "site_i'");
        if (!d.site_j) throw format_error("config: missing required key '" + p + "site_j'");
        if (!d.d_hz) throw format_error("config: missing required key '" + p + "d_hz'");
        if (!d.beta_d_rad) throw format_error("config: missing required key '" + p + "beta_d_rad'");
        if (!d.gamma_d_rad) throw format_error("config: missing required key '" + p + "gamma_d_rad'");
        cfg.couplings.push_back({*d.site_i, *d.site_j, *d.d_hz, *d.beta_d_rad, *d.gamma_d_rad});
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

}  // namespace spinsim
