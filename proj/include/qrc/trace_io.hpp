#pragma once

// Trace CSV format: '#'-prefixed key=value metadata lines, a "t_s,value"
// column header, then one sample per row. Floats are written with the
// shortest representation that parses back to the identical double, so
// write(read(file)) reproduces a written file byte for byte. A plain
// two-column CSV for (LO power, noise power) points shares the helpers.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "qrc/errors.hpp"
#include "qrc/trace.hpp"

namespace qrc {

namespace detail {

inline std::string format_double(double x) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, std::size_t line_no) {
    double value = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc() || res.ptr != end) {
        throw ParseError("line " + std::to_string(line_no) + ": cannot parse number '" +
                         std::string(text) + "'");
    }
    return value;
}

inline std::uint64_t parse_u64(std::string_view text, std::size_t line_no) {
    std::uint64_t value = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw ParseError("line " + std::to_string(line_no) + ": cannot parse integer '" +
                         std::string(text) + "'");
    }
    return value;
}

}  // namespace detail

inline std::string format_trace(const Trace& trace) {
    validate_trace(trace);
    std::string out;
    out.reserve(trace.t.size() * 24 + 256);
    out += "# label=" + trace.meta.label + "\n";
    out += "# units=" + trace.meta.units + "\n";
    out += "# center_frequency_hz=" + detail::format_double(trace.meta.center_frequency_hz) + "\n";
    out += "# rbw_hz=" + detail::format_double(trace.meta.rbw_hz) + "\n";
    if (trace.meta.seed) {
        out += "# seed=" + std::to_string(*trace.meta.seed) + "\n";
    }
    if (!trace.meta.generator.empty()) {
        out += "# generator=" + trace.meta.generator + "\n";
    }
    for (const std::string& w : trace.meta.warnings) {
        out += "# warning=" + w + "\n";
    }
    out += "t_s,value\n";
    for (std::size_t i = 0; i < trace.t.size(); ++i) {
        out += detail::format_double(trace.t[i]);
        out += ',';
        out += detail::format_double(trace.v[i]);
        out += '\n';
    }
    return out;
}

inline Trace parse_trace(std::string_view text) {
    Trace trace;
    std::size_t line_no = 0;
    bool saw_columns = false;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.size() - pos
                                                                               : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;
        if (line.empty()) {
            continue;
        }
        if (line.front() == '#') {
            if (saw_columns) {
                throw ParseError("line " + std::to_string(line_no) +
                                 ": metadata after the column header");
            }
            line.remove_prefix(1);
            if (!line.empty() && line.front() == ' ') {
                line.remove_prefix(1);
            }
            const std::size_t eq = line.find('=');
            if (eq == std::string_view::npos) {
                throw ParseError("line " + std::to_string(line_no) +
                                 ": metadata line is not key=value");
            }
            const std::string_view key = line.substr(0, eq);
            const std::string_view value = line.substr(eq + 1);
            if (key == "label") {
                trace.meta.label = std::string(value);
            } else if (key == "units") {
                trace.meta.units = std::string(value);
            } else if (key == "center_frequency_hz") {
                trace.meta.center_frequency_hz = detail::parse_double(value, line_no);
            } else if (key == "rbw_hz") {
                trace.meta.rbw_hz = detail::parse_double(value, line_no);
            } else if (key == "seed") {
                trace.meta.seed = detail::parse_u64(value, line_no);
            } else if (key == "generator") {
                trace.meta.generator = std::string(value);
            } else if (key == "warning") {
                trace.meta.warnings.emplace_back(value);
            } else {
                throw ParseError("line " + std::to_string(line_no) + ": unknown metadata key '" +
                                 std::string(key) + "'");
            }
            continue;
        }
        if (!saw_columns) {
            if (line != "t_s,value") {
                throw ParseError("line " + std::to_string(line_no) +
                                 ": expected column header 't_s,value', got '" + std::string(line) +
                                 "'");
            }
            saw_columns = true;
            continue;
        }
        const std::size_t comma = line.find(',');
        if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos) {
            throw ParseError("line " + std::to_string(line_no) + ": expected exactly two columns");
        }
        trace.t.push_back(detail::parse_double(line.substr(0, comma), line_no));
        trace.v.push_back(detail::parse_double(line.substr(comma + 1), line_no));
    }
    if (!saw_columns) {
        throw ParseError("trace file has no 't_s,value' column header");
    }
    validate_trace(trace);
    return trace;
}

inline void write_trace(const std::string& path, const Trace& trace) {
    std::ofstream file(path, std::ios::binary);
    if (!file) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    const std::string text = format_trace(trace);
    file.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!file) {
        throw IoError("failed writing '" + path + "'");
    }
}

inline Trace read_trace(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw IoError("cannot open '" + path + "' for reading");
    }
    std::ostringstream buf;
    buf << file.rdbuf();
    return parse_trace(buf.str());
}

// (LO power, noise power) points for the proportionality gate. Format:
// optional '#' comment lines, a "power_mw,noise_power" header, data rows.
inline std::string format_points(const std::vector<std::pair<double, double>>& points) {
    std::string out = "power_mw,noise_power\n";
    for (const auto& [p, v] : points) {
        out += detail::format_double(p);
        out += ',';
        out += detail::format_double(v);
        out += '\n';
    }
    return out;
}

inline std::vector<std::pair<double, double>> parse_points(std::string_view text) {
    std::vector<std::pair<double, double>> points;
    std::size_t line_no = 0;
    bool saw_columns = false;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.size() - pos
                                                                               : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') {
            continue;
        }
        if (!saw_columns) {
            if (line != "power_mw,noise_power") {
                throw ParseError("line " + std::to_string(line_no) +
                                 ": expected column header 'power_mw,noise_power'");
            }
            saw_columns = true;
            continue;
        }
        const std::size_t comma = line.find(',');
        if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos) {
            throw ParseError("line " + std::to_string(line_no) + ": expected exactly two columns");
        }
        points.emplace_back(detail::parse_double(line.substr(0, comma), line_no),
                            detail::parse_double(line.substr(comma + 1), line_no));
    }
    if (!saw_columns) {
        throw ParseError("points file has no 'power_mw,noise_power' column header");
    }
    return points;
}

inline void write_points(const std::string& path,
                         const std::vector<std::pair<double, double>>& points) {
    std::ofstream file(path, std::ios::binary);
    if (!file) {
        throw IoError("cannot open '" + path + "' for writing");
    }
    const std::string text = format_points(points);
    file.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!file) {
        throw IoError("failed writing '" + path + "'");
    }
}

inline std::vector<std::pair<double, double>> read_points(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw IoError("cannot open '" + path + "' for reading");
    }
    std::ostringstream buf;
    buf << file.rdbuf();
    return parse_points(buf.str());
}

}  // namespace qrc
