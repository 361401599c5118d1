#pragma once

// IAQI/AQI computation from pollutant concentrations.
//
// An IAQI is obtained by piecewise-linear interpolation between the
// (concentration, IAQI) breakpoint rows of a standard's table; the AQI is
// the maximum over per-pollutant IAQIs. USA and China tables for PM2.5 and
// PM10 ship as built-in constants; custom tables load from plain-text files.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace greeneyes {

struct BreakpointRow {
    double iaqi;
    double concentration;  // ug/m3
};

struct BreakpointTable {
    std::string standard;   // "usa", "china", or a custom name
    std::string pollutant;  // "pm2.5", "pm10"
    std::vector<BreakpointRow> rows;  // strictly increasing in both columns

    void validate() const {
        if (rows.size() < 2) throw std::invalid_argument("BreakpointTable: at least two rows required");
        for (std::size_t i = 1; i < rows.size(); ++i) {
            if (!(rows[i].iaqi > rows[i - 1].iaqi) ||
                !(rows[i].concentration > rows[i - 1].concentration)) {
                throw std::invalid_argument("BreakpointTable: rows must be strictly increasing, row " +
                                            std::to_string(i));
            }
        }
    }

    double top_iaqi() const { return rows.back().iaqi; }
    double top_concentration() const { return rows.back().concentration; }
};

// The USA tables print no 400 row; their 300 segment spans directly to 500.
inline const BreakpointTable& usa_pm25() {
    static const BreakpointTable t{
        "usa", "pm2.5",
        {{0, 0}, {50, 12.1}, {100, 35.5}, {150, 55.5}, {200, 150.5}, {300, 250.5}, {500, 500.4}}};
    return t;
}

inline const BreakpointTable& usa_pm10() {
    static const BreakpointTable t{
        "usa", "pm10", {{0, 0}, {50, 55}, {100, 155}, {150, 255}, {200, 355}, {300, 425}, {500, 604}}};
    return t;
}

inline const BreakpointTable& china_pm25() {
    static const BreakpointTable t{
        "china", "pm2.5",
        {{0, 0}, {50, 35}, {100, 75}, {150, 115}, {200, 150}, {300, 250}, {400, 350}, {500, 500}}};
    return t;
}

inline const BreakpointTable& china_pm10() {
    static const BreakpointTable t{
        "china", "pm10",
        {{0, 0}, {50, 50}, {100, 150}, {150, 250}, {200, 350}, {300, 420}, {400, 500}, {500, 600}}};
    return t;
}

inline const BreakpointTable& builtin_table(const std::string& standard, const std::string& pollutant) {
    if (standard == "usa" && pollutant == "pm2.5") return usa_pm25();
    if (standard == "usa" && pollutant == "pm10") return usa_pm10();
    if (standard == "china" && pollutant == "pm2.5") return china_pm25();
    if (standard == "china" && pollutant == "pm10") return china_pm10();
    throw std::invalid_argument("builtin_table: unknown standard/pollutant " + standard + "/" + pollutant);
}

struct IaqiValue {
    double value;   // in [0, 500] for the built-in tables
    bool clamped;   // concentration fell outside the table span
};

struct IaqiLevel {
    std::size_t level;  // 0-based band index between consecutive table rows
};

// Piecewise-linear interpolation between the bracketing breakpoint rows.
// Segment membership is lower-exclusive/upper-inclusive, with the table
// bottom belonging to the first segment. Concentrations above the top row
// clamp to the top IAQI and set the clamped flag.
inline IaqiValue iaqi_from_concentration(double cp, const BreakpointTable& table) {
    if (!(cp >= 0.0)) throw std::invalid_argument("iaqi_from_concentration: negative concentration");
    table.validate();
    const auto& rows = table.rows;

    if (cp <= rows.front().concentration) {
        // at or below the bottom; below only reachable with custom tables
        return {rows.front().iaqi, cp < rows.front().concentration};
    }
    if (cp > rows.back().concentration) {
        return {rows.back().iaqi, true};
    }
    // find segment with lo < cp <= hi
    std::size_t hi = 1;
    while (rows[hi].concentration < cp) ++hi;
    const BreakpointRow& lo_row = rows[hi - 1];
    const BreakpointRow& hi_row = rows[hi];
    if (cp == hi_row.concentration) return {hi_row.iaqi, false};  // exact row round-trips exactly
    double v = (cp - lo_row.concentration) / (hi_row.concentration - lo_row.concentration) *
                   (hi_row.iaqi - lo_row.iaqi) +
               lo_row.iaqi;
    return {v, false};
}

// AQI = max over per-pollutant IAQIs.
inline double aqi_from_iaqis(const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("aqi_from_iaqis: empty list");
    return *std::max_element(values.begin(), values.end());
}

// Band index of v between consecutive IAQI rows (lower-exclusive,
// upper-inclusive; v at the table bottom maps to band 0).
inline IaqiLevel level_from_iaqi(double v, const BreakpointTable& table) {
    table.validate();
    const auto& rows = table.rows;
    if (v < rows.front().iaqi || v > rows.back().iaqi)
        throw std::invalid_argument("level_from_iaqi: value outside table range");
    if (v <= rows.front().iaqi) return {0};
    std::size_t hi = 1;
    while (rows[hi].iaqi < v) ++hi;
    return {hi - 1};
}

struct IaqiSeries {
    std::vector<double> values;
    std::size_t clamp_count = 0;  // samples that fell outside the table span
};

// Pointwise conversion of a concentration series; clamp warnings aggregated.
inline IaqiSeries series_to_iaqi(const std::vector<double>& series, const BreakpointTable& table) {
    table.validate();
    IaqiSeries out;
    out.values.reserve(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        if (!(series[i] >= 0.0))
            throw std::invalid_argument("series_to_iaqi: negative concentration at index " +
                                        std::to_string(i));
        IaqiValue v = iaqi_from_concentration(series[i], table);
        out.values.push_back(v.value);
        if (v.clamped) ++out.clamp_count;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Plain-text table files: one "iaqi,concentration" row per line.
// ---------------------------------------------------------------------------

inline void save_table(const BreakpointTable& table, const std::string& path) {
    table.validate();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_table: cannot open " + path);
    for (const auto& r : table.rows) {
        std::ostringstream line;
        line.precision(17);
        line << r.iaqi << ',' << r.concentration << '\n';
        out << line.str();
    }
}

inline BreakpointTable load_table(const std::string& path, std::string standard = "custom",
                                  std::string pollutant = "custom") {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_table: cannot open " + path);
    BreakpointTable table{std::move(standard), std::move(pollutant), {}};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("load_table: missing comma at line " + std::to_string(lineno));
        try {
            double iaqi = std::stod(line.substr(0, comma));
            double conc = std::stod(line.substr(comma + 1));
            table.rows.push_back({iaqi, conc});
        } catch (const std::exception&) {
            throw std::runtime_error("load_table: malformed number at line " + std::to_string(lineno));
        }
    }
    table.validate();
    return table;
}

}  // namespace greeneyes
