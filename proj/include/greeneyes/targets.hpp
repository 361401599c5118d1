#pragma once

// Piecewise-linear supervision targets from human changepoint annotations.
//
// An annotation is an ordered list of (sample index, level) anchors marking
// where the labeled level steps up or down. Between consecutive anchors the
// target is the connecting line segment; outside the annotated span it
// extends as a constant. Levels are real-valued so an annotator may encode
// sub-band severity.

#include <cstddef>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace greeneyes {

struct Anchor {
    std::size_t index;  // sample index t_i
    double level;       // level value l_i
};

struct Annotation {
    std::string channel;
    std::vector<Anchor> anchors;  // strictly increasing indices
};

struct TargetSegment {
    double slope;       // per-sample slope k_i
    double intercept;   // b_i, with value = slope * t + intercept
    std::size_t begin;  // segment covers [begin, end)
    std::size_t end;
};

struct PolygonalTarget {
    std::vector<TargetSegment> segments;
    std::vector<double> series;  // one target value per sample index
};

// Checks anchor ordering and bounds; returns the annotation unchanged.
inline const Annotation& validate_annotation(const Annotation& a, std::size_t series_len) {
    if (a.anchors.empty()) throw std::invalid_argument("validate_annotation: no anchors");
    for (std::size_t i = 0; i < a.anchors.size(); ++i) {
        if (a.anchors[i].index >= series_len)
            throw std::invalid_argument("validate_annotation: anchor " + std::to_string(i) +
                                        " index out of range");
        if (i > 0) {
            if (a.anchors[i].index == a.anchors[i - 1].index)
                throw std::invalid_argument("validate_annotation: duplicate index at anchor " +
                                            std::to_string(i));
            if (a.anchors[i].index < a.anchors[i - 1].index)
                throw std::invalid_argument("validate_annotation: anchors unsorted at " + std::to_string(i));
        }
    }
    return a;
}

// Slope between two consecutive anchors: (l_next - l) / (t_next - t).
inline double segment_slope(const Anchor& a, const Anchor& next) {
    if (next.index <= a.index) throw std::invalid_argument("segment_slope: non-positive time span");
    return (next.level - a.level) / static_cast<double>(next.index - a.index);
}

// Materializes the polygonal target over [0, series_len). Values between
// anchors are computed as l_i + k_i * (t - t_i), which is exact at anchors.
inline PolygonalTarget polygonalize(const Annotation& a, std::size_t series_len) {
    validate_annotation(a, series_len);
    const auto& anchors = a.anchors;

    PolygonalTarget out;
    out.series.resize(series_len);

    // constant head before the first anchor
    for (std::size_t t = 0; t < anchors.front().index; ++t) out.series[t] = anchors.front().level;
    if (anchors.front().index > 0) {
        out.segments.push_back({0.0, anchors.front().level, 0, anchors.front().index});
    }

    for (std::size_t i = 0; i + 1 < anchors.size(); ++i) {
        const Anchor& lo = anchors[i];
        const Anchor& hi = anchors[i + 1];
        double k = segment_slope(lo, hi);
        out.segments.push_back(
            {k, lo.level - k * static_cast<double>(lo.index), lo.index, hi.index});
        for (std::size_t t = lo.index; t < hi.index; ++t) {
            out.series[t] = lo.level + k * static_cast<double>(t - lo.index);
        }
    }

    // constant tail from the last anchor (inclusive) to the end
    for (std::size_t t = anchors.back().index; t < series_len; ++t) out.series[t] = anchors.back().level;
    out.segments.push_back({0.0, anchors.back().level, anchors.back().index, series_len});

    return out;
}

// ---------------------------------------------------------------------------
// Annotation sidecar files: header "index,level", one anchor per line.
// ---------------------------------------------------------------------------

inline Annotation load_annotation(const std::string& path, std::string channel = "") {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_annotation: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "index,level")
        throw std::runtime_error("load_annotation: expected header 'index,level' in " + path);
    Annotation a{std::move(channel), {}};
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("load_annotation: missing comma at line " + std::to_string(lineno));
        try {
            std::size_t idx = std::stoull(line.substr(0, comma));
            double level = std::stod(line.substr(comma + 1));
            a.anchors.push_back({idx, level});
        } catch (const std::exception&) {
            throw std::runtime_error("load_annotation: malformed anchor at line " + std::to_string(lineno));
        }
    }
    return a;
}

inline void save_annotation(const Annotation& a, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_annotation: cannot open " + path);
    out << "index,level\n";
    std::ostringstream body;
    body.precision(17);
    for (const auto& anchor : a.anchors) body << anchor.index << ',' << anchor.level << '\n';
    out << body.str();
}

}  // namespace greeneyes
