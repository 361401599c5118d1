#pragma once

// Sensor series ingestion and windowed sample construction.
//
// A Series is a uniformly sampled 1 Hz value sequence (concentration or
// IAQI). SampleSets reference windows of a source series by start index
// rather than materializing them; window values are copied out on access,
// with z-score normalization applied lazily from fitted per-channel stats.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "greeneyes/rng.hpp"
#include "greeneyes/targets.hpp"

namespace greeneyes {

enum class UnitKind { Concentration, Iaqi };

struct Series {
    std::string channel;
    std::int64_t start_timestamp = 0;  // epoch seconds of the first sample
    UnitKind unit = UnitKind::Concentration;
    std::shared_ptr<const std::vector<double>> values;

    std::size_t size() const { return values ? values->size() : 0; }
    const std::vector<double>& data() const { return *values; }
};

inline Series make_series(std::string channel, std::vector<double> values,
                          UnitKind unit = UnitKind::Concentration, std::int64_t start_timestamp = 0) {
    return Series{std::move(channel), start_timestamp, unit,
                  std::make_shared<const std::vector<double>>(std::move(values))};
}

struct WindowSpec {
    std::size_t window_size = 7200;
    std::size_t stride = 10;
    std::size_t horizon = 1;  // next time frame

    void validate() const {
        if (window_size < 1) throw std::invalid_argument("WindowSpec: window_size must be >= 1");
        if (stride < 1) throw std::invalid_argument("WindowSpec: stride must be >= 1");
        if (horizon != 1) throw std::invalid_argument("WindowSpec: horizon is fixed at 1");
    }

    bool operator==(const WindowSpec&) const = default;
};

struct NormStats {
    std::map<std::string, std::pair<double, double>> by_channel;  // channel -> (mean, std)

    const std::pair<double, double>& of(const std::string& channel) const {
        auto it = by_channel.find(channel);
        if (it == by_channel.end())
            throw std::invalid_argument("NormStats: no statistics for channel '" + channel + "'");
        return it->second;
    }
};

// One windowed (input, target) pair referencing its source series.
struct SampleRef {
    std::shared_ptr<const std::vector<double>> source;
    std::size_t start;         // slice offset: window covers [start, start + window_size)
    std::size_t origin_start;  // provenance: start index in the original series
    double target;             // value at origin_start + window_size
    std::string channel;
};

class SampleSet {
public:
    SampleSet() = default;
    SampleSet(WindowSpec spec, std::vector<SampleRef> samples)
        : spec_(spec), samples_(std::move(samples)) {}

    const WindowSpec& spec() const { return spec_; }
    std::size_t size() const { return samples_.size(); }
    const std::vector<SampleRef>& samples() const { return samples_; }
    const std::optional<NormStats>& norm_stats() const { return norm_; }

    // Materializes sample j's input window, normalized when stats are set.
    std::vector<double> input(std::size_t j) const {
        const SampleRef& s = samples_.at(j);
        std::vector<double> w(s.source->begin() + static_cast<std::ptrdiff_t>(s.start),
                              s.source->begin() + static_cast<std::ptrdiff_t>(s.start + spec_.window_size));
        if (norm_) {
            auto [mean, sd] = norm_->of(s.channel);
            for (double& v : w) v = (v - mean) / sd;
        }
        return w;
    }

    // Raw (unnormalized) window, exactly as stored in the source series.
    std::vector<double> raw_input(std::size_t j) const {
        const SampleRef& s = samples_.at(j);
        return {s.source->begin() + static_cast<std::ptrdiff_t>(s.start),
                s.source->begin() + static_cast<std::ptrdiff_t>(s.start + spec_.window_size)};
    }

    double target(std::size_t j) const { return samples_.at(j).target; }

    void set_norm_stats(NormStats stats) { norm_ = std::move(stats); }

private:
    WindowSpec spec_;
    std::vector<SampleRef> samples_;
    std::optional<NormStats> norm_;
};

// ---------------------------------------------------------------------------
// CSV ingestion: header "timestamp,pm25", strictly consecutive 1 Hz stamps.
// ---------------------------------------------------------------------------

inline Series load_series_csv(const std::string& path, UnitKind unit,
                              std::string channel = "") {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_series_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("load_series_csv: empty file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "timestamp,pm25")
        throw std::runtime_error("load_series_csv: expected header 'timestamp,pm25' in " + path);

    if (channel.empty()) channel = std::filesystem::path(path).stem().string();

    std::vector<double> values;
    std::int64_t first_ts = 0;
    std::int64_t prev_ts = 0;
    bool have_prev = false;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error("load_series_csv: missing comma at line " + std::to_string(lineno));
        std::int64_t ts;
        double value;
        try {
            ts = std::stoll(line.substr(0, comma));
            value = std::stod(line.substr(comma + 1));
        } catch (const std::exception&) {
            throw std::runtime_error("load_series_csv: malformed row at line " + std::to_string(lineno));
        }
        if (!std::isfinite(value))
            throw std::runtime_error("load_series_csv: non-finite value at line " + std::to_string(lineno));
        if (value < 0.0)
            throw std::runtime_error("load_series_csv: negative concentration at line " +
                                     std::to_string(lineno));
        if (have_prev) {
            if (ts == prev_ts)
                throw std::runtime_error("load_series_csv: duplicate timestamp at line " +
                                         std::to_string(lineno));
            if (ts != prev_ts + 1)
                throw std::runtime_error("load_series_csv: timestamp gap at line " + std::to_string(lineno));
        } else {
            first_ts = ts;
            have_prev = true;
        }
        prev_ts = ts;
        values.push_back(value);
    }
    return make_series(std::move(channel), std::move(values), unit, first_ts);
}

inline void save_series_csv(const Series& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_series_csv: cannot open " + path);
    out << "timestamp,pm25\n";
    std::ostringstream body;
    body.precision(17);
    for (std::size_t i = 0; i < s.size(); ++i)
        body << (s.start_timestamp + static_cast<std::int64_t>(i)) << ',' << s.data()[i] << '\n';
    out << body.str();
}

// ---------------------------------------------------------------------------
// Window construction
// ---------------------------------------------------------------------------

// Number of stride-spaced windows whose one-step-ahead target stays in range.
inline std::size_t sample_count(std::size_t length, std::size_t window, std::size_t stride) {
    if (length < window + 1) return 0;
    return (length - window - 1) / stride + 1;
}

// Builds (window, next-value) pairs: sample j starts at j*stride and targets
// target_series[start + window].
inline SampleSet build_samples(const Series& input, const std::vector<double>& target_series,
                               const WindowSpec& spec) {
    spec.validate();
    if (input.size() != target_series.size())
        throw std::invalid_argument("build_samples: input and target lengths differ");
    if (input.size() < spec.window_size + 1)
        throw std::invalid_argument("build_samples: series shorter than window_size + 1");

    std::vector<SampleRef> samples;
    samples.reserve(sample_count(input.size(), spec.window_size, spec.stride));
    for (std::size_t start = 0; start + spec.window_size <= input.size() - 1; start += spec.stride) {
        samples.push_back(SampleRef{input.values, start, start,
                                    target_series[start + spec.window_size], input.channel});
    }
    return SampleSet(spec, std::move(samples));
}

inline SampleSet build_samples(const Series& input, const PolygonalTarget& target, const WindowSpec& spec) {
    return build_samples(input, target.series, spec);
}

// Chronological split: samples ordered by start index, first ceil(fraction*n)
// to train, remainder to validation. No shuffling.
inline std::pair<SampleSet, SampleSet> chronological_split(const SampleSet& s, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("chronological_split: fraction must be in (0, 1)");
    std::vector<SampleRef> ordered = s.samples();
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const SampleRef& a, const SampleRef& b) { return a.origin_start < b.origin_start; });
    std::size_t n = ordered.size();
    auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(n)));
    if (n_train == 0 || n_train >= n)
        throw std::invalid_argument("chronological_split: a side would be empty");
    std::vector<SampleRef> train(ordered.begin(), ordered.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<SampleRef> val(ordered.begin() + static_cast<std::ptrdiff_t>(n_train), ordered.end());
    return {SampleSet(s.spec(), std::move(train)), SampleSet(s.spec(), std::move(val))};
}

// Pools samples from several channels into one set (sample-level fusion,
// not multivariate stacking). All sets must share the window spec.
inline SampleSet fuse_channels(const std::vector<SampleSet>& sets) {
    if (sets.empty()) throw std::invalid_argument("fuse_channels: no sets");
    std::vector<SampleRef> merged;
    for (const SampleSet& s : sets) {
        if (!(s.spec() == sets.front().spec()))
            throw std::invalid_argument("fuse_channels: window specs differ");
        merged.insert(merged.end(), s.samples().begin(), s.samples().end());
    }
    return SampleSet(sets.front().spec(), std::move(merged));
}

// Fits per-channel z-score statistics on the training inputs and applies
// them to the training set and every other set. Targets are untouched.
inline NormStats fit_and_apply_normalizer(SampleSet& train, std::vector<SampleSet*> others = {}) {
    if (train.size() == 0) throw std::invalid_argument("fit_and_apply_normalizer: empty training set");

    struct Acc {
        double sum = 0.0, sum_sq = 0.0;
        std::size_t n = 0;
    };
    std::map<std::string, Acc> acc;
    for (std::size_t j = 0; j < train.size(); ++j) {
        auto w = train.raw_input(j);
        Acc& a = acc[train.samples()[j].channel];
        for (double v : w) {
            a.sum += v;
            a.sum_sq += v * v;
            ++a.n;
        }
    }
    NormStats stats;
    for (auto& [channel, a] : acc) {
        double mean = a.sum / static_cast<double>(a.n);
        double var = a.sum_sq / static_cast<double>(a.n) - mean * mean;
        double sd = std::sqrt(std::max(var, 0.0));
        if (sd <= 0.0)
            throw std::invalid_argument("fit_and_apply_normalizer: zero variance in channel '" + channel +
                                        "'");
        stats.by_channel[channel] = {mean, sd};
    }
    train.set_norm_stats(stats);
    for (SampleSet* other : others) other->set_norm_stats(stats);
    return stats;
}

// ---------------------------------------------------------------------------
// Synthetic series generation for tests and demos
// ---------------------------------------------------------------------------

struct SynthParams {
    double base = 2.0;
    std::vector<double> amplitudes = {1.0, 0.5};
    std::vector<double> periods = {900.0, 240.0};  // samples per cycle
    double noise_std = 0.05;
    double level_shift_rate = 0.0005;  // per-sample probability of a step change
};

// Deterministic seeded series: slow sinusoids + Gaussian noise + occasional
// level shifts, floored at 0.
inline Series synth_generate(std::uint64_t seed, std::size_t length, const SynthParams& p = {},
                             UnitKind unit = UnitKind::Iaqi) {
    if (length < 1) throw std::invalid_argument("synth_generate: length must be >= 1");
    if (p.amplitudes.size() != p.periods.size())
        throw std::invalid_argument("synth_generate: amplitudes/periods size mismatch");
    Rng rng(seed);
    std::vector<double> phases(p.amplitudes.size());
    for (double& ph : phases) ph = rng.uniform(0.0, 2.0 * 3.14159265358979323846);

    std::vector<double> values(length);
    double shift = 0.0;
    for (std::size_t t = 0; t < length; ++t) {
        double v = p.base + shift;
        for (std::size_t k = 0; k < p.amplitudes.size(); ++k) {
            v += p.amplitudes[k] *
                 std::sin(2.0 * 3.14159265358979323846 * static_cast<double>(t) / p.periods[k] + phases[k]);
        }
        v += p.noise_std * rng.gaussian();
        if (rng.uniform() < p.level_shift_rate) shift += rng.uniform(-0.75, 0.75);
        values[t] = std::max(v, 0.0);
    }
    return make_series("synth-" + std::to_string(seed), std::move(values), unit);
}

// ---------------------------------------------------------------------------
// SampleSet export/import: manifest + flat little-endian float64 blobs
// ---------------------------------------------------------------------------
// Layout under the export directory:
//   manifest.json  window/stride/count, per-sample provenance, norm stats
//   inputs.bin     count * window_size doubles, row-major
//   targets.bin    count doubles

namespace detail {

inline void write_f64_blob(const std::string& path, const std::vector<double>& values) {
    static_assert(sizeof(double) == 8);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_f64_blob: cannot open " + path);
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!out) throw std::runtime_error("write_f64_blob: write failed for " + path);
}

inline std::vector<double> read_f64_blob(const std::string& path, std::size_t expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_f64_blob: cannot open " + path);
    std::vector<double> values(expected);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(expected * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != expected * sizeof(double))
        throw std::runtime_error("read_f64_blob: truncated file " + path);
    return values;
}

}  // namespace detail

inline void export_sample_set(const SampleSet& s, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    nlohmann::json manifest;
    manifest["format_version"] = 1;
    manifest["window_size"] = s.spec().window_size;
    manifest["stride"] = s.spec().stride;
    manifest["horizon"] = s.spec().horizon;
    manifest["count"] = s.size();
    nlohmann::json prov = nlohmann::json::array();
    for (const SampleRef& r : s.samples())
        prov.push_back({{"channel", r.channel}, {"start", r.origin_start}});
    manifest["provenance"] = std::move(prov);
    if (s.norm_stats()) {
        nlohmann::json ns;
        for (const auto& [channel, ms] : s.norm_stats()->by_channel)
            ns[channel] = {{"mean", ms.first}, {"std", ms.second}};
        manifest["norm_stats"] = std::move(ns);
    }
    std::ofstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw std::runtime_error("export_sample_set: cannot write manifest in " + dir);
    mf << manifest.dump(2) << '\n';

    std::vector<double> inputs;
    inputs.reserve(s.size() * s.spec().window_size);
    std::vector<double> targets;
    targets.reserve(s.size());
    for (std::size_t j = 0; j < s.size(); ++j) {
        auto w = s.input(j);  // normalized view when stats are set
        inputs.insert(inputs.end(), w.begin(), w.end());
        targets.push_back(s.target(j));
    }
    detail::write_f64_blob((fs::path(dir) / "inputs.bin").string(), inputs);
    detail::write_f64_blob((fs::path(dir) / "targets.bin").string(), targets);
}

// Imported samples own their window buffers; provenance carries the original
// channel/start. Exported inputs were already normalized, so no stats are
// reattached.
inline SampleSet import_sample_set(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw std::runtime_error("import_sample_set: cannot open manifest in " + dir);
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const std::exception& e) {
        throw std::runtime_error("import_sample_set: bad manifest: " + std::string(e.what()));
    }
    if (manifest.value("format_version", 0) != 1)
        throw std::runtime_error("import_sample_set: unsupported format version");

    WindowSpec spec;
    spec.window_size = manifest.at("window_size").get<std::size_t>();
    spec.stride = manifest.at("stride").get<std::size_t>();
    spec.horizon = manifest.at("horizon").get<std::size_t>();
    auto count = manifest.at("count").get<std::size_t>();
    const auto& prov = manifest.at("provenance");
    if (prov.size() != count) throw std::runtime_error("import_sample_set: provenance count mismatch");

    std::vector<double> inputs =
        detail::read_f64_blob((fs::path(dir) / "inputs.bin").string(), count * spec.window_size);
    std::vector<double> targets = detail::read_f64_blob((fs::path(dir) / "targets.bin").string(), count);

    std::vector<SampleRef> samples;
    samples.reserve(count);
    for (std::size_t j = 0; j < count; ++j) {
        auto window = std::make_shared<const std::vector<double>>(
            inputs.begin() + static_cast<std::ptrdiff_t>(j * spec.window_size),
            inputs.begin() + static_cast<std::ptrdiff_t>((j + 1) * spec.window_size));
        samples.push_back(SampleRef{window, 0, prov[j].at("start").get<std::size_t>(), targets[j],
                                    prov[j].at("channel").get<std::string>()});
    }
    SampleSet out(spec, std::move(samples));
    return out;
}

}  // namespace greeneyes
