#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "greeneyes/dataset.hpp"

using namespace greeneyes;

namespace {

// Brute-force enumeration of valid window start indices.
std::size_t count_oracle(std::size_t length, std::size_t window, std::size_t stride) {
    std::size_t count = 0;
    for (std::size_t start = 0;; start += stride) {
        if (start + window + 1 > length) break;
        ++count;
    }
    return count;
}

std::vector<double> iota_series(std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i);
    return v;
}

}  // namespace

TEST_CASE("csv ingestion") {
    auto dir = std::filesystem::temp_directory_path();

    SECTION("well-formed file") {
        auto path = dir / "greeneyes_series_ok.csv";
        {
            std::ofstream out(path);
            out << "timestamp,pm25\n100,1.5\n101,2.5\n102,3.5\n";
        }
        Series s = load_series_csv(path.string(), UnitKind::Concentration, "ch0");
        REQUIRE(s.size() == 3);
        CHECK(s.start_timestamp == 100);
        CHECK(s.data()[1] == 2.5);
        CHECK(s.channel == "ch0");
        std::filesystem::remove(path);
    }

    SECTION("timestamp gap reported with line number") {
        auto path = dir / "greeneyes_series_gap.csv";
        {
            std::ofstream out(path);
            out << "timestamp,pm25\n0,1\n1,1\n3,1\n";
        }
        CHECK_THROWS_WITH(load_series_csv(path.string(), UnitKind::Concentration),
                          Catch::Matchers::ContainsSubstring("gap at line 4"));
        std::filesystem::remove(path);
    }

    SECTION("duplicate timestamp") {
        auto path = dir / "greeneyes_series_dup.csv";
        {
            std::ofstream out(path);
            out << "timestamp,pm25\n0,1\n0,1\n";
        }
        CHECK_THROWS_WITH(load_series_csv(path.string(), UnitKind::Concentration),
                          Catch::Matchers::ContainsSubstring("duplicate"));
        std::filesystem::remove(path);
    }

    SECTION("negative concentration") {
        auto path = dir / "greeneyes_series_neg.csv";
        {
            std::ofstream out(path);
            out << "timestamp,pm25\n0,1\n1,-1.0\n";
        }
        CHECK_THROWS_WITH(load_series_csv(path.string(), UnitKind::Concentration),
                          Catch::Matchers::ContainsSubstring("negative"));
        std::filesystem::remove(path);
    }

    SECTION("malformed row") {
        auto path = dir / "greeneyes_series_malformed.csv";
        {
            std::ofstream out(path);
            out << "timestamp,pm25\n0,abc\n";
        }
        CHECK_THROWS_WITH(load_series_csv(path.string(), UnitKind::Concentration),
                          Catch::Matchers::ContainsSubstring("line 2"));
        std::filesystem::remove(path);
    }

    SECTION("save/load round-trip") {
        auto path = dir / "greeneyes_series_roundtrip.csv";
        Series s = make_series("rt", {1.25, 2.5, 3.75}, UnitKind::Concentration, 42);
        save_series_csv(s, path.string());
        Series loaded = load_series_csv(path.string(), UnitKind::Concentration, "rt");
        REQUIRE(loaded.size() == 3);
        CHECK(loaded.start_timestamp == 42);
        for (std::size_t i = 0; i < 3; ++i) CHECK(loaded.data()[i] == s.data()[i]);
        std::filesystem::remove(path);
    }
}

TEST_CASE("build_samples counts and contents") {
    SECTION("documented example: length 1000, window 100, stride 10 gives 90") {
        Series in = make_series("c", iota_series(1000), UnitKind::Iaqi);
        SampleSet s = build_samples(in, iota_series(1000), {100, 10, 1});
        CHECK(s.size() == 90);
        CHECK(s.size() == count_oracle(1000, 100, 10));
    }

    SECTION("boundary: length == window + 1 gives exactly one sample") {
        for (std::size_t stride : {1, 2, 5, 10}) {
            Series in = make_series("c", iota_series(101), UnitKind::Iaqi);
            SampleSet s = build_samples(in, iota_series(101), {100, stride, 1});
            CHECK(s.size() == 1);
        }
    }

    SECTION("too-short series is an error") {
        Series in = make_series("c", iota_series(100), UnitKind::Iaqi);
        CHECK_THROWS_AS(build_samples(in, iota_series(100), {100, 10, 1}), std::invalid_argument);
    }

    SECTION("inputs are exact slices and targets the next value") {
        Series in = make_series("c", iota_series(64), UnitKind::Iaqi);
        SampleSet s = build_samples(in, iota_series(64), {16, 3, 1});
        for (std::size_t j = 0; j < s.size(); ++j) {
            auto w = s.input(j);
            std::size_t start = s.samples()[j].start;
            CHECK(start == j * 3);
            for (std::size_t i = 0; i < 16; ++i) CHECK(w[i] == static_cast<double>(start + i));
            CHECK(s.target(j) == static_cast<double>(start + 16));
        }
    }

    SECTION("smaller stride yields strictly more samples") {
        Series in = make_series("c", iota_series(5000), UnitKind::Iaqi);
        auto count = [&](std::size_t stride) {
            return build_samples(in, iota_series(5000), {100, stride, 1}).size();
        };
        CHECK(count(2) > count(5));
        CHECK(count(5) > count(10));
    }

    SECTION("randomized sweep matches brute-force enumeration") {
        std::mt19937_64 rng(31);
        for (int trial = 0; trial < 1000; ++trial) {
            std::size_t window = 1 + rng() % 50;
            std::size_t stride = 1 + rng() % 20;
            std::size_t length = window + 1 + rng() % 200;
            CHECK(sample_count(length, window, stride) == count_oracle(length, window, stride));
            Series in = make_series("c", iota_series(length), UnitKind::Iaqi);
            SampleSet s = build_samples(in, iota_series(length), {window, stride, 1});
            CHECK(s.size() == count_oracle(length, window, stride));
        }
    }
}

TEST_CASE("chronological split") {
    Series in = make_series("c", iota_series(191), UnitKind::Iaqi);
    SampleSet s = build_samples(in, iota_series(191), {100, 10, 1});  // 10 samples

    SECTION("80/20 split of ten samples") {
        auto [train, val] = chronological_split(s, 0.8);
        CHECK(train.size() == 8);
        CHECK(val.size() == 2);
        // disjoint and ordered: every validation start exceeds every train start
        for (const auto& tr : train.samples())
            for (const auto& va : val.samples()) CHECK(va.origin_start > tr.origin_start);
        CHECK(train.size() + val.size() == s.size());
    }

    SECTION("fraction bounds") {
        CHECK_THROWS_AS(chronological_split(s, 1.0), std::invalid_argument);
        CHECK_THROWS_AS(chronological_split(s, 0.0), std::invalid_argument);
        // 0.99 of 10 rounds up to 10: validation would be empty
        CHECK_THROWS_AS(chronological_split(s, 0.99), std::invalid_argument);
    }

    SECTION("split preserves count and start-index disjointness") {
        std::mt19937_64 rng(37);
        for (int trial = 0; trial < 50; ++trial) {
            std::size_t window = 5 + rng() % 20;
            std::size_t length = window + 20 + rng() % 300;
            Series series = make_series("c", iota_series(length), UnitKind::Iaqi);
            SampleSet set = build_samples(series, iota_series(length), {window, 1 + rng() % 5, 1});
            if (set.size() < 2) continue;
            auto [train, val] = chronological_split(set, 0.7);
            CHECK(train.size() + val.size() == set.size());
            std::set<std::size_t> starts;
            for (const auto& r : train.samples()) starts.insert(r.origin_start);
            for (const auto& r : val.samples()) CHECK_FALSE(starts.contains(r.origin_start));
        }
    }
}

TEST_CASE("channel fusion") {
    WindowSpec spec{100, 10, 1};
    auto make_set = [&](const std::string& ch, std::size_t len) {
        Series in = make_series(ch, iota_series(len), UnitKind::Iaqi);
        return build_samples(in, iota_series(len), spec);
    };

    SECTION("four sets of 90 fuse to 360") {
        std::vector<SampleSet> sets;
        for (int c = 0; c < 4; ++c) sets.push_back(make_set("ch" + std::to_string(c), 1000));
        SampleSet fused = fuse_channels(sets);
        CHECK(fused.size() == 360);
    }

    SECTION("single set is unchanged") {
        SampleSet fused = fuse_channels({make_set("solo", 500)});
        SampleSet direct = make_set("solo", 500);
        REQUIRE(fused.size() == direct.size());
        for (std::size_t j = 0; j < fused.size(); ++j) {
            CHECK(fused.input(j) == direct.input(j));
            CHECK(fused.target(j) == direct.target(j));
        }
    }

    SECTION("mismatched specs are rejected") {
        Series a = make_series("a", iota_series(8000), UnitKind::Iaqi);
        Series b = make_series("b", iota_series(8000), UnitKind::Iaqi);
        SampleSet sa = build_samples(a, iota_series(8000), {7200, 10, 1});
        SampleSet sb = build_samples(b, iota_series(8000), {3600, 10, 1});
        CHECK_THROWS_AS(fuse_channels({sa, sb}), std::invalid_argument);
    }
}

TEST_CASE("normalization") {
    std::mt19937_64 rng(41);
    std::vector<double> noisy(4000);
    std::uniform_real_distribution<double> dist(10.0, 60.0);
    for (auto& v : noisy) v = dist(rng);
    Series in = make_series("c", noisy, UnitKind::Iaqi);
    SampleSet all = build_samples(in, noisy, {64, 8, 1});
    auto [train, val] = chronological_split(all, 0.8);

    SECTION("train inputs become zero-mean unit-variance") {
        fit_and_apply_normalizer(train, {&val});
        double sum = 0.0, sum_sq = 0.0;
        std::size_t n = 0;
        for (std::size_t j = 0; j < train.size(); ++j) {
            for (double v : train.input(j)) {
                sum += v;
                sum_sq += v * v;
                ++n;
            }
        }
        double mean = sum / static_cast<double>(n);
        double var = sum_sq / static_cast<double>(n) - mean * mean;
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(var - 1.0) < 1e-9);
    }

    SECTION("validation uses train statistics, not its own") {
        NormStats stats = fit_and_apply_normalizer(train, {&val});
        auto [mean, sd] = stats.of("c");
        auto w = val.input(0);
        auto raw = val.raw_input(0);
        for (std::size_t i = 0; i < w.size(); ++i)
            CHECK(w[i] == Catch::Approx((raw[i] - mean) / sd).margin(1e-12));
    }

    SECTION("targets are untouched") {
        std::vector<double> before(train.size());
        for (std::size_t j = 0; j < train.size(); ++j) before[j] = train.target(j);
        fit_and_apply_normalizer(train, {&val});
        for (std::size_t j = 0; j < train.size(); ++j) CHECK(train.target(j) == before[j]);
    }

    SECTION("constant channel is rejected") {
        std::vector<double> flat(300, 5.0);
        Series constant = make_series("flat", flat, UnitKind::Iaqi);
        SampleSet s = build_samples(constant, flat, {32, 4, 1});
        CHECK_THROWS_AS(fit_and_apply_normalizer(s), std::invalid_argument);
    }
}

TEST_CASE("synthetic generation") {
    SECTION("same seed is bit-identical") {
        Series a = synth_generate(7, 1000);
        Series b = synth_generate(7, 1000);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data()[i] == b.data()[i]);
    }

    SECTION("different seeds differ") {
        Series a = synth_generate(7, 1000);
        Series b = synth_generate(8, 1000);
        bool any_diff = false;
        for (std::size_t i = 0; i < a.size(); ++i) any_diff |= a.data()[i] != b.data()[i];
        CHECK(any_diff);
    }

    SECTION("no noise and no waves gives the constant base") {
        SynthParams p;
        p.amplitudes.clear();
        p.periods.clear();
        p.noise_std = 0.0;
        p.level_shift_rate = 0.0;
        p.base = 3.5;
        Series s = synth_generate(1, 100, p);
        for (double v : s.data()) CHECK(v == 3.5);
    }

    SECTION("long-run mean stays near the configured base") {
        SynthParams p;
        p.base = 2.0;
        p.noise_std = 0.1;
        p.level_shift_rate = 0.0;  // no drift
        Series s = synth_generate(99, 100000, p);
        double mean = 0.0;
        for (double v : s.data()) mean += v;
        mean /= static_cast<double>(s.size());
        // sinusoid means vanish over full cycles; noise std / sqrt(n) bounds the rest
        double sigma_mean = p.noise_std / std::sqrt(100000.0);
        CHECK(std::abs(mean - p.base) < 3.0 * sigma_mean + 0.01);  // 0.01 for partial cycles
    }

    SECTION("values are floored at zero") {
        SynthParams p;
        p.base = 0.1;
        p.noise_std = 1.0;
        Series s = synth_generate(3, 5000, p);
        for (double v : s.data()) CHECK(v >= 0.0);
    }
}

TEST_CASE("sample set export/import round-trip") {
    auto dir = std::filesystem::temp_directory_path() / "greeneyes_sampleset_test";
    std::filesystem::remove_all(dir);

    Series in = synth_generate(5, 400);
    PolygonalTarget target = polygonalize({"c", {{0, 1.0}, {200, 3.0}, {399, 2.0}}}, 400);
    SampleSet s = build_samples(in, target, {64, 16, 1});
    export_sample_set(s, dir.string());
    SampleSet loaded = import_sample_set(dir.string());

    REQUIRE(loaded.size() == s.size());
    CHECK(loaded.spec() == s.spec());
    for (std::size_t j = 0; j < s.size(); ++j) {
        CHECK(loaded.input(j) == s.input(j));  // bit-exact doubles through the blob
        CHECK(loaded.target(j) == s.target(j));
        CHECK(loaded.samples()[j].origin_start == s.samples()[j].origin_start);
        CHECK(loaded.samples()[j].channel == s.samples()[j].channel);
    }

    SECTION("truncated blob is a structured error") {
        std::filesystem::resize_file(dir / "inputs.bin", 10);
        CHECK_THROWS_WITH(import_sample_set(dir.string()),
                          Catch::Matchers::ContainsSubstring("truncated"));
    }

    std::filesystem::remove_all(dir);
}
