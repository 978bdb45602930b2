#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "scalelab/trace.hpp"

using namespace scalelab;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "scalelab_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("load_traces ingests aligned two-LRA file") {
  std::string csv = "epoch_minute,lra_id,qps\n";
  for (int t = 0; t < 10; ++t) {
    csv += std::to_string(t) + ",a," + std::to_string(100 + t) + "\n";
    csv += std::to_string(t) + ",b," + std::to_string(200 + t) + "\n";
  }
  auto path = temp_file("two_lras.csv");
  write_file(path, csv);

  TraceSet ts = load_traces(path);
  REQUIRE(ts.count() == 2);
  REQUIRE(ts.length() == 10);
  REQUIRE(ts.at(0).lra_id == "a");
  REQUIRE(ts.at(0).values[3] == 103.0);
  REQUIRE(ts.at(1).values[0] == 200.0);
}

TEST_CASE("load_traces interpolates a missing interior minute") {
  std::string csv = "epoch_minute,lra_id,qps\n";
  for (int t = 0; t < 10; ++t) {
    if (t == 5) continue;
    csv += std::to_string(t) + ",a," + std::to_string(10 * t) + "\n";
  }
  auto path = temp_file("missing_minute.csv");
  write_file(path, csv);

  TraceSet ts = load_traces(path);
  REQUIRE(ts.length() == 10);
  // value[5] = mean of neighbors 40 and 60
  REQUIRE(ts.at(0).values[5] == Catch::Approx(50.0));
}

TEST_CASE("load_traces rejects negative workload") {
  auto path = temp_file("negative.csv");
  write_file(path, "epoch_minute,lra_id,qps\n0,a,5\n1,a,-1\n");
  REQUIRE_THROWS_WITH(load_traces(path), Catch::Matchers::ContainsSubstring("negative workload"));
}

TEST_CASE("load_traces cuts to the intersection and rejects empty overlap") {
  std::string csv = "epoch_minute,lra_id,qps\n";
  for (int t = 0; t < 8; ++t) csv += std::to_string(t) + ",a,1\n";
  for (int t = 4; t < 12; ++t) csv += std::to_string(t) + ",b,2\n";
  auto path = temp_file("intersect.csv");
  write_file(path, csv);
  TraceSet ts = load_traces(path);
  REQUIRE(ts.start_minute() == 4);
  REQUIRE(ts.length() == 4);

  auto path2 = temp_file("disjoint.csv");
  write_file(path2, "epoch_minute,lra_id,qps\n0,a,1\n1,a,1\n5,b,1\n6,b,1\n");
  REQUIRE_THROWS_WITH(load_traces(path2), Catch::Matchers::ContainsSubstring("empty intersection"));
}

TEST_CASE("save/load round-trip is lossless") {
  SynthSpec spec;
  spec.lra_id = "rt";
  spec.length_minutes = 500;
  spec.base = 37.25;
  spec.daily_amplitude = 0.4;
  spec.noise_std = 3.5;
  spec.seed = 99;
  TraceSet ts;
  ts.traces.push_back(synthesize_trace(spec).trace);
  spec.lra_id = "rt2";
  spec.seed = 100;
  ts.traces.push_back(synthesize_trace(spec).trace);

  auto path = temp_file("roundtrip.csv");
  save_traces(ts, path);
  TraceSet back = load_traces(path);
  REQUIRE(back.count() == 2);
  for (std::size_t n = 0; n < 2; ++n) {
    REQUIRE(back.at(n).lra_id == ts.at(n).lra_id);
    REQUIRE(back.at(n).start_minute == ts.at(n).start_minute);
    for (std::size_t i = 0; i < ts.length(); ++i) {
      REQUIRE(back.at(n).values[i] == ts.at(n).values[i]);  // bit-exact
    }
  }
}

TEST_CASE("compute_stats flags a constant series as degenerate") {
  WorkloadTrace tr;
  tr.lra_id = "const";
  tr.values.assign(3 * kMinutesPerDay, 42.0);
  TraceStats st = compute_stats(tr);
  REQUIRE(st.degenerate);
  REQUIRE(st.sigma_daily_peak == 0.0);
  REQUIRE(st.daily_ar == 0.0);
}

TEST_CASE("compute_stats: sinusoid with daily period has daily_ar >= 0.99") {
  WorkloadTrace tr;
  tr.lra_id = "sine";
  const std::size_t n = 14 * kMinutesPerDay;
  tr.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    tr.values[i] = 100.0 + 50.0 * std::sin(2.0 * M_PI * static_cast<double>(i) / kMinutesPerDay);
  }
  TraceStats st = compute_stats(tr);
  REQUIRE_FALSE(st.degenerate);
  REQUIRE(st.daily_ar >= 0.99);
  REQUIRE(st.weekly_ar.has_value());
  REQUIRE(*st.weekly_ar >= 0.99);
  // a pure tone concentrates the periodogram: near-maximal score
  REQUIRE(st.entropy_score > 0.9);
}

TEST_CASE("compute_stats: white noise has near-maximal spectral entropy") {
  Rng rng(2024);
  WorkloadTrace tr;
  tr.lra_id = "noise";
  tr.values.resize(14 * kMinutesPerDay);
  for (auto& v : tr.values) v = 100.0 + 10.0 * rng.normal();
  TraceStats st = compute_stats(tr);
  REQUIRE(st.entropy_score <= 0.1);
}

TEST_CASE("compute_stats autocorrelations are affine-scale invariant") {
  SynthSpec spec;
  spec.length_minutes = 3 * kMinutesPerWeek;
  spec.base = 100.0;
  spec.daily_amplitude = 0.5;
  spec.weekly_amplitude = 0.2;
  spec.noise_std = 5.0;
  spec.seed = 7;
  WorkloadTrace tr = synthesize_trace(spec).trace;
  TraceStats st0 = compute_stats(tr);

  Rng rng(13);
  for (int rep = 0; rep < 3; ++rep) {
    const double a = rng.uniform(0.5, 3.0);
    const double b = rng.uniform(0.0, 50.0);
    WorkloadTrace scaled = tr;
    for (auto& v : scaled.values) v = a * v + b;
    TraceStats st1 = compute_stats(scaled);
    REQUIRE(st1.daily_ar == Catch::Approx(st0.daily_ar).margin(1e-9));
    REQUIRE(*st1.weekly_ar == Catch::Approx(*st0.weekly_ar).margin(1e-9));
  }
}

TEST_CASE("compute_stats weekly_ar absent for short series") {
  WorkloadTrace tr;
  tr.lra_id = "short";
  tr.values.resize(kMinutesPerWeek);  // one week only
  for (std::size_t i = 0; i < tr.values.size(); ++i) {
    tr.values[i] = 10.0 + std::sin(2.0 * M_PI * static_cast<double>(i) / kMinutesPerDay);
  }
  TraceStats st = compute_stats(tr);
  REQUIRE_FALSE(st.weekly_ar.has_value());
}

TEST_CASE("synthesize_trace: amplitude 0, noise 0 is constant at base") {
  SynthSpec spec;
  spec.length_minutes = 200;
  spec.base = 55.0;
  auto res = synthesize_trace(spec);
  REQUIRE_FALSE(res.all_zero);
  for (double v : res.trace.values) REQUIRE(v == 55.0);
}

TEST_CASE("synthesize_trace is deterministic for a fixed seed") {
  SynthSpec spec;
  spec.length_minutes = 1000;
  spec.base = 80.0;
  spec.daily_amplitude = 0.3;
  spec.noise_std = 6.0;
  spec.noise_ar1 = 0.5;
  spec.seed = 12345;
  auto a = synthesize_trace(spec);
  auto b = synthesize_trace(spec);
  REQUIRE(a.trace.values == b.trace.values);  // bit-identical
}

TEST_CASE("synthesize_trace: daily peak hits base*(1+A_d)") {
  SynthSpec spec;
  spec.length_minutes = 3 * kMinutesPerDay;
  spec.base = 100.0;
  spec.daily_amplitude = 0.5;
  auto tr = synthesize_trace(spec).trace;
  // sine maximum at t = 360 within each day
  for (int day = 0; day < 3; ++day) {
    REQUIRE(tr.values[static_cast<std::size_t>(day * kMinutesPerDay + 360)] == Catch::Approx(150.0).margin(1e-9));
    double peak = 0.0;
    for (int k = 0; k < kMinutesPerDay; ++k) {
      peak = std::max(peak, tr.values[static_cast<std::size_t>(day * kMinutesPerDay + k)]);
    }
    REQUIRE(peak == Catch::Approx(150.0).margin(1e-9));
  }
}

TEST_CASE("inject_spike multiplies exactly the window") {
  SynthSpec spec;
  spec.length_minutes = 600;
  spec.base = 10.0;
  spec.daily_amplitude = 0.2;
  TraceSet ts;
  ts.traces.push_back(synthesize_trace(spec).trace);

  SECTION("factor 10 over 30 minutes") {
    TraceSet out = inject_spike(ts, 100, 30, 10.0);
    std::size_t touched = 0;
    for (std::size_t i = 0; i < ts.length(); ++i) {
      if (out.at(0).values[i] != ts.at(0).values[i]) {
        ++touched;
        REQUIRE(out.at(0).values[i] == Catch::Approx(10.0 * ts.at(0).values[i]));
      }
    }
    REQUIRE(touched == 30);
  }
  SECTION("factor 1 is the identity") {
    TraceSet out = inject_spike(ts, 100, 30, 1.0);
    REQUIRE(out.at(0).values == ts.at(0).values);
  }
  SECTION("3-hour window touches exactly 180 minutes") {
    TraceSet out = inject_spike(ts, 0, 180, 10.0);
    std::size_t touched = 0;
    for (std::size_t i = 0; i < ts.length(); ++i) {
      if (out.at(0).values[i] != ts.at(0).values[i]) ++touched;
    }
    REQUIRE(touched == 180);
  }
  SECTION("window out of range throws") {
    REQUIRE_THROWS_AS(inject_spike(ts, 590, 30, 2.0), ConfigError);
  }
}
