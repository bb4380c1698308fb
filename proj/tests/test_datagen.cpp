#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "latseg/csv_io.hpp"
#include "latseg/datagen.hpp"
#include "latseg/json_io.hpp"

using namespace latseg;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("latseg_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

void expect_same(const Trajectory& a, const Trajectory& b) {
  EXPECT_EQ(a.times, b.times);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(a.changepoints, b.changepoints);
}

LvSpec quiet_lv(LvVariant v) {
  LvSpec s;
  s.noise_sd = 0.0;
  s.variant = v;
  s.observations = {60, 80};
  return s;
}

}  // namespace

TEST(GenSine, CollapsedSpecIsClosedForm) {
  SineSpec s;
  s.amplitude = {3.0, 3.0};
  s.frequency = {2.0, 2.0};
  s.noise_sd = 0.0;
  s.changepoints = {0, 0};
  const std::vector<Trajectory> data = gen_sine(s, 5, 1);
  for (const Trajectory& tr : data) {
    ASSERT_TRUE(tr.changepoints.empty());
    const double phase = tr.segment_params.at(0).at("phase");
    for (std::size_t i = 0; i < tr.size(); ++i) EXPECT_EQ(tr.values[i], 3.0 * std::sin(2.0 * tr.times[i] + phase));
  }
}

TEST(GenSine, SampledParametersStayInRange) {
  const SineSpec s;
  const std::vector<Trajectory> data = gen_sine(s, 6000, 2, 4);
  std::size_t segments = 0, with[3] = {0, 0, 0};
  for (const Trajectory& tr : data) {
    ASSERT_LE(tr.changepoints.size(), 2u);
    ++with[tr.changepoints.size()];
    ASSERT_EQ(tr.segment_params.size(), tr.changepoints.size() + 1);
    const auto parts = Segmentation{tr.changepoints}.segments(tr.size());
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const auto& p = tr.segment_params[k];
      EXPECT_GT(p.at("amplitude"), -8.0);
      EXPECT_LT(p.at("amplitude"), 8.0);
      EXPECT_GE(p.at("frequency"), 2.0);
      EXPECT_LT(p.at("frequency"), 4.0);
      EXPECT_GE(p.at("duration"), 3.0);
      EXPECT_LT(p.at("duration"), 5.0);
      const std::size_t n = parts[k].second - parts[k].first + 1;
      EXPECT_GE(n, 50u);
      EXPECT_LE(n, 150u);
      if (k > 0) {
        EXPECT_GE(std::abs(p.at("amplitude") - tr.segment_params[k - 1].at("amplitude")), 2.5);
      }
      ++segments;
    }
  }
  EXPECT_GE(segments, 10000u);
  for (std::size_t c : with) EXPECT_GT(c, 1800u);
}

TEST(GenSine, TrajectoryLevelCountSpreadsOverSegments) {
  SineSpec s;
  s.total_observations = {100, 100};
  s.changepoints = {2, 2};
  s.noise_sd = 0.0;
  for (const Trajectory& tr : gen_sine(s, 50, 9)) {
    ASSERT_EQ(tr.size(), 100u);
    ASSERT_EQ(tr.changepoints.size(), 2u);
    const auto parts = Segmentation{tr.changepoints}.segments(tr.size());
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const auto& p = tr.segment_params[k];
      for (std::size_t i = parts[k].first; i <= parts[k].second; ++i) {
        ASSERT_GE(tr.times[i], p.at("start"));
        ASSERT_LT(tr.times[i], p.at("start") + p.at("duration"));
        EXPECT_NEAR(tr.values[i], p.at("amplitude") * std::sin(p.at("frequency") * (tr.times[i] - p.at("start")) + p.at("phase")),
                    1e-12);
      }
    }
  }
  s.total_observations = {2, 2};
  EXPECT_THROW(gen_sine(s, 1, 1), InvalidArgument);
}

TEST(GenSine, DeterministicAcrossThreads) {
  const SineSpec s;
  const auto a = gen_sine(s, 40, 7, 1), b = gen_sine(s, 40, 7, 4), c = gen_sine(s, 40, 8, 1);
  for (std::size_t i = 0; i < a.size(); ++i) expect_same(a[i], b[i]);
  EXPECT_NE(a[0].values, c[0].values);
}

TEST(GenSine, AlignedTimesShareAPattern) {
  SineSpec s;
  s.aligned = true;
  s.observations = {80, 80};
  s.duration = {4.0, 4.0};
  s.changepoints = {0, 0};
  const auto data = gen_sine(s, 3, 9);
  EXPECT_EQ(data[0].times, data[1].times);
  EXPECT_EQ(data[1].times, data[2].times);
  EXPECT_NE(data[0].values, data[1].values);
}

TEST(GenSine, InfeasibleAmplitudeChangeRejected) {
  SineSpec s;
  s.amplitude = {1.0, 2.0};
  s.changepoints = {1, 1};
  EXPECT_THROW(gen_sine(s, 1, 0), InvalidArgument);
  s.amplitude = {2.0, 1.0};
  EXPECT_THROW(gen_sine(s, 1, 0), InvalidArgument);
}

TEST(GenLv, DecoupledSpecIsExponential) {
  LvSpec s = quiet_lv(LvVariant::jump);
  // Rates small enough that both populations stay far above the absolute tolerance.
  s.alpha = {0.1, 0.3};
  s.gamma = {0.05, 0.15};
  s.beta = {0.0, 0.0};
  s.delta = {0.0, 0.0};
  s.min_coefficient_change = 0.0;
  s.changepoints = {0, 0};
  for (const Trajectory& tr : gen_lv(s, 4, 3)) {
    const auto& p = tr.segment_params.at(0);
    for (std::size_t i = 0; i < tr.size(); ++i) {
      const double x = p.at("x0") * std::exp(p.at("alpha") * tr.times[i]);
      const double y = p.at("y0") * std::exp(-p.at("gamma") * tr.times[i]);
      EXPECT_NEAR(tr.values.at(i, 0), x, 1e-6 * x);
      EXPECT_NEAR(tr.values.at(i, 1), y, 1e-6 * y);
    }
  }
}

TEST(GenLv, FirstIntegralConservedAndPopulationsPositive) {
  for (LvVariant v : {LvVariant::jump, LvVariant::switching}) {
    for (const Trajectory& tr : gen_lv(quiet_lv(v), 6, 4)) {
      const auto parts = Segmentation{tr.changepoints}.segments(tr.size());
      for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& p = tr.segment_params[k];
        const LvCoefficients c{p.at("alpha"), p.at("beta"), p.at("delta"), p.at("gamma")};
        const double ref = lv_invariant(c, p.at("x0"), p.at("y0"));
        for (std::size_t i = parts[k].first; i <= parts[k].second; ++i) {
          ASSERT_GT(tr.values.at(i, 0), 0.0);
          ASSERT_GT(tr.values.at(i, 1), 0.0);
          EXPECT_LE(std::abs(lv_invariant(c, tr.values.at(i, 0), tr.values.at(i, 1)) - ref), 1e-5 * std::abs(ref));
        }
        if (k > 0) {
          const auto& q = tr.segment_params[k - 1];
          const LvCoefficients prev{q.at("alpha"), q.at("beta"), q.at("delta"), q.at("gamma")};
          const double dist = c.distance(prev);
          EXPECT_GE(dist, 0.6);
        }
      }
    }
  }
}

TEST(GenLv, SwitchingVariantContinuesPopulations) {
  LvSpec s = quiet_lv(LvVariant::switching);
  s.changepoints = {2, 2};
  for (const Trajectory& tr : gen_lv(s, 3, 5)) {
    for (std::size_t k = 1; k < tr.segment_params.size(); ++k) {
      const auto& q = tr.segment_params[k - 1];
      const LvCoefficients prev{q.at("alpha"), q.at("beta"), q.at("delta"), q.at("gamma")};
      const std::vector<double> span = {0.0, q.at("end_time")};
      const std::vector<Tensor> st = lv_solve(prev, q.at("x0"), q.at("y0"), span, 1e-8);
      EXPECT_NEAR(tr.segment_params[k].at("x0"), st[1][0], 1e-6);
      EXPECT_NEAR(tr.segment_params[k].at("y0"), st[1][1], 1e-6);
    }
  }
}

TEST(GenLv, JumpVariantRestartsInsideInitialRanges) {
  const LvSpec s = quiet_lv(LvVariant::jump);
  for (const Trajectory& tr : gen_lv(s, 10, 6)) {
    for (const auto& p : tr.segment_params) {
      EXPECT_TRUE(s.x0.contains(p.at("x0")));
      EXPECT_TRUE(s.y0.contains(p.at("y0")));
      EXPECT_GE(p.at("end_time"), 14.0);
      EXPECT_LT(p.at("end_time"), 16.0);
    }
  }
}

TEST(Masking, HeldOutProportions) {
  SineSpec s;
  s.observations = {100, 100};
  s.changepoints = {0, 0};
  const Trajectory tr = apply_masking(gen_sine(s, 1, 1)[0], 3);
  EXPECT_EQ(tr.indices_with(MaskClass::extrap_heldout).size(), 20u);
  EXPECT_EQ(tr.indices_with(MaskClass::interp_heldout).size(), 20u);
  EXPECT_EQ(tr.visible_indices().size(), 60u);
  for (std::size_t i = 80; i < 100; ++i) EXPECT_EQ(tr.mask[i], MaskClass::extrap_heldout);
  s.observations = {9, 9};
  EXPECT_THROW(apply_masking(gen_sine(s, 1, 1)[0], 3), InvalidArgument);
}

TEST(Masking, SharedPatternAndPartition) {
  SineSpec s;
  s.observations = {120, 120};
  s.changepoints = {0, 0};
  std::vector<Trajectory> data = gen_sine(s, 4, 2);
  apply_masking(data, 17, MaskSpec{});
  for (const Trajectory& tr : data) {
    EXPECT_EQ(tr.mask, data[0].mask);
    EXPECT_EQ(tr.visible_indices().size() + tr.indices_with(MaskClass::interp_heldout).size() +
                  tr.indices_with(MaskClass::extrap_heldout).size(),
              tr.size());
  }
  MaskSpec own;
  own.shared = false;
  std::vector<Trajectory> other = gen_sine(s, 4, 2);
  apply_masking(other, 17, own);
  EXPECT_NE(other[0].mask, other[1].mask);
}

TEST(Sdf, ConcatenationReproducesTrajectory) {
  for (const Trajectory& tr : gen_lv(quiet_lv(LvVariant::jump), 5, 7)) {
    const std::vector<Trajectory> parts = extract_sdfs(tr);
    ASSERT_EQ(parts.size(), tr.changepoints.size() + 1);
    std::vector<double> times, values;
    for (const Trajectory& p : parts) {
      times.insert(times.end(), p.times.begin(), p.times.end());
      values.insert(values.end(), p.values.storage().begin(), p.values.storage().end());
    }
    EXPECT_EQ(times, tr.times);
    EXPECT_EQ(values, tr.values.storage());
  }
}

TEST(Csv, RoundTripIsExact) {
  std::vector<Trajectory> data = gen_lv(LvSpec{}, 3, 8);
  apply_masking(data, 4);
  for (const Trajectory& tr : data) expect_same(trajectory_from_csv(trajectory_to_csv(tr)), tr);
  std::vector<Trajectory> sine = gen_sine(SineSpec{}, 3, 8);
  apply_masking(sine, 4);
  for (const Trajectory& tr : sine) expect_same(trajectory_from_csv(trajectory_to_csv(tr)), tr);
}

TEST(Csv, HeaderAndRowFormat) {
  Trajectory tr;
  tr.times = {0.0, 0.1};
  tr.values = Tensor::matrix({{1.0, 2.0}, {3.0, 4.0}});
  tr.mask = {MaskClass::visible, MaskClass::extrap_heldout};
  tr.changepoints = {0};
  EXPECT_EQ(trajectory_to_csv(tr), "t,dim_0,dim_1,mask,is_changepoint\n0,1,2,0,1\n0.10000000000000001,3,4,2,0\n");
}

TEST(Csv, MalformedInputRejected) {
  const std::string head = "t,dim_0,mask,is_changepoint\n";
  EXPECT_THROW(trajectory_from_csv(""), MalformedFile);
  EXPECT_THROW(trajectory_from_csv("time,x,mask,is_changepoint\n0,1,0,0\n"), MalformedFile);
  EXPECT_THROW(trajectory_from_csv(head), MalformedFile);
  EXPECT_THROW(trajectory_from_csv(head + "0,1,3,0\n"), MalformedFile);
  EXPECT_THROW(trajectory_from_csv(head + "0,1,0,2\n"), MalformedFile);
  EXPECT_THROW(trajectory_from_csv(head + "0,abc,0,0\n"), MalformedFile);
  EXPECT_THROW(trajectory_from_csv(head + "0,1,0\n"), MalformedFile);
  EXPECT_THROW(trajectory_from_csv(head + "0,1,0,0\n0,2,0,0\n"), MalformedFile);
  EXPECT_THROW(trajectory_from_csv(head + "0,1,0,0\n1,2,0,1\n"), MalformedFile);
  EXPECT_NO_THROW(trajectory_from_csv(head + "0,1,0,1\r\n1,2,0,0\r\n"));
}

TEST(Dataset, SaveLoadRoundTrip) {
  const auto dir = temp_dir("dataset");
  std::vector<Trajectory> data = gen_sine(SineSpec{}, 4, 10);
  apply_masking(data, 1);
  save_dataset(data, dir, Json{{"spec", to_json(SineSpec{})}, {"seed", 10}});
  const Dataset ds = load_dataset(dir);
  ASSERT_EQ(ds.trajectories.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    expect_same(ds.trajectories[i], data[i]);
    EXPECT_EQ(ds.trajectories[i].segment_params, data[i].segment_params);
  }
  EXPECT_EQ(ds.manifest.at("generator").at("seed"), 10);
  EXPECT_THROW(load_dataset(dir / "missing"), IoError);
  std::ofstream(dir / "manifest.json") << "{\"format\": \"other\"}";
  EXPECT_THROW(load_dataset(dir), MalformedFile);
  std::filesystem::remove_all(dir);
}

TEST(SpecJson, RoundTripAndUnknownKeys) {
  SineSpec s;
  s.amplitude = {-2.0, 2.0};
  s.aligned = true;
  const SineSpec back = sine_spec_from_json(to_json(s));
  EXPECT_EQ(back.amplitude.lo, -2.0);
  EXPECT_TRUE(back.aligned);
  LvSpec l;
  l.variant = LvVariant::switching;
  EXPECT_EQ(lv_spec_from_json(to_json(l)).variant, LvVariant::switching);
  EXPECT_THROW(sine_spec_from_json(Json{{"amplitdue", {1, 2}}}), InvalidArgument);
  EXPECT_THROW(lv_spec_from_json(Json{{"alpha", {2, 1}}}), InvalidArgument);
  EXPECT_THROW(lv_spec_from_json(Json{{"variant", "XX"}}), InvalidArgument);
}
