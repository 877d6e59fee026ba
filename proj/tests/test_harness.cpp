#include <gtest/gtest.h>

#include <filesystem>

#include "cbvr/harness.hpp"
#include "cbvr/io.hpp"

using namespace cbvr;
namespace fs = std::filesystem;

namespace {

SynthConfig small_config(std::uint64_t seed = 3) {
  SynthConfig c;
  c.n_events = 2;
  c.n_videos = 160;
  c.n_background = 80;
  c.n_exemplars = 12;
  c.test_positives = 10;
  c.n_features = 6;
  c.groups = {2, 2, 2};
  c.feature_dim = 8;
  c.n_visual = 10;
  c.n_asr = 6;
  c.n_ocr = 4;
  c.seed = seed;
  return c;
}

std::map<std::string, std::string> dir_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = io::read_file(e.path());
  return out;
}

double corr(const FeatureMatrix& a, const FeatureMatrix& b) {
  const Eigen::ArrayXf x = a.values().reshaped<Eigen::RowMajor>().array() - a.values().mean();
  const Eigen::ArrayXf y = b.values().reshaped<Eigen::RowMajor>().array() - b.values().mean();
  return (x * y).sum() / std::sqrt((x * x).sum() * (y * y).sum());
}

void quiet(std::string_view) {}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("cbvr_test_harness_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Synth, SameSeedGivesIdenticalFiles) {
  const auto a = scratch("a"), b = scratch("b");
  write_dataset(a, synth_generate(small_config()));
  write_dataset(b, synth_generate(small_config()));
  const auto ca = dir_contents(a);
  EXPECT_FALSE(ca.empty());
  EXPECT_EQ(ca, dir_contents(b));
  write_dataset(b, synth_generate(small_config(4)));
  EXPECT_NE(ca, dir_contents(b));
}

TEST(Synth, ReadBackMatches) {
  const auto dir = scratch("rt");
  const auto ds = synth_generate(small_config());
  write_dataset(dir, ds);
  const auto back = read_dataset(dir);
  ASSERT_EQ(back.features.size(), ds.features.size());
  EXPECT_EQ(back.features[3].values(), ds.features[3].values());
  EXPECT_EQ(back.events, ds.events);
  EXPECT_EQ(io::format_ground_truth_csv(back.gt), io::format_ground_truth_csv(ds.gt));
}

TEST(Synth, WithinGroupCorrelationExceedsBetween) {
  const auto ds = synth_generate(small_config());
  ASSERT_EQ(ds.feature_group[0], ds.feature_group[1]);
  ASSERT_NE(ds.feature_group[1], ds.feature_group[2]);
  EXPECT_GT(corr(ds.features[0], ds.features[1]), corr(ds.features[0], ds.features[2]) + 0.2);
  EXPECT_GT(corr(ds.features[2], ds.features[3]), corr(ds.features[3], ds.features[4]) + 0.2);
}

TEST(Synth, GroupSizesMustMatchFeatureCount) {
  auto c = small_config();
  c.groups = {2, 2};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Synth, ConfigKeysRoundTrip) {
  auto c = small_config();
  SynthConfig d;
  for (const auto& [k, v] : c.to_map()) EXPECT_TRUE(d.set(k, v)) << k;
  EXPECT_EQ(d.to_map(), c.to_map());
  EXPECT_FALSE(d.set("no_such_key", "1"));
}

TEST(Scenario, Ex010WithNineExemplarsFails) {
  auto c = small_config();
  c.n_exemplars = 9;
  const auto ds = synth_generate(c);
  try {
    run_scenario(ds, Scenario::Ex010, RunOptions{});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("insufficient exemplars"), std::string::npos);
  }
}

TEST(Scenario, RunsDoNotReadTestLabelsBeforeEvaluation) {
  const auto ds = synth_generate(small_config());
  const auto old = set_warning_sink(quiet);
  for (auto s : {Scenario::SQ, Scenario::Ex000, Scenario::Ex010}) {
    const auto r = run_scenario(ds, s, RunOptions{});
    EXPECT_EQ(r.events.size(), 2u);
    EXPECT_GE(r.map, 0.0);
    EXPECT_LE(r.map, 1.0);
  }
  set_warning_sink(old);
}

TEST(Scenario, DeterministicAcrossThreadCounts) {
  const auto ds = synth_generate(small_config());
  const auto old = set_warning_sink(quiet);
  set_thread_count(1);
  const auto a = run_scenario(ds, Scenario::Ex010, RunOptions{});
  set_thread_count(3);
  const auto b = run_scenario(ds, Scenario::Ex010, RunOptions{});
  set_thread_count(1);
  set_warning_sink(old);
  EXPECT_EQ(a.ap, b.ap);
  for (std::size_t e = 0; e < a.events.size(); ++e)
    for (std::size_t i = 0; i < a.events[e].ranking.size(); ++i)
      ASSERT_EQ(a.events[e].ranking.entries()[i].score, b.events[e].ranking.entries()[i].score);
}

TEST(RunOptions, UnknownKeyAndBadValue) {
  RunOptions o;
  EXPECT_FALSE(o.set("frobnicate", "1"));
  EXPECT_THROW(o.set("classifier", "forest"), ConfigError);
  EXPECT_TRUE(o.set("leaf_size", "7"));
  EXPECT_EQ(o.mhlf.leaf_size, 7);
  RunOptions p;
  for (const auto& [k, v] : o.to_map()) EXPECT_TRUE(p.set(k, v)) << k;
  EXPECT_EQ(p.to_map(), o.to_map());
}

TEST(Robustness, RowCountAndZeroWidthAtFullFraction) {
  EnsembleConfig ec;
  ec.n_events = 2;
  ec.heldout_negatives = 100;
  ec.test_videos = 300;
  ec.test_positives = 10;
  ec.groups = {2, 2, 1};
  const auto events = synth_ensemble(ec);
  RobustnessOptions ro;
  ro.fractions = {1.0, 0.6, 0.2};
  ro.trials = 3;
  const auto old = set_warning_sink(quiet);
  const auto rows = robustness_experiment(events, ro);
  set_warning_sink(old);
  // 0.2 of 5 sources leaves one feature and is skipped.
  ASSERT_EQ(rows.size(), 6u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.trials, 3);
    if (r.fraction == 1.0) {
      EXPECT_EQ(r.n_features, 5);
      EXPECT_EQ(r.ci_low, r.ci_high);
      EXPECT_EQ(r.ci_low, r.mean);
    } else {
      EXPECT_EQ(r.n_features, 3);
      EXPECT_LE(r.ci_low, r.mean);
      EXPECT_GE(r.ci_high, r.mean);
    }
  }
  const auto csv = format_robustness_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "fraction,n_features,method,trials,mean_map,ci_low,ci_high");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

TEST(Manifest, ConfigHashIgnoresOrderButNotValues) {
  const std::map<std::string, std::string> a{{"seed", "1"}, {"data", "/x"}};
  EXPECT_EQ(config_hash("run", a), config_hash("run", {{"data", "/x"}, {"seed", "1"}}));
  EXPECT_NE(config_hash("run", a), config_hash("run", {{"data", "/x"}, {"seed", "2"}}));
  EXPECT_NE(config_hash("run", a), config_hash("eval", a));
}

TEST(Commands, UnknownSettingIsConfigError) {
  const auto out = scratch("cmd");
  EXPECT_THROW(run_command("gen", {{"bogus", "1"}}, out), ConfigError);
  EXPECT_THROW(run_command("nope", {}, out), ConfigError);
}

TEST(Commands, GenThenRunWritesManifestThatReplays) {
  const auto out = scratch("gen");
  std::map<std::string, std::string> gen;
  for (const auto& [k, v] : small_config().to_map()) gen[k] = v;
  const auto g = run_command("gen", gen, out / "data");
  write_manifest(out / "data", "gen", gen, g, 1);
  const auto m = read_manifest(out / "data" / "manifest.json");
  EXPECT_EQ(m.command, "gen");
  EXPECT_EQ(m.config_hash, config_hash("gen", gen));
  for (const auto& f : m.outputs) EXPECT_EQ(m.output_hashes.at(f), io::fnv1a_hex(io::read_file(out / "data" / f)));
  const auto old = set_warning_sink(quiet);
  const auto r = run_command("run", {{"data", (out / "data").string()}, {"scenario", "SQ"}, {"seed", "0"}}, out / "run");
  set_warning_sink(old);
  EXPECT_TRUE(fs::exists(out / "run" / "map.json"));
  EXPECT_FALSE(r.outputs.empty());
}
