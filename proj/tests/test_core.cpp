#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "cbvr/core.hpp"
#include "cbvr/io.hpp"
#include "cbvr/synth.hpp"

using namespace cbvr;

namespace {

ScoreList make_scores(std::vector<std::pair<std::string, double>> items, std::string event = "E1") {
  std::vector<ScoreEntry> e;
  for (auto& [id, s] : items) e.push_back({VideoId(id), s});
  return ScoreList(std::move(event), "src", std::move(e));
}

std::map<std::string, double> as_map(const ScoreList& l) {
  std::map<std::string, double> m;
  for (const auto& e : l.entries()) m[e.id.str()] = e.score;
  return m;
}

std::vector<std::string> order(const RankedList& r) {
  std::vector<std::string> out;
  for (const auto& e : r.entries()) out.push_back(e.id.str());
  return out;
}

// AP by summing precision at each relevant rank of an explicit 0/1 list.
double oracle_ap(const std::vector<int>& rel, int total_positives) {
  double hits = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < rel.size(); ++i)
    if (rel[i]) sum += ++hits / static_cast<double>(i + 1);
  return sum / total_positives;
}

}  // namespace

TEST(VideoId, RejectsEmptyAndOrdersBytewise) {
  EXPECT_THROW(VideoId(""), DataError);
  EXPECT_LT(VideoId("B"), VideoId("a"));
  EXPECT_LT(VideoId("v10"), VideoId("v9"));
}

TEST(FeatureMatrix, ValidatesShapeAndIds) {
  RowMatrixF v(2, 3);
  v.setZero();
  EXPECT_THROW(FeatureMatrix("f", {VideoId("a")}, v), DataError);
  EXPECT_THROW(FeatureMatrix("f", {VideoId("a"), VideoId("a")}, v), DataError);
  v(1, 2) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(FeatureMatrix("f", {VideoId("a"), VideoId("b")}, v), DataError);
}

TEST(FeatureMatrix, GatherFollowsRequestedOrder) {
  RowMatrixF v(3, 2);
  v << 1, 2, 3, 4, 5, 6;
  const FeatureMatrix fm("f", {VideoId("a"), VideoId("b"), VideoId("c")}, v);
  const std::vector<VideoId> ids{VideoId("c"), VideoId("a")};
  const RowMatrixD g = fm.gather(ids);
  EXPECT_EQ(g(0, 0), 5.0);
  EXPECT_EQ(g(1, 1), 2.0);
  EXPECT_THROW(fm.row(VideoId("z")), DataError);
}

TEST(ScoreList, RejectsDuplicatesAndNonFinite) {
  EXPECT_THROW(make_scores({{"a", 1.0}, {"a", 2.0}}), DataError);
  EXPECT_THROW(make_scores({{"a", std::numeric_limits<double>::infinity()}}), DataError);
}

TEST(Normalize, MinMaxTwoPoint) {
  const auto m = as_map(normalize_scores(make_scores({{"a", 3}, {"b", 1}}), NormMethod::MinMax));
  EXPECT_EQ(m.at("a"), 1.0);
  EXPECT_EQ(m.at("b"), 0.0);
}

TEST(Normalize, ZScoreOfConstantIsZero) {
  for (const auto& [id, s] : as_map(normalize_scores(make_scores({{"a", 5}, {"b", 5}, {"c", 5}}), NormMethod::ZScore)))
    EXPECT_EQ(s, 0.0) << id;
}

TEST(Normalize, ZScoreUsesPopulationStd) {
  const auto m = as_map(normalize_scores(make_scores({{"a", 1}, {"b", 3}}), NormMethod::ZScore));
  EXPECT_DOUBLE_EQ(m.at("a"), -1.0);
  EXPECT_DOUBLE_EQ(m.at("b"), 1.0);
}

TEST(Normalize, RankFormula) {
  const auto m = as_map(normalize_scores(make_scores({{"a", 0.9}, {"b", 0.5}, {"c", 0.1}}), NormMethod::Rank));
  EXPECT_DOUBLE_EQ(m.at("a"), 1.0);
  EXPECT_DOUBLE_EQ(m.at("b"), 0.5);
  EXPECT_DOUBLE_EQ(m.at("c"), 0.0);
}

TEST(Normalize, ParseRejectsUnknown) { EXPECT_THROW(parse_norm_method("softmax"), ConfigError); }

TEST(RankedList, SortsDescending) {
  EXPECT_EQ(order(to_ranked_list(make_scores({{"a", 0.2}, {"b", 0.8}}))), (std::vector<std::string>{"b", "a"}));
}

TEST(RankedList, TiesBreakByAscendingId) {
  EXPECT_EQ(order(to_ranked_list(make_scores({{"b", 0.5}, {"a", 0.5}}))), (std::vector<std::string>{"a", "b"}));
}

TEST(RankedList, PermutedInputGivesSameOrder) {
  std::vector<std::pair<std::string, double>> items;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 40; ++i) items.emplace_back("v" + std::to_string(i), static_cast<double>(rng() % 5));
  const auto base = order(to_ranked_list(make_scores(items)));
  for (int t = 0; t < 5; ++t) {
    std::shuffle(items.begin(), items.end(), rng);
    EXPECT_EQ(order(to_ranked_list(make_scores(items))), base);
  }
}

TEST(AveragePrecision, AllPositivesFirst) {
  const auto r = to_ranked_list(make_scores({{"a", 3}, {"b", 2}, {"c", 1}}));
  EXPECT_EQ(average_precision(r, {VideoId("a"), VideoId("b")}), 1.0);
}

TEST(AveragePrecision, PosNegPos) {
  const auto r = to_ranked_list(make_scores({{"a", 3}, {"b", 2}, {"c", 1}}));
  const double want = oracle_ap({1, 0, 1}, 2);
  EXPECT_NEAR(want, 0.833333333333, 1e-12);
  EXPECT_DOUBLE_EQ(average_precision(r, {VideoId("a"), VideoId("c")}), want);
}

TEST(AveragePrecision, SinglePositiveAtRankFour) {
  std::vector<std::pair<std::string, double>> items;
  for (int i = 0; i < 10; ++i) items.emplace_back("v" + std::to_string(i), 10.0 - i);
  const auto r = to_ranked_list(make_scores(items));
  EXPECT_DOUBLE_EQ(average_precision(r, {VideoId("v3")}), 0.25);
}

TEST(AveragePrecision, PositiveOutsideCollectionThrows) {
  const auto r = to_ranked_list(make_scores({{"a", 3}, {"b", 2}}));
  EXPECT_THROW(average_precision(r, {VideoId("a"), VideoId("zz")}), DataError);
  EXPECT_THROW(average_precision(r, {}), DataError);
}

TEST(AveragePrecision, ColumnFormMatchesListForm) {
  std::mt19937_64 rng(11);
  std::vector<double> s(30);
  std::vector<std::uint8_t> lab(30);
  std::vector<std::uint32_t> keys(30);
  std::vector<std::pair<std::string, double>> items;
  std::set<VideoId> pos;
  for (int i = 0; i < 30; ++i) {
    s[i] = static_cast<double>(rng() % 4);
    lab[i] = rng() % 3 == 0;
    keys[i] = static_cast<std::uint32_t>(i);
    const std::string id = "v" + std::to_string(100 + i);
    items.emplace_back(id, s[i]);
    if (lab[i]) pos.insert(VideoId(id));
  }
  EXPECT_DOUBLE_EQ(average_precision(s, lab, keys), average_precision(to_ranked_list(make_scores(items)), pos));
}

TEST(MeanAveragePrecision, ArithmeticMean) {
  GroundTruth gt;
  for (const char* id : {"a", "b", "c"}) gt.set_split(VideoId(id), Split::Test);
  gt.add_positive("E1", VideoId("a"));
  gt.add_positive("E2", VideoId("b"));
  std::map<std::string, RankedList> lists{{"E1", to_ranked_list(make_scores({{"a", 2}, {"b", 1}}, "E1"))},
                                          {"E2", to_ranked_list(make_scores({{"a", 2}, {"b", 1}}, "E2"))}};
  EXPECT_DOUBLE_EQ(mean_average_precision(lists, gt), 0.75);
  lists.erase("E2");
  EXPECT_DOUBLE_EQ(mean_average_precision(lists, gt), 1.0);
}

TEST(MeanAveragePrecision, MissingEventNamesIt) {
  GroundTruth gt;
  gt.set_split(VideoId("a"), Split::Test);
  gt.add_positive("E1", VideoId("a"));
  std::map<std::string, RankedList> lists{{"E9", to_ranked_list(make_scores({{"a", 1}}, "E9"))}};
  try {
    mean_average_precision(lists, gt);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("E9"), std::string::npos);
  }
}

TEST(GroundTruth, PositiveInBackgroundIsRejected) {
  GroundTruth gt;
  gt.set_split(VideoId("b1"), Split::Background);
  gt.add_positive("E1", VideoId("b1"));
  EXPECT_THROW(gt.validate(), DataError);
}

TEST(GroundTruth, EvaluationReadsAreCountedAcrossCopies) {
  GroundTruth gt;
  gt.set_split(VideoId("t1"), Split::Test);
  gt.add_positive("E1", VideoId("t1"));
  const GroundTruth copy = gt;
  const auto before = gt.evaluation_reads();
  EXPECT_TRUE(gt.exemplars("E1").empty());
  EXPECT_EQ(gt.evaluation_reads(), before);
  EXPECT_EQ(copy.evaluation_positives("E1").size(), 1u);
  EXPECT_EQ(gt.evaluation_reads(), before + 1);
}

TEST(Io, FeatureMatrixRoundTrip) {
  RowMatrixF v(2, 3);
  v << 1.5f, -2, 0, 3, 4, 5.25f;
  const FeatureMatrix fm("f01_bow", {VideoId("a"), VideoId("b")}, v);
  const auto bytes = io::encode_feature_matrix(fm);
  const auto back = io::decode_feature_matrix(bytes);
  EXPECT_EQ(back.name(), "f01_bow");
  EXPECT_EQ(back.ids(), fm.ids());
  EXPECT_EQ(back.values(), v);
  EXPECT_EQ(io::encode_feature_matrix(back), bytes);
  EXPECT_THROW(io::decode_feature_matrix(bytes.substr(0, bytes.size() - 3)), DataError);
}

TEST(Io, ScoresTsvRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "cbvr_test_core";
  std::filesystem::create_directories(dir);
  const std::vector<ScoreEntry> e{{VideoId("a"), 0.125}, {VideoId("b"), -3.0}};
  io::write_scores_tsv(dir / "s.tsv", e);
  EXPECT_EQ(io::read_file(dir / "s.tsv"), "a\t0.125\nb\t-3\n");
  const auto back = io::read_scores_tsv(dir / "s.tsv", "E1", "x");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.entries()[1].score, -3.0);
}

TEST(Io, GroundTruthCsvRoundTrip) {
  GroundTruth gt;
  gt.set_split(VideoId("x1"), Split::Exemplar);
  gt.set_split(VideoId("b1"), Split::Background);
  gt.set_split(VideoId("t1"), Split::Test);
  gt.add_positive("E1", VideoId("x1"));
  gt.add_positive("E1", VideoId("t1"));
  const auto text = io::format_ground_truth_csv(gt);
  EXPECT_EQ(io::format_ground_truth_csv(io::parse_ground_truth_csv(text)), text);
  EXPECT_THROW(io::parse_ground_truth_csv("event_id,video_id,label\nE1,t1,maybe\n"), DataError);
}

TEST(Io, Base64AndHash) {
  EXPECT_EQ(io::base64_encode("foob"), "Zm9vYg==");
  EXPECT_EQ(io::base64_decode("Zm9vYmFy"), "foobar");
  // Published FNV-1a 64 test vectors.
  EXPECT_EQ(io::fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(io::fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(Config, KeyValueText) {
  const auto m = parse_config_text("# comment\nseed = 7\n  n_events=3  \n\n");
  EXPECT_EQ(m.at("seed"), "7");
  EXPECT_EQ(m.at("n_events"), "3");
  EXPECT_THROW(parse_config_text("novalue\n"), ConfigError);
}

TEST(Seeds, DeriveSeedIsStableAndTagged) {
  EXPECT_EQ(derive_seed(1, "train", 0), derive_seed(1, "train", 0));
  EXPECT_NE(derive_seed(1, "train", 0), derive_seed(1, "train", 1));
  EXPECT_NE(derive_seed(1, "train", 0), derive_seed(1, "fuse", 0));
  EXPECT_NE(derive_seed(1, "train", 0), derive_seed(2, "train", 0));
}
