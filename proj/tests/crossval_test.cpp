#include "lid/crossval.hpp"

#include <gtest/gtest.h>

#include <set>
#include <unordered_set>

using lid::IvectorDataset;
using lid::SplitSpec;
using lid::SynthSpec;

namespace {

// Fully labeled synthetic dataset with `langs` languages.
IvectorDataset make_labeled_set(size_t langs, size_t per_lang, size_t dim, uint64_t seed,
                                double sep = 1.0, double std = 1.0) {
  SynthSpec spec;
  spec.k = langs;
  spec.oos_langs = 0;
  spec.p_oos = 0.0;
  spec.dim = dim;
  spec.labeled_per_class = per_lang;
  spec.n_unlabeled = 0;
  spec.n_test = 0;
  spec.seed = seed;
  spec.cluster_sep = sep;
  spec.cluster_std = std;
  return lid::synth_generate(spec).dataset;
}

TEST(CvSplit, ProtocolContractOnFiftyLanguages) {
  IvectorDataset ds = make_labeled_set(50, 12, 4, 41);
  SplitSpec spec;  // defaults: 38 in-set, 12 oos, 5 repeats
  auto cv = lid::cv_split(ds, spec, 0);

  EXPECT_EQ(cv.train.k(), 38u);
  std::set<size_t> train_classes;
  for (const auto& e : cv.train.labeled) train_classes.insert(e.class_id);
  EXPECT_EQ(train_classes.size(), 38u);

  // Dev and test both contain examples originating from all 50 languages.
  auto langs_of = [&](const std::vector<lid::UnlabeledExample>& part) {
    std::set<std::string> langs;
    std::unordered_map<std::string, size_t> id_to_class;
    for (const auto& e : ds.labeled) id_to_class[e.id] = e.class_id;
    for (const auto& e : part) langs.insert(ds.class_names[id_to_class[e.id]]);
    return langs;
  };
  EXPECT_EQ(langs_of(cv.dev).size(), 50u);
  EXPECT_EQ(langs_of(cv.test).size(), 50u);
  EXPECT_EQ(cv.oos_languages.size(), 12u);

  // In-set truth ids stay below 38; out-of-set rows carry 38.
  for (size_t t : cv.dev_truth) EXPECT_LE(t, 38u);
  EXPECT_GT(cv.dev_oos_fraction(), 0.0);
}

TEST(CvSplit, RepeatsRotateOosLanguages) {
  IvectorDataset ds = make_labeled_set(50, 12, 4, 42);
  SplitSpec spec;
  std::vector<std::set<size_t>> oos_sets;
  std::set<size_t> union_set;
  for (size_t r = 0; r < spec.repeats; ++r) {
    auto cv = lid::cv_split(ds, spec, r);
    oos_sets.push_back({cv.oos_languages.begin(), cv.oos_languages.end()});
    union_set.insert(cv.oos_languages.begin(), cv.oos_languages.end());
  }
  for (size_t a = 0; a < oos_sets.size(); ++a)
    for (size_t b = a + 1; b < oos_sets.size(); ++b) EXPECT_NE(oos_sets[a], oos_sets[b]);
  // 12 x 5 = 60 slots must cover at least 50 distinct languages.
  EXPECT_GE(union_set.size(), 50u);
}

TEST(CvSplit, PartitionsAreIdDisjointAndSeedReproducible) {
  IvectorDataset ds = make_labeled_set(50, 12, 4, 43);
  SplitSpec spec;
  for (size_t r = 0; r < spec.repeats; ++r) {
    auto cv = lid::cv_split(ds, spec, r);
    std::unordered_set<std::string> seen;
    size_t count = 0;
    for (const auto& e : cv.train.labeled) {
      seen.insert(e.id);
      ++count;
    }
    for (const auto& e : cv.dev) {
      seen.insert(e.id);
      ++count;
    }
    for (const auto& e : cv.test) {
      seen.insert(e.id);
      ++count;
    }
    EXPECT_EQ(seen.size(), count) << "repeat " << r << " reuses an id";
    EXPECT_EQ(count, ds.labeled.size());  // every example lands somewhere
  }
  auto a = lid::cv_split(ds, spec, 2);
  auto b = lid::cv_split(ds, spec, 2);
  ASSERT_EQ(a.train.labeled.size(), b.train.labeled.size());
  for (size_t i = 0; i < a.train.labeled.size(); ++i)
    EXPECT_EQ(a.train.labeled[i].id, b.train.labeled[i].id);
  EXPECT_EQ(a.oos_languages, b.oos_languages);
}

TEST(CvSplit, TooFewExamplesPerLanguageFatal) {
  IvectorDataset ds = make_labeled_set(10, 3, 2, 44);
  SplitSpec spec;
  spec.n_inset = 8;
  spec.n_oos = 2;
  EXPECT_THROW(lid::cv_split(ds, spec, 0), lid::DataError);
}

TEST(CvSplit, RequiresFullyLabeledDataset) {
  IvectorDataset ds = make_labeled_set(10, 6, 2, 45);
  ds.unlabeled.push_back({"stray", std::vector<double>(2, 0.0)});
  SplitSpec spec;
  spec.n_inset = 8;
  spec.n_oos = 2;
  EXPECT_THROW(lid::cv_split(ds, spec, 0), std::invalid_argument);
}

TEST(CvSplit, LanguageCountMismatchFatal) {
  IvectorDataset ds = make_labeled_set(10, 6, 2, 46);
  SplitSpec spec;  // 38 + 12 != 10
  EXPECT_THROW(lid::cv_split(ds, spec, 0), lid::ConfigError);
}

TEST(TuneAlpha, SingleCandidateReturnsTrivially) {
  IvectorDataset ds = make_labeled_set(6, 12, 4, 47, 1.5, 0.6);
  SplitSpec split;
  split.n_inset = 4;
  split.n_oos = 2;
  split.repeats = 1;
  lid::LadderConfig net;
  net.layer_sizes = {4, 8, 5};
  net.lambda = {1.0, 1.0, 0.3};
  net.noise_sigma = 0.3;
  lid::TrainSchedule sched;
  sched.epochs = 5;
  sched.batch_size = 16;
  auto result = lid::tune_alpha(ds, {0.15}, split, net, sched, lid::ObjectiveConfig{}, 48);
  EXPECT_DOUBLE_EQ(result.best_alpha, 0.15);
  ASSERT_EQ(result.scores.size(), 1u);
  ASSERT_EQ(result.scores[0].size(), 1u);
  EXPECT_TRUE(std::isfinite(result.scores[0][0]));
}

TEST(TuneAlpha, TableShapeAndFiniteScores) {
  IvectorDataset ds = make_labeled_set(6, 12, 4, 49, 1.5, 0.6);
  SplitSpec split;
  split.n_inset = 4;
  split.n_oos = 2;
  split.repeats = 3;
  lid::LadderConfig net;
  net.layer_sizes = {4, 8, 5};
  net.lambda = {1.0, 1.0, 0.3};
  net.noise_sigma = 0.3;
  lid::TrainSchedule sched;
  sched.epochs = 4;
  sched.batch_size = 16;
  auto result = lid::tune_alpha(ds, {0.0, 0.15}, split, net, sched, lid::ObjectiveConfig{}, 50);
  ASSERT_EQ(result.scores.size(), 3u);
  for (const auto& row : result.scores) {
    ASSERT_EQ(row.size(), 2u);
    for (double s : row) EXPECT_TRUE(std::isfinite(s));
  }
  // Selected alpha minimizes the mean column.
  size_t best = result.mean_scores[0] <= result.mean_scores[1] ? 0 : 1;
  EXPECT_DOUBLE_EQ(result.best_alpha, result.alphas[best]);
}

TEST(TuneAlpha, PrefersBalanceCostOnSemiSupervisedFixture) {
  // Mirrors the challenge preference for alpha = 0.15 over alpha = 0: the
  // balance cost is the only training signal that can claim the out-of-set
  // output, so it wins on a seeded semi-supervised fixture.
  IvectorDataset ds = make_labeled_set(6, 24, 6, 51, 1.2, 0.9);
  SplitSpec split;
  split.n_inset = 4;
  split.n_oos = 2;
  split.repeats = 2;
  lid::LadderConfig net;
  net.layer_sizes = {6, 12, 5};
  net.lambda = {1.0, 1.0, 0.3};
  net.noise_sigma = 0.3;
  lid::TrainSchedule sched;
  sched.epochs = 60;
  sched.batch_size = 32;
  auto result = lid::tune_alpha(ds, {0.0, 0.15}, split, net, sched, lid::ObjectiveConfig{}, 52);
  EXPECT_DOUBLE_EQ(result.best_alpha, 0.15)
      << "mean scores: alpha=0 -> " << result.mean_scores[0] << ", alpha=0.15 -> "
      << result.mean_scores[1];
}

}  // namespace
