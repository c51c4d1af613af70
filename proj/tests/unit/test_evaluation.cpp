#include "doctest.h"
#include "fixtures.hpp"
#include "nailguard/errors.hpp"
#include "nailguard/evaluation.hpp"
#include "oracles.hpp"

using namespace nailguard;

TEST_CASE("hand-computed 2x2 report") {
  ConfusionMatrix m(2);
  for (int i = 0; i < 2; ++i) m.add(0, 0);
  m.add(0, 1);
  for (int i = 0; i < 3; ++i) m.add(1, 1);
  const auto r = classification_report(m, {"a", "b"});
  CHECK(r.categories[0].precision == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.categories[1].precision == doctest::Approx(0.75).epsilon(1e-9));
  CHECK(r.categories[0].recall == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
  CHECK(r.categories[1].recall == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.categories[0].f1 == doctest::Approx(0.8).epsilon(1e-9));
  CHECK(r.categories[1].f1 == doctest::Approx(6.0 / 7.0).epsilon(1e-9));
  CHECK(r.accuracy == doctest::Approx(5.0 / 6.0).epsilon(1e-9));
  CHECK(r.categories[0].support == 3);
}

TEST_CASE("report matches the brute-force rational oracle") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(60);
    std::vector<int> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = static_cast<int>(rng.below(6));
      p[i] = static_cast<int>(rng.below(6));
    }
    const auto r = classification_report(confusion_matrix(t, p));
    const auto o = ngtest::brute_metrics(t, p, 6);
    for (int c = 0; c < 6; ++c) {
      REQUIRE(std::abs(r.categories[c].precision - o.precision[c].value()) <= 1e-12);
      REQUIRE(std::abs(r.categories[c].recall - o.recall[c].value()) <= 1e-12);
      REQUIRE(std::abs(r.categories[c].f1 - o.f1[c].value()) <= 1e-12);
      REQUIRE(r.categories[c].support == o.support[c]);
    }
    REQUIRE(std::abs(r.accuracy - o.accuracy.value()) <= 1e-12);
    REQUIRE(std::abs(r.macro_f1 - o.macro_f1.value()) <= 1e-12);
  }
}

TEST_CASE("perfect predictions give identity metrics") {
  std::vector<int> t{0, 1, 2, 3, 4, 5, 5};
  const auto r = classification_report(confusion_matrix(t, t));
  CHECK(r.accuracy == 1.0);
  for (const auto& c : r.categories) CHECK(c.f1 == 1.0);
  CHECK(r.categories[0].name == "acral_lentiginous_melanoma");
}

TEST_CASE("absent category yields zeros rather than NaN") {
  const auto r = classification_report(confusion_matrix({0, 0, 1}, {0, 1, 1}));
  CHECK(r.categories[4].precision == 0.0);
  CHECK(r.categories[4].recall == 0.0);
  CHECK(r.categories[4].f1 == 0.0);
}

TEST_CASE("confusion matrix errors") {
  CHECK_THROWS_AS(confusion_matrix({0, 1}, {0}), InvalidArgument);
  CHECK_THROWS_AS(confusion_matrix({0, 6}, {0, 1}), InvalidArgument);
  CHECK_THROWS_AS(classification_report(ConfusionMatrix(6)), InvalidArgument);
  ConfusionMatrix m(3);
  m.add(2, 1);
  CHECK(m.row_sum(2) == 1);
  CHECK(m.col_sum(1) == 1);
  CHECK(m.trace() == 0);
}

TEST_CASE("comparison ordering and reference rows") {
  std::vector<ModelSummary> models{{"b", {}, {}, 0.8, {}, false}, {"a", {}, {}, 0.8, {}, false},
                                   {"c", {}, {}, 0.9, {}, false}};
  const auto plain = compare_models(models);
  REQUIRE(plain.size() == 3);
  CHECK(plain[0].name == "c");
  CHECK(plain[1].name == "a");
  const auto with_ref = compare_models(models, true);
  CHECK(with_ref.size() == 3 + reference_results().size());
  CHECK(with_ref[0].test_accuracy == doctest::Approx(0.9557));
  CHECK(with_ref[0].reference);
  CHECK_THROWS_AS(compare_models({}), InvalidArgument);
}

TEST_CASE("published reference accuracies") {
  const auto& refs = reference_results();
  auto find = [&](double acc) {
    return std::any_of(refs.begin(), refs.end(), [&](const ModelSummary& m) { return m.test_accuracy == acc; });
  };
  CHECK(find(0.9557));
  CHECK(find(0.9479));
  CHECK(find(0.918));
  CHECK(find(0.483));
}

TEST_CASE("csv exports") {
  const auto r = classification_report(confusion_matrix({0, 1, 1}, {0, 1, 0}));
  const std::string csv = report_csv(r);
  CHECK(csv.rfind("category,precision,recall,f1,support\n", 0) == 0);
  CHECK(csv.find("\nacral_lentiginous_melanoma,0.5,1,") != std::string::npos);
  CHECK(csv.find("accuracy") != std::string::npos);
  const std::string table = comparison_csv(compare_models({summarize("mine", r)}));
  CHECK(table.rfind("model,train_accuracy,val_accuracy,test_accuracy,macro_f1,reference\n", 0) == 0);
  CHECK(to_json(r)["accuracy"].get<double>() == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("evaluate runs an unaugmented pass in partition order") {
  ngtest::ToyData d;
  ngtest::fill_toy(d, 1, 0, 3);
  const Classifier clf = ngtest::seeded_classifier(2);
  const auto run = evaluate(clf, d.train, d.source, 4);
  REQUIRE(run.predictions.size() == d.train.size());
  CHECK(run.predictions[3].sample_id == d.train.ids[3]);
  CHECK(run.report.matrix.total() == 6);
  const auto probs = clf.predict(d.source.load(d.train.ids[3]));
  CHECK(run.predictions[3].probs == probs);
}
