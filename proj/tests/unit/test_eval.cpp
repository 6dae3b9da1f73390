#include <cmath>

#include "doctest.h"
#include "fixture.hpp"
#include "smtl/errors.hpp"
#include "smtl/eval.hpp"

using namespace smtl;

namespace {

AUScoreMatrix matrix(std::vector<double> values, std::vector<std::size_t> counts, std::size_t cols) {
  AUScoreMatrix m;
  for (std::size_t r = 0; r < counts.size(); ++r) m.rows.push_back("e" + std::to_string(r));
  for (std::size_t c = 0; c < cols; ++c) m.columns.push_back("AU" + std::to_string(c));
  m.values = std::move(values);
  m.counts = std::move(counts);
  return m;
}

NetworkSpec two_space_spec() {
  NetworkSpec s;
  s.trunk = {2, 4, 1, false};
  s.spaces = {{"emotion", {"a", "b", "c"}, LabelKind::categorical_exclusive}, {"au", {"x", "y"}}};
  return s;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("hand-counted fixture") {
    const auto s = fixture::load_samples();
    const auto expected = fixture::load_expected();
    const auto summary = accuracy_per_class(s.predicted, s.truth, s.classes);
    REQUIRE(summary.classes.size() == expected.size());
    for (std::size_t c = 0; c < expected.size(); ++c) {
      const auto& got = summary.classes[c];
      CHECK(got.name == expected[c].name);
      CHECK(got.tp == expected[c].tp);
      CHECK(got.tn == expected[c].tn);
      CHECK(got.fp == expected[c].fp);
      CHECK(got.fn == expected[c].fn);
      CHECK(got.accuracy() == doctest::Approx(expected[c].accuracy).epsilon(1e-15));
      CHECK(got.recall().has_value() == expected[c].recall.has_value());
      if (expected[c].recall) CHECK(*got.recall() == doctest::Approx(*expected[c].recall).epsilon(1e-15));
    }
    CHECK(summary.mean_class_accuracy == doctest::Approx(0.86).epsilon(1e-15));
    CHECK(summary.mean_class_recall == doctest::Approx(0.5803571428571429).epsilon(1e-15));
    CHECK(summary.overall == doctest::Approx(0.4).epsilon(1e-15));
  }

  TEST_CASE("accuracy input contracts") {
    const std::vector<std::vector<std::uint8_t>> one{{1, 0}}, two{{1, 0}, {0, 1}}, wide{{1, 0, 1}};
    const std::vector<std::string> names{"a", "b"};
    CHECK_THROWS_AS(accuracy_per_class(one, two, names), ContractError);
    CHECK_THROWS_AS(accuracy_per_class(wide, one, names), ContractError);
    CHECK_THROWS_AS(accuracy_per_class({}, {}, names), ContractError);
  }

  TEST_CASE("argmax breaks ties towards the lowest index") {
    CHECK(argmax_index(std::vector<double>{1, 3, 3, 2}) == 1);
    CHECK(argmax_index(std::vector<double>{0, 0}) == 0);
    CHECK_THROWS_AS(argmax_index(std::vector<double>{}), ContractError);
  }

  TEST_CASE("decisions use argmax for categorical and a closed 0.5 threshold for multilabel") {
    const auto spec = two_space_spec();
    HeadOutputs out;
    // logits per row: emotion(a, b, c), au(x, y)
    out.logits.push_back(Tensor::from({2, 5}, {0.1, 2.0, 2.0, 0.0, -0.1, 5.0, -1.0, 0.0, 3.0, -3.0}));
    const auto p = predictions_from_logits(spec, out);
    const auto* emo = p.find("emotion");
    const auto* au = p.find("au");
    REQUIRE(emo);
    REQUIRE(au);
    CHECK(emo->argmax == std::vector<std::size_t>{1, 0});
    CHECK(emo->decisions[0] == std::vector<std::uint8_t>{0, 1, 0});
    CHECK(au->decisions[0] == std::vector<std::uint8_t>{1, 0});  // sigmoid(0) = 0.5 counts as positive
    CHECK(au->decisions[1] == std::vector<std::uint8_t>{1, 0});
    CHECK(au->scores[0] == 0.5);
  }

  TEST_CASE("score matrix groups by predicted or given emotion") {
    const auto spec = two_space_spec();
    HeadOutputs out;
    out.logits.push_back(Tensor::from({3, 5}, {5, 0, 0, 0, 0, 5, 0, 0, 2, 0, 0, 5, 0, -2, 0}));
    const auto p = predictions_from_logits(spec, out);
    const auto m = au_mean_score_matrix(p, "emotion", "au");
    CHECK(m.counts == std::vector<std::size_t>{2, 1, 0});
    CHECK(m.at(0, 0) == doctest::Approx((0.5 + 1.0 / (1.0 + std::exp(-2.0))) / 2).epsilon(1e-14));
    CHECK(m.at(1, 0) == doctest::Approx(1.0 / (1.0 + std::exp(2.0))).epsilon(1e-14));
    CHECK(m.empty_row(2));
    CHECK(m.at(2, 1) == 0.0);
    const std::vector<std::size_t> groups{2, 2, 2};
    const auto g = au_mean_score_matrix(p, "emotion", "au", std::span<const std::size_t>(groups));
    CHECK(g.counts == std::vector<std::size_t>{0, 0, 3});
    CHECK_THROWS_AS(au_mean_score_matrix(p, "au", "emotion"), ContractError);
  }

  TEST_CASE("coherence counts top-k hits with lowest-index ties") {
    // Row 0 ranks columns 2, 0, then ties 1 and 3 (1 wins); row 1 is empty.
    const auto m = matrix({0.8, 0.5, 0.9, 0.5, 0, 0, 0, 0}, {10, 0}, 4);
    const std::vector<std::vector<std::size_t>> sets{{2, 3, 0}, {1}};
    const auto r = coherence_score(m, sets);
    REQUIRE(r.precision[0].has_value());
    CHECK(*r.precision[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK_FALSE(r.precision[1].has_value());
    CHECK(r.evaluated == 1);
    CHECK(r.macro == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    const auto top1 = coherence_score(m, sets, 1);
    CHECK(*top1.precision[0] == 1.0);
    CHECK_THROWS_AS(coherence_score(m, sets, 0), ContractError);
    CHECK_THROWS_AS(coherence_score(m, sets, 5), ContractError);
  }

  TEST_CASE("coherence skips rows with an empty generating set under the default k") {
    const auto m = matrix({0.9, 0.1, 0.2, 0.8}, {4, 4}, 2);
    const std::vector<std::vector<std::size_t>> sets{{}, {1}};
    const auto r = coherence_score(m, sets);
    CHECK_FALSE(r.precision[0].has_value());
    CHECK(r.macro == 1.0);
  }

  TEST_CASE("run metrics survive a JSON round trip") {
    RunMetrics run;
    run.run = "basic-sjmt";
    run.strategy = "sjmt";
    const auto s = fixture::load_samples();
    run.tasks.push_back({"au", LabelKind::multilabel_binary, accuracy_per_class(s.predicted, s.truth, s.classes)});
    run.matrix = matrix({0.25, 0.75}, {3}, 2);
    run.matrix->grouped_by_truth = true;
    run.coherence = coherence_score(*run.matrix, std::vector<std::vector<std::size_t>>{{1}});
    const auto text = run_metrics_to_json(run);
    const auto back = run_metrics_from_json(text);
    CHECK(back.run == run.run);
    CHECK(back.tasks[0].summary.classes[1].fn == 3);
    CHECK(back.matrix->grouped_by_truth);
    CHECK(back.matrix->values == run.matrix->values);
    CHECK(back.coherence->macro == 1.0);
    CHECK(run_metrics_to_json(back) == text);
    CHECK_THROWS_AS(run_metrics_from_json("{\"run\": 3}"), ArtifactError);
  }

  TEST_CASE("report layout") {
    RunMetrics run;
    run.run = "basic-sjmt";
    run.strategy = "sjmt";
    const auto s = fixture::load_samples();
    run.tasks.push_back({"au", LabelKind::multilabel_binary, accuracy_per_class(s.predicted, s.truth, s.classes)});
    run.matrix = matrix({0.05, 0.95}, {3}, 2);
    const std::vector<RunMetrics> runs{run};
    const auto rep = build_report(runs);
    CHECK(rep.csv.rfind("run,task,class,metric,value\n", 0) == 0);
    CHECK(rep.csv.find("basic-sjmt,au,AU2,accuracy,0.8\n") != std::string::npos);
    CHECK(rep.text.find(rep.comparison) == 0);
    CHECK(rep.matrix_csv == matrix_to_csv(*run.matrix));
    const auto heat = ascii_heatmap(*run.matrix);
    CHECK(rep.text.find("grouped by predicted class") != std::string::npos);
    CHECK(heat.find("scale:") != std::string::npos);
  }
}
