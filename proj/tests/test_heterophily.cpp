#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <nlohmann/json.hpp>

#include "oracle.hpp"
#include "sheafnet/heterophily.hpp"

using namespace sheafnet;

namespace {

LabelVector labels_of(std::vector<int> y, int c) {
  LabelVector lv;
  lv.labels = std::move(y);
  lv.num_classes = c;
  return lv;
}

}  // namespace

TEST_CASE("K2 with labels 0,1") {
  const Graph g = make_graph(2, {{0, 1}});
  const ClassProfile p = class_profile(g, labels_of({0, 1}, 2));
  CHECK(p.m_hat == Matrix::from_rows({{0.0, 1.0}, {1.0, 0.0}}));
  CHECK(p.d_bar == std::vector<double>{1.0, 1.0});

  const Matrix gain = gain_matrix(p);
  CHECK(gain(0, 1) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  CHECK(gain(0, 0) == 0.0);
  CHECK(gain(1, 0) == gain(0, 1));
}

TEST_CASE("triangle with labels 0,0,1 (hand-counted endpoints)") {
  const Graph g = make_graph(3, {{0, 1}, {0, 2}, {1, 2}});
  const ClassProfile p = class_profile(g, labels_of({0, 0, 1}, 2));
  CHECK(p.m_hat(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.m_hat(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.m_hat(1, 0) == 1.0);
  CHECK(p.m_hat(1, 1) == 0.0);
  CHECK(p.d_bar == std::vector<double>{2.0, 2.0});
}

TEST_CASE("profile rows are stochastic") {
  Rng rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 12 + rng.randint(20);
    auto g = oracle::random_graph(n, 0.4, rng);
    std::vector<int> y(n);
    for (int u = 0; u < n; ++u) y[u] = rng.randint(3);
    // retry degenerate draws
    bool all_present = true;
    for (int c = 0; c < 3; ++c)
      if (std::count(y.begin(), y.end(), c) == 0) all_present = false;
    if (!all_present) continue;
    const ClassProfile p = class_profile(*g, labels_of(y, 3));
    for (int k = 0; k < 3; ++k) {
      if (std::find(p.zero_degree_rows.begin(), p.zero_degree_rows.end(), k) !=
          p.zero_degree_rows.end())
        continue;
      double sum = 0.0;
      for (int i = 0; i < 3; ++i) sum += p.m_hat(k, i);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("empty class rejected, zero-degree class flagged") {
  const Graph g = make_graph(3, {{0, 1}});
  CHECK_THROWS_AS(class_profile(g, labels_of({0, 0, 2}, 3)), std::invalid_argument);

  // class 1 exists but node 2 is isolated
  const ClassProfile p = class_profile(g, labels_of({0, 0, 1}, 2));
  CHECK(p.zero_degree_rows == std::vector<int>{1});
  CHECK(p.m_hat(1, 0) == 0.0);
  CHECK(p.m_hat(1, 1) == 0.0);
  CHECK(p.d_bar[1] == 0.0);
}

TEST_CASE("gain is symmetric with zero diagonal; identical classes give zero gain") {
  // two classes with identical neighborhood rows and equal degrees: a square
  // 0-1-2-3-0 with alternating labels gives m_hat rows [0,1] and [1,0]...
  // use two disjoint identically-wired pairs instead
  const Graph g = make_graph(4, {{0, 1}, {2, 3}});
  // class 0 = {0,2}, class 1 = {1,3}: every class-0 endpoint sees class 1
  const ClassProfile p = class_profile(g, labels_of({0, 1, 0, 1}, 2));
  CHECK(p.m_hat == Matrix::from_rows({{0.0, 1.0}, {1.0, 0.0}}));

  // identical rows and degrees => zero gain needs identical distributions:
  ClassProfile same = p;
  same.m_hat = Matrix::from_rows({{0.5, 0.5}, {0.5, 0.5}});
  same.d_bar = {2.0, 2.0};
  const Matrix gain = gain_matrix(same);
  CHECK(gain(0, 1) == 0.0);
}

TEST_CASE("classification thresholds") {
  SUBCASE("all-zero gain is bad heterophily") {
    const HeterophilyVerdict v = classify_heterophily(Matrix(2, 2), 0.2);
    CHECK(v.label == HeterophilyLabel::bad);
  }
  SUBCASE("straddling sigma is mixed") {
    Matrix gain(3, 3);
    gain(0, 1) = gain(1, 0) = 0.1;
    gain(0, 2) = gain(2, 0) = 1.0;
    gain(1, 2) = gain(2, 1) = 0.5;
    const HeterophilyVerdict v = classify_heterophily(gain, 0.2);
    CHECK(v.label == HeterophilyLabel::mixed);
    CHECK(v.min_gain == doctest::Approx(0.1));
    CHECK(v.max_gain == doctest::Approx(1.0));
  }
  SUBCASE("wisconsin-like gains are good") {
    Matrix gain(2, 2);
    gain(0, 1) = gain(1, 0) = 0.98;
    const HeterophilyVerdict v = classify_heterophily(gain, 0.2);
    CHECK(v.label == HeterophilyLabel::good);
  }
  SUBCASE("sigma = 1 theoretical variant flips the verdict") {
    Matrix gain(2, 2);
    gain(0, 1) = gain(1, 0) = 0.98;
    // every off-diagonal gain sits below the threshold
    CHECK(classify_heterophily(gain, 1.0).label == HeterophilyLabel::bad);
  }
  SUBCASE("too small matrices rejected") {
    CHECK_THROWS_AS(classify_heterophily(Matrix(1, 1), 0.2), std::invalid_argument);
  }
}

TEST_CASE("class relabeling permutes the gain matrix consistently") {
  Rng rng(32);
  const int n = 24;
  auto g = oracle::random_graph(n, 0.35, rng);
  std::vector<int> y(n);
  for (int u = 0; u < n; ++u) y[u] = u % 3;
  const ClassProfile p = class_profile(*g, labels_of(y, 3));
  const Matrix gain = gain_matrix(p);
  const HeterophilyVerdict v = classify_heterophily(gain, 0.2);

  // permutation 0->1, 1->2, 2->0
  const int perm[3] = {1, 2, 0};
  std::vector<int> y2(n);
  for (int u = 0; u < n; ++u) y2[u] = perm[y[u]];
  const Matrix gain2 = gain_matrix(class_profile(*g, labels_of(y2, 3)));
  for (int k = 0; k < 3; ++k)
    for (int t = 0; t < 3; ++t)
      CHECK(gain(k, t) == doctest::Approx(gain2(perm[k], perm[t])).epsilon(1e-12));

  const HeterophilyVerdict v2 = classify_heterophily(gain2, 0.2);
  CHECK(v.min_gain == doctest::Approx(v2.min_gain).epsilon(1e-12));
  CHECK(v.max_gain == doctest::Approx(v2.max_gain).epsilon(1e-12));
  CHECK(v.label == v2.label);
}

TEST_CASE("duplicating the graph as two disjoint copies changes nothing") {
  Rng rng(33);
  const int n = 15;
  auto g = oracle::random_graph(n, 0.4, rng);
  std::vector<int> y(n);
  for (int u = 0; u < n; ++u) y[u] = rng.randint(2);
  y[0] = 0;
  y[1] = 1;  // both classes present

  std::vector<std::pair<int, int>> doubled = g->edges;
  for (const auto& [u, v] : g->edges) doubled.emplace_back(u + n, v + n);
  const Graph g2 = make_graph(2 * n, doubled);
  std::vector<int> y2 = y;
  y2.insert(y2.end(), y.begin(), y.end());

  const ClassProfile p1 = class_profile(*g, labels_of(y, 2));
  const ClassProfile p2 = class_profile(g2, labels_of(y2, 2));
  CHECK(oracle::max_abs_diff(p1.m_hat, oracle::to_eigen(p2.m_hat)) < 1e-12);
  CHECK(p1.d_bar[0] == doctest::Approx(p2.d_bar[0]).epsilon(1e-12));
  CHECK(p1.d_bar[1] == doctest::Approx(p2.d_bar[1]).epsilon(1e-12));

  const Matrix gain1 = gain_matrix(p1);
  const Matrix gain2 = gain_matrix(p2);
  CHECK(oracle::max_abs_diff(gain1, oracle::to_eigen(gain2)) < 1e-12);
}

TEST_CASE("set-based counting differs from multiset on shared neighbors") {
  // star: center 0 (class 0), leaves 1..3 (class 1); plus edge between two
  // class-1 nodes to give class 1 internal structure
  const Graph g = make_graph(4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}});
  const LabelVector y = labels_of({0, 1, 1, 1}, 2);

  const ClassProfile multi = class_profile(g, y, NeighborCounting::multiset);
  // class-1 endpoints: toward 0 three times, toward class 1 twice
  CHECK(multi.m_hat(1, 0) == doctest::Approx(3.0 / 5.0));
  CHECK(multi.m_hat(1, 1) == doctest::Approx(2.0 / 5.0));

  const ClassProfile set = class_profile(g, y, NeighborCounting::set);
  // distinct nodes adjacent to class 1: {0, 1, 2} -> one class-0, two class-1
  CHECK(set.m_hat(1, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(set.m_hat(1, 1) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("edge homophily debug measure") {
  const Graph g = make_graph(3, {{0, 1}, {1, 2}});
  CHECK(edge_homophily(g, labels_of({0, 0, 1}, 2)) == doctest::Approx(0.5));
}

TEST_CASE("audit JSON is well-formed") {
  const Graph g = make_graph(2, {{0, 1}});
  const ClassProfile p = class_profile(g, labels_of({0, 1}, 2));
  const HeterophilyVerdict v = classify_heterophily(gain_matrix(p), 0.2);
  const auto j = nlohmann::json::parse(audit_to_json("toy", v));
  CHECK(j.at("dataset") == "toy");
  CHECK(j.at("label") == "Good");
  CHECK(j.at("sigma") == 0.2);
  CHECK(j.at("min_gain").get<double>() == doctest::Approx(std::sqrt(2.0)));
  CHECK(j.at("gain_matrix").size() == 2);
}
