#include "amm_doctest.hpp"

#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "amm/errors.hpp"
#include "amm/eval.hpp"
#include "helpers.hpp"

using namespace amm;
using amm::testing::small_spec;
using amm::testing::conv_spec;

namespace {

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_CASE("assign_cluster: argmax with ties to the lowest index") {
  auto onehot = amm::one_hot(torch::tensor({2, 0, 1}), 3);
  CHECK(assign_cluster(onehot) == std::vector<int64_t>{2, 0, 1});
  CHECK(assign_cluster(torch::tensor({{0.2, 0.5, 0.3}}, real_options())) == std::vector<int64_t>{1});
  CHECK(assign_cluster(torch::full({1, 4}, 0.25, real_options())) == std::vector<int64_t>{0});
  CHECK(assign_cluster(torch::tensor({{0.1, 0.45, 0.45}}, real_options())) == std::vector<int64_t>{1});
}

TEST_CASE("clustering error: identity, relabeling and one mistake") {
  std::vector<int64_t> truth{0, 1, 2, 3, 4, 0, 1, 2, 3, 4};
  CHECK(clustering_error(truth, truth, 5, 5) == 0.0);
  const int64_t relabel[5] = {3, 0, 4, 1, 2};
  std::vector<int64_t> permuted;
  for (auto t : truth) permuted.push_back(relabel[t]);
  CHECK(clustering_error(permuted, truth, 5, 5) == 0.0);
  CHECK(testing::brute_force_error(permuted, truth, 5) == 0.0);
  auto map = cluster_to_label_map(cluster_matrix(permuted, truth, 5, 5), AssignmentMode::Optimal);
  for (int64_t c = 0; c < 5; ++c) CHECK(map[relabel[c]] == c);

  std::vector<int64_t> t3{0, 0, 0, 1, 1, 1, 2, 2, 2, 2}, p3{1, 1, 1, 2, 2, 2, 0, 0, 0, 1};
  CHECK(clustering_error(p3, t3, 3, 3) == doctest::Approx(0.1));
  CHECK(testing::brute_force_error(p3, t3, 3) == doctest::Approx(0.1));
}

TEST_CASE("optimal assignment equals brute force over all bijections") {
  std::mt19937_64 gen(31);
  int instances = 0;
  for (int64_t k = 2; k <= 7; ++k) {
    for (int trial = 0; trial < 200; ++trial, ++instances) {
      std::uniform_int_distribution<int64_t> label(0, k - 1);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      const int64_t m = 5 + static_cast<int64_t>(gen() % 60);
      const double noise = unit(gen);
      std::vector<int64_t> perm(k);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), gen);
      std::vector<int64_t> truth(m), pred(m);
      for (int64_t i = 0; i < m; ++i) {
        truth[i] = label(gen);
        pred[i] = unit(gen) < noise ? label(gen) : perm[truth[i]];
      }
      REQUIRE(clustering_error(pred, truth, k, k) ==
              doctest::Approx(testing::brute_force_error(pred, truth, k)).epsilon(1e-12));
    }
  }
  CHECK(instances == 1200);
}

TEST_CASE("clustering error is invariant under cluster relabeling") {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t k = 4;
    std::vector<int64_t> truth(40), pred(40), perm{0, 1, 2, 3};
    for (auto& v : truth) v = gen() % k;
    for (auto& v : pred) v = gen() % k;
    std::shuffle(perm.begin(), perm.end(), gen);
    std::vector<int64_t> relabeled;
    for (auto p : pred) relabeled.push_back(perm[p]);
    CHECK(clustering_error(pred, truth, k, k) == doctest::Approx(clustering_error(relabeled, truth, k, k)));
  }
}

TEST_CASE("Hungarian method matches brute force on random rectangular costs") {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> unit(0.0, 10.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t rows = 1 + trial % 5, cols = rows + trial % 3;
    std::vector<std::vector<double>> cost(rows, std::vector<double>(cols));
    for (auto& r : cost) for (auto& v : r) v = unit(gen);
    auto assign = hungarian_min_cost(cost);
    double got = 0.0;
    std::set<int64_t> used;
    for (int64_t i = 0; i < rows; ++i) {
      got += cost[i][assign[i]];
      used.insert(assign[i]);
    }
    CHECK(static_cast<int64_t>(used.size()) == rows);
    std::vector<int64_t> cols_perm(cols);
    std::iota(cols_perm.begin(), cols_perm.end(), 0);
    double best = INFINITY;
    do {
      double s = 0.0;
      for (int64_t i = 0; i < rows; ++i) s += cost[i][cols_perm[i]];
      best = std::min(best, s);
    } while (std::next_permutation(cols_perm.begin(), cols_perm.end()));
    CHECK(got == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("majority vote with more clusters than classes") {
  std::vector<int64_t> truth{0, 0, 0, 1, 1, 1, 1, 0};
  std::vector<int64_t> pure{0, 0, 1, 2, 2, 3, 3, 4};
  CHECK(clustering_error(pure, truth, 5, 2) == 0.0);
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int64_t> t(30), p(30);
    for (auto& v : t) v = gen() % 3;
    for (auto& v : p) v = gen() % 6;
    const double err = clustering_error(p, t, 6, 3);
    int64_t top = 0;
    for (int64_t c = 0; c < 3; ++c) top = std::max<int64_t>(top, std::count(t.begin(), t.end(), c));
    CHECK(err >= 0.0);
    CHECK(err <= 1.0 - double(top) / 30.0 + 1e-12);
    CHECK(clustering_error(p, t, 6, 3, AssignmentMode::Majority) == err);
  }
  std::vector<int64_t> single(truth.size(), 0);
  CHECK_THROWS_AS(clustering_error(single, truth, 1, 2), ArgumentError);
}

TEST_CASE("error inputs are validated") {
  std::vector<int64_t> empty;
  CHECK_THROWS_AS(clustering_error(empty, empty, 2, 2), ArgumentError);
  std::vector<int64_t> a{0, 1}, b{0};
  CHECK_THROWS_AS(clustering_error(a, b, 2, 2), ArgumentError);
  std::vector<int64_t> out_of_range{0, 5};
  CHECK_THROWS_AS(cluster_matrix(out_of_range, a, 2, 2), IndexError);
  CHECK_THROWS_AS(classification_error(empty, empty), ArgumentError);
  CHECK(classification_error(a, std::vector<int64_t>{1, 1}) == 0.5);
}

TEST_CASE("cluster matrix counts") {
  std::vector<int64_t> truth{0, 1, 2, 0, 1, 2}, pred = truth;
  auto m = cluster_matrix(pred, truth, 3, 3);
  for (int64_t k = 0; k < 3; ++k) {
    for (int64_t c = 0; c < 3; ++c) CHECK(m.at(k, c) == (k == c ? 2 : 0));
  }
  std::mt19937_64 gen(4);
  std::vector<int64_t> t(100), p(100);
  for (auto& v : t) v = gen() % 4;
  for (auto& v : p) v = gen() % 5;
  auto r = cluster_matrix(p, t, 5, 4);
  CHECK(r.total() == 100);
  auto cols = r.class_totals();
  for (int64_t c = 0; c < 4; ++c) CHECK(cols[c] == std::count(t.begin(), t.end(), c));
  int64_t manual = 0;
  for (size_t i = 0; i < p.size(); ++i) manual += p[i] == 3 && t[i] == 1;
  CHECK(r.at(3, 1) == manual);
}

TEST_CASE("reconstruction contract") {
  auto model = build_model(conv_spec(), 3);
  auto x = torch::rand({5, 1, 8, 8}, make_rng(1), real_options());
  auto r = reconstruct(model, x);
  CHECK(r.sizes() == x.sizes());
  CHECK(torch::equal(r, reconstruct(model, x)));
  CHECK(torch::all((r >= 0) & (r <= 1)).item<bool>());
}

TEST_CASE("interpolation contract") {
  auto model = build_model(conv_spec(), 4);
  auto x = torch::rand({2, 1, 8, 8}, make_rng(2), real_options());
  auto two = latent_interpolate(model, x[0], x[1], 2);
  auto ends = reconstruct(model, x);
  CHECK(two.size(0) == 2);
  CHECK(torch::allclose(two, ends, 0, 1e-12));
  auto same = latent_interpolate(model, x[0], x[0], 3);
  CHECK(torch::allclose(same[0], same[1], 0, 1e-12));
  CHECK(torch::allclose(same[1], same[2], 0, 1e-12));
  auto many = latent_interpolate(model, x[0], x[1], 7);
  CHECK(many.sizes() == torch::IntArrayRef({7, 1, 8, 8}));
  CHECK(torch::all((many >= 0) & (many <= 1)).item<bool>());
  CHECK_THROWS_AS(latent_interpolate(model, x[0], x[1], 1), ArgumentError);
}

TEST_CASE("sample grid is component-major") {
  auto model = build_model(conv_spec(3, 4), 5);
  auto rng = make_rng(1);
  auto grid = sample_grid(model, 4, rng);
  CHECK(grid.sizes() == torch::IntArrayRef({12, 1, 8, 8}));
  CHECK(torch::all((grid >= 0) & (grid <= 1)).item<bool>());
}

TEST_CASE("embedding export: header, rows, round trip and missing labels") {
  auto dir = testing::scratch_dir("emb");
  auto model = build_model(small_spec(3, 2), 6);
  Dataset d;
  d.images = torch::randn({5, 2, 1, 1}, make_rng(3), real_options());
  d.labels = torch::tensor({0, 1, 2, 1, 0});
  export_embeddings(model, d, dir / "e.csv");
  auto rows = read_csv(dir / "e.csv");
  REQUIRE(rows.size() == 6);
  CHECK(rows[0] == std::vector<std::string>{"component", "label", "z0", "z1"});
  auto q = infer_dataset(model, d.images);
  auto comps = assign_cluster(q.y);
  for (int64_t i = 0; i < 5; ++i) {
    REQUIRE(rows[i + 1].size() == 4);
    CHECK(std::stoll(rows[i + 1][0]) == comps[i]);
    CHECK(std::stoll(rows[i + 1][1]) == d.labels->index({i}).item<int64_t>());
    for (int64_t j = 0; j < 2; ++j) {
      const double z = q.z[i][j].item<double>();
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.9g", z);
      CHECK(std::stod(rows[i + 1][2 + j]) == std::stod(buf));
      CHECK(std::abs(std::stod(rows[i + 1][2 + j]) - z) <= 1e-8 * std::max(1.0, std::abs(z)));
    }
  }

  d.labels.reset();
  export_embeddings(model, d, dir / "u.csv");
  auto unl = read_csv(dir / "u.csv");
  for (size_t i = 1; i < unl.size(); ++i) CHECK(unl[i][1] == "-1");
  CHECK_THROWS_AS(export_embeddings(model, d, dir / "missing" / "x.csv"), IoError);
}

TEST_CASE("evaluation report on a hand-built model") {
  auto model = build_model(small_spec(3, 2), 7);
  auto d = make_synthetic_mixture(3, 50, 2, 6.0, 1);
  auto report = evaluate(model, d, AssignmentMode::Optimal);
  CHECK(report.cluster_error >= 0.0);
  CHECK(report.cluster_error <= 1.0);
  CHECK(report.classification_error >= report.cluster_error - 1e-12);
  CHECK(report.matrix.total() == 150);
  CHECK(report.bayes_agreement >= 0.0);
  CHECK(report.bayes_agreement <= 1.0);
  d.labels.reset();
  CHECK_THROWS_AS(evaluate(model, d, AssignmentMode::Optimal), ArgumentError);
}
