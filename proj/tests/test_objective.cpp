#include <doctest.h>

#include <cmath>
#include <memory>
#include <numeric>
#include <random>

#include "gtnsgdm/error.hpp"
#include "gtnsgdm/noise.hpp"
#include "gtnsgdm/objective.hpp"
#include "test_support.hpp"

using namespace gtnsgdm;

TEST_CASE("token dataset shape, labels and determinism") {
  const Dataset ds = generate_token_dataset(1000, 20, 3);
  CHECK(ds.samples() == 1000);
  CHECK(ds.dim() == 20);
  CHECK((ds.y - ds.x * ds.w_star).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ds.x.array() * (1.0 - ds.x.array())).cwiseAbs().maxCoeff() == 0.0);

  const double col1 = ds.x.col(0).mean();
  CHECK(col1 >= 0.87);
  CHECK(col1 <= 0.93);
  const auto& ci = test_support::oracles()["bern09_ci999"];
  CHECK(col1 >= ci[0].get<double>());
  CHECK(col1 <= ci[1].get<double>());

  const Dataset again = generate_token_dataset(1000, 20, 3);
  CHECK(again.x == ds.x);
  CHECK(again.y == ds.y);
  CHECK(again.w_star == ds.w_star);
  CHECK(generate_token_dataset(1000, 20, 4).w_star != ds.w_star);
}

TEST_CASE("token dataset column frequencies follow the token groups") {
  const Dataset ds = generate_token_dataset(20000, 8, 1);
  CHECK(std::abs(ds.x.col(1).mean() - 0.9) < 0.01);
  CHECK(std::abs(ds.x.col(2).mean() - 0.5) < 0.015);
  CHECK(std::abs(ds.x.col(3).mean() - 0.5) < 0.015);
  for (int j = 4; j < 8; ++j) CHECK(std::abs(ds.x.col(j).mean() - 0.1) < 0.01);
}

TEST_CASE("token dataset argument checks") {
  CHECK_THROWS_AS(generate_token_dataset(10, 3, 1), Error);
  CHECK_THROWS_AS(generate_token_dataset(0, 20, 1), Error);
}

TEST_CASE("dataset CSV round trip is exact") {
  const auto dir = test_support::scratch("objective_csv");
  const Dataset ds = generate_token_dataset(37, 6, 9);
  write_dataset_csv(ds, dir / "d.csv", dir / "w.csv");
  CHECK(test_support::slurp(dir / "d.csv").rfind("x1,x2,x3,x4,x5,x6,y\n", 0) == 0);
  const Dataset back = read_dataset_csv(dir / "d.csv", dir / "w.csv");
  CHECK(back.x == ds.x);
  CHECK(back.y == ds.y);
  CHECK(back.w_star == ds.w_star);
}

TEST_CASE("partition shards") {
  SUBCASE("1000 samples over 20 nodes") {
    const Dataset ds = generate_token_dataset(1000, 20, 1);
    const auto shards = partition(ds, 20);
    REQUIRE(shards.size() == 20);
    int row = 0;
    for (const auto& s : shards) {
      CHECK(s.samples() == 50);
      CHECK(s.features() == ds.x.middleRows(row, 50));
      CHECK(s.labels() == ds.y.segment(row, 50));
      row += 50;
    }
  }
  SUBCASE("singletons and remainders") {
    const Dataset four = generate_token_dataset(4, 4, 1);
    for (const auto& s : partition(four, 4)) CHECK(s.samples() == 1);
    const Dataset five = generate_token_dataset(5, 4, 1);
    const auto two = partition(five, 2);
    CHECK(two[0].samples() == 3);
    CHECK(two[1].samples() == 2);
  }
  SUBCASE("more nodes than samples") {
    const Dataset three = generate_token_dataset(3, 4, 1);
    try {
      partition(three, 4);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvalidPartition);
    }
  }
  SUBCASE("full gradient equals the average of shard gradients") {
    const Dataset ds = generate_token_dataset(1000, 20, 2);
    const auto shards = partition(ds, 20);
    const auto whole = LocalObjective::tukey(ds.x, ds.y);
    const Eigen::VectorXd w = Eigen::VectorXd::Constant(20, 0.3);
    CHECK((global_gradient(shards, w) - whole.gradient(w)).norm() <= 1e-14);
    CHECK(std::abs(global_value(shards, w) - whole.value(w)) <= 1e-13);
  }
}

TEST_CASE("tukey loss closed form") {
  const auto& o = test_support::oracles()["tukey"];
  const double c = o["c"].get<double>();
  CHECK(tukey_loss(0.0) == 0.0);
  CHECK(tukey_loss(c) == doctest::Approx(o["cap"].get<double>()).epsilon(1e-15));
  CHECK(tukey_loss(-c) == doctest::Approx(3.6584).epsilon(1e-4));
  CHECK(tukey_loss(c / 2) == doctest::Approx(o["half_c_loss"].get<double>()).epsilon(1e-14));
  CHECK(tukey_loss(100.0) == tukey_loss(c));
  CHECK_THROWS_AS(tukey_loss(1.0, 0.0), Error);
  CHECK_THROWS_AS(tukey_grad(1.0, -1.0), Error);
}

TEST_CASE("tukey gradient matches finite differences") {
  const double h = 1e-6;
  const double c = kTukeyC;
  CHECK(tukey_grad(0.0) == 0.0);
  CHECK(tukey_grad(c) == 0.0);
  CHECK(tukey_grad(-c) == 0.0);
  CHECK(tukey_grad(7.0) == 0.0);
  const double fd1 = (tukey_loss(1.0 + h) - tukey_loss(1.0 - h)) / (2 * h);
  CHECK(std::abs(tukey_grad(1.0) - fd1) <= 1e-6 * std::abs(fd1));
  CHECK(tukey_grad(1.0) == doctest::Approx(test_support::oracles()["tukey"]["grad_at_1"].get<double>()).epsilon(1e-15));

  std::mt19937_64 gen(12345);
  std::uniform_real_distribution<double> rc(0.5, 10.0), frac(-1.5, 1.5);
  int checked = 0;
  while (checked < 1000) {
    const double cc = rc(gen);
    const double r = frac(gen) * cc;
    if (std::abs(std::abs(r) - cc) <= 1e-3 || std::abs(r) < 1e-3) continue;
    const double fd = (tukey_loss(r + h, cc) - tukey_loss(r - h, cc)) / (2 * h);
    const double g = tukey_grad(r, cc);
    CAPTURE(r);
    CAPTURE(cc);
    if (std::abs(r) > cc)
      CHECK(g == 0.0);
    else
      CHECK(std::abs(g - fd) <= 1e-6 * std::max(std::abs(fd), 1e-3));
    const double loss = tukey_loss(r, cc);
    CHECK(loss >= 0.0);
    CHECK(loss <= cc * cc / 6);
    ++checked;
  }
}

TEST_CASE("local gradients") {
  SUBCASE("zero at the ground truth") {
    const Dataset ds = generate_token_dataset(200, 10, 5);
    const auto obj = LocalObjective::tukey(ds.x, ds.y);
    CHECK(obj.gradient(ds.w_star).norm() == 0.0);
  }
  SUBCASE("single sample hand evaluation") {
    Eigen::MatrixXd x(1, 1);
    x << 1.0;
    Eigen::VectorXd y(1);
    y << 0.0;
    const auto obj = LocalObjective::tukey(x, y);
    const Eigen::VectorXd g = obj.gradient(Eigen::VectorXd::Constant(1, 1.0));
    CHECK(g(0) == -tukey_grad(-1.0));
    CHECK(g(0) == tukey_grad(1.0));
  }
  SUBCASE("quadratic kind") {
    const auto q = LocalObjective::quadratic(2.5);
    CHECK(q.gradient(Eigen::VectorXd::Constant(1, 2.5))(0) == 0.0);
    CHECK(q.gradient(Eigen::VectorXd::Constant(1, 4.0))(0) == 1.5);
    CHECK(q.value(Eigen::VectorXd::Constant(1, 4.0)) == 1.125);
  }
  SUBCASE("index subsets and empty batches") {
    const Dataset ds = generate_token_dataset(10, 4, 5);
    const auto obj = LocalObjective::tukey(ds.x, ds.y);
    const Eigen::VectorXd w = Eigen::VectorXd::Zero(4);
    std::vector<int> all(10);
    std::iota(all.begin(), all.end(), 0);
    CHECK((local_gradient(obj, w, all) - obj.gradient(w)).norm() <= 1e-15);
    std::vector<int> none;
    try {
      local_gradient(obj, w, none);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::EmptyBatch);
    }
  }
}

TEST_CASE("oracle noise injection") {
  const Dataset ds = generate_token_dataset(100, 5, 5);
  auto obj = std::make_shared<const LocalObjective>(LocalObjective::tukey(ds.x, ds.y));
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(5, 0.2);
  const Eigen::VectorXd exact = obj->gradient(w);

  SUBCASE("no noise returns the exact shard gradient") {
    Oracle o(obj, NoiseSpec::none(5), 0, 1, 0);
    CHECK(stochastic_gradient(o, w) == exact);
  }
  SUBCASE("gaussian noise is unbiased") {
    Oracle o(obj, NoiseSpec::gaussian(5, 3.0), 0, 1, 0);
    const int n = 100000;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(5);
    for (int k = 0; k < n; ++k) sum += o.sample(w);
    const Eigen::VectorXd mean = sum / n;
    const double se = std::sqrt(3.0 / n);
    for (int j = 0; j < 5; ++j) CHECK(std::abs(mean(j) - exact(j)) <= 3 * se);
  }
  SUBCASE("noise of every family is centred") {
    for (const auto& spec : {NoiseSpec::gaussian(5, 3.0), NoiseSpec::student_t(5, 1.5, 1.0),
                             NoiseSpec::alpha_stable(5, 1.5, 0.5, 1.0, 0.1)}) {
      Oracle o(obj, spec, 0, 4, 2);
      std::vector<double> first;
      for (int k = 0; k < 100000; ++k) first.push_back(o.sample(w)(0) - exact(0));
      const auto mom = median_of_means(first);
      CAPTURE(to_string(spec.family));
      CHECK(std::abs(mom.estimate) <= 3 * mom.standard_error);
    }
  }
  SUBCASE("stable noise has a settled p = 1.2 moment") {
    Oracle o(obj, NoiseSpec::alpha_stable(5, 1.5, 0.5, 1.0, 0.1), 0, 8, 1);
    std::vector<Eigen::VectorXd> noise;
    for (int k = 0; k < 200000; ++k) noise.push_back(o.sample(w) - exact);
    const std::span<const Eigen::VectorXd> all(noise);
    const double small = empirical_moment(all.first(20000), 1.2);
    const double big = empirical_moment(all, 1.2);
    CHECK(std::isfinite(big));
    CHECK(std::abs(big - small) / big <= 0.3);
  }
  SUBCASE("minibatch mode samples within the shard") {
    Oracle o(obj, NoiseSpec::none(5), 10, 1, 0);
    const int n = 20000;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(5);
    for (int k = 0; k < n; ++k) sum += o.sample(w);
    CHECK((sum / n - exact).norm() < 0.02);
  }
  SUBCASE("oracles replay for the same seed and node") {
    Oracle a(obj, NoiseSpec::student_t(5, 1.5, 1.0), 0, 3, 7), b(obj, NoiseSpec::student_t(5, 1.5, 1.0), 0, 3, 7);
    for (int k = 0; k < 10; ++k) CHECK(a.sample(w) == b.sample(w));
  }
}

TEST_CASE("counterexample instance") {
  const auto inst = claim1_instance(2, 1.0);
  CHECK(inst.a == 0.0);
  CHECK(inst.b == 3.5);
  CHECK(inst.x0 == 0.5);
  REQUIRE(inst.objectives.size() == 2);
  CHECK(inst.objectives[0].center() == 0.0);
  CHECK(inst.objectives[1].center() == 3.5);
  CHECK(inst.weights.weights().isApprox(Eigen::MatrixXd::Constant(2, 2, 0.5)));
  const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, inst.x0);
  const double gap = std::abs(global_gradient(inst.objectives, x0)(0));
  CHECK(gap == std::abs(inst.x0 - (inst.a + inst.b) / 2));
  CHECK(gap == (inst.b - inst.a) / 2 - 0.5);
  CHECK(gap >= 1.0);
  CHECK(global_gradient(inst.objectives, Eigen::VectorXd::Constant(1, (inst.a + inst.b) / 2))(0) == 0.0);

  const auto big = claim1_instance(6, 10.0);
  CHECK(big.b - big.a == 2 * 10.0 + 1.0 + kClaim1Margin);
  CHECK(big.objectives[2].center() == big.a);
  CHECK(big.objectives[3].center() == big.b);

  CHECK_THROWS_AS(claim1_instance(3, 1.0), Error);
  CHECK_THROWS_AS(claim1_instance(2, 0.5), Error);
}
