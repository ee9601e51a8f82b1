#include <doctest.h>

#include <cmath>
#include <memory>

#include "gtnsgdm/error.hpp"
#include "gtnsgdm/optim.hpp"
#include "gtnsgdm/schedule.hpp"
#include "test_support.hpp"

using namespace gtnsgdm;

namespace {

std::vector<Oracle> quadratic_oracles(const std::vector<double>& centers, const NoiseSpec& noise = NoiseSpec::none(1),
                                      std::uint64_t seed = 1) {
  std::vector<Oracle> out;
  for (std::size_t i = 0; i < centers.size(); ++i)
    out.emplace_back(std::make_shared<const LocalObjective>(LocalObjective::quadratic(centers[i])), noise, 0, seed,
                     static_cast<int>(i));
  return out;
}

RoundEngine quadratic_engine(const MixingMatrix& w, const std::vector<double>& centers, Method m, Hyper h, double x0,
                             const NoiseSpec& noise = NoiseSpec::none(1)) {
  return RoundEngine(w, quadratic_oracles(centers, noise), m, h, Eigen::VectorXd::Constant(1, x0));
}

MixingMatrix trivial() { return MixingMatrix(Eigen::MatrixXd::Ones(1, 1)); }
MixingMatrix complete(int n) { return metropolis_weights(build_graph(GraphKind::Complete, n)); }
MixingMatrix ring(int n) { return metropolis_weights(build_graph(GraphKind::Ring, n)); }

struct Regression {
  Dataset ds;
  std::vector<std::shared_ptr<const LocalObjective>> shards;
};

Regression regression(int n, std::uint64_t seed = 1) {
  Regression r{generate_token_dataset(1000, 20, seed), {}};
  for (auto& s : partition(r.ds, n)) r.shards.push_back(std::make_shared<const LocalObjective>(std::move(s)));
  return r;
}

RoundEngine regression_engine(const Regression& r, const MixingMatrix& w, Method m, Hyper h, const NoiseSpec& noise,
                              std::uint64_t seed = 1) {
  std::vector<Oracle> oracles;
  for (int i = 0; i < w.size(); ++i) oracles.emplace_back(r.shards[i], noise, 0, seed, i);
  return RoundEngine(w, std::move(oracles), m, h, Eigen::VectorXd::Zero(20));
}

Hyper with(double alpha, double beta = 0.0) {
  Hyper h;
  h.alpha = alpha;
  h.beta = beta;
  return h;
}

}  // namespace

TEST_CASE("method names round-trip") {
  for (auto m : {Method::GtNsgdm, Method::Dsgd, Method::GtDsgd, Method::DsgdClip, Method::DsgdGClip, Method::DsgdCClip,
                 Method::SClipEf, Method::GtAdam, Method::QgDsgdm, Method::VnDsgd})
    CHECK(parse_method(to_string(m)) == m);
  CHECK_THROWS_AS(parse_method("adam"), Error);
  CHECK(is_tracking_method(Method::GtNsgdm));
  CHECK_FALSE(is_tracking_method(Method::Dsgd));
}

TEST_CASE("hyperparameter validation") {
  CHECK_THROWS_AS(with(0.0).validate(Method::Dsgd), Error);
  CHECK_THROWS_AS(with(0.1, 1.0).validate(Method::GtNsgdm), Error);
  CHECK_NOTHROW(with(0.1, 0.0).validate(Method::GtNsgdm));
  Hyper h = with(0.1);
  h.tau = 0.0;
  CHECK_THROWS_AS(h.validate(Method::DsgdClip), Error);
  CHECK_THROWS_AS(h.validate(Method::SClipEf), Error);
  h = with(0.1);
  h.cap = 0.0;
  CHECK_THROWS_AS(h.validate(Method::GtAdam), Error);
  h = with(0.1);
  h.c_phi = -1.0;
  CHECK_THROWS_AS(h.validate(Method::SClipEf), Error);
}

TEST_CASE("safe normalize and clipping helpers") {
  CHECK(safe_normalize(Eigen::Vector2d(3, 4)).isApprox(Eigen::Vector2d(0.6, 0.8)));
  CHECK(safe_normalize(Eigen::Vector2d(0, 0)).isZero(0.0));
  CHECK(safe_normalize(Eigen::Vector2d(1e-31, 0)).isZero(0.0));
  CHECK(clip_l2(Eigen::Vector2d(3, 4), 2.5) == Eigen::Vector2d(1.5, 2.0));
  CHECK(clip_l2(Eigen::Vector2d(3, 4), 5.0) == Eigen::Vector2d(3, 4));
  CHECK(clip_l2(Eigen::Vector2d(0.3, 0.4), 2.5) == Eigen::Vector2d(0.3, 0.4));
  CHECK(clip_componentwise(Eigen::Vector2d(3, -4), 2.5) == Eigen::Vector2d(2.5, -2.5));
  CHECK(clip_componentwise(Eigen::Vector2d(1, -2), 2.5) == Eigen::Vector2d(1, -2));
  CHECK_THROWS_AS(clip_l2(Eigen::Vector2d(3, 4), 0.0), Error);

  const double psi = smooth_clip(Eigen::VectorXd::Constant(1, 1.0), 0, 1.0, 1.0)(0);
  CHECK(psi == doctest::Approx(test_support::oracles()["smooth_clip_t0"].get<double>()).epsilon(1e-15));
  CHECK(smooth_clip(Eigen::VectorXd::Zero(3), 5, 2.0, 1.0).isZero(0.0));
  for (long t : {0L, 3L, 100L})
    for (double y : {-1e9, -3.0, 0.5, 1e12}) {
      const double v = smooth_clip(Eigen::VectorXd::Constant(1, y), t, 2.0, 0.5)(0);
      CHECK(std::abs(v) <= 2.0 / std::sqrt(t + 1.0));
    }
}

TEST_CASE("mixing contracts the disagreement by lambda") {
  for (const auto& w : {ring(8), ring(20), uniform_out_weights(build_graph(GraphKind::DirectedExponential, 16))}) {
    const int n = w.size();
    Stack z(n, 3);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 3; ++j) z(i, j) = std::sin(1.7 * i + 0.3 * j * j) + 0.1 * i;
    const Eigen::VectorXd zbar = network_mean(z);
    const Stack mixed = mix(w, z);
    const Eigen::VectorXd mbar = network_mean(mixed);
    CHECK((mbar - zbar).norm() <= 1e-14);
    const double before = (z.rowwise() - zbar.transpose()).norm();
    const double after = (mixed.rowwise() - zbar.transpose()).norm();
    CHECK(after <= w.lambda() * before + 1e-10);
  }
}

TEST_CASE("GT-NSGDm single node is normalized gradient descent") {
  auto e = quadratic_engine(trivial(), {0.0}, Method::GtNsgdm, with(0.5, 0.0), 2.0);
  e.step();
  CHECK(e.x()(0, 0) == 1.5);
  CHECK(e.v()(0, 0) == 2.0);
  CHECK(e.y()(0, 0) == 2.0);
  e.step();
  CHECK(e.x()(0, 0) == 1.0);
}

TEST_CASE("GT-NSGDm with a vanishing tracker keeps the average in place") {
  auto e = quadratic_engine(complete(2), {0.0, 2.0}, Method::GtNsgdm, with(0.1, 0.0), 1.0);
  e.step();
  CHECK(e.v()(0, 0) == 1.0);
  CHECK(e.v()(1, 0) == -1.0);
  CHECK(e.y()(0, 0) == 0.0);
  CHECK(e.y()(1, 0) == 0.0);
  CHECK(e.mean_x()(0) == 1.0);
  CHECK(e.x()(0, 0) == 1.0);
  CHECK(e.x()(1, 0) == 1.0);
}

TEST_CASE("GT-NSGDm reduces to centralized normalized GD for one node") {
  const auto r = regression(1);
  auto e = regression_engine(r, trivial(), Method::GtNsgdm, with(0.05, 0.0), NoiseSpec::none(20));
  Eigen::VectorXd w = Eigen::VectorXd::Zero(20);
  for (int t = 0; t < 300; ++t) {
    w -= 0.05 * safe_normalize(r.shards[0]->gradient(w));
    e.step();
    CAPTURE(t);
    CHECK((e.x().row(0).transpose() - w).norm() <= 1e-14);
  }
}

TEST_CASE("GT-NSGDm tracking conservation and step bound under heavy tails") {
  const auto r = regression(20);
  for (const auto& noise : {NoiseSpec::alpha_stable(20, 1.5, 0.5, 1.0, 0.1), NoiseSpec::student_t(20, 1.5, 1.0)}) {
    auto e = regression_engine(r, ring(20), Method::GtNsgdm, with(0.01, 0.9), noise);
    for (int t = 0; t < 500; ++t) {
      const Eigen::VectorXd before = e.mean_x();
      e.step();
      const Eigen::VectorXd vbar = e.mean_v();
      CHECK((e.mean_y() - vbar).norm() <= 1e-10 * (1.0 + vbar.norm()));
      CHECK((e.mean_x() - before).norm() <= 0.01 + 1e-12);
    }
  }
}

TEST_CASE("GT-NSGDm single-node step length equals alpha") {
  const auto r = regression(1);
  auto e = regression_engine(r, trivial(), Method::GtNsgdm, with(0.02, 0.9), NoiseSpec::gaussian(20, 3.0));
  for (int t = 0; t < 300; ++t) {
    const Eigen::VectorXd before = e.mean_x();
    e.step();
    REQUIRE(e.y().row(0).norm() > 0.0);
    CHECK(std::abs((e.mean_x() - before).norm() - 0.02) <= 1e-12 * 0.02);
  }
}

TEST_CASE("DSGD") {
  SUBCASE("one node is gradient descent") {
    auto e = quadratic_engine(trivial(), {1.0}, Method::Dsgd, with(0.25), 3.0);
    e.step();
    CHECK(e.x()(0, 0) == 2.5);
  }
  SUBCASE("complete graph with identical objectives is centralized GD") {
    auto e = quadratic_engine(complete(5), {2.0, 2.0, 2.0, 2.0, 2.0}, Method::Dsgd, with(0.1), -1.0);
    double x = -1.0;
    for (int t = 0; t < 200; ++t) {
      e.step();
      x -= 0.1 * (x - 2.0);
      for (int i = 0; i < 5; ++i) CHECK(std::abs(e.x()(i, 0) - x) <= 1e-12);
    }
  }
  SUBCASE("nodes at their own minimizers only mix") {
    auto e = quadratic_engine(ring(4), {5.0, 5.0, 5.0, 5.0}, Method::Dsgd, with(0.3), 5.0);
    for (int t = 0; t < 10; ++t) e.step();
    for (int i = 0; i < 4; ++i) CHECK(e.x()(i, 0) == 5.0);
  }
}

TEST_CASE("GT-DSGD") {
  SUBCASE("tracker mean equals the gradient mean") {
    const auto r = regression(8);
    auto e = regression_engine(r, ring(8), Method::GtDsgd, with(0.01), NoiseSpec::gaussian(20, 3.0));
    for (int t = 0; t < 300; ++t) {
      e.step();
      const Eigen::VectorXd gbar = e.mean_v();
      CHECK((e.mean_y() - gbar).norm() <= 1e-10 * (1.0 + gbar.norm()));
    }
  }
  SUBCASE("one node is plain gradient descent") {
    auto e = quadratic_engine(trivial(), {0.0}, Method::GtDsgd, with(0.5), 4.0);
    e.step();
    CHECK(e.x()(0, 0) == 2.0);
    e.step();
    CHECK(e.x()(0, 0) == 1.0);
  }
  SUBCASE("heterogeneous quadratics on a ring reach the average center") {
    auto e = quadratic_engine(ring(4), {-1.0, 0.5, 2.0, 4.5}, Method::GtDsgd, with(0.05), 0.0);
    for (int t = 0; t < 10000; ++t) e.step();
    CHECK(std::abs(e.mean_x()(0) - 1.5) < 1e-6);
  }
}

TEST_CASE("clipped DSGD variants") {
  SUBCASE("DSGD-Clip decays alpha and grows tau") {
    Hyper h = with(1.0);
    h.tau = 1.0;
    auto e = quadratic_engine(trivial(), {0.0}, Method::DsgdClip, h, 2.0);
    e.step();
    CHECK(e.x()(0, 0) == 1.0);
    e.step();
    CHECK(e.x()(0, 0) == 0.5);
  }
  SUBCASE("GClip and CClip use constant levels") {
    Hyper h = with(0.5);
    h.tau = 1.0;
    auto g = quadratic_engine(trivial(), {0.0}, Method::DsgdGClip, h, 3.0);
    g.step();
    CHECK(g.x()(0, 0) == 2.5);
    g.step();
    CHECK(g.x()(0, 0) == 2.0);
    auto c = quadratic_engine(trivial(), {0.0}, Method::DsgdCClip, h, -3.0);
    c.step();
    CHECK(c.x()(0, 0) == -2.5);
  }
  SUBCASE("the clipped term stays outside the mixing sum") {
    Hyper h = with(1.0);
    h.tau = 100.0;
    auto e = quadratic_engine(complete(2), {0.0, 0.0}, Method::DsgdGClip, h, 0.0);
    // Symmetric start: no movement at all.
    e.step();
    CHECK(e.x()(0, 0) == 0.0);
    RoundEngine d(complete(2), quadratic_oracles({0.0, 4.0}), Method::DsgdGClip, h, Eigen::VectorXd::Constant(1, 1.0));
    d.step();
    // x_i = mean(x) - alpha * g_i with g_1 = 1, g_2 = -3.
    CHECK(d.x()(0, 0) == 0.0);
    CHECK(d.x()(1, 0) == 4.0);
  }
}

TEST_CASE("SClip-EF one step by hand") {
  Hyper h = with(0.1, 0.5);
  h.c_phi = 1.0;
  h.tau = 1.0;
  auto e = quadratic_engine(trivial(), {0.0}, Method::SClipEf, h, 2.0);
  e.step();
  const double m = 0.5 * 2.0 / std::sqrt(5.0);
  CHECK(e.x()(0, 0) == doctest::Approx(2.0 - 0.1 * m).epsilon(1e-15));
}

TEST_CASE("GT-Adam") {
  SUBCASE("momentum-free limit is a sign step") {
    Hyper h = with(0.1);
    h.beta1 = 0.0;
    h.beta2 = 0.0;
    h.eps = 0.0;
    const auto r = regression(1);
    auto e = regression_engine(r, trivial(), Method::GtAdam, h, NoiseSpec::none(20));
    const Eigen::VectorXd g = r.shards[0]->gradient(Eigen::VectorXd::Zero(20));
    e.step();
    for (int j = 0; j < 20; ++j) {
      const double expected = g(j) == 0.0 ? 0.0 : -0.1 * (g(j) > 0 ? 1.0 : -1.0);
      if (g(j) != 0.0) CHECK(e.x()(0, j) == doctest::Approx(expected).epsilon(1e-15));
    }
  }
  SUBCASE("surrogate tracker mean equals the gradient mean") {
    const auto r = regression(8);
    Hyper h = with(0.01);
    h.cap = 10.0;
    auto e = regression_engine(r, ring(8), Method::GtAdam, h, NoiseSpec::student_t(20, 1.5, 1.0));
    for (int t = 0; t < 300; ++t) {
      e.step();
      const Eigen::VectorXd gbar = e.mean_v();
      CHECK((e.mean_y() - gbar).norm() <= 1e-10 * (1.0 + gbar.norm()));
    }
  }
}

TEST_CASE("QG-DSGDm without momentum is DSGD") {
  const auto r = regression(8);
  Hyper h = with(0.05);
  h.beta = 0.0;
  h.mu = 0.0;
  auto qg = regression_engine(r, ring(8), Method::QgDsgdm, h, NoiseSpec::gaussian(20, 3.0));
  auto ds = regression_engine(r, ring(8), Method::Dsgd, h, NoiseSpec::gaussian(20, 3.0));
  for (int t = 0; t < 100; ++t) {
    qg.step();
    ds.step();
  }
  CHECK(qg.x() == ds.x());
}

TEST_CASE("QG-DSGDm momentum accelerates along a constant gradient") {
  Hyper h = with(0.1);
  h.beta = 0.9;
  h.mu = 0.5;
  auto qg = quadratic_engine(trivial(), {-1000.0}, Method::QgDsgdm, h, 0.0);
  auto ds = quadratic_engine(trivial(), {-1000.0}, Method::Dsgd, h, 0.0);
  for (int t = 0; t < 5; ++t) {
    qg.step();
    ds.step();
  }
  CHECK(qg.x()(0, 0) < ds.x()(0, 0));
}

TEST_CASE("VN-DSGD stalls on the counterexample") {
  for (auto [n, bound] : {std::pair{2, 1.0}, std::pair{4, 10.0}}) {
    const auto inst = claim1_instance(n, bound);
    std::vector<double> centers;
    for (const auto& o : inst.objectives) centers.push_back(o.center());
    for (double alpha : {0.01, 0.3, 2.0}) {
      auto e = quadratic_engine(inst.weights, centers, Method::VnDsgd, with(alpha), inst.x0);
      double acc = 0.0;
      const long T = 1000;
      for (long t = 0; t < T; ++t) {
        acc += avg_grad_norm(e.x(), inst.objectives);
        e.step();
        for (int i = 0; i < n; ++i) REQUIRE(e.x()(i, 0) == inst.x0);
      }
      CHECK(acc / T >= bound);
    }
  }
}

TEST_CASE("GT-NSGDm escapes the counterexample") {
  const auto inst = claim1_instance(2, 1.0);
  const double alpha = 0.05;
  auto e = quadratic_engine(inst.weights, {inst.a, inst.b}, Method::GtNsgdm, with(alpha, 0.0), inst.x0);
  const double delta = 1.25;  // distance to the minimizer
  long hit = -1;
  for (long t = 0; t < 1000 && hit < 0; ++t) {
    e.step();
    if (avg_grad_norm(e.x(), inst.objectives) < 2 * alpha) hit = t + 1;
  }
  CHECK(hit > 0);
  CHECK(hit <= static_cast<long>(2 * delta / alpha) + 2);
}

TEST_CASE("step functions check the method tag") {
  auto e = quadratic_engine(trivial(), {0.0}, Method::Dsgd, with(0.1), 1.0);
  CHECK_THROWS_AS(gt_nsgdm_step(e), Error);
  CHECK_THROWS_AS(vanilla_normalized_dsgd_step(e), Error);
  CHECK_NOTHROW(dsgd_step(e));
  CHECK(e.iteration() == 1);
}

TEST_CASE("run loop") {
  SUBCASE("zero rounds records only the initial probe") {
    auto e = quadratic_engine(trivial(), {0.0}, Method::Dsgd, with(0.1), 1.0);
    RunOptions o;
    const auto tr = run(e, o);
    REQUIRE(tr.rows.size() == 1);
    CHECK(tr.rows[0].t == 0);
    CHECK(tr.rows[0].avg_grad_norm == 1.0);
  }
  SUBCASE("probe cadence includes the final round") {
    auto e = quadratic_engine(ring(4), {0, 1, 2, 3}, Method::GtNsgdm, with(0.01, 0.5), 0.0);
    RunOptions o;
    o.rounds = 25;
    o.probe_every = 10;
    const auto tr = run(e, o);
    REQUIRE(tr.rows.size() == 4);
    CHECK(tr.rows[1].t == 10);
    CHECK(tr.rows[3].t == 25);
    CHECK_FALSE(tr.diverged);
  }
  SUBCASE("divergence is flagged, not thrown") {
    auto e = quadratic_engine(trivial(), {0.0}, Method::Dsgd, with(3.0), 1.0);
    RunOptions o;
    o.rounds = 5000;
    const auto tr = run(e, o);
    CHECK(tr.diverged);
    CHECK(tr.rows.back().diverged);
    CHECK(std::isnan(tr.rows.back().avg_grad_norm));
    CHECK(tr.diverged_at == tr.rows.back().t);
    CHECK(tr.diverged_at < 5000);
  }
  SUBCASE("same seed, same trace") {
    const auto r = regression(4);
    auto a = regression_engine(r, ring(4), Method::GtNsgdm, with(0.01, 0.9), NoiseSpec::alpha_stable(20, 1.5, 0.5, 1, 0.1));
    auto b = regression_engine(r, ring(4), Method::GtNsgdm, with(0.01, 0.9), NoiseSpec::alpha_stable(20, 1.5, 0.5, 1, 0.1));
    RunOptions o;
    o.rounds = 200;
    o.reference = r.ds.w_star;
    CHECK(format_trace_csv(run(a, o)) == format_trace_csv(run(b, o)));
  }
  SUBCASE("time average and observer") {
    auto e = quadratic_engine(trivial(), {0.0}, Method::GtNsgdm, with(0.5, 0.0), 2.0);
    RunOptions o;
    o.rounds = 2;
    o.time_average = true;
    int calls = 0;
    o.observer = [&](const RoundEngine&, const RoundInfo& info) {
      CHECK(info.step_len == 0.5);
      ++calls;
    };
    const auto tr = run(e, o);
    CHECK(calls == 2);
    CHECK(tr.time_avg_grad_norm == (2.0 + 1.5) / 2);
    CHECK(tr.max_step_len == 0.5);
  }
}

TEST_CASE("theorem schedules") {
  const auto& o = test_support::oracles();
  for (const auto& c : o["theorem1_cases"]) {
    if (c["p"].is_null()) continue;
    const auto s = theorem1_hyper(c["delta0"].get<double>(), c["L"].get<double>(), c["lambda"].get<double>(),
                                  c["n"].get<int>(), c["T"].get<long>(), c["p"].get<double>());
    CHECK(std::abs(s.alpha - c["alpha"].get<double>()) <= 1e-14);
    CHECK(s.beta == c["beta"].get<double>());
  }
  for (const auto& c : o["theorem2_cases"]) {
    const auto s = theorem2_hyper(c["delta0"].get<double>(), c["L"].get<double>(), c["lambda"].get<double>(),
                                  c["n"].get<int>(), c["T"].get<long>());
    CHECK(std::abs(s.alpha - c["alpha"].get<double>()) <= 1e-14);
    CHECK(s.beta == c["beta"].get<double>());
  }
  CHECK(theorem1_hyper(1, 1, 0.5, 4, 1000000, 2.0).beta == 0.999);
  CHECK(theorem2_hyper(1, 1, 0.5, 4, 100).beta == 0.9);

  const auto t1 = theorem1_hyper(1, 1, 0, 1, 1, 2.0);
  CHECK(t1.beta == 0.0);
  CHECK(t1.beta_warning);
  const auto t2 = theorem2_hyper(1, 1, 0, 1, 4);
  CHECK(t2.beta == 0.5);
  CHECK_FALSE(t2.beta_warning);
  CHECK(t2.alpha == theorem_step_size(1, 1, 0, 1, 4, 0.5));

  // Second argument alone: sqrt(0.5 / 16).
  const double second = o["second_term_T4"].get<double>();
  CHECK(std::abs(second - 0.17678) < 1e-5);
  CHECK(theorem_step_size(1, 1, 0, 1, 4, 0.5) <= second);

  CHECK(theorem1_exponent(2.0) == -0.25);
  CHECK(std::abs(theorem2_exponent(1.5) + 1.0 / 6.0) <= 1e-15);

  CHECK_THROWS_AS(theorem1_hyper(0, 1, 0, 1, 10, 2), Error);
  CHECK_THROWS_AS(theorem1_hyper(1, -1, 0, 1, 10, 2), Error);
  CHECK_THROWS_AS(theorem1_hyper(1, 1, 1.0, 1, 10, 2), Error);
  CHECK_THROWS_AS(theorem1_hyper(1, 1, 0, 1, 0, 2), Error);
  CHECK_THROWS_AS(theorem1_hyper(1, 1, 0, 1, 10, 2.5), Error);
  CHECK_THROWS_AS(theorem2_hyper(1, 1, 0, 0, 10), Error);
}
