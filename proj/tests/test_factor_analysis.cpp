#include <catch2/catch_amalgamated.hpp>
#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "cgpm/factor_analysis.hpp"
#include "support/oracles.hpp"

using namespace cgpm;

namespace {

std::shared_ptr<Population> fa_pop(int latents, int observables) {
  auto pop = std::make_shared<Population>();
  for (int l = 0; l < latents; ++l)
    pop->add_variable("pc" + std::to_string(l), StatType::numerical());
  for (int d = 0; d < observables; ++d)
    pop->add_variable("x" + std::to_string(d), StatType::numerical());
  return pop;
}

// Brute-force Gaussian conditioning straight from the block formulas,
// written independently of the library implementation.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> dense_conditional(
    const Eigen::VectorXd& m, const Eigen::MatrixXd& S,
    const std::vector<int>& q, const std::vector<int>& e,
    const Eigen::VectorXd& ev) {
  Eigen::VectorXd mq(q.size()), me(e.size());
  Eigen::MatrixXd Sqq(q.size(), q.size()), See(e.size(), e.size()),
      Sqe(q.size(), e.size());
  for (size_t i = 0; i < q.size(); ++i) {
    mq(i) = m(q[i]);
    for (size_t j = 0; j < q.size(); ++j) Sqq(i, j) = S(q[i], q[j]);
    for (size_t j = 0; j < e.size(); ++j) Sqe(i, j) = S(q[i], e[j]);
  }
  for (size_t i = 0; i < e.size(); ++i) {
    me(i) = m(e[i]);
    for (size_t j = 0; j < e.size(); ++j) See(i, j) = S(e[i], e[j]);
  }
  if (e.empty()) return {mq, Sqq};
  Eigen::MatrixXd inv = See.fullPivLu().inverse();
  return {mq + Sqe * inv * (ev - me), Sqq - Sqe * inv * Sqe.transpose()};
}

}  // namespace

TEST_CASE("joint blocks follow the linear-Gaussian construction") {
  auto pop = fa_pop(1, 1);
  FactorAnalysis fa(pop, {1}, {0});
  Eigen::MatrixXd W(1, 1);
  W << 2;
  Eigen::VectorXd mu(1), psi(1);
  mu << 0;
  psi << 1;
  fa.set_params(W, mu, psi);
  auto [m, S] = fa.joint();
  CHECK(m(0) == 0);
  CHECK(m(1) == 0);
  CHECK(S(0, 0) == 1);
  CHECK(S(0, 1) == 2);
  CHECK(S(1, 0) == 2);
  CHECK(S(1, 1) == 5);

  // Conditioning the observable on the score: x | z=1 is Normal(2, 1).
  auto [cm, cc] = fa.conditional({1}, {{0, 1.0}});
  CHECK(std::abs(cm(0) - 2.0) < 1e-12);
  CHECK(std::abs(cc(0, 0) - 1.0) < 1e-12);
  CHECK(std::abs(fa.logpdf(7, {{1, 2.0}}, {{0, 1.0}}) -
                 (-0.5 * std::log(2 * M_PI))) < 1e-12);

  // Zero basis decouples the blocks.
  fa.set_params(Eigen::MatrixXd::Zero(1, 1), mu, psi);
  auto [m0, S0] = fa.joint();
  CHECK(S0(0, 1) == 0);
  CHECK(S0(1, 0) == 0);
}

TEST_CASE("joint covariance is symmetric positive definite") {
  auto pop = fa_pop(2, 4);
  FactorAnalysis fa(pop, {2, 3, 4, 5}, {0, 1});
  Rng rng(5);
  Eigen::MatrixXd W(4, 2);
  Eigen::VectorXd mu(4), psi(4);
  for (int i = 0; i < 4; ++i) {
    mu(i) = rng.normal(0, 1);
    psi(i) = 0.1 + rng.uniform();
    for (int j = 0; j < 2; ++j) W(i, j) = rng.normal(0, 1);
  }
  fa.set_params(W, mu, psi);
  auto [m, S] = fa.joint();
  CHECK((S - S.transpose()).cwiseAbs().maxCoeff() < 1e-14);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  CHECK(es.eigenvalues().minCoeff() > -1e-9);
}

TEST_CASE("conditionals agree with a dense brute-force oracle") {
  auto pop = fa_pop(2, 3);
  FactorAnalysis fa(pop, {2, 3, 4}, {0, 1});
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd W(3, 2);
    Eigen::VectorXd mu(3), psi(3);
    for (int i = 0; i < 3; ++i) {
      mu(i) = rng.normal(0, 2);
      psi(i) = 0.05 + rng.uniform() * 2;
      for (int j = 0; j < 2; ++j) W(i, j) = rng.normal(0, 1.5);
    }
    fa.set_params(W, mu, psi);
    auto [m, S] = fa.joint();

    std::vector<int> perm = {0, 1, 2, 3, 4};
    for (int i = 4; i > 0; --i)
      std::swap(perm[i], perm[rng.below(i + 1)]);
    int nq = 1 + static_cast<int>(rng.below(3));
    int ne = static_cast<int>(rng.below(3));
    std::vector<int> q(perm.begin(), perm.begin() + nq);
    std::vector<int> e(perm.begin() + nq, perm.begin() + nq + ne);
    Eigen::VectorXd ev(ne);
    RowValues ev_map;
    for (int i = 0; i < ne; ++i) {
      ev(i) = rng.normal(0, 1);
      ev_map[e[i]] = ev(i);
    }
    auto [want_m, want_S] = dense_conditional(m, S, q, e, ev);
    auto [got_m, got_S] = fa.conditional(q, ev_map);
    CHECK((want_m - got_m).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((want_S - got_S).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("draws track the conditional moments") {
  auto pop = fa_pop(1, 1);
  FactorAnalysis fa(pop, {1}, {0});
  Eigen::MatrixXd W(1, 1);
  W << 2;
  fa.set_params(W, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
  Rng rng(13);
  double mean = 0, sq = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double v = fa.simulate(3, {1}, {{0, 1.0}}, rng).at(1);
    mean += v / n;
    sq += v * v / n;
  }
  CHECK(std::abs(mean - 2.0) < 0.02);
  CHECK(std::abs((sq - mean * mean) - 1.0) < 0.03);
}

TEST_CASE("gaussian chain rule and marginalization hold") {
  auto pop = fa_pop(1, 3);
  FactorAnalysis fa(pop, {1, 2, 3}, {0});
  Rng rng(17);
  Eigen::MatrixXd W(3, 1);
  W << 1.2, -0.7, 0.4;
  Eigen::VectorXd mu(3), psi(3);
  mu << 1, -2, 0.5;
  psi << 0.3, 0.8, 0.5;
  fa.set_params(W, mu, psi);

  RowValues q1 = {{1, 0.9}};
  RowValues q2 = {{2, -1.7}, {3, 0.1}};
  RowValues joint = q1;
  joint.insert(q2.begin(), q2.end());
  double chain = fa.logpdf(9, q2, q1) + fa.logpdf(9, q1, {});
  CHECK(std::abs(fa.logpdf(9, joint, {}) - chain) < 1e-9);

  double direct = fa.logpdf(9, {{1, 0.9}}, {});
  double quad = std::log(oracles::integrate(
      [&](double v) {
        return std::exp(fa.logpdf(9, {{1, 0.9}, {2, v}}, {}));
      },
      -30, 30));
  CHECK(std::abs(direct - quad) < 1e-3);
}

TEST_CASE("em recovers a one-dimensional subspace") {
  auto pop = fa_pop(1, 2);
  FactorAnalysis fa(pop, {1, 2}, {0});
  Rng rng(19);
  for (MemberId r = 0; r < 200; ++r) {
    double t = rng.normal(0, 1);
    fa.incorporate(r, 1, 2 * t + 1);
    fa.incorporate(r, 2, t - 3);
  }
  fa.fit();
  for (size_t i = 1; i < fa.em_history().size(); ++i)
    CHECK(fa.em_history()[i] >=
          fa.em_history()[i - 1] - 1e-6 * std::abs(fa.em_history()[i - 1]));

  Eigen::VectorXd w = fa.basis().col(0);
  Eigen::VectorXd line(2);
  line << 2, 1;
  double cosang =
      std::abs(w.dot(line)) / (w.norm() * line.norm());
  CHECK(cosang > std::cos(5.0 * M_PI / 180));
  // Noise hits the floor on exactly collinear data.
  CHECK(fa.noise().maxCoeff() < 1e-4);
  CHECK(std::abs(fa.center()(0) - 1) < 0.2);
  CHECK(std::abs(fa.center()(1) + 3) < 0.2);
}

TEST_CASE("em handles missing cells and ppca ties the noise") {
  auto pop = fa_pop(1, 3);
  Rng rng(23);
  std::vector<std::array<double, 3>> rows;
  for (int r = 0; r < 150; ++r) {
    double t = rng.normal(0, 1);
    rows.push_back({t + rng.normal(0, 0.3), -t + rng.normal(0, 0.3),
                    0.5 * t + rng.normal(0, 0.3)});
  }

  FactorAnalysis fa(pop, {1, 2, 3}, {0});
  for (MemberId r = 0; r < 150; ++r)
    for (int d = 0; d < 3; ++d) {
      if (rng.uniform() < 0.25) continue;  // drop a quarter of the cells
      fa.incorporate(r, 1 + d, rows[r][d]);
    }
  double ll = fa.fit();
  CHECK(std::isfinite(ll));
  for (size_t i = 1; i < fa.em_history().size(); ++i)
    CHECK(fa.em_history()[i] >=
          fa.em_history()[i - 1] - 1e-6 * std::abs(fa.em_history()[i - 1]));

  // A warm-started refit starts at a fixed point and stops immediately.
  double before = fa.em_history().back();
  fa.fit(500, 1e-8, true);
  CHECK(fa.em_history().size() <= 3);
  CHECK(std::abs(fa.em_history().back() - before) < 1e-6 * std::abs(before));

  FactorAnalysis pp(pop, {1, 2, 3}, {0}, true);
  for (MemberId r = 0; r < 150; ++r)
    for (int d = 0; d < 3; ++d) pp.incorporate(r, 1 + d, rows[r][d]);
  pp.fit();
  CHECK(std::abs(pp.noise()(0) - pp.noise()(1)) <=
        1e-12 * std::abs(pp.noise()(0)));
  CHECK(std::abs(pp.noise()(0) - pp.noise()(2)) <=
        1e-12 * std::abs(pp.noise()(0)));
}

TEST_CASE("factor scores are queryable but never measurable") {
  auto pop = fa_pop(2, 3);
  FactorAnalysis fa(pop, {2, 3, 4}, {0, 1});
  CHECK_THROWS(fa.incorporate(0, 0, 1.0));
  Rng rng(29);
  for (MemberId r = 0; r < 50; ++r) {
    double t = rng.normal(0, 1), u = rng.normal(0, 1);
    fa.incorporate(r, 2, t + u + rng.normal(0, 0.1));
    fa.incorporate(r, 3, t - u + rng.normal(0, 0.1));
    fa.incorporate(r, 4, t + rng.normal(0, 0.1));
  }
  fa.fit();
  // Stored observables of the member condition its scores automatically.
  double with_stored = fa.logpdf(0, {{0, 0.2}}, {});
  RowValues explicit_ev;
  for (int d = 2; d <= 4; ++d)
    explicit_ev[d] = *fa.data().get(0, d);
  double with_explicit = fa.logpdf(999, {{0, 0.2}}, explicit_ev);
  CHECK(std::abs(with_stored - with_explicit) < 1e-12);

  // Scores given the full observable row concentrate on their mean.
  auto [m, C] = fa.conditional({0, 1}, explicit_ev);
  Rng draw_rng(31);
  auto draw = fa.simulate(999, {0, 1}, explicit_ev, draw_rng);
  CHECK(std::abs(draw.at(0) - m(0)) < 5 * std::sqrt(C(0, 0)) + 0.5);
}
