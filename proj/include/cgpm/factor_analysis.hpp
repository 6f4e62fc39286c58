// Copyright 2026
// See LICENSE.txt

// Linear-Gaussian latent variable model over continuous outputs. Factor
// scores are exposed as queryable outputs ahead of the observables, and
// every query reduces to conditioning one joint Gaussian.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <vector>

#include "cgpm/interface.hpp"
#include "cgpm/rng.hpp"

namespace cgpm {

class FactorAnalysis : public Cgpm {
 public:
  // Output order: the latent factor-score variables first, observables after.
  FactorAnalysis(std::shared_ptr<Population> pop,
                 std::vector<int> observables, std::vector<int> latents,
                 bool ppca = false)
      : Cgpm(std::move(pop), concat(latents, observables), {}),
        L_(static_cast<int>(latents.size())),
        D_(static_cast<int>(observables.size())),
        ppca_(ppca) {
    require(L_ >= 1, "factor analysis: needs at least one factor");
    require(L_ <= D_,
            "factor analysis: needs no more factors than observables");
    for (int v : observables)
      require(!type_of(v).discrete(),
              "factor analysis: observable '" + population().var(v).name +
                  "' must be a continuous kind");
    for (int v : latents)
      require(type_of(v).kind == StatKind::numerical,
              "factor analysis: factor score '" + population().var(v).name +
                  "' must be numerical");
    W_ = Eigen::MatrixXd::Zero(D_, L_);
    mu_ = Eigen::VectorXd::Zero(D_);
    psi_ = Eigen::VectorXd::Ones(D_);
  }

  bool accepts_measurement(int var) const override {
    return joint_index(var) >= L_;  // factor scores are never measured
  }

  int n_factors() const { return L_; }
  int n_observables() const { return D_; }
  const Eigen::MatrixXd& basis() const { ensure_fit(); return W_; }
  const Eigen::VectorXd& center() const { ensure_fit(); return mu_; }
  const Eigen::VectorXd& noise() const { ensure_fit(); return psi_; }
  const std::vector<double>& em_history() const { return history_; }

  void set_params(const Eigen::MatrixXd& W, const Eigen::VectorXd& mu,
                  const Eigen::VectorXd& psi) {
    require(W.rows() == D_ && W.cols() == L_ && mu.size() == D_ &&
                psi.size() == D_ && psi.minCoeff() > 0,
            "factor analysis: parameter shapes or noise signs are wrong");
    W_ = W;
    mu_ = mu;
    psi_ = psi;
    dirty_ = false;
  }

  // Mean and covariance of the joint (factor scores, observables) vector.
  std::pair<Eigen::VectorXd, Eigen::MatrixXd> joint() const {
    ensure_fit();
    int n = L_ + D_;
    Eigen::VectorXd m = Eigen::VectorXd::Zero(n);
    m.tail(D_) = mu_;
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(n, n);
    S.topLeftCorner(L_, L_) = Eigen::MatrixXd::Identity(L_, L_);
    S.topRightCorner(L_, D_) = W_.transpose();
    S.bottomLeftCorner(D_, L_) = W_;
    S.bottomRightCorner(D_, D_) =
        W_ * W_.transpose() + psi_.asDiagonal().toDenseMatrix();
    return {m, S};
  }

  // Gaussian conditional of the query variables given evidence values,
  // both keyed by population variable id.
  std::pair<Eigen::VectorXd, Eigen::MatrixXd> conditional(
      const std::vector<int>& query, const RowValues& evidence) const {
    auto [m, S] = joint();
    std::vector<int> q, e;
    Eigen::VectorXd ev(evidence.size());
    {
      int i = 0;
      for (const auto& [var, value] : evidence) {
        int j = joint_index(var);
        require(j >= 0, "factor analysis: unknown evidence variable");
        e.push_back(j);
        ev(i++) = value;
      }
    }
    for (int var : query) {
      int j = joint_index(var);
      require(j >= 0, "factor analysis: unknown query variable");
      q.push_back(j);
    }
    Eigen::VectorXd mq(q.size());
    for (size_t i = 0; i < q.size(); ++i) mq(i) = m(q[i]);
    Eigen::MatrixXd Sqq(q.size(), q.size());
    for (size_t i = 0; i < q.size(); ++i)
      for (size_t j = 0; j < q.size(); ++j) Sqq(i, j) = S(q[i], q[j]);
    if (e.empty()) return {mq, Sqq};

    Eigen::VectorXd me(e.size());
    Eigen::MatrixXd See(e.size(), e.size());
    Eigen::MatrixXd Sqe(q.size(), e.size());
    for (size_t i = 0; i < e.size(); ++i) {
      me(i) = m(e[i]);
      for (size_t j = 0; j < e.size(); ++j) See(i, j) = S(e[i], e[j]);
      for (size_t j = 0; j < q.size(); ++j) Sqe(j, i) = S(q[j], e[i]);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(See);
    if (llt.info() != Eigen::Success) {
      See.diagonal().array() += 1e-10 * (1.0 + See.diagonal().maxCoeff());
      llt.compute(See);
      require(llt.info() == Eigen::Success,
              "factor analysis: singular evidence covariance");
    }
    Eigen::MatrixXd K = llt.solve(Sqe.transpose()).transpose();
    Eigen::VectorXd mean = mq + K * (ev - me);
    Eigen::MatrixXd cov = Sqq - K * Sqe.transpose();
    cov = ((cov + cov.transpose()) / 2).eval();
    return {mean, cov};
  }

  // Expectation-maximization over rows with any pattern of observed cells.
  // Returns the achieved observed-data log-likelihood.
  double fit(int max_iter = 500, double tol = 1e-10,
             bool warm_start = false) {
    auto [rows, seen] = packed_rows();
    require(rows.size() >= 2, "factor analysis: needs at least two rows");
    for (int d = 0; d < D_; ++d)
      require(seen[d] > 0, "factor analysis: variable '" +
                               population().var(outputs()[L_ + d]).name +
                               "' has no measurements");
    Eigen::VectorXd floor = variance_floor(rows);
    if (!warm_start) initialize(rows, floor);

    history_.clear();
    double prev = -kInf;
    for (int it = 0; it < max_iter; ++it) {
      std::vector<Eigen::MatrixXd> A(
          D_, Eigen::MatrixXd::Zero(L_ + 1, L_ + 1));
      std::vector<Eigen::VectorXd> c(D_, Eigen::VectorXd::Zero(L_ + 1));
      Eigen::VectorXd s2 = Eigen::VectorXd::Zero(D_);
      double loglik = 0.0;

      for (const auto& row : rows) {
        const auto& obs = row.first;
        const auto& x = row.second;
        int k = static_cast<int>(obs.size());
        Eigen::MatrixXd Wo(k, L_);
        Eigen::VectorXd xo(k), po(k);
        for (int i = 0; i < k; ++i) {
          Wo.row(i) = W_.row(obs[i]);
          xo(i) = x[i] - mu_(obs[i]);
          po(i) = psi_(obs[i]);
        }
        Eigen::MatrixXd G =
            (Eigen::MatrixXd::Identity(L_, L_) +
             Wo.transpose() * po.cwiseInverse().asDiagonal() * Wo)
                .llt()
                .solve(Eigen::MatrixXd::Identity(L_, L_));
        Eigen::VectorXd ez =
            G * (Wo.transpose() * (xo.array() / po.array()).matrix());
        Eigen::MatrixXd ezz = G + ez * ez.transpose();

        Eigen::MatrixXd zz(L_ + 1, L_ + 1);
        zz.topLeftCorner(L_, L_) = ezz;
        zz.topRightCorner(L_, 1) = ez;
        zz.bottomLeftCorner(1, L_) = ez.transpose();
        zz(L_, L_) = 1.0;
        Eigen::VectorXd zt(L_ + 1);
        zt.head(L_) = ez;
        zt(L_) = 1.0;
        for (int i = 0; i < k; ++i) {
          A[obs[i]] += zz;
          c[obs[i]] += x[i] * zt;
          s2(obs[i]) += x[i] * x[i];
        }

        Eigen::MatrixXd So =
            Wo * Wo.transpose() + po.asDiagonal().toDenseMatrix();
        Eigen::LLT<Eigen::MatrixXd> llt(So);
        double logdet =
            2 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        loglik -= 0.5 * (k * kLn2Pi + logdet +
                         xo.dot(llt.solve(xo)));
      }
      history_.push_back(loglik);

      for (int d = 0; d < D_; ++d) {
        Eigen::MatrixXd Ad = A[d];
        Ad.diagonal().array() += 1e-12;
        Eigen::VectorXd wd = Ad.ldlt().solve(c[d]);
        W_.row(d) = wd.head(L_).transpose();
        mu_(d) = wd(L_);
        psi_(d) = (s2(d) - c[d].dot(wd)) / seen[d];
      }
      if (ppca_) {
        double pooled = 0, total = 0;
        for (int d = 0; d < D_; ++d) {
          pooled += psi_(d) * seen[d];
          total += seen[d];
        }
        psi_.setConstant(pooled / total);
      }
      psi_ = psi_.cwiseMax(floor);

      if (std::abs(loglik - prev) <
          tol * (std::abs(prev) + std::abs(loglik) + 1e-12))
        break;
      prev = loglik;
    }
    dirty_ = false;
    return history_.empty() ? -kInf : history_.back();
  }

  void infer(const InferProgram& program, Rng&) override {
    fit(program.iterations > 0 ? std::max(program.iterations, 50) : 500);
  }

 protected:
  void on_incorporate(MemberId, int, double) override { dirty_ = true; }
  void on_unincorporate(MemberId, int) override { dirty_ = true; }

  RowValues simulate_impl(MemberId, const std::vector<int>& query,
                          const RowValues& evidence, Rng& rng) const override {
    auto [mean, cov] = conditional(query, evidence);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    Eigen::MatrixXd root;
    if (llt.info() == Eigen::Success) {
      root = llt.matrixL();
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
      root = es.eigenvectors() *
             es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }
    Eigen::VectorXd u(mean.size());
    for (int i = 0; i < mean.size(); ++i) u(i) = rng.normal(0, 1);
    Eigen::VectorXd draw = mean + root * u;
    RowValues out;
    for (size_t i = 0; i < query.size(); ++i) out[query[i]] = draw(i);
    return out;
  }

  double logpdf_impl(MemberId, const RowValues& query,
                     const RowValues& evidence) const override {
    std::vector<int> qvars;
    Eigen::VectorXd x(query.size());
    int i = 0;
    for (const auto& [var, value] : query) {
      qvars.push_back(var);
      x(i++) = value;
    }
    auto [mean, cov] = conditional(qvars, evidence);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
      cov.diagonal().array() += 1e-10 * (1.0 + cov.diagonal().maxCoeff());
      llt.compute(cov);
      require(llt.info() == Eigen::Success,
              "factor analysis: degenerate query covariance");
    }
    double logdet =
        2 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    Eigen::VectorXd diff = x - mean;
    return -0.5 * (x.size() * kLn2Pi + logdet + diff.dot(llt.solve(diff)));
  }

 private:
  int L_, D_;
  bool ppca_;
  Eigen::MatrixXd W_;
  Eigen::VectorXd mu_, psi_;
  std::vector<double> history_;
  mutable bool dirty_ = true;

  static std::vector<int> concat(const std::vector<int>& a,
                                 const std::vector<int>& b) {
    std::vector<int> out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
  }

  int joint_index(int var) const {
    const auto& outs = outputs();
    for (size_t i = 0; i < outs.size(); ++i)
      if (outs[i] == var) return static_cast<int>(i);
    return -1;
  }

  void ensure_fit() const {
    if (dirty_ && data().cell_count() > 0)
      const_cast<FactorAnalysis*>(this)->fit();
  }

  // Rows packed as (observed dimension list, values in the same order).
  std::pair<std::vector<std::pair<std::vector<int>, std::vector<double>>>,
            std::vector<int>>
  packed_rows() const {
    std::vector<std::pair<std::vector<int>, std::vector<double>>> rows;
    std::vector<int> seen(D_, 0);
    for (const auto& [r, row] : data().rows()) {
      std::pair<std::vector<int>, std::vector<double>> packed;
      for (int d = 0; d < D_; ++d) {
        auto it = row.find(outputs()[L_ + d]);
        if (it == row.end()) continue;
        packed.first.push_back(d);
        packed.second.push_back(it->second);
        seen[d] += 1;
      }
      if (!packed.first.empty()) rows.push_back(std::move(packed));
    }
    return {rows, seen};
  }

  Eigen::VectorXd variance_floor(
      const std::vector<std::pair<std::vector<int>, std::vector<double>>>&
          rows) const {
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(D_);
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(D_);
    Eigen::VectorXd n = Eigen::VectorXd::Zero(D_);
    for (const auto& [obs, x] : rows)
      for (size_t i = 0; i < obs.size(); ++i) {
        sum(obs[i]) += x[i];
        sq(obs[i]) += x[i] * x[i];
        n(obs[i]) += 1;
      }
    Eigen::VectorXd floor(D_);
    for (int d = 0; d < D_; ++d) {
      double var =
          n(d) > 0 ? sq(d) / n(d) - (sum(d) / n(d)) * (sum(d) / n(d)) : 1.0;
      floor(d) = 1e-6 * std::max(var, 1e-12);
    }
    return floor;
  }

  void initialize(
      const std::vector<std::pair<std::vector<int>, std::vector<double>>>&
          rows,
      const Eigen::VectorXd& floor) {
    int n = static_cast<int>(rows.size());
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(D_);
    Eigen::VectorXd count = Eigen::VectorXd::Zero(D_);
    for (const auto& [obs, x] : rows)
      for (size_t i = 0; i < obs.size(); ++i) {
        mean(obs[i]) += x[i];
        count(obs[i]) += 1;
      }
    for (int d = 0; d < D_; ++d) mean(d) /= std::max(count(d), 1.0);

    Eigen::MatrixXd X(n, D_);
    for (int r = 0; r < n; ++r) {
      X.row(r).setZero();
      const auto& [obs, x] = rows[r];
      for (size_t i = 0; i < obs.size(); ++i)
        X(r, obs[i]) = x[i] - mean(obs[i]);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(
        X, Eigen::ComputeThinU | Eigen::ComputeThinV);
    mu_ = mean;
    for (int l = 0; l < L_; ++l)
      W_.col(l) = svd.matrixV().col(l) * svd.singularValues()(l) /
                  std::sqrt(static_cast<double>(n));
    for (int d = 0; d < D_; ++d) {
      double var = count(d) > 1 ? X.col(d).squaredNorm() / count(d) : 1.0;
      psi_(d) = std::max(0.5 * var, floor(d));
    }
    if (ppca_) psi_.setConstant(psi_.mean());
  }
};

}  // namespace cgpm
