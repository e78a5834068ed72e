#include "oracles.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <cmath>
#include <stdexcept>

namespace cavsim::oracle {

Solution collocate(const Problem& pr) {
  const auto N = static_cast<int>(std::lround(pr.T / pr.dt));
  if (N < 2) throw std::invalid_argument("collocate: horizon too short for the grid");
  const double h = pr.T / N;
  const int n = N + 1;
  const int nx = 3 * n;       // p, v, u blocks
  const int nc = 2 * N + 3;   // dynamics plus boundary rows
  auto P = [&](int k) { return k; };
  auto V = [&](int k) { return n + k; };
  auto U = [&](int k) { return 2 * n + k; };

  std::vector<Eigen::Triplet<double>> trip;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nx + nc);
  for (int k = 0; k < n; ++k) {
    const double w = (k == 0 || k == N) ? 0.5 * h : h;
    trip.emplace_back(U(k), U(k), pr.w_u * w);
    if (pr.w_s > 0.0) {
      trip.emplace_back(P(k), P(k), pr.w_s * w);
      rhs(P(k)) = pr.w_s * w * pr.q(k * h);
    }
  }
  auto constraint = [&](int row, int col, double val) {
    trip.emplace_back(nx + row, col, val);
    trip.emplace_back(col, nx + row, val);
  };
  int row = 0;
  for (int k = 0; k < N; ++k, ++row) {
    constraint(row, P(k + 1), 1.0);
    constraint(row, P(k), -1.0);
    constraint(row, V(k), -0.5 * h);
    constraint(row, V(k + 1), -0.5 * h);
  }
  for (int k = 0; k < N; ++k, ++row) {
    constraint(row, V(k + 1), 1.0);
    constraint(row, V(k), -1.0);
    constraint(row, U(k), -0.5 * h);
    constraint(row, U(k + 1), -0.5 * h);
  }
  constraint(row, P(0), 1.0);
  rhs(nx + row++) = pr.p0;
  constraint(row, V(0), 1.0);
  rhs(nx + row++) = pr.v0;
  constraint(row, P(N), 1.0);
  rhs(nx + row++) = pr.L;

  Eigen::SparseMatrix<double> K(nx + nc, nx + nc);
  K.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(K);
  if (lu.info() != Eigen::Success) throw std::runtime_error("collocate: KKT factorization failed");
  const Eigen::VectorXd x = lu.solve(rhs);

  Solution s;
  for (int k = 0; k < n; ++k) {
    s.t.push_back(k * h);
    s.p.push_back(x(P(k)));
    s.v.push_back(x(V(k)));
    s.u.push_back(x(U(k)));
  }
  for (int k = 0; k < n; ++k) {
    const double w = (k == 0 || k == N) ? 0.5 * h : h;
    double f = 0.5 * pr.w_u * s.u[k] * s.u[k];
    if (pr.w_s > 0.0) {
      const double e = s.p[k] - pr.q(s.t[k]);
      f += 0.5 * pr.w_s * e * e;
    }
    s.cost += w * f;
  }
  return s;
}

double closed_form_cost(const std::function<Kinematics(double)>& traj, double t0,
                        const Problem& pr) {
  const auto N = static_cast<int>(std::lround(pr.T / pr.dt));
  const double h = pr.T / N;
  double cost = 0.0;
  for (int k = 0; k <= N; ++k) {
    const double tau = k == N ? pr.T : k * h;
    const Kinematics x = traj(t0 + tau);
    double f = 0.5 * pr.w_u * x.u * x.u;
    if (pr.w_s > 0.0) {
      const double e = x.p - pr.q(tau);
      f += 0.5 * pr.w_s * e * e;
    }
    cost += ((k == 0 || k == N) ? 0.5 * h : h) * f;
  }
  return cost;
}

}  // namespace cavsim::oracle
