//
// Copyright 2026 The qrel Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

// Optimal transport between two uniform discrete distributions. Small
// problems are solved exactly as an integral min-cost flow (row supplies N,
// column demands M, scaled back by 1/(M*N)); large ones use log-domain
// entropic scaling.

#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "qrel/error.hpp"

namespace qrel {

struct TransportOptions {
  /// Problems with rows*cols above this use the entropic solver.
  long exact_limit = 10000;
  double entropic_epsilon = 0.05;
  double marginal_tolerance = 1e-6;
  int max_iterations = 5000;
};

struct TransportPlan {
  Eigen::MatrixXd plan;  // rows sum to 1/M, columns to 1/N
  bool exact = true;
  int iterations = 0;
};

namespace detail {

inline Eigen::MatrixXd exact_uniform_transport(const Eigen::MatrixXd& cost) {
  const int m = static_cast<int>(cost.rows());
  const int n = static_cast<int>(cost.cols());
  const int v = m + n;  // rows are nodes [0, m), columns [m, m + n)
  constexpr double kInf = std::numeric_limits<double>::infinity();

  std::vector<long> supply(static_cast<std::size_t>(m), n);
  std::vector<long> demand(static_cast<std::size_t>(n), m);
  Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic> flow =
      Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic>::Zero(m, n);

  // Potentials keep reduced costs non-negative.
  std::vector<double> pi(static_cast<std::size_t>(v), 0.0);
  for (int j = 0; j < n; ++j) pi[static_cast<std::size_t>(m + j)] = cost.col(j).minCoeff();

  long remaining = static_cast<long>(m) * n;
  std::vector<double> dist(static_cast<std::size_t>(v));
  std::vector<int> pred(static_cast<std::size_t>(v));
  std::vector<char> done(static_cast<std::size_t>(v));
  while (remaining > 0) {
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(pred.begin(), pred.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    for (int i = 0; i < m; ++i) {
      if (supply[static_cast<std::size_t>(i)] > 0) dist[static_cast<std::size_t>(i)] = 0.0;
    }
    for (int step = 0; step < v; ++step) {
      int u = -1;
      double best = kInf;
      for (int k = 0; k < v; ++k) {
        if (!done[static_cast<std::size_t>(k)] && dist[static_cast<std::size_t>(k)] < best) {
          best = dist[static_cast<std::size_t>(k)];
          u = k;
        }
      }
      if (u < 0) break;
      done[static_cast<std::size_t>(u)] = 1;
      const double du = dist[static_cast<std::size_t>(u)];
      if (u < m) {
        for (int j = 0; j < n; ++j) {
          const int w = m + j;
          const double rc = std::max(0.0, cost(u, j) + pi[static_cast<std::size_t>(u)] -
                                              pi[static_cast<std::size_t>(w)]);
          if (du + rc < dist[static_cast<std::size_t>(w)]) {
            dist[static_cast<std::size_t>(w)] = du + rc;
            pred[static_cast<std::size_t>(w)] = u;
          }
        }
      } else {
        const int j = u - m;
        for (int i = 0; i < m; ++i) {
          if (flow(i, j) <= 0) continue;
          const double rc = std::max(0.0, -cost(i, j) + pi[static_cast<std::size_t>(u)] -
                                              pi[static_cast<std::size_t>(i)]);
          if (du + rc < dist[static_cast<std::size_t>(i)]) {
            dist[static_cast<std::size_t>(i)] = du + rc;
            pred[static_cast<std::size_t>(i)] = u;
          }
        }
      }
    }
    int target = -1;
    for (int j = 0; j < n; ++j) {
      const int w = m + j;
      if (demand[static_cast<std::size_t>(j)] > 0 &&
          (target < 0 || dist[static_cast<std::size_t>(w)] < dist[static_cast<std::size_t>(target)])) {
        target = w;
      }
    }
    if (target < 0 || dist[static_cast<std::size_t>(target)] == kInf) {
      throw TransportError("exact transport: no augmenting path");
    }
    for (int k = 0; k < v; ++k) {
      if (dist[static_cast<std::size_t>(k)] < kInf) pi[static_cast<std::size_t>(k)] += dist[static_cast<std::size_t>(k)];
    }
    // Walk back to the source row and find the bottleneck.
    long amount = demand[static_cast<std::size_t>(target - m)];
    int node = target;
    while (pred[static_cast<std::size_t>(node)] >= 0) {
      const int p = pred[static_cast<std::size_t>(node)];
      if (p >= m) amount = std::min(amount, flow(node, p - m));  // backward col->row edge
      node = p;
    }
    amount = std::min(amount, supply[static_cast<std::size_t>(node)]);
    const int source = node;
    node = target;
    while (pred[static_cast<std::size_t>(node)] >= 0) {
      const int p = pred[static_cast<std::size_t>(node)];
      if (p < m) {
        flow(p, node - m) += amount;
      } else {
        flow(node, p - m) -= amount;
      }
      node = p;
    }
    supply[static_cast<std::size_t>(source)] -= amount;
    demand[static_cast<std::size_t>(target - m)] -= amount;
    remaining -= amount;
  }
  return flow.cast<double>() / (static_cast<double>(m) * n);
}

inline double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double mx = x.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((x.array() - mx).exp().sum());
}

inline TransportPlan entropic_uniform_transport(const Eigen::MatrixXd& cost,
                                                const TransportOptions& opt) {
  const Eigen::Index m = cost.rows();
  const Eigen::Index n = cost.cols();
  const double eps = opt.entropic_epsilon;
  const double log_a = -std::log(static_cast<double>(m));
  const double log_b = -std::log(static_cast<double>(n));
  Eigen::VectorXd f = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd scratch_n(n);
  Eigen::VectorXd scratch_m(m);
  TransportPlan out;
  out.exact = false;
  for (int it = 1; it <= opt.max_iterations; ++it) {
    for (Eigen::Index i = 0; i < m; ++i) {
      scratch_n = (g.transpose() - cost.row(i)) / eps;
      f(i) = eps * (log_a - log_sum_exp(scratch_n));
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      scratch_m = (f - cost.col(j)) / eps;
      g(j) = eps * (log_b - log_sum_exp(scratch_m));
    }
    // Columns are exact after the g update; measure the row marginals.
    double violation = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      scratch_n = (g.transpose() - cost.row(i)).array() / eps + f(i) / eps;
      violation += std::abs(std::exp(log_sum_exp(scratch_n)) - std::exp(log_a));
    }
    if (violation <= opt.marginal_tolerance) {
      out.iterations = it;
      out.plan.resize(m, n);
      for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
          out.plan(i, j) = std::exp((f(i) + g(j) - cost(i, j)) / eps);
        }
      }
      return out;
    }
  }
  throw TransportError("entropic transport did not reach marginal tolerance within " +
                       std::to_string(opt.max_iterations) + " iterations");
}

}  // namespace detail

/// Optimal coupling of uniform marginals (1/M over rows, 1/N over columns)
/// for the given cost matrix.
inline TransportPlan uniform_transport(const Eigen::MatrixXd& cost,
                                       const TransportOptions& opt = {}) {
  if (cost.rows() < 1 || cost.cols() < 1) throw PreconditionError("empty cost matrix");
  if (!cost.allFinite()) throw PreconditionError("cost matrix has non-finite entries");
  if (cost.rows() * cost.cols() <= opt.exact_limit) {
    TransportPlan p;
    p.plan = detail::exact_uniform_transport(cost);
    return p;
  }
  return detail::entropic_uniform_transport(cost, opt);
}

/// Transport-weighted sum of per-pair terms, scaled by the row count so the
/// result is on the same scale as a mean over rows: M * sum(T .* weights).
inline double emd_aggregate(const Eigen::MatrixXd& cost, const Eigen::MatrixXd& weights,
                            const TransportOptions& opt = {}) {
  if (cost.rows() != weights.rows() || cost.cols() != weights.cols()) {
    throw PreconditionError("cost and weight matrices differ in shape");
  }
  const TransportPlan t = uniform_transport(cost, opt);
  return static_cast<double>(cost.rows()) * (t.plan.array() * weights.array()).sum();
}

}  // namespace qrel
