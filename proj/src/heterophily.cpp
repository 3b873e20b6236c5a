#include "sheafnet/heterophily.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "sheafnet/log.hpp"

namespace sheafnet {

std::string to_string(HeterophilyLabel label) {
  switch (label) {
    case HeterophilyLabel::good: return "Good";
    case HeterophilyLabel::bad: return "Bad";
    case HeterophilyLabel::mixed: return "Mixed";
  }
  return "?";
}

ClassProfile class_profile(const Graph& g, const LabelVector& labels,
                           NeighborCounting counting) {
  const int c = labels.num_classes;
  if (c < 2) throw std::invalid_argument("class_profile: need at least 2 classes");
  if (static_cast<int>(labels.labels.size()) != g.n)
    throw std::invalid_argument("class_profile: label count mismatch");

  std::vector<int> class_size(c, 0);
  for (int y : labels.labels) class_size[y]++;
  for (int k = 0; k < c; ++k)
    if (class_size[k] == 0)
      throw std::invalid_argument("class_profile: class " + std::to_string(k) + " is empty");

  ClassProfile profile;
  profile.m_hat = Matrix(c, c);
  profile.d_bar.assign(c, 0.0);

  Matrix counts(c, c);
  if (counting == NeighborCounting::multiset) {
    // one endpoint per adjacency: each edge contributes to both class tallies
    for (const auto& [u, v] : g.edges) {
      counts(labels.labels[u], labels.labels[v]) += 1.0;
      counts(labels.labels[v], labels.labels[u]) += 1.0;
    }
  } else {
    // distinct nodes in the union of class neighborhoods
    std::vector<std::set<int>> neighborhood(c);
    for (const auto& [u, v] : g.edges) {
      neighborhood[labels.labels[u]].insert(v);
      neighborhood[labels.labels[v]].insert(u);
    }
    for (int k = 0; k < c; ++k)
      for (int v : neighborhood[k]) counts(k, labels.labels[v]) += 1.0;
  }

  for (int k = 0; k < c; ++k) {
    double total = 0.0;
    for (int i = 0; i < c; ++i) total += counts(k, i);
    if (total <= 0.0) {
      profile.zero_degree_rows.push_back(k);
      log_warn("class " + std::to_string(k) +
               " has no incident edges; its neighborhood row is left zero");
      continue;
    }
    for (int i = 0; i < c; ++i) profile.m_hat(k, i) = counts(k, i) / total;
  }

  for (int u = 0; u < g.n; ++u) profile.d_bar[labels.labels[u]] += g.degree[u];
  for (int k = 0; k < c; ++k) profile.d_bar[k] /= class_size[k];
  return profile;
}

Matrix gain_matrix(const ClassProfile& profile) {
  const int c = profile.num_classes();
  Matrix gain(c, c);
  for (int k = 0; k < c; ++k) {
    for (int t = k + 1; t < c; ++t) {
      double s = 0.0;
      const double sk = std::sqrt(profile.d_bar[k]);
      const double st = std::sqrt(profile.d_bar[t]);
      for (int i = 0; i < c; ++i) {
        const double diff = sk * profile.m_hat(k, i) - st * profile.m_hat(t, i);
        s += diff * diff;
      }
      gain(k, t) = gain(t, k) = std::sqrt(s);
    }
  }
  return gain;
}

HeterophilyVerdict classify_heterophily(const Matrix& gain, double sigma) {
  const int c = gain.rows();
  if (c < 2 || gain.cols() != c)
    throw std::invalid_argument("classify_heterophily: gain must be c x c with c >= 2");
  HeterophilyVerdict verdict;
  verdict.gain = gain;
  verdict.sigma = sigma;
  double mn = std::numeric_limits<double>::infinity();
  double mx = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < c; ++k)
    for (int t = 0; t < c; ++t) {
      if (k == t) continue;
      mn = std::min(mn, gain(k, t));
      mx = std::max(mx, gain(k, t));
    }
  verdict.min_gain = mn;
  verdict.max_gain = mx;
  if (mn > sigma)
    verdict.label = HeterophilyLabel::good;
  else if (mx < sigma)
    verdict.label = HeterophilyLabel::bad;
  else
    verdict.label = HeterophilyLabel::mixed;
  return verdict;
}

double edge_homophily(const Graph& g, const LabelVector& labels) {
  if (g.edge_count() == 0) return 0.0;
  int same = 0;
  for (const auto& [u, v] : g.edges)
    if (labels.labels[u] == labels.labels[v]) ++same;
  return static_cast<double>(same) / g.edge_count();
}

std::string audit_to_json(const std::string& dataset, const HeterophilyVerdict& verdict) {
  auto round2 = [](double v) { return std::round(v * 100.0) / 100.0; };
  nlohmann::json gain = nlohmann::json::array();
  for (int k = 0; k < verdict.gain.rows(); ++k) {
    nlohmann::json row = nlohmann::json::array();
    for (int t = 0; t < verdict.gain.cols(); ++t) row.push_back(verdict.gain(k, t));
    gain.push_back(row);
  }
  const nlohmann::json j{{"dataset", dataset},
                         {"min_gain", verdict.min_gain},
                         {"max_gain", verdict.max_gain},
                         {"min_gain_rounded", round2(verdict.min_gain)},
                         {"max_gain_rounded", round2(verdict.max_gain)},
                         {"sigma", verdict.sigma},
                         {"label", to_string(verdict.label)},
                         {"gain_matrix", gain}};
  return j.dump(2);
}

}  // namespace sheafnet
