#pragma once

#include <string>
#include <vector>

#include "sheafnet/graph.hpp"
#include "sheafnet/matrix.hpp"

namespace sheafnet {

// Per-class neighborhood class distribution (row-stochastic m_hat) and mean
// degrees. Rows of classes whose nodes have no edges are left zero and
// flagged.
struct ClassProfile {
  Matrix m_hat;                       // c x c
  std::vector<double> d_bar;          // length c
  std::vector<int> zero_degree_rows;  // classes with no incident edge endpoints
  int num_classes() const { return m_hat.rows(); }
};

enum class NeighborCounting {
  multiset,  // each edge endpoint counts once per adjacency
  set        // each distinct node in the class neighborhood counts once
};

enum class HeterophilyLabel { good, bad, mixed };

struct HeterophilyVerdict {
  Matrix gain;  // c x c, symmetric, zero diagonal
  double min_gain = 0.0;
  double max_gain = 0.0;
  double sigma = 0.2;
  HeterophilyLabel label = HeterophilyLabel::mixed;
};

std::string to_string(HeterophilyLabel label);

ClassProfile class_profile(const Graph& g, const LabelVector& labels,
                           NeighborCounting counting = NeighborCounting::multiset);

// gain(k,t) = || sqrt(d_k) m_k - sqrt(d_t) m_t ||_2
Matrix gain_matrix(const ClassProfile& profile);

HeterophilyVerdict classify_heterophily(const Matrix& gain, double sigma = 0.2);

// Fraction of edges whose endpoints share a class. Debug measure only.
double edge_homophily(const Graph& g, const LabelVector& labels);

// {dataset, min_gain, max_gain, sigma, label, gain_matrix} as emitted by the
// audit subcommand. Gains are reported at full precision plus 2-decimal
// rounded copies for table comparison.
std::string audit_to_json(const std::string& dataset, const HeterophilyVerdict& verdict);

}  // namespace sheafnet
