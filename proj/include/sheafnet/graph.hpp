#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sheafnet/block_sparse.hpp"
#include "sheafnet/matrix.hpp"

namespace sheafnet {

// Thrown on malformed or missing dataset inputs (CLI exit code 3).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EdgeEnd {
  int edge = 0;
  int side = 0;  // 0 when the node is the first endpoint of the stored edge
};

// Undirected simple graph. Edges are stored once with u < v, sorted and
// deduplicated. Immutable after construction.
struct Graph {
  int n = 0;
  std::vector<std::pair<int, int>> edges;
  std::vector<int> degree;
  std::vector<std::vector<EdgeEnd>> incidence;  // per node, ordered by edge id

  int edge_count() const { return static_cast<int>(edges.size()); }
};

// Drops self-loops (logged at warn level), merges duplicates and both
// orientations of the same pair, sorts the edge list.
Graph make_graph(int n, const std::vector<std::pair<int, int>>& raw_edges);

struct FeatureMatrix {
  Matrix values;  // n x f
  int rows() const { return values.rows(); }
  int cols() const { return values.cols(); }
};

struct LabelVector {
  std::vector<int> labels;
  int num_classes = 0;
};

struct Fold {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

struct FoldSplits {
  std::vector<Fold> folds;
  uint64_t seed = 0;       // seed used when generated, 0 when loaded from file
  bool from_file = false;  // loaded from a splits file vs generated
};

struct Dataset {
  std::string name;
  std::shared_ptr<const Graph> graph;
  FeatureMatrix features;
  LabelVector labels;
  FoldSplits splits;
};

// Manifest is a JSON object: {"name", "edges", "features", "labels",
// "splits"?, "features_header"?}. Paths are resolved relative to the
// manifest's directory. Without a splits file, 10 seeded uniform 48/32/20
// splits are generated.
Dataset load_dataset(const std::filesystem::path& manifest_path, uint64_t split_seed = 1);

// The individual loaders, exposed for tests and tools.
std::vector<std::pair<int, int>> load_edge_list(const std::filesystem::path& path);
Matrix load_feature_csv(const std::filesystem::path& path, bool skip_header);
LabelVector load_labels(const std::filesystem::path& path);
FoldSplits load_splits_json(const std::filesystem::path& path, int n);
FoldSplits make_random_splits(int n, int fold_count, uint64_t seed);

enum class LaplacianMode { combinatorial, symmetric_normalized };

// d = 1 operator; combinatorial is D - A, normalized is
// I - D^{-1/2} A D^{-1/2} with isolated-node diagonal entries set to 0.
BlockSparseOperator graph_laplacian(const Graph& g, LaplacianMode mode);

// Dense component ids in {0, ..., k-1}, assigned in order of first visit.
std::vector<int> connected_components(const Graph& g);

}  // namespace sheafnet
