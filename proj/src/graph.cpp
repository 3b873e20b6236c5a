#include "sheafnet/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sheafnet/log.hpp"
#include "sheafnet/rng.hpp"

namespace sheafnet {

using json = nlohmann::json;

Graph make_graph(int n, const std::vector<std::pair<int, int>>& raw_edges) {
  if (n < 0) throw DataError("negative node count");
  Graph g;
  g.n = n;
  g.edges.reserve(raw_edges.size());
  int dropped_loops = 0;
  for (auto [u, v] : raw_edges) {
    if (u < 0 || u >= n || v < 0 || v >= n)
      throw DataError("edge endpoint out of range: (" + std::to_string(u) + ", " +
                      std::to_string(v) + ") with n = " + std::to_string(n));
    if (u == v) {
      ++dropped_loops;
      continue;
    }
    if (u > v) std::swap(u, v);
    g.edges.emplace_back(u, v);
  }
  if (dropped_loops > 0)
    log_warn("dropped " + std::to_string(dropped_loops) + " self-loop(s) during ingestion");
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());

  g.degree.assign(n, 0);
  g.incidence.assign(n, {});
  for (int e = 0; e < g.edge_count(); ++e) {
    const auto [u, v] = g.edges[e];
    g.degree[u]++;
    g.degree[v]++;
    g.incidence[u].push_back({e, 0});
    g.incidence[v].push_back({e, 1});
  }
  return g;
}

std::vector<std::pair<int, int>> load_edge_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open edge list: " + path.string());
  std::vector<std::pair<int, int>> edges;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    long u, v;
    if (!(ss >> u)) continue;  // blank or comment-only line
    if (!(ss >> v))
      throw DataError("edge list " + path.string() + ": line " + std::to_string(lineno) +
                      " has a single endpoint");
    edges.emplace_back(static_cast<int>(u), static_cast<int>(v));
  }
  return edges;
}

Matrix load_feature_csv(const std::filesystem::path& path, bool skip_header) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open feature file: " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (first && skip_header) {
      first = false;
      continue;
    }
    first = false;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      size_t pos = 0;
      double v;
      try {
        v = std::stod(cell, &pos);
      } catch (const std::exception&) {
        throw DataError("feature file " + path.string() + ": non-numeric value '" + cell +
                        "' at line " + std::to_string(lineno));
      }
      while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
      if (pos != cell.size())
        throw DataError("feature file " + path.string() + ": non-numeric value '" + cell +
                        "' at line " + std::to_string(lineno));
      if (!std::isfinite(v))
        throw DataError("feature file " + path.string() + ": non-finite value at line " +
                        std::to_string(lineno));
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw DataError("feature file " + path.string() + ": ragged row at line " +
                      std::to_string(lineno) + " (" + std::to_string(row.size()) + " vs " +
                      std::to_string(rows.front().size()) + " columns)");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("feature file " + path.string() + " is empty");
  Matrix m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()));
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  return m;
}

LabelVector load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open label file: " + path.string());
  LabelVector lv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const int y = std::stoi(line);
      if (y < 0) throw DataError("negative class index at line " + std::to_string(lineno));
      lv.labels.push_back(y);
      lv.num_classes = std::max(lv.num_classes, y + 1);
    } catch (const DataError&) {
      throw;
    } catch (const std::exception&) {
      throw DataError("label file " + path.string() + ": bad line " + std::to_string(lineno));
    }
  }
  if (lv.num_classes < 2)
    throw DataError("label file " + path.string() + " has fewer than 2 classes");
  return lv;
}

namespace {

std::vector<int> read_index_array(const json& arr, int n, const std::string& what) {
  std::vector<int> out;
  for (const auto& v : arr) {
    const int i = v.get<int>();
    if (i < 0 || i >= n) throw DataError("split index out of range in " + what);
    out.push_back(i);
  }
  return out;
}

}  // namespace

FoldSplits load_splits_json(const std::filesystem::path& path, int n) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open splits file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError("splits file " + path.string() + ": " + e.what());
  }
  if (!j.is_array() || j.empty()) throw DataError("splits file must be a non-empty JSON array");
  FoldSplits fs;
  fs.from_file = true;
  for (const auto& fold : j) {
    Fold f;
    f.train = read_index_array(fold.at("train"), n, path.string());
    f.val = read_index_array(fold.at("val"), n, path.string());
    f.test = read_index_array(fold.at("test"), n, path.string());
    std::vector<char> seen(n, 0);
    for (const auto* set : {&f.train, &f.val, &f.test})
      for (int i : *set) {
        if (seen[i]) throw DataError("splits file " + path.string() + ": overlapping fold sets");
        seen[i] = 1;
      }
    fs.folds.push_back(std::move(f));
  }
  return fs;
}

FoldSplits make_random_splits(int n, int fold_count, uint64_t seed) {
  FoldSplits fs;
  fs.seed = seed;
  fs.from_file = false;
  Rng root(seed);
  const int n_train = static_cast<int>(std::lround(0.48 * n));
  const int n_val = static_cast<int>(std::lround(0.32 * n));
  for (int k = 0; k < fold_count; ++k) {
    Rng rng = root.spawn(static_cast<uint64_t>(k));
    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    Fold f;
    f.train.assign(perm.begin(), perm.begin() + n_train);
    f.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
    f.test.assign(perm.begin() + n_train + n_val, perm.end());
    std::sort(f.train.begin(), f.train.end());
    std::sort(f.val.begin(), f.val.end());
    std::sort(f.test.begin(), f.test.end());
    fs.folds.push_back(std::move(f));
  }
  return fs;
}

Dataset load_dataset(const std::filesystem::path& manifest_path, uint64_t split_seed) {
  std::ifstream in(manifest_path);
  if (!in) throw DataError("cannot open manifest: " + manifest_path.string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError("manifest " + manifest_path.string() + ": " + e.what());
  }
  const auto dir = manifest_path.parent_path();
  auto resolve = [&](const std::string& rel) { return dir / rel; };

  Dataset ds;
  ds.name = j.value("name", manifest_path.stem().string());
  const auto raw_edges = load_edge_list(resolve(j.at("edges").get<std::string>()));
  Matrix feats = load_feature_csv(resolve(j.at("features").get<std::string>()),
                                  j.value("features_header", false));
  LabelVector labels = load_labels(resolve(j.at("labels").get<std::string>()));

  const int n = feats.rows();
  if (static_cast<int>(labels.labels.size()) != n)
    throw DataError("label count (" + std::to_string(labels.labels.size()) +
                    ") does not match feature rows (" + std::to_string(n) + ")");
  auto graph = std::make_shared<Graph>(make_graph(n, raw_edges));

  FoldSplits splits;
  if (j.contains("splits"))
    splits = load_splits_json(resolve(j.at("splits").get<std::string>()), n);
  else
    splits = make_random_splits(n, 10, split_seed);

  ds.graph = std::move(graph);
  ds.features = FeatureMatrix{std::move(feats)};
  ds.labels = std::move(labels);
  ds.splits = std::move(splits);
  return ds;
}

BlockSparseOperator graph_laplacian(const Graph& g, LaplacianMode mode) {
  BlockSparseOperator op;
  op.n_blocks = g.n;
  op.d = 1;
  op.symmetric = true;
  op.row_ptr.assign(g.n + 1, 0);
  for (int u = 0; u < g.n; ++u) op.row_ptr[u + 1] = op.row_ptr[u] + 1 + g.degree[u];
  op.col_idx.resize(op.row_ptr[g.n]);
  op.vals.assign(op.row_ptr[g.n], 0.0);

  for (int u = 0; u < g.n; ++u) {
    // columns: u itself plus its neighbors, sorted
    std::vector<int> cols;
    cols.reserve(1 + g.degree[u]);
    cols.push_back(u);
    for (const auto& end : g.incidence[u]) {
      const auto [a, b] = g.edges[end.edge];
      cols.push_back(end.side == 0 ? b : a);
    }
    std::sort(cols.begin(), cols.end());
    for (size_t k = 0; k < cols.size(); ++k) {
      const int slot = op.row_ptr[u] + static_cast<int>(k);
      const int v = cols[k];
      op.col_idx[slot] = v;
      if (mode == LaplacianMode::combinatorial) {
        op.vals[slot] = (v == u) ? static_cast<double>(g.degree[u]) : -1.0;
      } else {
        if (v == u) {
          // isolated nodes keep a zero diagonal and stay diffusion fixed points
          op.vals[slot] = g.degree[u] > 0 ? 1.0 : 0.0;
        } else {
          op.vals[slot] = -1.0 / std::sqrt(static_cast<double>(g.degree[u]) *
                                           static_cast<double>(g.degree[v]));
        }
      }
    }
  }
  return op;
}

std::vector<int> connected_components(const Graph& g) {
  std::vector<int> comp(g.n, -1);
  int next_id = 0;
  std::queue<int> q;
  for (int s = 0; s < g.n; ++s) {
    if (comp[s] >= 0) continue;
    comp[s] = next_id;
    q.push(s);
    while (!q.empty()) {
      const int u = q.front();
      q.pop();
      for (const auto& end : g.incidence[u]) {
        const auto [a, b] = g.edges[end.edge];
        const int v = (u == a) ? b : a;
        if (comp[v] < 0) {
          comp[v] = next_id;
          q.push(v);
        }
      }
    }
    ++next_id;
  }
  return comp;
}

}  // namespace sheafnet
