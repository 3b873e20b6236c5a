#include "sheafnet/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace sheafnet::nn {

using json = nlohmann::json;

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "isn") return ModelKind::isn;
  if (s == "diag-snn" || s == "diag_snn") return ModelKind::diag_snn;
  throw ConfigError("unknown model kind: " + s);
}

std::string to_string(ModelKind k) {
  return k == ModelKind::isn ? "isn" : "diag-snn";
}

void ModelConfig::validate() const {
  if (layers < 1) throw ConfigError("layers must be >= 1");
  if (d < 1) throw ConfigError("d must be >= 1");
  if (hidden_channels < 1) throw ConfigError("hidden_channels must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (input_dropout < 0.0 || input_dropout >= 1.0)
    throw ConfigError("input_dropout must be in [0, 1)");
}

namespace {

Matrix glorot(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  const double limit = std::sqrt(6.0 / (rows + cols));
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-limit, limit);
  return m;
}

}  // namespace

void for_each_param(const ModelConfig& config, ModelParams& params,
                    const std::function<void(const std::string&, Matrix&)>& fn) {
  fn("enc_w", params.enc_w);
  fn("enc_b", params.enc_b);
  if (config.second_linear) {
    fn("enc2_w", params.enc2_w);
    fn("enc2_b", params.enc2_b);
  }
  for (size_t t = 0; t < params.layers.size(); ++t) {
    LayerParams& lp = params.layers[t];
    const std::string prefix = "layer" + std::to_string(t) + ".";
    fn(prefix + "w1", lp.w1);
    fn(prefix + "w2", lp.w2);
    if (config.kind == ModelKind::diag_snn && !config.frozen_identity_maps) {
      fn(prefix + "mlp_w1", lp.mlp_w1);
      fn(prefix + "mlp_b1", lp.mlp_b1);
      fn(prefix + "mlp_w2", lp.mlp_w2);
      fn(prefix + "mlp_b2", lp.mlp_b2);
    }
    if (config.use_epsilons) fn(prefix + "epsilon", lp.epsilon);
  }
  fn("dec_w", params.dec_w);
  fn("dec_b", params.dec_b);
}

ModelParams init_params(const ModelConfig& config, int input_dim, int num_classes,
                        Rng& rng) {
  config.validate();
  const int D = config.effective_d();
  const int h = config.hidden_channels;
  const int hidden_dim = D * h;

  ModelParams p;
  p.enc_w = glorot(input_dim, hidden_dim, rng);
  p.enc_b = Matrix(1, hidden_dim);
  if (config.second_linear) {
    p.enc2_w = glorot(hidden_dim, hidden_dim, rng);
    p.enc2_b = Matrix(1, hidden_dim);
  }
  p.layers.resize(config.layers);
  for (int t = 0; t < config.layers; ++t) {
    LayerParams& lp = p.layers[t];
    lp.w1 = glorot(D, D, rng);
    lp.w2 = glorot(h, h, rng);
    if (config.kind == ModelKind::diag_snn && !config.frozen_identity_maps) {
      const int in = 2 * D * h;
      const int hidden = 2 * config.d;
      lp.mlp_w1 = glorot(in, hidden, rng);
      lp.mlp_b1 = Matrix(1, hidden);
      lp.mlp_w2 = glorot(hidden, config.d, rng);
      lp.mlp_b2 = Matrix(1, config.d);
    }
    if (config.use_epsilons) lp.epsilon = Matrix(1, 1);
  }
  p.dec_w = glorot(hidden_dim, num_classes, rng);
  p.dec_b = Matrix(1, num_classes);
  return p;
}

SheafModel::SheafModel(ModelConfig config, std::shared_ptr<const Graph> graph,
                       int input_dim, int num_classes, Rng& rng)
    : config_(config),
      graph_(std::move(graph)),
      input_dim_(input_dim),
      num_classes_(num_classes),
      params_(init_params(config, input_dim, num_classes, rng)) {
  CellularSheaf sheaf = identity_sheaf(graph_, config_.d);
  sheaf = augment_fixed_channels(sheaf, config_.add_lp, config_.add_hp);
  laplacian_ = assemble_sheaf_laplacian(sheaf, config_.laplacian_mode());
}

BlockSparseOperator SheafModel::learned_operator(const Matrix& map_a,
                                                 const Matrix& map_b) const {
  const int D = config_.effective_d();
  Matrix entries(graph_->edge_count(), 2 * D);
  for (int e = 0; e < graph_->edge_count(); ++e)
    for (int k = 0; k < D; ++k) {
      entries(e, k) = map_a(e, k);
      entries(e, D + k) = map_b(e, k);
    }
  const CellularSheaf sheaf = diagonal_sheaf(graph_, D, entries);
  return assemble_sheaf_laplacian(sheaf, config_.laplacian_mode());
}

ForwardResult SheafModel::forward(ad::Tape& tape, const Matrix& features, bool training,
                                  Rng* rng) const {
  if (features.rows() != graph_->n || features.cols() != input_dim_)
    throw std::invalid_argument("forward: feature matrix shape mismatch");
  if (training && !rng) throw std::invalid_argument("forward: training requires an rng");

  const ModelConfig& c = config_;
  const int D = c.effective_d();
  const Graph* g = graph_.get();
  const ModelParams& p = params_;

  ForwardResult out;
  auto param = [&](const std::string& name, const Matrix& m) {
    const ad::Tensor t = tape.input(m);
    out.param_tensors.emplace_back(name, t);
    return t;
  };

  ad::Tensor x = tape.constant(features);
  if (training && c.input_dropout > 0.0) x = tape.dropout(x, c.input_dropout, *rng);

  x = tape.add_bias(tape.matmul(x, param("enc_w", p.enc_w)), param("enc_b", p.enc_b));
  x = tape.activation(x, c.act);
  if (training && c.dropout > 0.0) x = tape.dropout(x, c.dropout, *rng);
  if (c.second_linear) {
    x = tape.add_bias(tape.matmul(x, param("enc2_w", p.enc2_w)),
                      param("enc2_b", p.enc2_b));
  }
  x = tape.stack_stalks(x, D);  // nD x h
  out.hidden_states.push_back(x);

  Matrix fixed_cols_a(graph_->edge_count(), D - c.d);
  Matrix fixed_cols_b(graph_->edge_count(), D - c.d);
  if (D > c.d) {
    int k = 0;
    if (c.add_lp) {
      for (int e = 0; e < graph_->edge_count(); ++e) {
        fixed_cols_a(e, k) = 1.0;
        fixed_cols_b(e, k) = 1.0;
      }
      ++k;
    }
    if (c.add_hp) {
      for (int e = 0; e < graph_->edge_count(); ++e) {
        fixed_cols_a(e, k) = 1.0;
        fixed_cols_b(e, k) = -1.0;
      }
    }
  }

  for (int t = 0; t < c.layers; ++t) {
    const LayerParams& lp = p.layers[t];

    ad::Tensor map_a{}, map_b{};
    if (c.kind == ModelKind::diag_snn) {
      const std::string prefix = "layer" + std::to_string(t) + ".";
      if (c.frozen_identity_maps) {
        map_a = tape.constant(Matrix::filled(graph_->edge_count(), c.d, 1.0));
        map_b = tape.constant(Matrix::filled(graph_->edge_count(), c.d, 1.0));
      } else {
        const ad::Tensor xn = tape.unstack_stalks(x, D);  // n x (D h)
        const ad::Tensor w1 = param(prefix + "mlp_w1", lp.mlp_w1);
        const ad::Tensor b1 = param(prefix + "mlp_b1", lp.mlp_b1);
        const ad::Tensor w2 = param(prefix + "mlp_w2", lp.mlp_w2);
        const ad::Tensor b2 = param(prefix + "mlp_b2", lp.mlp_b2);
        auto predict = [&](bool reversed) {
          const ad::Tensor pairs = tape.gather_pairs(xn, g, reversed);  // E x 2Dh
          ad::Tensor m = tape.activation(tape.add_bias(tape.matmul(pairs, w1), b1),
                                         ad::Activation::tanh);
          return tape.activation(tape.add_bias(tape.matmul(m, w2), b2),
                                 ad::Activation::tanh);
        };
        map_a = predict(false);  // maps of the first endpoints
        map_b = predict(true);   // maps of the second endpoints
      }
      if (D > c.d) {
        map_a = tape.concat_cols(map_a, tape.constant(fixed_cols_a));
        map_b = tape.concat_cols(map_b, tape.constant(fixed_cols_b));
      }
      out.map_a.push_back(map_a);
      out.map_b.push_back(map_b);
    }

    const std::string lprefix = "layer" + std::to_string(t) + ".";
    ad::Tensor h = x;
    if (training && c.dropout > 0.0) h = tape.dropout(h, c.dropout, *rng);
    h = tape.stalk_mix(param(lprefix + "w1", lp.w1), h, D);
    h = tape.matmul(h, param(lprefix + "w2", lp.w2));

    if (c.kind == ModelKind::isn) {
      h = tape.spmm(&laplacian_, h);
    } else if (c.laplacian_mode() == SheafLaplacianMode::degree_normalized) {
      const ad::Tensor deg = tape.scatter_square_sums(map_a, map_b, g);
      const ad::Tensor scaler = tape.rsqrt_floor(deg, 1e-12);
      h = tape.row_scale(h, scaler);
      h = tape.diag_sheaf_apply(map_a, map_b, h, g);
      h = tape.row_scale(h, scaler);
    } else {
      h = tape.diag_sheaf_apply(map_a, map_b, h, g);
    }

    h = tape.activation(h, c.act);
    if (c.use_epsilons) {
      const ad::Tensor eps = param(lprefix + "epsilon", lp.epsilon);
      x = tape.sub(tape.add(x, tape.scale_by(x, eps)), h);  // (1 + eps) x - h
    } else {
      x = tape.sub(x, h);
    }
    out.hidden_states.push_back(x);
  }

  const ad::Tensor xn = tape.unstack_stalks(x, D);  // n x (D h)
  out.logits = tape.add_bias(tape.matmul(xn, param("dec_w", p.dec_w)),
                             param("dec_b", p.dec_b));
  return out;
}

void adam_step(Matrix& param, const Matrix& grad, AdamState& state, const AdamOptions& opts) {
  if (!grad.all_finite())
    throw std::runtime_error("adam_step: non-finite gradient");
  if (state.m.empty()) {
    state.m = Matrix(param.rows(), param.cols());
    state.v = Matrix(param.rows(), param.cols());
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(opts.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(opts.beta2, static_cast<double>(state.step));
  double* pm = state.m.data();
  double* pv = state.v.data();
  double* pp = param.data();
  const double* pg = grad.data();
  for (size_t i = 0; i < param.size(); ++i) {
    pm[i] = opts.beta1 * pm[i] + (1.0 - opts.beta1) * pg[i];
    pv[i] = opts.beta2 * pv[i] + (1.0 - opts.beta2) * pg[i] * pg[i];
    const double mhat = pm[i] / bc1;
    const double vhat = pv[i] / bc2;
    // decoupled weight decay: shrink the parameter directly
    pp[i] -= opts.lr * (mhat / (std::sqrt(vhat) + opts.eps) + opts.weight_decay * pp[i]);
  }
}

std::vector<int> predict_classes(const Matrix& logits) {
  std::vector<int> out(logits.rows());
  for (int i = 0; i < logits.rows(); ++i) {
    const double* row = logits.row(i);
    int best = 0;
    for (int j = 1; j < logits.cols(); ++j)
      if (row[j] > row[best]) best = j;
    out[i] = best;
  }
  return out;
}

double accuracy(const Matrix& logits, const std::vector<int>& labels,
                const std::vector<int>& indices) {
  if (indices.empty()) return 0.0;
  const std::vector<int> pred = predict_classes(logits);
  int correct = 0;
  for (int i : indices)
    if (pred[i] == labels[i]) ++correct;
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

// ---------------------------------------------------------------------------
// config / checkpoint serialization
// ---------------------------------------------------------------------------

namespace {

json config_to_json_obj(const ModelConfig& c) {
  return json{{"model", to_string(c.kind)},
              {"layers", c.layers},
              {"d", c.d},
              {"hidden_channels", c.hidden_channels},
              {"dropout", c.dropout},
              {"input_dropout", c.input_dropout},
              {"activation", ad::to_string(c.act)},
              {"add_lp", c.add_lp},
              {"add_hp", c.add_hp},
              {"normalised", c.normalised},
              {"deg_normalised", c.deg_normalised},
              {"second_linear", c.second_linear},
              {"use_epsilons", c.use_epsilons},
              {"frozen_identity_maps", c.frozen_identity_maps}};
}

ModelConfig config_from_json_obj(const json& j) {
  ModelConfig c;
  c.kind = model_kind_from_string(j.value("model", "isn"));
  c.layers = j.value("layers", c.layers);
  c.d = j.value("d", c.d);
  c.hidden_channels = j.value("hidden_channels", c.hidden_channels);
  c.dropout = j.value("dropout", c.dropout);
  c.input_dropout = j.value("input_dropout", c.input_dropout);
  c.act = ad::activation_from_string(j.value("activation", "elu"));
  c.add_lp = j.value("add_lp", c.add_lp);
  c.add_hp = j.value("add_hp", c.add_hp);
  c.normalised = j.value("normalised", c.normalised);
  c.deg_normalised = j.value("deg_normalised", c.deg_normalised);
  c.second_linear = j.value("second_linear", c.second_linear);
  c.use_epsilons = j.value("use_epsilons", c.use_epsilons);
  c.frozen_identity_maps = j.value("frozen_identity_maps", c.frozen_identity_maps);
  c.validate();
  return c;
}

}  // namespace

std::string config_to_json(const ModelConfig& config) {
  return config_to_json_obj(config).dump(2);
}

ModelConfig config_from_json_string(const std::string& text) {
  return config_from_json_obj(json::parse(text));
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelParams& params, uint64_t seed, int epoch) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint blob assumes a little-endian host");
  json manifest = json::array();
  std::vector<const Matrix*> order;
  for_each_param(config, const_cast<ModelParams&>(params),
                 [&](const std::string& name, Matrix& m) {
                   manifest.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
                   order.push_back(&m);
                 });
  const json header{{"format", "sheafnet-checkpoint-v1"},
                    {"config", config_to_json_obj(config)},
                    {"seed", seed},
                    {"epoch", epoch},
                    {"manifest", manifest}};
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
  const uint64_t len = header_text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  for (const Matrix* m : order)
    out.write(reinterpret_cast<const char*>(m->data()),
              static_cast<std::streamsize>(m->size() * sizeof(double)));
  if (!out) throw std::runtime_error("short write to checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string header_text(len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(len));
  const json header = json::parse(header_text);
  if (header.value("format", "") != "sheafnet-checkpoint-v1")
    throw std::runtime_error("unrecognized checkpoint format in " + path.string());

  Checkpoint ck;
  ck.config = config_from_json_obj(header.at("config"));
  ck.seed = header.value("seed", 0ull);
  ck.epoch = header.value("epoch", 0);

  // materialize parameter matrices per the manifest, then read the blob
  std::vector<std::tuple<std::string, int, int>> manifest;
  for (const auto& item : header.at("manifest"))
    manifest.emplace_back(item.at("name").get<std::string>(), item.at("rows").get<int>(),
                          item.at("cols").get<int>());

  ck.params.layers.resize(ck.config.layers);
  size_t cursor = 0;
  for_each_param(ck.config, ck.params, [&](const std::string& name, Matrix& m) {
    if (cursor >= manifest.size())
      throw std::runtime_error("checkpoint manifest shorter than expected");
    const auto& [mname, rows, cols] = manifest[cursor++];
    if (mname != name)
      throw std::runtime_error("checkpoint manifest order mismatch: expected " + name +
                               ", found " + mname);
    m = Matrix(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
  });
  if (cursor != manifest.size())
    throw std::runtime_error("checkpoint manifest longer than expected");
  if (!in) throw std::runtime_error("truncated checkpoint blob: " + path.string());
  return ck;
}

}  // namespace sheafnet::nn
