#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sheafnet/autodiff.hpp"
#include "sheafnet/graph.hpp"
#include "sheafnet/sheaf.hpp"

namespace sheafnet::nn {

enum class ModelKind { isn, diag_snn };

ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind k);

struct ModelConfig {
  ModelKind kind = ModelKind::isn;
  int layers = 2;
  int d = 1;
  int hidden_channels = 32;
  double dropout = 0.0;
  double input_dropout = 0.0;
  ad::Activation act = ad::Activation::elu;
  bool add_lp = false;
  bool add_hp = false;
  bool normalised = true;
  bool deg_normalised = false;
  bool second_linear = false;
  bool use_epsilons = false;
  // Ablation switch: bypass the restriction-map MLP and use all-ones
  // diagonals, which reduces the learned Laplacian to the identity sheaf's.
  bool frozen_identity_maps = false;

  int effective_d() const { return d + (add_lp ? 1 : 0) + (add_hp ? 1 : 0); }
  SheafLaplacianMode laplacian_mode() const {
    return (normalised || deg_normalised) ? SheafLaplacianMode::degree_normalized
                                          : SheafLaplacianMode::combinatorial;
  }
  void validate() const;  // throws ConfigError
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LayerParams {
  Matrix w1;  // D x D stalk mixing
  Matrix w2;  // h x h channel mixing
  // Restriction-map predictor (diag_snn only): 2Dh -> 2d -> d with tanh
  // bounding. The map of endpoint u on edge (u,v) is mlp(x_u || x_v), the
  // other endpoint's map is the same mlp on the swapped concatenation.
  Matrix mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  Matrix epsilon;  // 1 x 1, present when use_epsilons
};

struct ModelParams {
  Matrix enc_w, enc_b;
  Matrix enc2_w, enc2_b;  // second_linear
  Matrix dec_w, dec_b;
  std::vector<LayerParams> layers;
};

// Calls fn(name, matrix) for every parameter tensor the config enables, in a
// fixed order. Drives the optimizer, checkpointing, and gradient checks.
void for_each_param(const ModelConfig& config, ModelParams& params,
                    const std::function<void(const std::string&, Matrix&)>& fn);

ModelParams init_params(const ModelConfig& config, int input_dim, int num_classes,
                        Rng& rng);

struct ForwardResult {
  ad::Tensor logits;                       // n x c
  std::vector<ad::Tensor> hidden_states;   // layers+1: embedding then each layer output
  std::vector<ad::Tensor> map_a, map_b;    // diag_snn: per layer, |E| x D diagonal entries
  // Leaf tensors of the parameters, named as in for_each_param and recorded
  // in the same order; the trainer reads gradients through these.
  std::vector<std::pair<std::string, ad::Tensor>> param_tensors;
};

// One trained network bound to a graph. Holds the fixed identity-sheaf
// Laplacian for ISN forward passes and exposes the learned per-layer
// operators for the spectral analysis.
class SheafModel {
 public:
  SheafModel(ModelConfig config, std::shared_ptr<const Graph> graph, int input_dim,
             int num_classes, Rng& rng);

  const ModelConfig& config() const { return config_; }
  const std::shared_ptr<const Graph>& graph() const { return graph_; }
  int input_dim() const { return input_dim_; }
  int num_classes() const { return num_classes_; }
  ModelParams& params() { return params_; }
  const ModelParams& params() const { return params_; }

  // The model's own fixed Laplacian (identity sheaf, augmented, configured
  // normalization). For diag_snn this is the operator of the frozen ablation.
  const BlockSparseOperator& fixed_laplacian() const { return laplacian_; }

  // rng is only consulted in training mode (dropout masks).
  ForwardResult forward(ad::Tape& tape, const Matrix& features, bool training,
                        Rng* rng) const;

  // Assembles the layer-local learned Laplacian from recorded map entries
  // (values of ForwardResult::map_a/map_b), with the configured mode.
  BlockSparseOperator learned_operator(const Matrix& map_a, const Matrix& map_b) const;

  int epochs_trained() const { return epochs_trained_; }
  void set_epochs_trained(int epochs) { epochs_trained_ = epochs; }

 private:
  int epochs_trained_ = 0;
  ModelConfig config_;
  std::shared_ptr<const Graph> graph_;
  int input_dim_;
  int num_classes_;
  ModelParams params_;
  BlockSparseOperator laplacian_;
};

// Decoupled-weight-decay Adam.
struct AdamState {
  Matrix m, v;
  long step = 0;
};

struct AdamOptions {
  double lr = 1e-2;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Throws std::runtime_error on non-finite gradients.
void adam_step(Matrix& param, const Matrix& grad, AdamState& state, const AdamOptions& opts);

// Argmax class per row; ties resolved to the lowest index.
std::vector<int> predict_classes(const Matrix& logits);
double accuracy(const Matrix& logits, const std::vector<int>& labels,
                const std::vector<int>& indices);

// Checkpoint file: u64 little-endian header length, JSON header
// {format, config, seed, epoch, manifest:[{name, rows, cols}]}, then the
// parameter blob as little-endian doubles in manifest order.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelParams& params, uint64_t seed, int epoch);

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  uint64_t seed = 0;
  int epoch = 0;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

// ModelConfig <-> JSON (shared by checkpoints, configs/, reports)
std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json_string(const std::string& text);

}  // namespace sheafnet::nn
