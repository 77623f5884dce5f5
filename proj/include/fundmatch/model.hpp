#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fundmatch/dataset.hpp"
#include "fundmatch/eval.hpp"
#include "fundmatch/features.hpp"
#include "fundmatch/nn.hpp"

namespace fundmatch {

// Width of the fused company embedding. Fixed by the model contract.
inline constexpr int kFusedDim = 256;
// Longest fund history the encoder accepts.
inline constexpr int kMaxSequence = 15;

struct ModelConfig {
  int text_dim = 256;
  int numeric_dim = 3;
  int categorical_dim = 0;  // set from the fitted vocabulary
  int struct_dim = 128;
  int attention_dim = 256;  // width of each projected modality token
  int attention_heads = 4;
  int lstm_hidden = 256;
  int classifier_hidden = 128;
  double prob_clamp = 1e-7;
  bool lstm_oldest_first = true;  // feed histories oldest -> newest
  bool categorical_trainable = false;  // embedding-bag instead of multi-hot projection
  std::uint64_t init_seed = 1;

  void validate() const;
};

// One compiled batch. Companies appearing anywhere in the batch are stacked
// once into the four modality matrices; contexts and examples refer to rows.
struct BatchInput {
  nn::Tensor text, numeric, categorical, structural;       // N x dim each
  std::vector<std::vector<std::uint32_t>> fund_contexts;   // per fund, oldest first
  std::vector<std::uint32_t> example_fund;                 // index into fund_contexts
  std::vector<std::uint32_t> example_company;              // index into company rows
  std::vector<double> labels;                              // empty for unlabeled batches

  std::size_t company_count() const { return text.rows; }
};

struct ForwardResult {
  nn::Var companies;                 // N x 256 fused embeddings
  std::optional<nn::Var> funds;      // M x lstm_hidden
  std::optional<nn::Var> probs;      // B x 1, clamped into (0, 1)
  std::optional<nn::Var> loss;       // scalar mean BCE, present when labels are
  std::vector<nn::Var> attention;    // one (N x 4) softmax per (head, query token)
  std::vector<nn::Var> param_vars;   // leaf per parameter, store order
};

// The Fig.-style architecture: per-modality linear projections, one
// residual multi-head self-attention block over the four modality tokens,
// token mean-pool and a linear map to the 256-d company embedding; an LSTM
// over each fund's context embeddings; and an MLP compatibility head on
// [fund ; candidate].
class InclusionModel {
public:
  explicit InclusionModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  ForwardResult forward(nn::Tape& tape, const BatchInput& input) const;
  // params.grad += tape gradients of this forward's leaves.
  void accumulate_grads(const nn::Tape& tape, const ForwardResult& result);

  // Single-item conveniences (tests, predict command).
  std::vector<double> embed_company(const ModalBundle& bundle) const;
  // Sequence length must be 1..15; bundles are context companies oldest first.
  std::vector<double> encode_fund(const std::vector<ModalBundle>& sequence) const;
  double predict(const std::vector<ModalBundle>& context, const ModalBundle& candidate) const;

  std::vector<nn::Tensor> snapshot_params() const;
  void restore_params(const std::vector<nn::Tensor>& values);

private:
  BatchInput single_company_input(const ModalBundle& bundle) const;
  void check_bundle(const ModalBundle& bundle) const;

  ModelConfig config_;
  nn::ParamStore params_;
};

// Scalar binary cross-entropy; label must be 0 or 1, prob inside (0, 1).
double bce_loss(double prob, double label);
// Mean over a batch.
double bce_loss(const std::vector<double>& probs, const std::vector<double>& labels);

// Lazily turns labeled examples into stacked batches. Bundles are cached per
// (cutoff, startup); the bundle year is the example's cutoff.
class BatchCompiler {
public:
  BatchCompiler(const RecordSet* records,
                std::map<int, std::shared_ptr<const BundleAssembler>> assemblers);

  BatchInput compile(const LabeledExample* examples, std::size_t count) const;
  const ModalBundle& bundle(int cutoff, const std::string& startup_key) const;
  const BundleAssembler& assembler(int cutoff) const;

private:
  const RecordSet* records_;
  std::map<int, std::shared_ptr<const BundleAssembler>> assemblers_;
  mutable std::map<std::pair<int, std::string>, ModalBundle> cache_;
};

struct TrainConfig {
  double learning_rate = 1e-5;
  int batch_size = 32;
  int epochs = 10;
  std::uint64_t seed = 1;
  double threshold = 0.5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  bool verbose = false;  // epoch lines to stderr

  void validate() const;
};

struct TrainResult {
  std::vector<EpochRecord> history;  // train and val rows per epoch
  int best_epoch = 0;
  double best_val_f1 = 0.0;
};

// End-to-end training with per-epoch metrics; the model is left holding the
// parameters of the best validation-F1 epoch. Deterministic given the seed.
TrainResult train(InclusionModel& model, const BatchCompiler& compiler,
                  const std::vector<LabeledExample>& train_set,
                  const std::vector<LabeledExample>& val_set, const TrainConfig& config);

// Forward-only predictions in example order.
std::vector<double> predict_all(const InclusionModel& model, const BatchCompiler& compiler,
                                const std::vector<LabeledExample>& examples, int batch_size = 64);

// CSV: epoch,split,loss,precision,recall,f1
std::string write_history_csv(const std::vector<EpochRecord>& history);

}  // namespace fundmatch
