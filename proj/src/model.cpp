#include "fundmatch/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fundmatch/errors.hpp"
#include "fundmatch/rng.hpp"
#include "fundmatch/textio.hpp"

namespace fundmatch {

void ModelConfig::validate() const {
  if (text_dim < 1 || numeric_dim < 1 || categorical_dim < 1 || struct_dim < 1)
    throw DataError("model config: modality dims must be >= 1");
  if (attention_dim < 1 || attention_heads < 1)
    throw DataError("model config: attention dims must be >= 1");
  if (attention_dim % attention_heads != 0)
    throw DataError("model config: attention_dim must be divisible by attention_heads");
  if (lstm_hidden < 1 || classifier_hidden < 1)
    throw DataError("model config: hidden dims must be >= 1");
  if (!(prob_clamp > 0.0 && prob_clamp < 0.5))
    throw DataError("model config: prob_clamp must be in (0, 0.5)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw DataError("train config: learning_rate must be > 0");
  if (batch_size < 1) throw DataError("train config: batch_size must be >= 1");
  if (epochs < 1) throw DataError("train config: epochs must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0))
    throw DataError("train config: threshold must be in (0, 1)");
}

namespace {

nn::Tensor xavier(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  nn::Tensor t(rows, cols);
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (double& x : t.v) x = (2.0 * uniform01(rng) - 1.0) * a;
  return t;
}

}  // namespace

InclusionModel::InclusionModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(mix_seed(config_.init_seed, 0x4d4f44ULL));
  const std::size_t d = static_cast<std::size_t>(config_.attention_dim);
  const std::size_t df = static_cast<std::size_t>(config_.lstm_hidden);

  auto add_linear = [&](const std::string& prefix, std::size_t in, std::size_t out) {
    params_.add(prefix + ".w", xavier(in, out, rng));
    params_.add(prefix + ".b", nn::Tensor(1, out));
  };

  add_linear("embed.text", static_cast<std::size_t>(config_.text_dim), d);
  add_linear("embed.numeric", static_cast<std::size_t>(config_.numeric_dim), d);
  if (config_.categorical_trainable)
    params_.add("embed.categorical.table",
                xavier(static_cast<std::size_t>(config_.categorical_dim), d, rng));
  else
    add_linear("embed.categorical", static_cast<std::size_t>(config_.categorical_dim), d);
  add_linear("embed.structural", static_cast<std::size_t>(config_.struct_dim), d);
  add_linear("attn.q", d, d);
  add_linear("attn.k", d, d);
  add_linear("attn.v", d, d);
  add_linear("attn.out", d, d);
  add_linear("embed.fuse", d, static_cast<std::size_t>(kFusedDim));
  for (const char* gate : {"i", "f", "g", "o"}) {
    params_.add(std::string("lstm.") + gate + ".wx",
                xavier(static_cast<std::size_t>(kFusedDim), df, rng));
    params_.add(std::string("lstm.") + gate + ".wh", xavier(df, df, rng));
    nn::Tensor b(1, df);
    if (gate[0] == 'f') std::fill(b.v.begin(), b.v.end(), 1.0);  // open forget gate
    params_.add(std::string("lstm.") + gate + ".b", std::move(b));
  }
  add_linear("head.hidden", df + static_cast<std::size_t>(kFusedDim),
             static_cast<std::size_t>(config_.classifier_hidden));
  add_linear("head.out", static_cast<std::size_t>(config_.classifier_hidden), 1);
}

ForwardResult InclusionModel::forward(nn::Tape& tape, const BatchInput& input) const {
  const std::size_t n = input.company_count();
  if (n == 0) throw DataError("forward: batch has no companies");
  auto expect = [&](const nn::Tensor& t, int dim, const char* what) {
    if (t.rows != n || t.cols != static_cast<std::size_t>(dim))
      throw DataError(std::string("forward: ") + what + " matrix " + t.shape_string() +
                      " does not match configured (" + std::to_string(n) + " x " +
                      std::to_string(dim) + ")");
  };
  expect(input.text, config_.text_dim, "text");
  expect(input.numeric, config_.numeric_dim, "numeric");
  expect(input.categorical, config_.categorical_dim, "categorical");
  expect(input.structural, config_.struct_dim, "structural");

  ForwardResult result;
  result.param_vars.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i)
    result.param_vars.push_back(tape.leaf(params_.value(i)));
  auto p = [&](const std::string& name) { return result.param_vars[params_.index_of(name)]; };

  // Modality tokens: one projected row per company and modality.
  std::vector<nn::Var> tokens;
  tokens.push_back(tape.linear(tape.constant(input.text), p("embed.text.w"), p("embed.text.b")));
  tokens.push_back(
      tape.linear(tape.constant(input.numeric), p("embed.numeric.w"), p("embed.numeric.b")));
  if (config_.categorical_trainable) {
    // Embedding bag: mean of the active slots' table rows.
    nn::Tensor bag = input.categorical;
    for (std::size_t i = 0; i < bag.rows; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < bag.cols; ++j) sum += bag.at(i, j);
      if (sum > 0.0)
        for (std::size_t j = 0; j < bag.cols; ++j) bag.at(i, j) /= sum;
    }
    tokens.push_back(tape.matmul(tape.constant(std::move(bag)), p("embed.categorical.table")));
  } else {
    tokens.push_back(tape.linear(tape.constant(input.categorical), p("embed.categorical.w"),
                                 p("embed.categorical.b")));
  }
  tokens.push_back(
      tape.linear(tape.constant(input.structural), p("embed.structural.w"), p("embed.structural.b")));

  // One self-attention block over the four modality tokens, with residual.
  const std::size_t heads = static_cast<std::size_t>(config_.attention_heads);
  const std::size_t dh = static_cast<std::size_t>(config_.attention_dim) / heads;
  std::vector<nn::Var> q, k, v;
  for (nn::Var token : tokens) {
    q.push_back(tape.linear(token, p("attn.q.w"), p("attn.q.b")));
    k.push_back(tape.linear(token, p("attn.k.w"), p("attn.k.b")));
    v.push_back(tape.linear(token, p("attn.v.w"), p("attn.v.b")));
  }
  const std::size_t m_count = tokens.size();
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  // attended[m] collects per-head outputs for query token m.
  std::vector<std::vector<nn::Var>> attended(m_count);
  for (std::size_t h = 0; h < heads; ++h) {
    std::vector<nn::Var> qh, kh, vh;
    for (std::size_t m = 0; m < m_count; ++m) {
      qh.push_back(tape.slice_cols(q[m], h * dh, (h + 1) * dh));
      kh.push_back(tape.slice_cols(k[m], h * dh, (h + 1) * dh));
      vh.push_back(tape.slice_cols(v[m], h * dh, (h + 1) * dh));
    }
    for (std::size_t m = 0; m < m_count; ++m) {
      std::vector<nn::Var> scores;
      for (std::size_t m2 = 0; m2 < m_count; ++m2)
        scores.push_back(tape.rowwise_dot(qh[m], kh[m2]));
      nn::Var weights =
          tape.softmax(tape.scale(tape.concat(scores, 1), inv_sqrt_dh), 1);  // N x 4
      result.attention.push_back(weights);
      nn::Var mixed;
      for (std::size_t m2 = 0; m2 < m_count; ++m2) {
        nn::Var piece = tape.scale_rows(vh[m2], tape.slice_cols(weights, m2, m2 + 1));
        mixed = m2 == 0 ? piece : tape.add(mixed, piece);
      }
      attended[m].push_back(mixed);
    }
  }
  std::vector<nn::Var> fused_tokens;
  for (std::size_t m = 0; m < m_count; ++m) {
    nn::Var joined = tape.concat(attended[m], 1);  // heads side by side
    nn::Var projected = tape.linear(joined, p("attn.out.w"), p("attn.out.b"));
    fused_tokens.push_back(tape.add(tokens[m], projected));
  }
  nn::Var pooled = tape.mean_vars(fused_tokens);
  result.companies = tape.linear(pooled, p("embed.fuse.w"), p("embed.fuse.b"));

  if (input.fund_contexts.empty()) {
    if (!input.example_fund.empty()) throw DataError("forward: examples without fund contexts");
    return result;
  }

  // Packed LSTM over fund histories: funds sorted by length (desc), one step
  // processes the still-active prefix; rows retire into `pieces` as their
  // sequences end.
  const std::size_t m_funds = input.fund_contexts.size();
  std::vector<std::uint32_t> order(m_funds);
  for (std::size_t i = 0; i < m_funds; ++i) order[i] = static_cast<std::uint32_t>(i);
  for (std::size_t i = 0; i < m_funds; ++i) {
    const auto& ctx = input.fund_contexts[i];
    if (ctx.empty()) throw DataError("forward: fund " + std::to_string(i) + " has empty context");
    if (ctx.size() > static_cast<std::size_t>(kMaxSequence))
      throw DataError("forward: fund context length " + std::to_string(ctx.size()) +
                      " exceeds the maximum of " + std::to_string(kMaxSequence));
    for (std::uint32_t row : ctx)
      if (row >= n) throw DataError("forward: context row out of range");
  }
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return input.fund_contexts[a].size() > input.fund_contexts[b].size();
  });
  const std::size_t max_t = input.fund_contexts[order[0]].size();
  auto active_count = [&](std::size_t t) {
    std::size_t k_active = 0;
    while (k_active < m_funds && input.fund_contexts[order[k_active]].size() > t) ++k_active;
    return k_active;
  };

  const std::size_t df = static_cast<std::size_t>(config_.lstm_hidden);
  nn::Var hidden = tape.constant(nn::Tensor(active_count(0), df));
  nn::Var cell = tape.constant(nn::Tensor(active_count(0), df));
  std::vector<nn::Var> pieces;
  for (std::size_t t = 0; t < max_t; ++t) {
    const std::size_t k_active = active_count(t);
    std::vector<std::uint32_t> step_rows(k_active);
    for (std::size_t j = 0; j < k_active; ++j) {
      const auto& ctx = input.fund_contexts[order[j]];
      // oldest-first by default; the flag flips consumption order
      step_rows[j] = config_.lstm_oldest_first ? ctx[t] : ctx[ctx.size() - 1 - t];
    }
    nn::Var x = tape.gather_rows(result.companies, std::move(step_rows));
    auto gate = [&](const char* name) {
      const std::string base = std::string("lstm.") + name;
      return tape.add_row(tape.add(tape.matmul(x, p(base + ".wx")),
                                   tape.matmul(hidden, p(base + ".wh"))),
                          p(base + ".b"));
    };
    nn::Var gi = tape.sigmoid(gate("i"));
    nn::Var gf = tape.sigmoid(gate("f"));
    nn::Var gg = tape.tanh(gate("g"));
    nn::Var go = tape.sigmoid(gate("o"));
    cell = tape.add(tape.mul(gf, cell), tape.mul(gi, gg));
    hidden = tape.mul(go, tape.tanh(cell));

    const std::size_t k_next = t + 1 < max_t ? active_count(t + 1) : 0;
    if (k_next < k_active) pieces.push_back(tape.slice_rows(hidden, k_next, k_active));
    if (k_next > 0 && k_next < k_active) {
      hidden = tape.slice_rows(hidden, 0, k_next);
      cell = tape.slice_rows(cell, 0, k_next);
    }
  }
  std::reverse(pieces.begin(), pieces.end());  // back to sorted fund order
  nn::Var funds_sorted = pieces.size() == 1 ? pieces[0] : tape.concat(pieces, 0);
  std::vector<std::uint32_t> sorted_pos(m_funds);
  for (std::size_t j = 0; j < m_funds; ++j) sorted_pos[order[j]] = static_cast<std::uint32_t>(j);
  result.funds = tape.gather_rows(funds_sorted, std::move(sorted_pos));

  if (input.example_fund.empty()) return result;
  if (input.example_fund.size() != input.example_company.size())
    throw DataError("forward: example fund/company lists differ in length");
  for (std::uint32_t f : input.example_fund)
    if (f >= m_funds) throw DataError("forward: example fund index out of range");
  for (std::uint32_t c : input.example_company)
    if (c >= n) throw DataError("forward: example company index out of range");

  nn::Var fund_rows = tape.gather_rows(*result.funds, input.example_fund);
  nn::Var company_rows = tape.gather_rows(result.companies, input.example_company);
  nn::Var joint = tape.concat({fund_rows, company_rows}, 1);
  nn::Var hidden_act =
      tape.tanh(tape.linear(joint, p("head.hidden.w"), p("head.hidden.b")));
  nn::Var logit = tape.linear(hidden_act, p("head.out.w"), p("head.out.b"));
  result.probs = tape.clamp(tape.sigmoid(logit), config_.prob_clamp, 1.0 - config_.prob_clamp);

  if (!input.labels.empty()) {
    if (input.labels.size() != input.example_fund.size())
      throw DataError("forward: label count does not match example count");
    result.loss = tape.mean_pool(tape.bce_each(*result.probs, input.labels), 0);
  }
  return result;
}

void InclusionModel::accumulate_grads(const nn::Tape& tape, const ForwardResult& result) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!tape.has_grad(result.param_vars[i])) continue;
    const nn::Tensor& g = tape.grad(result.param_vars[i]);
    nn::Tensor& acc = params_.grad(i);
    for (std::size_t k2 = 0; k2 < g.v.size(); ++k2) acc.v[k2] += g.v[k2];
  }
}

void InclusionModel::check_bundle(const ModalBundle& bundle) const {
  if (bundle.text_vec.size() != static_cast<std::size_t>(config_.text_dim) ||
      bundle.num_vec.size() != static_cast<std::size_t>(config_.numeric_dim) ||
      bundle.cat_vec.size() != static_cast<std::size_t>(config_.categorical_dim) ||
      bundle.struct_vec.size() != static_cast<std::size_t>(config_.struct_dim))
    throw DataError("bundle dimensions do not match the model configuration");
}

namespace {

void fill_row(nn::Tensor& t, std::size_t row, const std::vector<double>& values) {
  std::copy(values.begin(), values.end(), t.row_ptr(row));
}

BatchInput stack_bundles(const std::vector<const ModalBundle*>& bundles) {
  BatchInput input;
  const std::size_t n = bundles.size();
  input.text = nn::Tensor(n, bundles[0]->text_vec.size());
  input.numeric = nn::Tensor(n, bundles[0]->num_vec.size());
  input.categorical = nn::Tensor(n, bundles[0]->cat_vec.size());
  input.structural = nn::Tensor(n, bundles[0]->struct_vec.size());
  for (std::size_t i = 0; i < n; ++i) {
    fill_row(input.text, i, bundles[i]->text_vec);
    fill_row(input.numeric, i, bundles[i]->num_vec);
    fill_row(input.categorical, i, bundles[i]->cat_vec);
    fill_row(input.structural, i, bundles[i]->struct_vec);
  }
  return input;
}

}  // namespace

BatchInput InclusionModel::single_company_input(const ModalBundle& bundle) const {
  check_bundle(bundle);
  return stack_bundles({&bundle});
}

std::vector<double> InclusionModel::embed_company(const ModalBundle& bundle) const {
  nn::Tape tape;
  auto result = forward(tape, single_company_input(bundle));
  return tape.value(result.companies).v;
}

std::vector<double> InclusionModel::encode_fund(const std::vector<ModalBundle>& sequence) const {
  if (sequence.empty()) throw DataError("encode_fund: empty sequence (fund has no history)");
  if (sequence.size() > static_cast<std::size_t>(kMaxSequence))
    throw DataError("encode_fund: sequence length " + std::to_string(sequence.size()) +
                    " exceeds the maximum of " + std::to_string(kMaxSequence));
  std::vector<const ModalBundle*> ptrs;
  for (const auto& b : sequence) {
    check_bundle(b);
    ptrs.push_back(&b);
  }
  BatchInput input = stack_bundles(ptrs);
  input.fund_contexts.push_back({});
  for (std::uint32_t i = 0; i < sequence.size(); ++i) input.fund_contexts[0].push_back(i);
  nn::Tape tape;
  auto result = forward(tape, input);
  return tape.value(*result.funds).v;
}

double InclusionModel::predict(const std::vector<ModalBundle>& context,
                               const ModalBundle& candidate) const {
  if (context.empty()) throw DataError("predict: empty fund context");
  std::vector<const ModalBundle*> ptrs;
  for (const auto& b : context) {
    check_bundle(b);
    ptrs.push_back(&b);
  }
  check_bundle(candidate);
  ptrs.push_back(&candidate);
  BatchInput input = stack_bundles(ptrs);
  input.fund_contexts.push_back({});
  for (std::uint32_t i = 0; i + 1 < ptrs.size(); ++i) input.fund_contexts[0].push_back(i);
  input.example_fund = {0};
  input.example_company = {static_cast<std::uint32_t>(ptrs.size() - 1)};
  nn::Tape tape;
  auto result = forward(tape, input);
  return tape.value(*result.probs).v[0];
}

std::vector<nn::Tensor> InclusionModel::snapshot_params() const {
  std::vector<nn::Tensor> out;
  out.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) out.push_back(params_.value(i));
  return out;
}

void InclusionModel::restore_params(const std::vector<nn::Tensor>& values) {
  if (values.size() != params_.size())
    throw DataError("restore_params: snapshot has wrong parameter count");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!values[i].same_shape(params_.value(i)))
      throw DataError("restore_params: shape mismatch for " + params_.name(i));
    params_.value(i) = values[i];
  }
}

double bce_loss(double prob, double label) {
  if (label != 0.0 && label != 1.0)
    throw DataError("bce_loss: label " + format_double(label) + " not in {0, 1}");
  if (!(prob > 0.0 && prob < 1.0))
    throw DataError("bce_loss: probability " + format_double(prob) + " outside (0, 1)");
  return label > 0.5 ? -std::log(prob) : -std::log(1.0 - prob);
}

double bce_loss(const std::vector<double>& probs, const std::vector<double>& labels) {
  if (probs.empty() || probs.size() != labels.size())
    throw DataError("bce_loss: probs/labels length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) sum += bce_loss(probs[i], labels[i]);
  return sum / static_cast<double>(probs.size());
}

BatchCompiler::BatchCompiler(const RecordSet* records,
                             std::map<int, std::shared_ptr<const BundleAssembler>> assemblers)
    : records_(records), assemblers_(std::move(assemblers)) {
  if (!records_) throw DataError("batch compiler: null record set");
  if (assemblers_.empty()) throw DataError("batch compiler: no assemblers");
}

const BundleAssembler& BatchCompiler::assembler(int cutoff) const {
  auto it = assemblers_.find(cutoff);
  if (it == assemblers_.end())
    throw DataError("batch compiler: no assembler for cutoff " + std::to_string(cutoff));
  return *it->second;
}

const ModalBundle& BatchCompiler::bundle(int cutoff, const std::string& startup_key) const {
  auto key = std::make_pair(cutoff, startup_key);
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  ModalBundle b = assembler(cutoff).assemble(*records_, startup_key, cutoff);
  return cache_.emplace(std::move(key), std::move(b)).first->second;
}

BatchInput BatchCompiler::compile(const LabeledExample* examples, std::size_t count) const {
  if (count == 0) throw DataError("batch compiler: empty batch");
  std::map<std::pair<int, std::string>, std::uint32_t> company_rows;
  std::vector<const ModalBundle*> bundles;
  auto company_row = [&](int cutoff, const std::string& key) {
    auto [it, inserted] =
        company_rows.emplace(std::make_pair(cutoff, key), static_cast<std::uint32_t>(bundles.size()));
    if (inserted) bundles.push_back(&bundle(cutoff, key));
    return it->second;
  };

  BatchInput input;
  std::map<std::pair<int, std::string>, std::uint32_t> fund_index;
  for (std::size_t e = 0; e < count; ++e) {
    const LabeledExample& ex = examples[e];
    if (ex.context.empty())
      throw DataError("batch compiler: example for fund " + ex.fund + " has empty context");
    auto fund_key = std::make_pair(ex.cutoff, ex.fund);
    auto [fit, fresh] = fund_index.emplace(
        fund_key, static_cast<std::uint32_t>(input.fund_contexts.size()));
    if (fresh) {
      std::vector<std::uint32_t> rows;
      rows.reserve(ex.context.size());
      for (const auto& s : ex.context) rows.push_back(company_row(ex.cutoff, s));
      input.fund_contexts.push_back(std::move(rows));
    }
    input.example_fund.push_back(fit->second);
    input.example_company.push_back(company_row(ex.cutoff, ex.candidate));
    input.labels.push_back(static_cast<double>(ex.label));
  }
  BatchInput stacked = stack_bundles(bundles);
  stacked.fund_contexts = std::move(input.fund_contexts);
  stacked.example_fund = std::move(input.example_fund);
  stacked.example_company = std::move(input.example_company);
  stacked.labels = std::move(input.labels);
  return stacked;
}

namespace {

struct EvalPass {
  std::vector<double> probs;
  double mean_loss = 0.0;
};

EvalPass run_eval(const InclusionModel& model, const BatchCompiler& compiler,
                  const std::vector<LabeledExample>& examples, int batch_size, bool with_loss) {
  EvalPass pass;
  pass.probs.reserve(examples.size());
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < examples.size();
       start += static_cast<std::size_t>(batch_size)) {
    const std::size_t n = std::min<std::size_t>(batch_size, examples.size() - start);
    BatchInput input = compiler.compile(examples.data() + start, n);
    if (!with_loss) input.labels.clear();
    nn::Tape tape;
    auto fwd = model.forward(tape, input);
    const nn::Tensor& probs = tape.value(*fwd.probs);
    pass.probs.insert(pass.probs.end(), probs.v.begin(), probs.v.end());
    if (with_loss) loss_sum += tape.value(*fwd.loss).v[0] * static_cast<double>(n);
  }
  if (with_loss && !examples.empty()) pass.mean_loss = loss_sum / static_cast<double>(examples.size());
  return pass;
}

}  // namespace

TrainResult train(InclusionModel& model, const BatchCompiler& compiler,
                  const std::vector<LabeledExample>& train_set,
                  const std::vector<LabeledExample>& val_set, const TrainConfig& config) {
  config.validate();
  if (train_set.empty() || val_set.empty())
    throw DataError("train: train and validation sets must be non-empty");

  nn::AdamConfig adam_config;
  adam_config.learning_rate = config.learning_rate;
  adam_config.beta1 = config.adam_beta1;
  adam_config.beta2 = config.adam_beta2;
  adam_config.epsilon = config.adam_epsilon;
  nn::Adam adam(adam_config);

  TrainResult result;
  std::vector<nn::Tensor> best;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<LabeledExample> batch;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = uniform_below(rng, i);
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    std::vector<double> train_probs(train_set.size());
    std::vector<double> train_labels(train_set.size());
    std::size_t cursor = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size), ++batch_index) {
      const std::size_t n = std::min<std::size_t>(config.batch_size, order.size() - start);
      batch.clear();
      for (std::size_t i = 0; i < n; ++i) batch.push_back(train_set[order[start + i]]);
      try {
        BatchInput input = compiler.compile(batch.data(), batch.size());
        nn::Tape tape;
        auto fwd = model.forward(tape, input);
        tape.backward(*fwd.loss);
        model.params().zero_grads();
        model.accumulate_grads(tape, fwd);
        adam.step(model.params());
        loss_sum += tape.value(*fwd.loss).v[0] * static_cast<double>(n);
        const nn::Tensor& probs = tape.value(*fwd.probs);
        for (std::size_t i = 0; i < n; ++i) {
          train_probs[cursor] = probs.v[i];
          train_labels[cursor] = input.labels[i];
          ++cursor;
        }
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(batch_index) + " (" + std::to_string(n) +
                           " examples): " + e.what());
      }
    }

    auto train_metrics = compute_metrics(train_probs, train_labels, config.threshold);
    result.history.push_back({epoch, "train", loss_sum / static_cast<double>(train_set.size()),
                              train_metrics.precision, train_metrics.recall, train_metrics.f1});

    auto val_pass = run_eval(model, compiler, val_set, config.batch_size, true);
    std::vector<double> val_labels(val_set.size());
    for (std::size_t i = 0; i < val_set.size(); ++i)
      val_labels[i] = static_cast<double>(val_set[i].label);
    auto val_metrics = compute_metrics(val_pass.probs, val_labels, config.threshold);
    result.history.push_back({epoch, "val", val_pass.mean_loss, val_metrics.precision,
                              val_metrics.recall, val_metrics.f1});

    if (config.verbose)
      std::fprintf(stderr, "epoch %d train_loss %.4f val_loss %.4f val_f1 %.4f\n", epoch,
                   result.history[result.history.size() - 2].loss, val_pass.mean_loss,
                   val_metrics.f1);

    if (best.empty() || val_metrics.f1 > result.best_val_f1) {
      result.best_val_f1 = val_metrics.f1;
      result.best_epoch = epoch;
      best = model.snapshot_params();
    }
  }
  model.restore_params(best);
  return result;
}

std::vector<double> predict_all(const InclusionModel& model, const BatchCompiler& compiler,
                                const std::vector<LabeledExample>& examples, int batch_size) {
  if (examples.empty()) return {};
  return run_eval(model, compiler, examples, batch_size, false).probs;
}

std::string write_history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,split,loss,precision,recall,f1\n";
  for (const auto& row : history) {
    out += std::to_string(row.epoch) + "," + row.split + "," + format_double(row.loss) + "," +
           format_double(row.precision) + "," + format_double(row.recall) + "," +
           format_double(row.f1) + "\n";
  }
  return out;
}

}  // namespace fundmatch
