#pragma once
// Knowledge-grounded response generation: a single-layer recurrent decoder
// with dot-product attention over encoder states, and a pointer-generator
// output layer that mixes the vocabulary distribution with the attention
// distribution so source-only words (entity names in particular) can be
// copied verbatim.
//
// Decode step, per target position t:
//   s_t      = tanh(W_dec [s_{t-1}; emb(y_{t-1})])
//   a^t      = softmax_i(s_t . h_i)
//   h*_t     = sum_i a^t_i h_i
//   p_gen    = sigmoid(w_ptr [h*_t; s_t] + b_ptr)
//   P_vocab  = softmax(W_vocab [s_t; h*_t])
//   P(w)     = p_gen P_vocab(w) + (1 - p_gen) sum_{i: w_i = w} a^t_i
// Encoder states are token embedding plus position embedding.

#include <optional>
#include <string>
#include <vector>

#include "kgdialog/corpus.hpp"
#include "kgdialog/neural.hpp"

namespace kgdialog::generator {

struct Seq2SeqParams {
  neural::Vocab vocab;
  neural::Tensor embedding;  // [V x d], shared by encoder and decoder
  neural::Tensor pos;        // [P x d] encoder position embeddings
  neural::Tensor dec_w;      // [d x 2d]
  neural::Tensor vocab_w;    // [V x 2d]
  neural::Tensor ptr_w;      // [2d]
  neural::Tensor ptr_b;      // scalar
  bool use_pointer = true;   // false: vanilla seq2seq (P(w) = P_vocab(w))

  std::size_t dim() const { return dec_w.rows(); }
  std::size_t max_positions() const { return pos.rows(); }
  static Seq2SeqParams init(neural::Vocab vocab, std::size_t dim,
                            std::size_t max_positions, neural::Rng& rng);
  std::vector<std::pair<std::string, neural::Tensor*>> parameters();
};

// Source sequence with per-example extended-vocabulary ids: tokens outside
// the vocabulary get ids V, V+1, ... in first-occurrence order so they can
// be supervised and emitted through the copy path.
struct GenInput {
  std::vector<std::string> tokens;     // source surface forms
  std::vector<std::size_t> ids;        // vocab id, or extended id >= V
  std::vector<std::string> oov_tokens; // extended id V+i <-> oov_tokens[i]

  std::size_t extended_size(std::size_t vocab_size) const {
    return vocab_size + oov_tokens.size();
  }
};

// last two utterances | SEP | question | SEP | answer | SEP | domain | SEP |
// entity name (domain name when the entity has none).
GenInput build_gen_input(const corpus::Dialog& dialog,
                         const corpus::Snippet& snippet,
                         const neural::Vocab& vocab);

// Target-side id for a response token: vocab id when known, the matching
// extended id when the token occurs in the source, nullopt otherwise
// (such tokens cannot be supervised).
std::optional<std::size_t> target_id(const std::string& token,
                                     const GenInput& input,
                                     const neural::Vocab& vocab);

// Tape handles for one forward pass.
struct GenVars {
  neural::Tape::Var embedding, pos, dec_w, vocab_w, ptr_w, ptr_b;
};
GenVars lift(neural::Tape& tape, const Seq2SeqParams& params);

// Encoder states H [L x d]; extended ids fall back to the UNK embedding.
neural::Tape::Var encode_source(neural::Tape& tape, const GenVars& vars,
                                const Seq2SeqParams& params,
                                const GenInput& input);

struct StepVars {
  neural::Tape::Var state;    // s_t [d]
  neural::Tape::Var attn;     // a^t [L]
  neural::Tape::Var p_gen;    // scalar
  neural::Tape::Var p_vocab;  // [V]
};

StepVars decode_step(neural::Tape& tape, const GenVars& vars,
                     const Seq2SeqParams& params, neural::Tape::Var enc_states,
                     neural::Tape::Var prev_state, std::size_t prev_token_id);

// P(target) under the mixture, differentiable. The copy term sums attention
// over source positions whose id equals the target id.
neural::Tape::Var mixture_probability(neural::Tape& tape, const StepVars& step,
                                      const Seq2SeqParams& params,
                                      const GenInput& input,
                                      std::size_t target);

// Full distribution over the extended vocabulary from raw step outputs;
// p_gen may be forced for the endpoint identities.
std::vector<double> mixture_distribution(const std::vector<double>& p_vocab,
                                         const std::vector<double>& attn,
                                         double p_gen, const GenInput& input,
                                         std::size_t vocab_size);

struct GeneratorExample {
  corpus::Dialog dialog;
  corpus::Snippet snippet;
  std::string response;
};

struct GeneratorConfig {
  std::size_t dim = 64;
  std::size_t max_positions = 256;
  std::size_t vocab_min_freq = 1;
  std::size_t vocab_max_size = 0;
  bool use_pointer = true;
};

// Teacher-forced NLL of the gold response under the mixture distribution;
// examples whose responses contain no supervisable token are skipped.
// Returns the final-epoch parameters; mean per-token NLL per epoch is
// appended to nll_trace when given.
Seq2SeqParams train_generator(const std::vector<GeneratorExample>& examples,
                              const GeneratorConfig& gen_cfg,
                              const neural::TrainConfig& train_cfg,
                              std::vector<double>* nll_trace = nullptr);

// Argmax decoding (ties to the lowest id) until EOS or max_len tokens;
// extended ids render as their source surface strings.
std::string greedy_decode(const Seq2SeqParams& params, const GenInput& input,
                          std::size_t max_len = 64);

// Mean per-token NLL of the gold responses under the model.
double mean_token_nll(const Seq2SeqParams& params,
                      const std::vector<GeneratorExample>& examples);

}  // namespace kgdialog::generator
