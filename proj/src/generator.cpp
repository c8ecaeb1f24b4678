#include "kgdialog/generator.hpp"

#include <algorithm>
#include <stdexcept>

namespace kgdialog::generator {

using neural::Tape;
using neural::Tensor;
using neural::Vocab;

Seq2SeqParams Seq2SeqParams::init(Vocab vocab, std::size_t dim,
                                  std::size_t max_positions,
                                  neural::Rng& rng) {
  Seq2SeqParams params;
  params.embedding = neural::random_tensor({vocab.size(), dim}, rng);
  params.pos = neural::random_tensor({max_positions, dim}, rng);
  params.dec_w = neural::random_tensor({dim, 2 * dim}, rng);
  params.vocab_w = neural::random_tensor({vocab.size(), 2 * dim}, rng);
  params.ptr_w = neural::random_tensor({2 * dim}, rng);
  params.ptr_b = Tensor::scalar(0.0);
  params.vocab = std::move(vocab);
  return params;
}

std::vector<std::pair<std::string, Tensor*>> Seq2SeqParams::parameters() {
  return {{"embedding", &embedding}, {"pos", &pos},
          {"dec_w", &dec_w},         {"vocab_w", &vocab_w},
          {"ptr_w", &ptr_w},         {"ptr_b", &ptr_b}};
}

namespace {

const std::string kSepToken = "<sep>";

void append_segment(std::vector<std::string>& dst,
                    const textproc::TokenSeq& segment) {
  dst.push_back(kSepToken);
  dst.insert(dst.end(), segment.begin(), segment.end());
}

}  // namespace

GenInput build_gen_input(const corpus::Dialog& dialog,
                         const corpus::Snippet& snippet,
                         const Vocab& vocab) {
  if (dialog.turns.empty()) {
    throw std::invalid_argument("build_gen_input: dialog has no turns");
  }
  std::vector<std::string> tokens;
  const std::size_t first =
      dialog.turns.size() >= 2 ? dialog.turns.size() - 2 : 0;
  for (std::size_t i = first; i < dialog.turns.size(); ++i) {
    const textproc::TokenSeq utt = textproc::tokenize(dialog.turns[i].text);
    if (i == first) {
      tokens.insert(tokens.end(), utt.begin(), utt.end());
    } else {
      append_segment(tokens, utt);
    }
  }
  append_segment(tokens, textproc::tokenize(snippet.question));
  append_segment(tokens, textproc::tokenize(snippet.answer));
  append_segment(tokens, textproc::tokenize(snippet.ref.domain));
  const std::string entity =
      snippet.entity_name.value_or(snippet.ref.domain);
  append_segment(tokens, textproc::tokenize(entity));

  GenInput input;
  input.tokens = std::move(tokens);
  input.ids.reserve(input.tokens.size());
  for (const std::string& tok : input.tokens) {
    if (vocab.contains(tok)) {
      input.ids.push_back(vocab.id(tok));
      continue;
    }
    // First occurrence assigns the next extended id; repeats reuse it.
    std::size_t oov_index = input.oov_tokens.size();
    for (std::size_t i = 0; i < input.oov_tokens.size(); ++i) {
      if (input.oov_tokens[i] == tok) {
        oov_index = i;
        break;
      }
    }
    if (oov_index == input.oov_tokens.size()) input.oov_tokens.push_back(tok);
    input.ids.push_back(vocab.size() + oov_index);
  }
  return input;
}

std::optional<std::size_t> target_id(const std::string& token,
                                     const GenInput& input,
                                     const Vocab& vocab) {
  if (vocab.contains(token)) return vocab.id(token);
  for (std::size_t i = 0; i < input.oov_tokens.size(); ++i) {
    if (input.oov_tokens[i] == token) return vocab.size() + i;
  }
  return std::nullopt;
}

GenVars lift(Tape& tape, const Seq2SeqParams& params) {
  return GenVars{tape.leaf(params.embedding), tape.leaf(params.pos),
                 tape.leaf(params.dec_w),     tape.leaf(params.vocab_w),
                 tape.leaf(params.ptr_w),     tape.leaf(params.ptr_b)};
}

Tape::Var encode_source(Tape& tape, const GenVars& vars,
                        const Seq2SeqParams& params, const GenInput& input) {
  if (input.ids.empty()) {
    throw std::invalid_argument("encode_source: empty source");
  }
  const std::size_t vocab_size = params.vocab.size();
  const std::size_t max_pos = params.max_positions();
  std::vector<std::size_t> token_rows, pos_rows;
  token_rows.reserve(input.ids.size());
  pos_rows.reserve(input.ids.size());
  for (std::size_t i = 0; i < input.ids.size(); ++i) {
    token_rows.push_back(input.ids[i] < vocab_size ? input.ids[i]
                                                   : Vocab::kUnk);
    pos_rows.push_back(std::min(i, max_pos - 1));
  }
  return tape.add_rows(vars.embedding, std::move(token_rows), vars.pos,
                       std::move(pos_rows));
}

StepVars decode_step(Tape& tape, const GenVars& vars,
                     const Seq2SeqParams& params, Tape::Var enc_states,
                     Tape::Var prev_state, std::size_t prev_token_id) {
  const std::size_t vocab_size = params.vocab.size();
  const std::size_t prev_row =
      prev_token_id < vocab_size ? prev_token_id : Vocab::kUnk;
  Tape::Var prev_emb = tape.row(vars.embedding, prev_row);
  Tape::Var state =
      tape.tanh(tape.matvec(vars.dec_w, tape.concat(prev_state, prev_emb)));
  Tape::Var scores = tape.matvec(enc_states, state);
  Tape::Var attn = tape.softmax(scores);
  Tape::Var context = tape.matvec_transposed(enc_states, attn);
  Tape::Var p_gen = tape.sigmoid(
      tape.add(tape.dot(vars.ptr_w, tape.concat(context, state)),
               vars.ptr_b));
  Tape::Var p_vocab =
      tape.softmax(tape.matvec(vars.vocab_w, tape.concat(state, context)));
  return StepVars{state, attn, p_gen, p_vocab};
}

Tape::Var mixture_probability(Tape& tape, const StepVars& step,
                              const Seq2SeqParams& params,
                              const GenInput& input, std::size_t target) {
  const std::size_t vocab_size = params.vocab.size();
  if (!params.use_pointer) {
    if (target >= vocab_size) {
      throw std::invalid_argument(
          "mixture_probability: extended id without pointer path");
    }
    return tape.pick(step.p_vocab, target);
  }
  std::vector<std::size_t> copy_positions;
  for (std::size_t i = 0; i < input.ids.size(); ++i) {
    if (input.ids[i] == target) copy_positions.push_back(i);
  }
  Tape::Var copy_weight = tape.add_const(tape.neg(step.p_gen), 1.0);
  if (target < vocab_size) {
    Tape::Var gen_term =
        tape.mul(step.p_gen, tape.pick(step.p_vocab, target));
    if (copy_positions.empty()) return gen_term;
    Tape::Var copy_term = tape.mul(
        copy_weight, tape.pick_sum(step.attn, std::move(copy_positions)));
    return tape.add(gen_term, copy_term);
  }
  if (copy_positions.empty()) {
    throw std::invalid_argument(
        "mixture_probability: extended id absent from source");
  }
  return tape.mul(copy_weight,
                  tape.pick_sum(step.attn, std::move(copy_positions)));
}

std::vector<double> mixture_distribution(const std::vector<double>& p_vocab,
                                         const std::vector<double>& attn,
                                         double p_gen, const GenInput& input,
                                         std::size_t vocab_size) {
  if (attn.size() != input.ids.size()) {
    throw std::invalid_argument("mixture_distribution: attention/source mismatch");
  }
  std::vector<double> out(input.extended_size(vocab_size), 0.0);
  for (std::size_t w = 0; w < p_vocab.size(); ++w) {
    out[w] = p_gen * p_vocab[w];
  }
  const double copy_weight = 1.0 - p_gen;
  for (std::size_t i = 0; i < input.ids.size(); ++i) {
    out[input.ids[i]] += copy_weight * attn[i];
  }
  return out;
}

namespace {

struct PreparedExample {
  GenInput input;
  std::vector<std::size_t> targets;  // supervisable ids, EOS-terminated
};

std::vector<std::size_t> supervisable_targets(const std::string& response,
                                              const GenInput& input,
                                              const Vocab& vocab) {
  std::vector<std::size_t> out;
  for (const std::string& tok : textproc::tokenize(response)) {
    const std::optional<std::size_t> id = target_id(tok, input, vocab);
    if (id.has_value() && *id != Vocab::kUnk) out.push_back(*id);
  }
  if (!out.empty()) out.push_back(Vocab::kEos);
  return out;
}

}  // namespace

Seq2SeqParams train_generator(const std::vector<GeneratorExample>& examples,
                              const GeneratorConfig& gen_cfg,
                              const neural::TrainConfig& train_cfg,
                              std::vector<double>* nll_trace) {
  if (examples.empty()) {
    throw std::invalid_argument("train_generator: no examples");
  }
  std::vector<textproc::TokenSeq> docs;
  for (const GeneratorExample& ex : examples) {
    for (const corpus::Turn& turn : ex.dialog.turns) {
      docs.push_back(textproc::tokenize(turn.text));
    }
    docs.push_back(textproc::tokenize(ex.snippet.question));
    docs.push_back(textproc::tokenize(ex.snippet.answer));
    docs.push_back(textproc::tokenize(ex.snippet.ref.domain));
    if (ex.snippet.entity_name.has_value()) {
      docs.push_back(textproc::tokenize(*ex.snippet.entity_name));
    }
    docs.push_back(textproc::tokenize(ex.response));
  }
  Vocab vocab =
      Vocab::build(docs, gen_cfg.vocab_min_freq, gen_cfg.vocab_max_size);

  neural::Rng rng(train_cfg.seed);
  Seq2SeqParams params = Seq2SeqParams::init(
      std::move(vocab), gen_cfg.dim, gen_cfg.max_positions, rng);
  params.use_pointer = gen_cfg.use_pointer;

  std::vector<PreparedExample> prepared;
  for (const GeneratorExample& ex : examples) {
    PreparedExample p;
    p.input = build_gen_input(ex.dialog, ex.snippet, params.vocab);
    p.targets = supervisable_targets(ex.response, p.input, params.vocab);
    if (p.targets.empty()) continue;  // nothing to supervise
    if (!params.use_pointer) {
      std::erase_if(p.targets,
                    [&](std::size_t id) { return id >= params.vocab.size(); });
      if (p.targets.empty()) continue;
    }
    prepared.push_back(std::move(p));
  }
  if (prepared.empty()) {
    throw std::invalid_argument("train_generator: no supervisable examples");
  }

  neural::AdamOptimizer optimizer(params.parameters(), train_cfg);
  std::vector<std::size_t> order(prepared.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.index(i)]);
    }
    double epoch_nll = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t start = 0; start < order.size();
         start += train_cfg.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + train_cfg.batch_size);
      Tape tape;
      GenVars vars = lift(tape, params);
      Tape::Var loss;
      std::size_t tokens = 0;
      for (std::size_t i = start; i < end; ++i) {
        const PreparedExample& ex = prepared[order[i]];
        Tape::Var enc = encode_source(tape, vars, params, ex.input);
        Tape::Var state = tape.leaf(Tensor({params.dim()}, 0.0));
        std::size_t prev = Vocab::kBos;
        for (std::size_t target : ex.targets) {
          StepVars step =
              decode_step(tape, vars, params, enc, state, prev);
          Tape::Var prob =
              mixture_probability(tape, step, params, ex.input, target);
          Tape::Var nll = tape.neg(tape.log_clamped(prob));
          loss = loss.valid() ? tape.add(loss, nll) : nll;
          ++tokens;
          state = step.state;
          prev = target;
        }
      }
      if (tokens == 0) continue;
      loss = tape.scale(loss, 1.0 / static_cast<double>(tokens));
      tape.backward(loss);
      optimizer.step({tape.grad(vars.embedding), tape.grad(vars.pos),
                      tape.grad(vars.dec_w), tape.grad(vars.vocab_w),
                      tape.grad(vars.ptr_w), tape.grad(vars.ptr_b)});
      epoch_nll += tape.scalar_value(loss) * static_cast<double>(tokens);
      epoch_tokens += tokens;
    }
    if (nll_trace != nullptr && epoch_tokens > 0) {
      nll_trace->push_back(epoch_nll / static_cast<double>(epoch_tokens));
    }
  }
  return params;
}

std::string greedy_decode(const Seq2SeqParams& params, const GenInput& input,
                          std::size_t max_len) {
  Tape tape;
  GenVars vars = lift(tape, params);
  Tape::Var enc = encode_source(tape, vars, params, input);
  Tape::Var state = tape.leaf(Tensor({params.dim()}, 0.0));
  std::size_t prev = Vocab::kBos;
  std::vector<std::string> out;
  const std::size_t vocab_size = params.vocab.size();
  for (std::size_t step_index = 0; step_index < max_len; ++step_index) {
    StepVars step = decode_step(tape, vars, params, enc, state, prev);
    std::vector<double> dist;
    if (params.use_pointer) {
      dist = mixture_distribution(tape.value(step.p_vocab).values,
                                  tape.value(step.attn).values,
                                  tape.scalar_value(step.p_gen), input,
                                  vocab_size);
    } else {
      dist = tape.value(step.p_vocab).values;
    }
    // PAD, UNK and BOS are never emitted.
    dist[Vocab::kPad] = -1.0;
    dist[Vocab::kUnk] = -1.0;
    dist[Vocab::kBos] = -1.0;
    std::size_t best = 0;
    for (std::size_t w = 1; w < dist.size(); ++w) {
      if (dist[w] > dist[best]) best = w;
    }
    if (best == Vocab::kEos) break;
    out.push_back(best < vocab_size ? params.vocab.token(best)
                                    : input.oov_tokens[best - vocab_size]);
    state = step.state;
    prev = best;
  }
  return textproc::join_tokens(out);
}

double mean_token_nll(const Seq2SeqParams& params,
                      const std::vector<GeneratorExample>& examples) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const GeneratorExample& ex : examples) {
    Tape tape;
    GenVars vars = lift(tape, params);
    const GenInput input = build_gen_input(ex.dialog, ex.snippet, params.vocab);
    std::vector<std::size_t> targets =
        supervisable_targets(ex.response, input, params.vocab);
    if (!params.use_pointer) {
      std::erase_if(targets,
                    [&](std::size_t id) { return id >= params.vocab.size(); });
    }
    if (targets.empty()) continue;
    Tape::Var enc = encode_source(tape, vars, params, input);
    Tape::Var state = tape.leaf(Tensor({params.dim()}, 0.0));
    std::size_t prev = Vocab::kBos;
    for (std::size_t target : targets) {
      StepVars step = decode_step(tape, vars, params, enc, state, prev);
      Tape::Var prob = mixture_probability(tape, step, params, input, target);
      total -= std::log(std::max(tape.scalar_value(prob), 1e-12));
      ++tokens;
      state = step.state;
      prev = target;
    }
  }
  return tokens == 0 ? 0.0 : total / static_cast<double>(tokens);
}

}  // namespace kgdialog::generator
