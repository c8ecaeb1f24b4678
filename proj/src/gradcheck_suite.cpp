#include "kgdialog/gradcheck_suite.hpp"

#include <cmath>
#include <ostream>

#include "kgdialog/generator.hpp"
#include "kgdialog/neural.hpp"

namespace kgdialog::gradcheck {

using neural::Tape;
using neural::Tensor;

namespace {

std::vector<double*> tensor_coords(std::vector<Tensor*> tensors) {
  std::vector<double*> coords;
  for (Tensor* t : tensors) {
    for (double& v : t->values) coords.push_back(&v);
  }
  return coords;
}

std::vector<double> collect_grads(const Tape& tape,
                                  const std::vector<Tape::Var>& vars) {
  std::vector<double> out;
  for (Tape::Var v : vars) {
    const Tensor& g = tape.grad(v);
    out.insert(out.end(), g.values.begin(), g.values.end());
  }
  return out;
}

double check_encoder_point(neural::Rng& rng) {
  const std::size_t d = 5;
  neural::Vocab vocab = neural::Vocab::build(
      {{"alpha", "beta", "gamma", "delta", "epsilon", "zeta"}});
  neural::EncoderParams params = neural::EncoderParams::init(vocab, d, rng);
  const textproc::TokenSeq tokens = {"alpha", "gamma", "zeta", "unknown"};
  const Tensor probe = neural::random_tensor({d}, rng, 1.0);

  auto loss = [&]() {
    Tape tape;
    Tape::Var out = neural::encode_text(
        tape, tape.leaf(params.embedding), tape.leaf(params.proj_w),
        tape.leaf(params.proj_b), params.vocab, tokens);
    Tape::Var l = tape.dot(out, tape.leaf(probe));
    return tape.scalar_value(l);
  };

  Tape tape;
  Tape::Var emb = tape.leaf(params.embedding);
  Tape::Var pw = tape.leaf(params.proj_w);
  Tape::Var pb = tape.leaf(params.proj_b);
  Tape::Var out = neural::encode_text(tape, emb, pw, pb, params.vocab, tokens);
  tape.backward(tape.dot(out, tape.leaf(probe)));

  return neural::grad_check(
      loss,
      tensor_coords({&params.embedding, &params.proj_w, &params.proj_b}),
      collect_grads(tape, {emb, pw, pb}));
}

double check_classifier_point(neural::Rng& rng) {
  const std::size_t d = 7;
  Tensor x = neural::random_tensor({d}, rng, 1.0);
  Tensor w = neural::random_tensor({d}, rng, 1.0);
  Tensor b = Tensor::scalar(rng.normal());

  auto loss = [&]() {
    Tape tape;
    Tape::Var p = neural::classify(tape, tape.leaf(x), tape.leaf(w),
                                   tape.leaf(b));
    return tape.scalar_value(p);
  };

  Tape tape;
  Tape::Var vx = tape.leaf(x);
  Tape::Var vw = tape.leaf(w);
  Tape::Var vb = tape.leaf(b);
  tape.backward(neural::classify(tape, vx, vw, vb));

  return neural::grad_check(loss, tensor_coords({&x, &w, &b}),
                            collect_grads(tape, {vx, vw, vb}));
}

double check_focal_point(neural::Rng& rng) {
  // Focal loss with respect to the logit, both targets.
  Tensor z = Tensor::scalar(rng.uniform(-3.0, 3.0));
  const bool target = rng.uniform() < 0.5;
  const double gamma = 2.0;

  auto loss = [&]() {
    Tape tape;
    Tape::Var p = tape.sigmoid(tape.leaf(z));
    return tape.scalar_value(
        neural::binary_focal_loss(tape, p, target, gamma));
  };

  Tape tape;
  Tape::Var vz = tape.leaf(z);
  tape.backward(
      neural::binary_focal_loss(tape, tape.sigmoid(vz), target, gamma));

  return neural::grad_check(loss, tensor_coords({&z}),
                            collect_grads(tape, {vz}));
}

double check_triplet_point(neural::Rng& rng) {
  const std::size_t d = 6;
  const double alpha = 0.2;
  Tensor a, p, n;
  // Resample until safely on the active side of the hinge.
  for (;;) {
    a = neural::random_tensor({d}, rng, 1.0);
    p = neural::random_tensor({d}, rng, 1.0);
    n = neural::random_tensor({d}, rng, 1.0);
    const double raw = neural::triplet_cosine_loss(a, p, n, alpha);
    if (raw > 1e-3) break;
  }

  auto loss = [&]() {
    return neural::triplet_cosine_loss(a, p, n, alpha);
  };

  Tape tape;
  Tape::Var va = tape.leaf(a);
  Tape::Var vp = tape.leaf(p);
  Tape::Var vn = tape.leaf(n);
  tape.backward(neural::triplet_cosine_loss(tape, va, vp, vn, alpha));

  return neural::grad_check(loss, tensor_coords({&a, &p, &n}),
                            collect_grads(tape, {va, vp, vn}));
}

struct Seq2SeqFixture {
  generator::Seq2SeqParams params;
  generator::GenInput input;
  std::size_t prev_token = neural::Vocab::kBos;

  static Seq2SeqFixture make(neural::Rng& rng) {
    Seq2SeqFixture fx;
    neural::Vocab vocab = neural::Vocab::build(
        {{"red", "green", "blue", "cyan", "teal"}});
    fx.params = generator::Seq2SeqParams::init(vocab, 4, 8, rng);
    // Source mixes vocabulary words with two OOVs (extended ids).
    corpus::Dialog dialog;
    dialog.id = "g";
    dialog.turns = {{corpus::Speaker::kUser, "red bricks and green xyzzy"}};
    corpus::Snippet snippet;
    snippet.ref = {"paint", "1", "0"};
    snippet.entity_name = "teal qwtz";
    snippet.question = "blue or cyan";
    snippet.answer = "green teal";
    fx.input = generator::build_gen_input(dialog, snippet, fx.params.vocab);
    return fx;
  }

  std::vector<Tensor*> tensors() {
    return {&params.embedding, &params.pos,   &params.dec_w,
            &params.vocab_w,   &params.ptr_w, &params.ptr_b};
  }
};

double check_pgen_point(neural::Rng& rng) {
  Seq2SeqFixture fx = Seq2SeqFixture::make(rng);

  auto forward = [&](Tape& tape) {
    generator::GenVars vars = generator::lift(tape, fx.params);
    Tape::Var enc = generator::encode_source(tape, vars, fx.params, fx.input);
    Tape::Var state = tape.leaf(Tensor({fx.params.dim()}, 0.0));
    generator::StepVars step = generator::decode_step(
        tape, vars, fx.params, enc, state, fx.prev_token);
    return std::pair(vars, step.p_gen);
  };

  auto loss = [&]() {
    Tape tape;
    return tape.scalar_value(forward(tape).second);
  };

  Tape tape;
  auto [vars, p_gen] = forward(tape);
  tape.backward(p_gen);

  return neural::grad_check(
      loss, tensor_coords(fx.tensors()),
      collect_grads(tape, {vars.embedding, vars.pos, vars.dec_w,
                           vars.vocab_w, vars.ptr_w, vars.ptr_b}));
}

double check_mixture_nll_point(neural::Rng& rng) {
  Seq2SeqFixture fx = Seq2SeqFixture::make(rng);
  // Random supervisable target: any source id or vocabulary word.
  const std::size_t target =
      fx.input.ids[rng.index(fx.input.ids.size())];

  auto forward = [&](Tape& tape) {
    generator::GenVars vars = generator::lift(tape, fx.params);
    Tape::Var enc = generator::encode_source(tape, vars, fx.params, fx.input);
    Tape::Var state = tape.leaf(Tensor({fx.params.dim()}, 0.0));
    generator::StepVars step = generator::decode_step(
        tape, vars, fx.params, enc, state, fx.prev_token);
    Tape::Var prob = generator::mixture_probability(tape, step, fx.params,
                                                    fx.input, target);
    return std::pair(vars, tape.neg(tape.log_clamped(prob)));
  };

  auto loss = [&]() {
    Tape tape;
    return tape.scalar_value(forward(tape).second);
  };

  Tape tape;
  auto [vars, nll] = forward(tape);
  tape.backward(nll);

  return neural::grad_check(
      loss, tensor_coords(fx.tensors()),
      collect_grads(tape, {vars.embedding, vars.pos, vars.dec_w,
                           vars.vocab_w, vars.ptr_w, vars.ptr_b}));
}

OpResult run_op(const std::string& name, std::uint64_t seed,
                std::size_t points, double (*check)(neural::Rng&)) {
  OpResult result;
  result.op = name;
  result.points = points;
  neural::Rng rng(seed);
  for (std::size_t i = 0; i < points; ++i) {
    result.max_rel_error = std::max(result.max_rel_error, check(rng));
  }
  result.passed = result.max_rel_error < kTolerance;
  return result;
}

}  // namespace

std::vector<OpResult> run_suite(std::uint64_t seed, std::size_t points) {
  std::vector<OpResult> results;
  results.push_back(run_op("encoder", seed + 1, points, check_encoder_point));
  results.push_back(
      run_op("classifier", seed + 2, points, check_classifier_point));
  results.push_back(run_op("focal_loss", seed + 3, points, check_focal_point));
  results.push_back(
      run_op("triplet_cosine_loss", seed + 4, points, check_triplet_point));
  results.push_back(run_op("p_gen_head", seed + 5, points, check_pgen_point));
  results.push_back(
      run_op("mixture_nll", seed + 6, points, check_mixture_nll_point));
  return results;
}

bool run_and_report(std::uint64_t seed, std::size_t points,
                    std::ostream& out) {
  bool all_passed = true;
  for (const OpResult& result : run_suite(seed, points)) {
    out << (result.passed ? "PASS" : "FAIL") << " " << result.op
        << ": max relative error " << result.max_rel_error << " over "
        << result.points << " points (tolerance " << kTolerance << ")\n";
    all_passed = all_passed && result.passed;
  }
  return all_passed;
}

}  // namespace kgdialog::gradcheck
