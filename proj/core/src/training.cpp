#include "s2r/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "s2r/error.hpp"

namespace s2r::train {

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::kSkeMle: return "ske_mle";
    case Mode::kResMle: return "res_mle";
    case Mode::kJoint: return "joint";
    case Mode::kCritic: return "critic";
    case Mode::kCascade: return "cascade";
  }
  return "?";
}

Mode parse_mode(std::string_view name) {
  for (Mode m : {Mode::kSkeMle, Mode::kResMle, Mode::kJoint, Mode::kCritic, Mode::kCascade})
    if (mode_name(m) == name) return m;
  throw ConfigError("unknown training mode \"" + std::string(name) +
                    "\" (expected ske_mle, res_mle, joint, critic or cascade)");
}

Example make_example(const text::Vocab& vocab, const data::LabeledQuad& lq) {
  Example ex;
  ex.query = vocab.encode(lq.quad.q);
  ex.response = vocab.encode(lq.quad.r);
  ex.ske = skel::make_input(vocab, lq.quad.q, lq.quad.rq, lq.quad.rr);
  ex.labels = lq.proxy.labels;
  ex.skeleton = skel::apply_mask_ids(ex.ske.retrieved, ex.labels);
  return ex;
}

Example make_pair_example(const text::Vocab& vocab, const TokenSeq& query, const TokenSeq& response) {
  Example ex;
  ex.query = vocab.encode(query);
  ex.response = vocab.encode(response);
  return ex;
}

// --- Losses -----------------------------------------------------------------

namespace {

struct SkeletonTerms {
  std::vector<Var> log_likelihoods;
  std::size_t tokens = 0;
  std::size_t correct = 0;
};

void add_skeleton_term(SkeletonTerms& acc, const skel::SkeletonForward& fwd, const Example& ex) {
  if (ex.ske.retrieved.empty()) return;
  acc.log_likelihoods.push_back(skel::mask_log_prob(fwd.logits, ex.labels));
  for (std::size_t i = 0; i < ex.labels.size(); ++i) acc.correct += (fwd.probs[i] >= 0.5) == (ex.labels[i] != 0);
  acc.tokens += ex.labels.size();
}

LossParts finish_skeleton(Tape& tape, SkeletonTerms& acc) {
  LossParts out;
  out.tokens = acc.tokens;
  out.correct = acc.correct;
  if (acc.tokens == 0) {
    out.loss = tape.constant(ad::Tensor::scalar(0.0));
  } else {
    out.loss = ad::scale(ad::add_all(acc.log_likelihoods), -1.0 / static_cast<double>(acc.tokens));
  }
  return out;
}

LossParts finish_response(std::vector<Var>& nll, std::size_t tokens, std::size_t correct) {
  LossParts out;
  out.tokens = tokens;
  out.correct = correct;
  out.loss = ad::scale(ad::add_all(nll), 1.0 / static_cast<double>(tokens));
  return out;
}

}  // namespace

LossParts loss_skeleton_mle(Tape& tape, const skel::SkeletonGenerator& ske, std::span<const Example> batch,
                            bool train, Rng& rng) {
  SkeletonTerms acc;
  for (const auto& ex : batch) {
    if (ex.labels.size() != ex.ske.retrieved.size())
      throw Error("loss_skeleton_mle: " + std::to_string(ex.labels.size()) + " labels for a prototype of " +
                  std::to_string(ex.ske.retrieved.size()) + " tokens");
    if (ex.ske.retrieved.empty()) continue;
    add_skeleton_term(acc, ske.forward(tape, ex.ske, train, rng), ex);
  }
  return finish_skeleton(tape, acc);
}

LossParts loss_response_mle(Tape& tape, const resp::ResponseGenerator& res, std::span<const Example> batch,
                            bool train, Rng& rng) {
  if (batch.empty()) throw Error("loss_response_mle: empty batch");
  std::vector<Var> nll;
  std::size_t tokens = 0, correct = 0;
  for (const auto& ex : batch) {
    auto pools = res.encode(tape, ex.query, {ex.skeleton}, train, rng);
    auto tf = res.teacher_force(tape, pools, ex.response, train, rng);
    nll.push_back(tf.nll_sum);
    tokens += tf.tokens;
    correct += tf.correct;
  }
  return finish_response(nll, tokens, correct);
}

Var joint_memory(Tape& tape, const skel::SkeletonGenerator& ske, const skel::SkeletonForward& fwd) {
  if (fwd.slots.empty()) return ad::stack({tape.constant(ad::Tensor({ske.slot_dim()}))});
  return fwd.slot_matrix;
}

JointLoss loss_joint(Tape& tape, const skel::SkeletonGenerator& ske, const resp::ResponseGenerator& res,
                     std::span<const Example> batch, double eta, bool train, Rng& rng) {
  if (batch.empty()) throw Error("loss_joint: empty batch");
  if (eta < 0.0) throw Error("loss_joint: eta must be non-negative");
  SkeletonTerms acc;
  std::vector<Var> nll;
  std::size_t tokens = 0, correct = 0;
  for (const auto& ex : batch) {
    if (ex.labels.size() != ex.ske.retrieved.size())
      throw Error("loss_joint: " + std::to_string(ex.labels.size()) + " labels for a prototype of " +
                  std::to_string(ex.ske.retrieved.size()) + " tokens");
    const auto fwd = ske.forward(tape, ex.ske, train, rng);
    add_skeleton_term(acc, fwd, ex);
    auto pools = res.encode_with_memory(tape, ex.query, joint_memory(tape, ske, fwd), train, rng);
    auto tf = res.teacher_force(tape, pools, ex.response, train, rng);
    nll.push_back(tf.nll_sum);
    tokens += tf.tokens;
    correct += tf.correct;
  }
  JointLoss out;
  out.response = finish_response(nll, tokens, correct);
  out.skeleton = finish_skeleton(tape, acc);
  out.total = ad::add(out.response.loss, ad::scale(out.skeleton.loss, eta));
  return out;
}

// --- Training loops ---------------------------------------------------------

std::string format_step_log(const StepLog& log) {
  nlohmann::ordered_json j;
  j["step"] = log.step;
  j["mode"] = mode_name(log.mode);
  j[log.mode == Mode::kCascade ? "reward" : "loss"] = log.value;
  j["lr"] = log.lr;
  return j.dump();
}

namespace {

std::vector<ad::Parameter*> merge(std::vector<ad::Parameter*> a, const std::vector<ad::Parameter*>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void check_data(std::span<const Example> data, const TrainingConfig& cfg) {
  if (data.empty()) throw Error("training: no examples");
  if (cfg.batch == 0) throw ConfigError("training: batch size must be >= 1");
  if (!(cfg.lr > 0.0)) throw ConfigError("training: learning rate must be positive");
}

struct BatchOutcome {
  Var loss;
  std::size_t tokens = 0, correct = 0;
  std::size_t ske_tokens = 0, ske_correct = 0;
};

/// Shared epoch/batch loop for the three likelihood objectives.
template <typename LossFn>
TrainResult run_mle(std::vector<ad::Parameter*> params, std::span<const Example> data, const TrainingConfig& cfg,
                    const Hooks& hooks, LossFn&& loss_fn) {
  check_data(data, cfg);
  Rng rng(cfg.seed);
  ad::Adam adam(cfg.lr);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  TrainResult result;
  std::vector<Example> batch;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double loss_sum = 0.0;
    std::size_t batches = 0, tokens = 0, correct = 0, ske_tokens = 0, ske_correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      batch.clear();
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch); ++i) batch.push_back(data[order[i]]);
      Tape tape;
      BatchOutcome out = loss_fn(tape, std::span<const Example>(batch), rng);
      for (auto* p : params) p->grad.fill(0.0);
      tape.backward(out.loss);
      if (cfg.clip > 0.0) ad::clip_global_norm(params, cfg.clip);
      adam.step(params);

      const double value = out.loss.item();
      ++result.steps;
      result.step_values.push_back(value);
      if (hooks.on_step) hooks.on_step({result.steps, cfg.mode, value, adam.lr()});
      loss_sum += value;
      ++batches;
      tokens += out.tokens;
      correct += out.correct;
      ske_tokens += out.ske_tokens;
      ske_correct += out.ske_correct;
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / static_cast<double>(batches);
    stats.token_accuracy = tokens ? static_cast<double>(correct) / static_cast<double>(tokens) : 0.0;
    stats.skeleton_accuracy = ske_tokens ? static_cast<double>(ske_correct) / static_cast<double>(ske_tokens) : 0.0;
    result.epochs_run = epoch;
    result.last = stats;
    if (hooks.on_epoch && !hooks.on_epoch(stats)) break;
  }
  return result;
}

}  // namespace

TrainResult train_skeleton(skel::SkeletonGenerator& ske, std::span<const Example> data, const TrainingConfig& cfg,
                           const Hooks& hooks) {
  return run_mle(ske.params().trainable(), data, cfg, hooks, [&](Tape& tape, std::span<const Example> b, Rng& rng) {
    auto parts = loss_skeleton_mle(tape, ske, b, true, rng);
    return BatchOutcome{parts.loss, 0, 0, parts.tokens, parts.correct};
  });
}

TrainResult train_response(resp::ResponseGenerator& res, std::span<const Example> data, const TrainingConfig& cfg,
                           const Hooks& hooks) {
  return run_mle(res.params().trainable(), data, cfg, hooks, [&](Tape& tape, std::span<const Example> b, Rng& rng) {
    auto parts = loss_response_mle(tape, res, b, true, rng);
    return BatchOutcome{parts.loss, parts.tokens, parts.correct, 0, 0};
  });
}

TrainResult train_joint(skel::SkeletonGenerator& ske, resp::ResponseGenerator& res, std::span<const Example> data,
                        const TrainingConfig& cfg, const Hooks& hooks) {
  if (res.config().external_skeleton_dim != ske.slot_dim())
    throw ShapeError("joint training: skeleton slots are " + std::to_string(ske.slot_dim()) +
                     " wide but the response generator expects " + std::to_string(res.skeleton_dim()));
  auto params = merge(ske.params().trainable(), res.params().trainable());
  return run_mle(std::move(params), data, cfg, hooks, [&](Tape& tape, std::span<const Example> b, Rng& rng) {
    auto parts = loss_joint(tape, ske, res, b, cfg.eta, true, rng);
    return BatchOutcome{parts.total, parts.response.tokens, parts.response.correct, parts.skeleton.tokens,
                        parts.skeleton.correct};
  });
}

double skeleton_accuracy(const skel::SkeletonGenerator& ske, std::span<const Example> data) {
  std::size_t total = 0, hits = 0;
  for (const auto& ex : data) {
    const auto probs = ske.mask_probs(ex.ske);
    const auto d = skel::decide_mask(probs);
    for (std::size_t i = 0; i < d.labels.size() && i < ex.labels.size(); ++i) hits += d.labels[i] == ex.labels[i];
    total += ex.labels.size();
  }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

double response_accuracy(const resp::ResponseGenerator& res, std::span<const Example> data,
                         const skel::SkeletonGenerator* joint) {
  std::size_t total = 0, hits = 0;
  Rng rng(0);
  for (const auto& ex : data) {
    Tape tape;
    resp::MemoryPools pools;
    if (joint) {
      const auto fwd = joint->forward(tape, ex.ske, false, rng);
      pools = res.encode_with_memory(tape, ex.query, joint_memory(tape, *joint, fwd), false, rng);
    } else {
      pools = res.encode(tape, ex.query, {ex.skeleton}, false, rng);
    }
    const auto tf = res.teacher_force(tape, pools, ex.response, false, rng);
    total += tf.tokens;
    hits += tf.correct;
  }
  return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

// --- Critic -----------------------------------------------------------------

const IdSeq& random_other_response(std::span<const Example> data, std::size_t self, Rng& rng) {
  if (data.size() < 2) throw Error("a random response needs at least two examples");
  std::size_t j = uniform_index(rng, data.size() - 1);
  if (j >= self) ++j;
  return data[j].response;
}

CriticResult train_critic(Critic& critic, std::span<const Example> data, std::span<const IdSeq> generated,
                          const TrainingConfig& cfg, const Hooks& hooks) {
  if (data.size() < 2) throw Error("train_critic: need at least two examples to draw a distinct random response");
  if (generated.size() != data.size())
    throw Error("train_critic: " + std::to_string(generated.size()) + " generated responses for " +
                std::to_string(data.size()) + " examples");
  if (cfg.batch == 0) throw ConfigError("training: batch size must be >= 1");

  std::vector<std::size_t> train_idx, held_idx;
  const bool split = data.size() >= 10 && cfg.holdout > 0.0;
  const std::size_t stride = split ? std::max<std::size_t>(2, static_cast<std::size_t>(std::lround(1.0 / cfg.holdout)))
                                   : 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (split && i % stride == stride - 1)
      held_idx.push_back(i);
    else
      train_idx.push_back(i);
  }

  auto params = critic.params().trainable();
  ad::Adam adam(cfg.lr);
  Rng shuffle_rng(cfg.seed);
  CriticResult result;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng pick_rng(cfg.seed * 1000003ULL + epoch);  // r_bar draws, seeded per epoch
    shuffle(train_idx, shuffle_rng);
    double sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch) {
      const std::size_t end = std::min(train_idx.size(), start + cfg.batch);
      Tape tape;
      std::vector<Var> terms;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = train_idx[k];
        const IdSeq& r_bar = random_other_response(data, i, pick_rng);
        terms.push_back(critic.objective(tape, data[i].query, generated[i], r_bar, data[i].response));
      }
      Var loss = ad::scale(ad::add_all(terms), -1.0 / static_cast<double>(terms.size()));
      for (auto* p : params) p->grad.fill(0.0);
      tape.backward(loss);
      if (cfg.clip > 0.0) ad::clip_global_norm(params, cfg.clip);
      adam.step(params);
      ++result.train.steps;
      result.train.step_values.push_back(loss.item());
      if (hooks.on_step) hooks.on_step({result.train.steps, Mode::kCritic, loss.item(), adam.lr()});
      sum += loss.item();
      ++batches;
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = batches ? sum / static_cast<double>(batches) : 0.0;
    result.train.epochs_run = epoch;
    result.train.last = stats;
    if (hooks.on_epoch && !hooks.on_epoch(stats)) break;
  }

  const auto& eval_idx = held_idx.empty() ? train_idx : held_idx;
  Rng eval_rng(cfg.seed ^ 0x5eedULL);
  std::size_t hits = 0;
  for (auto i : eval_idx) {
    const IdSeq& r_bar = random_other_response(data, i, eval_rng);
    hits += critic.pick(data[i].query, generated[i], r_bar, data[i].response) == Critic::kHuman;
  }
  result.heldout = eval_idx.size();
  result.heldout_accuracy = eval_idx.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(eval_idx.size());
  return result;
}

std::vector<IdSeq> generate_candidates(const skel::SkeletonGenerator& ske, const resp::ResponseGenerator& res,
                                       std::span<const Example> data, std::size_t max_len) {
  std::vector<IdSeq> out;
  out.reserve(data.size());
  Rng rng(0);
  for (const auto& ex : data) {
    Tape tape;
    const auto fwd = ske.forward(tape, ex.ske, false, rng);
    const auto skeleton = skel::apply_mask_ids(ex.ske.retrieved, skel::decide_mask(fwd.probs).labels);
    const auto pools = res.encode(tape, ex.query, {skeleton}, false, rng);
    out.push_back(resp::greedy_decode(res, tape, pools, max_len).tokens);
  }
  return out;
}

// --- Cascade ----------------------------------------------------------------

namespace {

int sample_categorical(const std::vector<double>& log_probs, Rng& rng) {
  const double u = uniform01(rng);
  double cum = 0.0;
  for (std::size_t i = 0; i < log_probs.size(); ++i) {
    cum += std::exp(log_probs[i]);
    if (u < cum) return static_cast<int>(i);
  }
  return static_cast<int>(log_probs.size()) - 1;
}

}  // namespace

Rollout sample_rollout(const skel::SkeletonGenerator& ske, const resp::ResponseGenerator& res, const Example& ex,
                       std::size_t max_len, Rng& rng) {
  Rollout ro;
  Tape tape;
  Rng unused(0);
  const auto fwd = ske.forward(tape, ex.ske, false, unused);
  ro.mask = skel::decide_mask(fwd.probs, skel::SampleMode{&rng}).labels;
  ro.skeleton = skel::apply_mask_ids(ex.ske.retrieved, ro.mask);
  const auto pools = res.encode(tape, ex.query, {ro.skeleton}, false, unused);
  auto state = res.initial_state(tape, pools);
  int prev = text::Vocab::kBosId;
  for (std::size_t t = 0; t < max_len; ++t) {
    auto step = res.step(tape, state, prev, pools, {}, unused);
    const int tok = sample_categorical(step.log_probs.value().values(), rng);
    if (tok == text::Vocab::kEosId) {
      ro.finished = true;
      break;
    }
    ro.response.push_back(tok);
    state = std::move(step.state);
    prev = tok;
  }
  return ro;
}

RolloutLogProb rollout_log_prob(Tape& tape, const skel::SkeletonGenerator& ske, const resp::ResponseGenerator& res,
                                const Example& ex, const Rollout& rollout) {
  Rng rng(0);
  RolloutLogProb out;
  const auto fwd = ske.forward(tape, ex.ske, false, rng);
  out.skeleton = ex.ske.retrieved.empty() ? tape.constant(ad::Tensor::scalar(0.0))
                                          : skel::mask_log_prob(fwd.logits, rollout.mask);

  const auto pools = res.encode(tape, ex.query, {rollout.skeleton}, false, rng);
  auto state = res.initial_state(tape, pools);
  std::vector<Var> terms;
  int prev = text::Vocab::kBosId;
  IdSeq targets = rollout.response;
  if (rollout.finished) targets.push_back(text::Vocab::kEosId);
  for (int tok : targets) {
    auto step = res.step(tape, state, prev, pools, {}, rng);
    terms.push_back(ad::pick(step.log_probs, static_cast<std::size_t>(tok)));
    state = std::move(step.state);
    prev = tok;
  }
  out.response = terms.empty() ? tape.constant(ad::Tensor::scalar(0.0)) : ad::add_all(terms);
  return out;
}

Var policy_loss(Tape& tape, const skel::SkeletonGenerator& ske, const resp::ResponseGenerator& res, const Example& ex,
                const Rollout& rollout, double advantage) {
  const auto lp = rollout_log_prob(tape, ske, res, ex, rollout);
  return ad::scale(ad::add(lp.skeleton, lp.response), -advantage);
}

CascadeResult train_cascade(ModelSet& models, std::span<const Example> data, const TrainingConfig& cfg,
                            const Hooks& hooks) {
  models.require_pretrained({"ske", "res", "critic"});
  if (models.joint) throw PreconditionError("cascade training needs a response generator that reads discrete skeletons");
  check_data(data, cfg);
  if (data.size() < 2) throw Error("cascade training needs at least two examples");
  if (cfg.baseline_decay < 0.0 || cfg.baseline_decay >= 1.0)
    throw ConfigError("baseline_decay must lie in [0, 1)");

  auto& ske = *models.ske;
  auto& res = *models.res;
  auto& critic = *models.critic;
  auto params = merge(ske.params().trainable(), res.params().trainable());
  auto critic_params = critic.params().trainable();
  if (!(cfg.rl_lr > 0.0)) throw ConfigError("training: rl_lr must be positive");
  ad::Adam adam(cfg.rl_lr);
  ad::Adam critic_adam(cfg.rl_lr);

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::optional<double> baseline;
  CascadeResult result;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double reward_sum = 0.0;
    std::size_t samples = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      Tape tape;
      std::vector<Var> terms;
      std::vector<std::pair<std::size_t, Rollout>> rollouts;
      std::vector<const IdSeq*> r_bars;
      double batch_reward = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const Example& ex = data[i];
        Rollout ro = sample_rollout(ske, res, ex, cfg.max_len, rng);
        const IdSeq& r_bar = random_other_response(data, i, rng);
        const double reward = critic.reward(ex.query, ro.response, r_bar, ex.response);
        if (!baseline) baseline = reward;
        const double advantage = reward - *baseline;
        *baseline = cfg.baseline_decay * *baseline + (1.0 - cfg.baseline_decay) * reward;
        terms.push_back(policy_loss(tape, ske, res, ex, ro, advantage));
        result.rewards.push_back(reward);
        batch_reward += reward;
        rollouts.emplace_back(i, std::move(ro));
        r_bars.push_back(&r_bar);
      }
      Var loss = ad::scale(ad::add_all(terms), 1.0 / static_cast<double>(terms.size()));
      for (auto* p : params) p->grad.fill(0.0);
      tape.backward(loss);
      if (cfg.clip > 0.0) ad::clip_global_norm(params, cfg.clip);
      adam.step(params);

      if (cfg.critic_finetune) {
        Tape ct;
        std::vector<Var> obj;
        for (std::size_t k = 0; k < rollouts.size(); ++k) {
          const Example& ex = data[rollouts[k].first];
          obj.push_back(critic.objective(ct, ex.query, rollouts[k].second.response, *r_bars[k], ex.response));
        }
        Var closs = ad::scale(ad::add_all(obj), -1.0 / static_cast<double>(obj.size()));
        for (auto* p : critic_params) p->grad.fill(0.0);
        ct.backward(closs);
        if (cfg.clip > 0.0) ad::clip_global_norm(critic_params, cfg.clip);
        critic_adam.step(critic_params);
      }

      const double mean_reward = batch_reward / static_cast<double>(end - start);
      ++result.train.steps;
      result.train.step_values.push_back(mean_reward);
      if (hooks.on_step) hooks.on_step({result.train.steps, Mode::kCascade, mean_reward, adam.lr()});
      reward_sum += batch_reward;
      samples += end - start;
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_reward = reward_sum / static_cast<double>(samples);
    result.train.epochs_run = epoch;
    result.train.last = stats;
    if (hooks.on_epoch && !hooks.on_epoch(stats)) break;
  }
  return result;
}

}  // namespace s2r::train
