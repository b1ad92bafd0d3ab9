#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "s2r/error.hpp"
#include "s2r/training.hpp"

using namespace s2r;
using namespace s2r::train;

namespace {

constexpr std::size_t kVocab = 12;

std::vector<Example> random_batch(std::uint64_t seed, std::size_t n, std::size_t max_len = 4) {
  Rng rng(seed);
  std::vector<Example> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(fixture::random_example(rng, kVocab, max_len));
  return out;
}

void randomize(ad::ParameterSet& set, std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (auto* p : set.all()) ad::init_uniform(*p, rng, -scale, scale);
}

std::vector<double> grads(ad::ParameterSet& set) {
  std::vector<double> out;
  for (auto* p : set.all()) out.insert(out.end(), p->grad.values().begin(), p->grad.values().end());
  return out;
}

std::vector<double> values(ad::ParameterSet& set) {
  std::vector<double> out;
  for (auto* p : set.all()) out.insert(out.end(), p->value.values().begin(), p->value.values().end());
  return out;
}

}  // namespace

TEST_CASE("mode names round-trip") {
  for (auto m : {Mode::kSkeMle, Mode::kResMle, Mode::kJoint, Mode::kCritic, Mode::kCascade})
    CHECK(parse_mode(mode_name(m)) == m);
  CHECK(mode_name(Mode::kSkeMle) == "ske_mle");
  CHECK_THROWS_AS(parse_mode("adversarial"), ConfigError);
}

TEST_CASE("step log lines") {
  CHECK(format_step_log({3, Mode::kJoint, 1.5, 0.001}) == R"({"step":3,"mode":"joint","loss":1.5,"lr":0.001})");
  CHECK(format_step_log({1, Mode::kCascade, -0.5, 0.0002}) == R"({"step":1,"mode":"cascade","reward":-0.5,"lr":0.0002})");
}

TEST_CASE("skeleton loss values") {
  skel::SkeletonGenerator ske(fixture::small_skeleton(kVocab), 1);
  const auto batch = random_batch(2, 5);
  Rng rng(0);
  {
    Tape tape;
    const auto parts = loss_skeleton_mle(tape, ske, batch, false, rng);
    CHECK(parts.loss.item() >= 0.0);
    std::size_t n = 0;
    for (const auto& ex : batch) n += ex.labels.size();
    CHECK(parts.tokens == n);
  }
  for (auto* p : ske.params().all()) p->value.fill(0.0);
  {
    Tape tape;
    CHECK(loss_skeleton_mle(tape, ske, batch, false, rng).loss.item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  }
  // A saturated keep bias fits all-keep labels.
  auto keep = batch;
  for (auto& ex : keep) std::fill(ex.labels.begin(), ex.labels.end(), 1);
  ske.params().get("ske/mask/b").value[0] = 40.0;
  {
    Tape tape;
    CHECK(loss_skeleton_mle(tape, ske, keep, false, rng).loss.item() < 1e-15);
  }
  auto bad = batch;
  bad[0].labels.push_back(1);
  Tape tape;
  CHECK_THROWS_AS(loss_skeleton_mle(tape, ske, bad, false, rng), Error);
}

TEST_CASE("response loss of a uniform model is ln V") {
  resp::ResponseGenerator res(fixture::small_response(kVocab), 3);
  for (auto* p : res.params().all()) p->value.fill(0.0);
  const auto batch = random_batch(4, 6);
  Rng rng(0);
  Tape tape;
  const auto parts = loss_response_mle(tape, res, batch, false, rng);
  CHECK(parts.loss.item() == doctest::Approx(std::log(static_cast<double>(kVocab))).epsilon(1e-14));
  std::size_t n = 0;
  for (const auto& ex : batch) n += ex.response.size() + 1;
  CHECK(parts.tokens == n);

  // An output bias that puts all mass on <eos> fits the empty-looking target.
  auto& b = res.params().get("res/out/b").value;
  b[text::Vocab::kEosId] = 60.0;
  auto eos_only = batch;
  for (auto& ex : eos_only) ex.response = {text::Vocab::kEosId};
  Tape t2;
  CHECK(loss_response_mle(t2, res, eos_only, false, rng).loss.item() < 1e-20);

  auto empty = batch;
  empty[0].response.clear();
  Tape t3;
  CHECK_THROWS_AS(loss_response_mle(t3, res, empty, false, rng), Error);
}

TEST_CASE("joint loss is the response loss plus eta times the skeleton loss") {
  skel::SkeletonGenerator ske(fixture::small_skeleton(kVocab), 5);
  resp::ResponseGenerator res(fixture::small_response(kVocab, 6, 5, ske.slot_dim()), 6);
  const auto batch = random_batch(7, 4);
  Rng rng(0);
  Tape tape;
  const auto joint = loss_joint(tape, ske, res, batch, 1.0, false, rng);
  const double ske_only = loss_skeleton_mle(tape, ske, batch, false, rng).loss.item();
  double nll = 0;
  std::size_t tokens = 0;
  for (const auto& ex : batch) {
    const auto fwd = ske.forward(tape, ex.ske, false, rng);
    const auto pools = res.encode_with_memory(tape, ex.query, joint_memory(tape, ske, fwd), false, rng);
    const auto tf = res.teacher_force(tape, pools, ex.response, false, rng);
    nll += tf.nll_sum.item();
    tokens += tf.tokens;
  }
  CHECK(joint.skeleton.loss.item() == ske_only);
  CHECK(joint.response.loss.item() == doctest::Approx(nll / static_cast<double>(tokens)).epsilon(1e-14));
  CHECK(joint.total.item() == doctest::Approx(joint.response.loss.item() + ske_only).epsilon(1e-15));
  const auto half = loss_joint(tape, ske, res, batch, 0.5, false, rng);
  CHECK(half.total.item() == doctest::Approx(joint.response.loss.item() + 0.5 * ske_only).epsilon(1e-15));
  CHECK_THROWS_AS(loss_joint(tape, ske, res, batch, -1.0, false, rng), Error);
}

TEST_CASE("eta = 0 leaves the mask head without gradient") {
  skel::SkeletonGenerator ske(fixture::small_skeleton(kVocab), 8);
  resp::ResponseGenerator res(fixture::small_response(kVocab, 6, 5, ske.slot_dim()), 9);
  const auto batch = random_batch(10, 3);
  ske.params().zero_grad();
  res.params().zero_grad();
  Rng rng(0);
  Tape tape;
  tape.backward(loss_joint(tape, ske, res, batch, 0.0, false, rng).total);
  for (const char* name : {"ske/mask/W", "ske/mask/b"})
    for (double g : ske.params().get(name).grad.values()) CHECK(g == 0.0);
  double encoder_grad = 0;
  for (double g : ske.params().get("ske/enc/l0/fwd/W").grad.values()) encoder_grad += std::abs(g);
  CHECK(encoder_grad > 0.0);
}

TEST_CASE("one joint step moves both models") {
  skel::SkeletonGenerator ske(fixture::small_skeleton(kVocab), 11);
  resp::ResponseGenerator res(fixture::small_response(kVocab, 6, 5, ske.slot_dim()), 12);
  const auto batch = random_batch(13, 2);
  const auto s0 = values(ske.params()), r0 = values(res.params());
  TrainingConfig cfg;
  cfg.epochs = 1;
  cfg.batch = 2;
  const auto result = train_joint(ske, res, batch, cfg);
  CHECK(result.steps == 1);
  CHECK(values(ske.params()) != s0);
  CHECK(values(res.params()) != r0);
  resp::ResponseGenerator wrong(fixture::small_response(kVocab), 1);
  CHECK_THROWS_AS(train_joint(ske, wrong, batch, cfg), ShapeError);
}

TEST_CASE("training losses pass grad_check") {
  const auto batch = random_batch(14, 2, 3);
  skel::SkeletonGenerator ske(fixture::small_skeleton(kVocab, 4, 3), 15);
  resp::ResponseGenerator res(fixture::small_response(kVocab, 4, 3), 16);
  resp::ResponseGenerator jres(fixture::small_response(kVocab, 4, 3, ske.slot_dim()), 17);
  randomize(ske.params(), 18, 0.4);
  randomize(res.params(), 19, 0.4);
  randomize(jres.params(), 20, 0.4);
  SUBCASE("skeleton") {
    auto params = ske.params().all();
    const auto r = ad::grad_check(
        [&](Tape& t) {
          Rng rng(0);
          return loss_skeleton_mle(t, ske, batch, false, rng).loss;
        },
        params);
    CHECK(r.max_rel_error < 1e-6);
  }
  SUBCASE("response") {
    auto params = res.params().all();
    const auto r = ad::grad_check(
        [&](Tape& t) {
          Rng rng(0);
          return loss_response_mle(t, res, batch, false, rng).loss;
        },
        params);
    CHECK(r.max_rel_error < 1e-6);
  }
  SUBCASE("joint") {
    auto params = ske.params().all();
    const auto more = jres.params().all();
    params.insert(params.end(), more.begin(), more.end());
    const auto r = ad::grad_check(
        [&](Tape& t) {
          Rng rng(0);
          return loss_joint(t, ske, jres, batch, 1.0, false, rng).total;
        },
        params);
    CHECK(r.max_rel_error < 1e-6);
  }
}

TEST_CASE("MLE training is deterministic and honours early stopping") {
  const auto data = random_batch(21, 6);
  auto run = [&] {
    skel::SkeletonGenerator ske(fixture::small_skeleton(kVocab), 22);
    TrainingConfig cfg;
    cfg.epochs = 3;
    cfg.batch = 2;
    cfg.lr = 0.01;
    return train_skeleton(ske, data, cfg).step_values;
  };
  const auto a = run();
  CHECK(a.size() == 9);
  CHECK(a == run());

  resp::ResponseGenerator res(fixture::small_response(kVocab), 23);
  TrainingConfig cfg;
  cfg.epochs = 10;
  std::size_t epochs = 0, steps = 0;
  Hooks hooks;
  hooks.on_step = [&](const StepLog& s) {
    ++steps;
    CHECK(s.mode == cfg.mode);
  };
  hooks.on_epoch = [&](const EpochStats& s) {
    epochs = s.epoch;
    CHECK(s.token_accuracy >= 0.0);
    return s.epoch < 2;
  };
  const auto result = train_response(res, data, cfg, hooks);
  CHECK(result.epochs_run == 2);
  CHECK(epochs == 2);
  CHECK(steps == result.steps);
  TrainingConfig bad = cfg;
  bad.batch = 0;
  CHECK_THROWS_AS(train_response(res, data, bad), ConfigError);
  CHECK_THROWS_AS(train_response(res, {}, cfg), Error);
}

TEST_CASE("critic scores") {
  const CriticConfig cc{kVocab, 6, 5};
  const Critic zero(cc, 1, true);
  const auto batch = random_batch(24, 20);
  for (std::size_t i = 0; i + 2 < batch.size(); ++i) {
    const auto& q = batch[i].query;
    CHECK(std::abs(zero.reward(q, batch[i].response, batch[i + 1].response, batch[i + 2].response) - std::log(1.0 / 3.0)) <=
          1e-12);
    Tape tape;
    CHECK(zero.objective(tape, q, batch[i].response, batch[i + 1].response, batch[i + 2].response).item() ==
          doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-15));
  }
  Critic random(cc, 2);
  randomize(random.params(), 3, 1.0);
  std::size_t hits = 0, trials = 0;
  Rng rng(4);
  for (int t = 0; t < 900; ++t) {
    const auto q = fixture::random_ids(rng, 3, kVocab);
    const auto a = fixture::random_ids(rng, 1 + uniform_index(rng, 4), kVocab);
    const auto b = fixture::random_ids(rng, 1 + uniform_index(rng, 4), kVocab);
    const auto c = fixture::random_ids(rng, 1 + uniform_index(rng, 4), kVocab);
    const double rw = random.reward(q, a, b, c);
    CHECK(rw <= 0.0);
    Tape tape;
    const auto s = random.scores(tape, q, a, b, c);
    CHECK(random.objective(tape, q, a, b, c).item() <= 0.0);
    // Shifting every score by a constant leaves the reward unchanged.
    const auto shifted = ad::log_softmax(ad::affine(s, 1.0, 17.0));
    CHECK(shifted.value()[Critic::kGenerated] == doctest::Approx(rw).epsilon(1e-12));
    hits += random.pick(q, a, b, c) == Critic::kHuman;
    ++trials;
  }
  const double acc = static_cast<double>(hits) / static_cast<double>(trials);
  CHECK(acc > 0.25);
  CHECK(acc < 0.42);
  Tape tape;
  const auto empty = zero.represent(tape, {});
  CHECK(empty.size() == 10);
  for (double v : empty.value().values()) CHECK(v == 0.0);
}

TEST_CASE("critic training") {
  const auto data = random_batch(25, 30);
  std::vector<IdSeq> generated;
  Rng rng(26);
  for (std::size_t i = 0; i < data.size(); ++i) generated.push_back(fixture::random_ids(rng, 3, kVocab));
  Critic critic({kVocab, 6, 5}, 27);
  TrainingConfig cfg;
  cfg.epochs = 2;
  cfg.batch = 8;
  cfg.lr = 0.01;
  const auto r = train_critic(critic, data, generated, cfg);
  CHECK(r.heldout == 3);
  CHECK(r.heldout_accuracy >= 0.0);
  CHECK(r.heldout_accuracy <= 1.0);
  for (double v : r.train.step_values) CHECK(v >= 0.0);
  CHECK_THROWS_AS(train_critic(critic, std::span<const Example>(data.data(), 1),
                               std::span<const IdSeq>(generated.data(), 1), cfg),
                  Error);
  CHECK_THROWS_AS(train_critic(critic, data, std::span<const IdSeq>(generated.data(), 2), cfg), Error);

  Rng pick(1);
  for (std::size_t i = 0; i < 50; ++i) {
    const auto self = i % data.size();
    const auto& other = random_other_response(data, self, pick);
    CHECK(&other != &data[self].response);
  }
}

TEST_CASE("policy gradient vanishes at zero advantage and flips with its sign") {
  skel::SkeletonGenerator ske(fixture::small_skeleton(kVocab), 30);
  resp::ResponseGenerator res(fixture::small_response(kVocab), 31);
  randomize(ske.params(), 32, 0.5);
  randomize(res.params(), 33, 0.5);
  const auto ex = random_batch(34, 1)[0];
  Rng rng(35);
  const auto ro = sample_rollout(ske, res, ex, 6, rng);
  CHECK(ro.mask.size() == ex.ske.retrieved.size());
  CHECK(ro.response.size() <= 6);
  Rng again(35);
  const auto ro2 = sample_rollout(ske, res, ex, 6, again);
  CHECK(ro2.mask == ro.mask);
  CHECK(ro2.response == ro.response);

  auto grad_at = [&](double advantage) {
    ske.params().zero_grad();
    res.params().zero_grad();
    Tape tape;
    tape.backward(policy_loss(tape, ske, res, ex, ro, advantage));
    auto g = grads(ske.params());
    const auto r = grads(res.params());
    g.insert(g.end(), r.begin(), r.end());
    return g;
  };
  for (double g : grad_at(0.0)) CHECK(g == 0.0);
  const auto up = grad_at(0.7), down = grad_at(-0.7);
  double mag = 0;
  for (std::size_t i = 0; i < up.size(); ++i) {
    CHECK(up[i] == -down[i]);
    mag += std::abs(up[i]);
  }
  CHECK(mag > 0.0);

  // The log-probabilities of the rollout match the sampled distributions.
  Tape tape;
  const auto lp = rollout_log_prob(tape, ske, res, ex, ro);
  const auto probs = ske.mask_probs(ex.ske);
  double expected = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) expected += std::log(ro.mask[i] ? probs[i] : 1 - probs[i]);
  CHECK(lp.skeleton.item() == doctest::Approx(expected).epsilon(1e-12));
  CHECK(lp.response.item() <= 0.0);
}

TEST_CASE("cascade requires pretrained components") {
  ModelSet models;
  models.vocab = fixture::word_vocab(kVocab - text::Vocab::kNumReserved);
  models.ske.emplace(fixture::small_skeleton(kVocab), 1);
  models.res.emplace(fixture::small_response(kVocab), 2);
  const auto data = random_batch(36, 4);
  TrainingConfig cfg;
  cfg.mode = Mode::kCascade;
  cfg.epochs = 1;
  try {
    train_cascade(models, data, cfg);
    FAIL("expected PreconditionError");
  } catch (const PreconditionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("ske") != std::string::npos);
    CHECK(msg.find("critic") != std::string::npos);
  }
  models.critic.emplace(CriticConfig{kVocab, 6, 5}, 3);
  models.trained = {"ske", "res", "critic"};
  models.joint = true;
  CHECK_THROWS_AS(train_cascade(models, data, cfg), PreconditionError);
  models.joint = false;
  cfg.batch = 2;
  const auto r = train_cascade(models, data, cfg);
  CHECK(r.rewards.size() == 4);
  CHECK(r.train.steps == 2);
  for (double v : r.rewards) CHECK(v <= 0.0);
}

TEST_CASE("cascade with a zero critic gives ln(1/3) rewards and no update") {
  ModelSet models;
  models.vocab = fixture::word_vocab(kVocab - text::Vocab::kNumReserved);
  models.ske.emplace(fixture::small_skeleton(kVocab), 4);
  models.res.emplace(fixture::small_response(kVocab), 5);
  models.critic.emplace(CriticConfig{kVocab, 6, 5}, 6, true);
  models.trained = {"ske", "res", "critic"};
  const auto data = random_batch(37, 6);
  const auto before = values(models.res->params());
  TrainingConfig cfg;
  cfg.epochs = 2;
  cfg.batch = 3;
  const auto r = train_cascade(models, data, cfg);
  for (double v : r.rewards) CHECK(std::abs(v - std::log(1.0 / 3.0)) <= 1e-9);
  // Constant rewards make every advantage zero.
  CHECK(values(models.res->params()) == before);
}
