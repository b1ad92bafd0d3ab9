#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "s2r/critic.hpp"
#include "s2r/dataset.hpp"
#include "s2r/respgen.hpp"
#include "s2r/skelgen.hpp"
#include "s2r/textcore.hpp"

namespace s2r::train {

enum class Mode { kSkeMle, kResMle, kJoint, kCritic, kCascade };

std::string_view mode_name(Mode mode);
/// Accepts "ske_mle", "res_mle", "joint", "critic", "cascade".
Mode parse_mode(std::string_view name);

struct TrainingConfig {
  Mode mode = Mode::kJoint;
  double eta = 1.0;
  std::size_t batch = 16;
  double lr = 1e-3;
  double rl_lr = 2e-4;  // policy-gradient step size for cascade training
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
  double baseline_decay = 0.9;
  double clip = 5.0;
  bool critic_finetune = false;
  std::size_t max_len = 30;  // sampling cap for cascade rollouts
  double holdout = 0.1;      // critic held-out fraction
};

/// Token ids for one training quadruple. `skeleton` is r' with the proxy
/// labels applied; `labels` may be empty for pair-only data.
struct Example {
  IdSeq query;
  IdSeq response;
  skel::SkeletonInput ske;
  std::vector<int> labels;
  IdSeq skeleton;
};

Example make_example(const text::Vocab& vocab, const data::LabeledQuad& quad);
/// Pair-only example: no prototype, empty skeleton.
Example make_pair_example(const text::Vocab& vocab, const TokenSeq& query, const TokenSeq& response);

struct LossParts {
  Var loss;
  std::size_t tokens = 0;
  std::size_t correct = 0;  // argmax / threshold hits
};

/// Mean per-token negative Bernoulli log-likelihood of the proxy labels.
LossParts loss_skeleton_mle(Tape& tape, const skel::SkeletonGenerator& ske, std::span<const Example> batch,
                            bool train, Rng& rng);
/// Mean per-token cross-entropy of the gold response given the proxy skeleton.
LossParts loss_response_mle(Tape& tape, const resp::ResponseGenerator& res, std::span<const Example> batch,
                            bool train, Rng& rng);

struct JointLoss {
  Var total;  // response + eta * skeleton
  LossParts response;
  LossParts skeleton;
};

/// The response generator's skeleton memory is the skeleton generator's
/// slot states, so gradients reach both models through it.
JointLoss loss_joint(Tape& tape, const skel::SkeletonGenerator& ske, const resp::ResponseGenerator& res,
                     std::span<const Example> batch, double eta, bool train, Rng& rng);

/// Skeleton memory for joint decoding: the slot states, or one zero slot
/// when r' is empty.
Var joint_memory(Tape& tape, const skel::SkeletonGenerator& ske, const skel::SkeletonForward& fwd);

struct StepLog {
  std::size_t step = 0;
  Mode mode = Mode::kJoint;
  double value = 0.0;  // loss, or mean reward for cascade
  double lr = 0.0;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double mean_reward = 0.0;
  double token_accuracy = 0.0;
  double skeleton_accuracy = 0.0;
};

struct Hooks {
  std::function<void(const StepLog&)> on_step;
  /// Return false to stop early.
  std::function<bool(const EpochStats&)> on_epoch;
};

/// One JSON object per line: {"step", "mode", "loss" | "reward", "lr"}.
std::string format_step_log(const StepLog& log);

struct TrainResult {
  std::size_t epochs_run = 0;
  std::size_t steps = 0;
  std::vector<double> step_values;
  EpochStats last;
};

TrainResult train_skeleton(skel::SkeletonGenerator& ske, std::span<const Example> data, const TrainingConfig& cfg,
                           const Hooks& hooks = {});
TrainResult train_response(resp::ResponseGenerator& res, std::span<const Example> data, const TrainingConfig& cfg,
                           const Hooks& hooks = {});
TrainResult train_joint(skel::SkeletonGenerator& ske, resp::ResponseGenerator& res, std::span<const Example> data,
                        const TrainingConfig& cfg, const Hooks& hooks = {});

/// Threshold-0.5 label accuracy against the proxy labels.
double skeleton_accuracy(const skel::SkeletonGenerator& ske, std::span<const Example> data);
/// Teacher-forced argmax accuracy over response tokens plus <eos>. With
/// `joint` set, the skeleton memory comes from `ske`.
double response_accuracy(const resp::ResponseGenerator& res, std::span<const Example> data,
                         const skel::SkeletonGenerator* joint = nullptr);

// --- Critic ---------------------------------------------------------------

struct CriticResult {
  TrainResult train;
  double heldout_accuracy = 0.0;
  std::size_t heldout = 0;
};

/// Uniformly drawn gold response of another example.
const IdSeq& random_other_response(std::span<const Example> data, std::size_t self, Rng& rng);

/// `generated[i]` is r_hat for data[i]. Every tenth example (when there
/// are at least ten) is held out for pick accuracy; otherwise accuracy is
/// measured on the training data.
CriticResult train_critic(Critic& critic, std::span<const Example> data, std::span<const IdSeq> generated,
                          const TrainingConfig& cfg, const Hooks& hooks = {});

/// Greedy responses with thresholded skeletons, as r_hat for critic training.
std::vector<IdSeq> generate_candidates(const skel::SkeletonGenerator& ske, const resp::ResponseGenerator& res,
                                       std::span<const Example> data, std::size_t max_len);

// --- Cascade ----------------------------------------------------------------

struct Rollout {
  std::vector<int> mask;
  IdSeq skeleton;
  IdSeq response;
  bool finished = false;  // response ended with <eos>
};

/// Samples t_hat from the mask probabilities, then r_hat token by token.
Rollout sample_rollout(const skel::SkeletonGenerator& ske, const resp::ResponseGenerator& res, const Example& ex,
                       std::size_t max_len, Rng& rng);

/// log P(t_hat | q, q', r') and log P(r_hat | q, t_hat) for a fixed rollout.
struct RolloutLogProb {
  Var skeleton;
  Var response;
};
RolloutLogProb rollout_log_prob(Tape& tape, const skel::SkeletonGenerator& ske, const resp::ResponseGenerator& res,
                                const Example& ex, const Rollout& rollout);

/// -(advantage) * (log P(t_hat) + log P(r_hat)); its gradient is the
/// REINFORCE update for both agents.
Var policy_loss(Tape& tape, const skel::SkeletonGenerator& ske, const resp::ResponseGenerator& res, const Example& ex,
                const Rollout& rollout, double advantage);

// --- Model bundle and checkpoints -----------------------------------------

struct ModelSet {
  text::Vocab vocab;
  std::optional<skel::SkeletonGenerator> ske;
  std::optional<resp::ResponseGenerator> res;
  std::optional<Critic> critic;
  std::optional<resp::ResponseGenerator> inverse;
  bool joint = false;  // res reads ske's slot states
  /// Components that finished a training stage: "ske", "res", "critic", "inv".
  std::set<std::string> trained;

  /// Throws PreconditionError naming every component of `names` that is
  /// missing or untrained.
  void require_pretrained(std::initializer_list<std::string_view> names) const;
  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "SKR1", u32 version, u32 metadata length, JSON metadata, then float32
/// little-endian payloads in the (name-sorted) manifest order.
void save_checkpoint(const ModelSet& models, const std::filesystem::path& path);
ModelSet load_checkpoint(const std::filesystem::path& path);

struct CascadeResult {
  TrainResult train;
  std::vector<double> rewards;  // one per sampled example, in order
};

/// Policy-gradient fine-tuning of both agents against the critic's reward
/// with an exponential moving-average baseline. Throws PreconditionError
/// unless the skeleton generator, response generator and critic were all
/// pretrained; joint models are rejected.
CascadeResult train_cascade(ModelSet& models, std::span<const Example> data, const TrainingConfig& cfg,
                            const Hooks& hooks = {});

}  // namespace s2r::train
