#pragma once

#include "lpan/protocol.hpp"
#include "lpan/split_trainer.hpp"
#include "lpan/transport.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lpan::attack {

// LC-LR pairs harvested from accepted sessions on the untrusted channel.
struct EavesdropLog {
  std::vector<std::pair<models::LatentChallenge, models::LatentResponse>> pairs;
};

// Runs honest sessions against the verifier and records what an on-path
// observer sees.
EavesdropLog eavesdrop(proto::VerifierState& verifier, const proto::NodeState& node,
                       double& clock, std::size_t sessions);

struct ReplayReport {
  std::size_t trials = 0;
  std::size_t rejected = 0;
  double rejection_rate() const;
};

ReplayReport replay_attack(const EavesdropLog& log, proto::VerifierState& verifier,
                           double& clock, std::size_t trials);

struct ImpersonationReport {
  std::size_t trials = 0;
  std::size_t aborts = 0;
  double abort_rate() const;
};

enum class LcForgery { UniformRandom, PerturbedGenuine };

ImpersonationReport impersonate_verifier(const proto::NodeState& node,
                                         const models::ModelBundle& bundle,
                                         const puf::CrpDataset& dataset, LcForgery kind,
                                         double perturbation, std::size_t trials,
                                         std::uint64_t seed);

// 4-layer NN attacker from the paper's modeling-attack experiment.
struct MlpAttacker {
  nn::Mlp net;  // 4 -> [64, 32, 16, 8] -> 4
};

MlpAttacker make_mlp_attacker(std::uint64_t seed);
void train_mlp_attacker(MlpAttacker& att, const EavesdropLog& log, const sl::TrainConfig& cfg);
models::LatentResponse predict(const MlpAttacker& att, const models::LatentChallenge& lc);

// RBF kernel ridge regression, the SVM-RBF surrogate. Gamma by the median
// heuristic over training LC distances, ridge lambda fixed.
struct RbfAttacker {
  double gamma = 1.0;
  double lambda = 1e-3;
  std::vector<models::LatentChallenge> support;
  Matrix dual_weights;  // support x 4
};

RbfAttacker train_rbf_attacker(const EavesdropLog& log, double lambda = 1e-3);
models::LatentResponse predict(const RbfAttacker& att, const models::LatentChallenge& lc);

struct ModelingAttackReport {
  std::size_t sessions = 0;
  std::size_t accepts = 0;
  double accept_rate() const;
  double per_bit_accuracy = 0.0;
  double exact_match_rate = 0.0;
  // Reconstruction quality on the training log itself (memorization check).
  double train_per_bit_accuracy = 0.0;
};

ModelingAttackReport ml_modeling_attack(const MlpAttacker& att, const EavesdropLog& log,
                                        proto::VerifierState& verifier,
                                        const models::ModelBundle& bundle, double& clock,
                                        std::size_t sessions);
ModelingAttackReport ml_modeling_attack(const RbfAttacker& att, const EavesdropLog& log,
                                        proto::VerifierState& verifier,
                                        const models::ModelBundle& bundle, double& clock,
                                        std::size_t sessions);

proto::Verdict mitm_delay_attack(proto::VerifierState& verifier, const proto::NodeState& node,
                                 double& clock, double delay);

struct ConfusionMatrix {
  std::size_t true_accept = 0, false_reject = 0;
  std::size_t true_reject = 0, false_accept = 0;
  double true_accept_rate() const;
  double true_reject_rate() const;
};

// Genuine population: enrolled challenges encoded by the verifier copy.
// Fake population: uniform over the enrolled-LC bounding box, excluding
// delta-balls around genuine LCs.
ConfusionMatrix fake_lc_sweep(const proto::NodeState& node, const models::ModelBundle& bundle,
                              const puf::CrpDataset& dataset, std::size_t genuine_count,
                              std::size_t fake_count, std::uint64_t seed);

struct ForwardSecrecyReport {
  std::size_t sessions_audited = 0;
  std::size_t index_collisions = 0;
  std::size_t lc_collisions = 0;
  bool clean() const { return index_collisions == 0 && lc_collisions == 0; }
};

ForwardSecrecyReport forward_secrecy_audit(const std::vector<proto::SessionTranscript>& ts);

// Checksum over all defender model parameters; scenarios assert it is
// unchanged by any attack.
std::uint32_t bundle_checksum(const models::ModelBundle& bundle);

}  // namespace lpan::attack
