#include "lpan/attack.hpp"

#include "lpan/container.hpp"
#include "lpan/crc32.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace lpan::attack {

using models::Latent;
using models::LatentChallenge;
using models::LatentResponse;

double ReplayReport::rejection_rate() const {
  return trials ? static_cast<double>(rejected) / static_cast<double>(trials) : 0.0;
}
double ImpersonationReport::abort_rate() const {
  return trials ? static_cast<double>(aborts) / static_cast<double>(trials) : 0.0;
}
double ModelingAttackReport::accept_rate() const {
  return sessions ? static_cast<double>(accepts) / static_cast<double>(sessions) : 0.0;
}
double ConfusionMatrix::true_accept_rate() const {
  const auto n = true_accept + false_reject;
  return n ? static_cast<double>(true_accept) / static_cast<double>(n) : 0.0;
}
double ConfusionMatrix::true_reject_rate() const {
  const auto n = true_reject + false_accept;
  return n ? static_cast<double>(true_reject) / static_cast<double>(n) : 0.0;
}

EavesdropLog eavesdrop(proto::VerifierState& verifier, const proto::NodeState& node,
                       double& clock, std::size_t sessions) {
  EavesdropLog log;
  for (std::size_t i = 0; i < sessions; ++i) {
    auto issued = verifier.on_request(proto::AuthRequest{node.node_id()}, clock);
    LatentChallenge lc = models::wire_round_trip(issued.msg.lc);
    auto rsp = node.on_challenge(proto::ChallengeMsg{lc});
    if (!rsp) {
      verifier.expire_session(issued.session_id, clock);
      continue;
    }
    LatentResponse lr = models::wire_round_trip(rsp->lr);
    auto v = verifier.on_response(issued.session_id, proto::ResponseMsg{lr}, clock);
    if (v == proto::Verdict::Accept) log.pairs.emplace_back(lc, lr);
    clock += 0.001;
  }
  return log;
}

ReplayReport replay_attack(const EavesdropLog& log, proto::VerifierState& verifier,
                           double& clock, std::size_t trials) {
  if (log.pairs.empty()) throw proto::SessionError("replay attack needs a non-empty log");
  ReplayReport rep;
  for (std::size_t i = 0; i < trials; ++i) {
    auto issued = verifier.on_request(proto::AuthRequest{0xAA}, clock);
    const auto& lr = log.pairs[i % log.pairs.size()].second;
    auto v = verifier.on_response(issued.session_id, proto::ResponseMsg{lr}, clock);
    ++rep.trials;
    if (v != proto::Verdict::Accept) ++rep.rejected;
    clock += 0.001;
  }
  return rep;
}

ImpersonationReport impersonate_verifier(const proto::NodeState& node,
                                         const models::ModelBundle& bundle,
                                         const puf::CrpDataset& dataset, LcForgery kind,
                                         double perturbation, std::size_t trials,
                                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
  std::uniform_int_distribution<int> sign(0, 1);
  const auto& box = bundle.meta.lc_box;

  ImpersonationReport rep;
  for (std::size_t i = 0; i < trials; ++i) {
    Latent lc;
    if (kind == LcForgery::UniformRandom) {
      for (std::size_t k = 0; k < models::kLatentDim; ++k)
        lc[k] = box.lo[k] + unit(rng) * box.range(k);
    } else {
      lc = models::encode_challenge(bundle.enc1, dataset.entries[pick(rng)].challenge);
      for (std::size_t k = 0; k < models::kLatentDim; ++k) {
        const double step = perturbation * bundle.meta.delta * box.range(k);
        lc[k] += sign(rng) ? step : -step;
      }
    }
    auto rsp = node.on_challenge(proto::ChallengeMsg{models::wire_round_trip(lc)});
    ++rep.trials;
    if (!rsp) ++rep.aborts;
  }
  return rep;
}

MlpAttacker make_mlp_attacker(std::uint64_t seed) {
  using nn::Activation;
  std::vector<std::size_t> sizes{4, 64, 32, 16, 8, 4};
  std::vector<Activation> acts(4, Activation::ReLU);
  acts.push_back(Activation::Linear);
  return MlpAttacker{nn::init_mlp(sizes, acts, seed)};
}

void train_mlp_attacker(MlpAttacker& att, const EavesdropLog& log,
                        const sl::TrainConfig& cfg) {
  const std::size_t n = log.pairs.size();
  Matrix x(n, 4), y(n, 4);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < 4; ++k) {
      x(i, k) = log.pairs[i].first[k];
      y(i, k) = log.pairs[i].second[k];
    }
  nn::AdamState state =
      nn::AdamState::for_mlp(att.net, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t begin = 0; begin < n; begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, n);
      Matrix xb(end - begin, 4), yb(end - begin, 4);
      for (std::size_t r = begin; r < end; ++r)
        for (std::size_t k = 0; k < 4; ++k) {
          xb(r - begin, k) = x(order[r], k);
          yb(r - begin, k) = y(order[r], k);
        }
      nn::ActivationTrace tr = nn::forward(att.net, xb);
      auto [loss, dy] = nn::mse_loss(tr.output(), yb);
      (void)loss;
      nn::Gradients g = nn::backward(att.net, tr, dy);
      nn::adam_step(att.net, g, state);
    }
  }
}

LatentResponse predict(const MlpAttacker& att, const LatentChallenge& lc) {
  auto out = nn::forward_vec(att.net, std::vector<double>(lc.begin(), lc.end()));
  LatentResponse lr;
  for (std::size_t k = 0; k < 4; ++k) lr[k] = out[k];
  return lr;
}

static double sqdist(const Latent& a, const Latent& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < models::kLatentDim; ++k) d += (a[k] - b[k]) * (a[k] - b[k]);
  return d;
}

RbfAttacker train_rbf_attacker(const EavesdropLog& log, double lambda) {
  const std::size_t n = log.pairs.size();
  if (n < 2) throw proto::SessionError("rbf attacker needs at least 2 pairs");
  RbfAttacker att;
  att.lambda = lambda;
  att.support.reserve(n);
  for (const auto& p : log.pairs) att.support.push_back(p.first);

  std::vector<double> dists;
  dists.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      dists.push_back(std::sqrt(sqdist(att.support[i], att.support[j])));
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  const double median = std::max(dists[dists.size() / 2], 1e-12);
  att.gamma = 1.0 / (2.0 * median * median);

  Eigen::MatrixXd k(n, n), y(n, 4);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j)
      k(i, j) = std::exp(-att.gamma * sqdist(att.support[i], att.support[j]));
    k(i, i) += lambda;
    for (std::size_t c = 0; c < 4; ++c) y(i, c) = log.pairs[i].second[c];
  }
  Eigen::MatrixXd alpha = k.ldlt().solve(y);
  att.dual_weights = Matrix(n, 4);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 4; ++c) att.dual_weights(i, c) = alpha(i, c);
  return att;
}

LatentResponse predict(const RbfAttacker& att, const LatentChallenge& lc) {
  LatentResponse lr{};
  for (std::size_t i = 0; i < att.support.size(); ++i) {
    const double k = std::exp(-att.gamma * sqdist(att.support[i], lc));
    for (std::size_t c = 0; c < 4; ++c) lr[c] += k * att.dual_weights(i, c);
  }
  return lr;
}

namespace {

template <typename Attacker>
ModelingAttackReport run_modeling_attack(const Attacker& att, const EavesdropLog& log,
                                         proto::VerifierState& verifier,
                                         const models::ModelBundle& bundle, double& clock,
                                         std::size_t sessions) {
  if (log.pairs.size() < 100)
    throw proto::SessionError("modeling attack needs a log of at least 100 pairs");
  ModelingAttackReport rep;

  // Memorization of the log itself (capacity sanity check).
  std::size_t train_correct = 0, train_bits = 0;
  for (const auto& [lc, lr] : log.pairs) {
    auto predicted = models::binarize(models::decode_response(bundle.dec1, predict(att, lc)),
                                      bundle.meta.tau);
    auto truth =
        models::binarize(models::decode_response(bundle.dec1, lr), bundle.meta.tau);
    train_correct += truth.size() - proto::hamming(predicted, truth);
    train_bits += truth.size();
  }
  rep.train_per_bit_accuracy =
      static_cast<double>(train_correct) / static_cast<double>(train_bits);

  std::size_t correct = 0, bits = 0, exact = 0;
  for (std::size_t i = 0; i < sessions; ++i) {
    auto issued = verifier.on_request(proto::AuthRequest{0xEE}, clock);
    const std::size_t index = verifier.transcripts().back().crp_index;
    LatentChallenge lc = models::wire_round_trip(issued.msg.lc);
    LatentResponse lr = models::wire_round_trip(predict(att, lc));
    auto v = verifier.on_response(issued.session_id, proto::ResponseMsg{lr}, clock);
    ++rep.sessions;
    if (v == proto::Verdict::Accept) ++rep.accepts;

    auto expected = models::generate_crp(bundle.dnn, index, bundle.meta.tau).second;
    auto decoded =
        models::binarize(models::decode_response(bundle.dec1, lr), bundle.meta.tau);
    const std::size_t dist = proto::hamming(expected.bits, decoded);
    correct += expected.bits.size() - dist;
    bits += expected.bits.size();
    if (dist == 0) ++exact;
    clock += 0.001;
  }
  rep.per_bit_accuracy = static_cast<double>(correct) / static_cast<double>(bits);
  rep.exact_match_rate = static_cast<double>(exact) / static_cast<double>(sessions);
  return rep;
}

}  // namespace

ModelingAttackReport ml_modeling_attack(const MlpAttacker& att, const EavesdropLog& log,
                                        proto::VerifierState& verifier,
                                        const models::ModelBundle& bundle, double& clock,
                                        std::size_t sessions) {
  return run_modeling_attack(att, log, verifier, bundle, clock, sessions);
}

ModelingAttackReport ml_modeling_attack(const RbfAttacker& att, const EavesdropLog& log,
                                        proto::VerifierState& verifier,
                                        const models::ModelBundle& bundle, double& clock,
                                        std::size_t sessions) {
  return run_modeling_attack(att, log, verifier, bundle, clock, sessions);
}

proto::Verdict mitm_delay_attack(proto::VerifierState& verifier, const proto::NodeState& node,
                                 double& clock, double delay) {
  net::FaultHooks hooks;
  hooks.delay_response = delay;
  return net::run_session_loopback(verifier, node, clock, hooks).verdict;
}

ConfusionMatrix fake_lc_sweep(const proto::NodeState& node, const models::ModelBundle& bundle,
                              const puf::CrpDataset& dataset, std::size_t genuine_count,
                              std::size_t fake_count, std::uint64_t seed) {
  ConfusionMatrix cm;
  std::vector<Latent> genuine;
  genuine.reserve(dataset.size());
  for (const auto& e : dataset.entries)
    genuine.push_back(models::encode_challenge(bundle.enc1, e.challenge));

  for (std::size_t i = 0; i < genuine_count; ++i) {
    const Latent lc = models::wire_round_trip(genuine[i % genuine.size()]);
    if (models::verify_lc_authentic(node.models(), lc))
      ++cm.true_accept;
    else
      ++cm.false_reject;
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto& box = bundle.meta.lc_box;
  for (std::size_t i = 0; i < fake_count; ++i) {
    Latent lc;
    bool near_genuine = true;
    while (near_genuine) {
      for (std::size_t k = 0; k < models::kLatentDim; ++k)
        lc[k] = box.lo[k] + unit(rng) * box.range(k);
      near_genuine = false;
      for (const auto& g : genuine)
        if (models::latent_distance(lc, g, box) <= bundle.meta.delta) {
          near_genuine = true;
          break;
        }
    }
    if (models::verify_lc_authentic(node.models(), models::wire_round_trip(lc)))
      ++cm.false_accept;
    else
      ++cm.true_reject;
  }
  return cm;
}

ForwardSecrecyReport forward_secrecy_audit(const std::vector<proto::SessionTranscript>& ts) {
  if (ts.size() < 2)
    throw proto::SessionError("forward-secrecy audit needs at least 2 transcripts");
  ForwardSecrecyReport rep;
  rep.sessions_audited = ts.size();
  std::set<std::size_t> indices;
  std::set<std::array<double, models::kLatentDim>> lcs;
  for (const auto& t : ts) {
    if (!indices.insert(t.crp_index).second) ++rep.index_collisions;
    if (!lcs.insert(t.lc).second) ++rep.lc_collisions;
  }
  return rep;
}

std::uint32_t bundle_checksum(const models::ModelBundle& bundle) {
  std::uint32_t c = 0;
  for (const nn::Mlp* m : {&bundle.dnn.net, &bundle.enc1.net, &bundle.dec1.net,
                           &bundle.benc2.net, &bundle.xenc2.base.net,
                           &bundle.xenc2.extension, &bundle.dec2.net}) {
    auto bytes = serialize_mlp(*m);
    c = crc32(bytes.data(), bytes.size(), c);
  }
  return c;
}

}  // namespace lpan::attack
