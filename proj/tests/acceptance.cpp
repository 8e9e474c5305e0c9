#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "grad_check.hpp"
#include "lpan/attack.hpp"
#include "lpan/container.hpp"
#include "lpan/crc32.hpp"
#include "lpan/protocol.hpp"
#include "lpan/puf.hpp"
#include "lpan/split_trainer.hpp"
#include "lpan/transport.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <random>

using namespace lpan;
using Clock = std::chrono::steady_clock;

namespace {

constexpr double kTmax = 2.0;

double secs_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void verdict_line(int k, const char* what, bool pass, const std::string& detail = "") {
  std::printf("criterion %d (%s): %s%s%s\n", k, what, pass ? "PASS" : "FAIL",
              detail.empty() ? "" : "  ", detail.c_str());
  std::fflush(stdout);
}

const puf::CrpDataset& dataset() {
  static puf::CrpDataset ds = [] {
    auto model = puf::simulate_ro_puf(7, 8);
    return puf::generate_dataset(model, 1024, 8);
  }();
  return ds;
}

sl::TrainConfig enroll_cfg() {
  sl::TrainConfig cfg;  // library defaults are the production recipe
  cfg.seed = 1;
  cfg.max_epochs = 3000;
  return cfg;
}

struct Deployment {
  sl::EnrollResult res;
  double enroll_seconds = 0.0;
};

// One full n=1024 enrollment shared by every criterion; criterion 1 owns the
// timing budget.
const Deployment& deployment() {
  static Deployment d = [] {
    Deployment out;
    auto t0 = Clock::now();
    out.res = sl::enroll(dataset(), enroll_cfg());
    out.enroll_seconds = secs_since(t0);
    return out;
  }();
  return d;
}

proto::NodeState make_node(const models::ModelBundle& bundle) {
  return proto::NodeState(1, bundle.node_model_set());
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("criterion 1: memorization exactness") {
  const auto& d = deployment();
  std::size_t bit_errors = 0;
  for (std::size_t i = 0; i < dataset().size(); ++i) {
    auto [c, r] = models::generate_crp(d.res.bundle.dnn, i);
    bit_errors += proto::hamming(c.bits, dataset().entries[i].challenge.bits);
    bit_errors += proto::hamming(r.bits, dataset().entries[i].response.bits);
  }
  const bool in_budget = d.enroll_seconds <= 600.0;
  char detail[96];
  std::snprintf(detail, sizeof detail, "[enroll %.0fs, %zu bit errors over %zu CRPs]",
                d.enroll_seconds, bit_errors, dataset().size());
  verdict_line(1, "memorization exactness", bit_errors == 0 && in_budget, detail);
  CHECK(bit_errors == 0);
  CHECK(in_budget);
}

TEST_CASE("criterion 2: end-to-end authentication") {
  const auto& bundle = deployment().res.bundle;
  proto::VerifierState vs(bundle, kTmax, 21);
  auto node = make_node(bundle);
  double clock = 0.0;
  std::size_t accepts = 0, exact_shape = 0;
  const std::size_t sessions = 1000;
  for (std::size_t i = 0; i < sessions; ++i) {
    auto res = net::run_session_loopback(vs, node, clock);
    if (res.verdict == proto::Verdict::Accept) ++accepts;
    if (res.messages == proto::kSessionMessages &&
        res.payload_bytes * 8 == proto::kSessionPayloadBits)
      ++exact_shape;
    clock += 0.01;
  }
  char detail[96];
  std::snprintf(detail, sizeof detail, "[%zu/%zu accepts, %zu/%zu with 3 msgs / 264 bits]",
                accepts, sessions, exact_shape, sessions);
  verdict_line(2, "end-to-end authentication", accepts == sessions && exact_shape == sessions,
               detail);
  CHECK(accepts == sessions);
  CHECK(exact_shape == sessions);
}

TEST_CASE("criterion 3: fake-LC discrimination") {
  const auto& bundle = deployment().res.bundle;
  auto node = make_node(bundle);
  auto cm = attack::fake_lc_sweep(node, bundle, dataset(), 10000, 10000, 33);
  const bool pass = cm.true_accept_rate() >= 0.99 && cm.true_reject_rate() >= 0.99;
  char detail[96];
  std::snprintf(detail, sizeof detail, "[true-accept %.4f, true-reject %.4f]",
                cm.true_accept_rate(), cm.true_reject_rate());
  verdict_line(3, "fake-LC discrimination", pass, detail);
  CHECK(cm.true_accept_rate() >= 0.99);
  CHECK(cm.true_reject_rate() >= 0.99);
}

TEST_CASE("criterion 4: ML-attack resistance") {
  const auto& bundle = deployment().res.bundle;
  auto node = make_node(bundle);
  const std::uint32_t checksum = attack::bundle_checksum(bundle);

  // One deployment: 500 eavesdropped training pairs, then the n=1024 index
  // pool leaves 524 fresh sessions, split 262 per attacker (the published
  // 10^3-per-attacker count does not fit a 1024-CRP pool).
  proto::VerifierState vs(bundle, kTmax, 47);
  double clock = 0.0;
  auto log = attack::eavesdrop(vs, node, clock, 500);
  REQUIRE(log.pairs.size() == 500);

  sl::TrainConfig atk_cfg;
  atk_cfg.seed = 99;
  atk_cfg.max_epochs = 500;
  auto mlp = attack::make_mlp_attacker(55);
  attack::train_mlp_attacker(mlp, log, atk_cfg);
  auto mlp_rep = attack::ml_modeling_attack(mlp, log, vs, bundle, clock, 262);

  auto rbf = attack::train_rbf_attacker(log);
  auto rbf_rep = attack::ml_modeling_attack(rbf, log, vs, bundle, clock, 262);

  // Reference point: per-bit accuracy of a constant majority-vote predictor
  // over the enrolled responses. The simulator's per-bank pair-selection rule
  // quantizes each bit's marginal to multiples of 1/4, so this baseline sits
  // well above 0.5 for every seed; attacker per-bit scores should be read
  // against it.
  double majority_baseline = 0.0;
  {
    const auto& ds = dataset();
    const std::size_t rbits = ds.entries[0].response.bits.size();
    for (std::size_t k = 0; k < rbits; ++k) {
      std::size_t ones = 0;
      for (const auto& e : ds.entries) ones += e.response.bits[k] ? 1 : 0;
      majority_baseline += std::max(ones, ds.size() - ones);
    }
    majority_baseline /= static_cast<double>(rbits * ds.size());
  }

  const bool pass = mlp_rep.accept_rate() <= 0.01 && rbf_rep.accept_rate() <= 0.01 &&
                    mlp_rep.per_bit_accuracy <= 0.60 && rbf_rep.per_bit_accuracy <= 0.60 &&
                    attack::bundle_checksum(bundle) == checksum;
  char detail[160];
  std::snprintf(detail, sizeof detail,
                "[mlp accept %.4f per-bit %.3f; rbf accept %.4f per-bit %.3f; "
                "majority baseline %.3f; 262 sessions each]",
                mlp_rep.accept_rate(), mlp_rep.per_bit_accuracy, rbf_rep.accept_rate(),
                rbf_rep.per_bit_accuracy, majority_baseline);
  verdict_line(4, "ML-attack resistance", pass, detail);
  CHECK(mlp_rep.accept_rate() <= 0.01);
  CHECK(rbf_rep.accept_rate() <= 0.01);
  CHECK(mlp_rep.per_bit_accuracy <= 0.60);
  CHECK(rbf_rep.per_bit_accuracy <= 0.60);
  CHECK(attack::bundle_checksum(bundle) == checksum);
}

TEST_CASE("criterion 5: replay rejection") {
  const auto& bundle = deployment().res.bundle;
  auto node = make_node(bundle);
  proto::VerifierState vs(bundle, kTmax, 61);
  double clock = 0.0;
  auto log = attack::eavesdrop(vs, node, clock, 24);
  auto rep = attack::replay_attack(log, vs, clock, 1000);
  char detail[64];
  std::snprintf(detail, sizeof detail, "[%zu/%zu replays rejected]", rep.rejected, rep.trials);
  verdict_line(5, "replay rejection", rep.rejected == rep.trials && rep.trials == 1000,
               detail);
  CHECK(rep.trials == 1000);
  CHECK(rep.rejected == rep.trials);
}

TEST_CASE("criterion 6: forward-secrecy mechanism") {
  const auto& bundle = deployment().res.bundle;
  auto node = make_node(bundle);
  const std::string state = temp_path("lpan_acceptance_c6.state");
  std::filesystem::remove(state);

  double clock = 0.0;
  std::size_t accepted = 0, refused = 0;
  std::vector<proto::SessionTranscript> all;
  auto run_block = [&](proto::VerifierState& vs, std::size_t attempts) {
    for (std::size_t i = 0; i < attempts; ++i) {
      try {
        auto res = net::run_session_loopback(vs, node, clock);
        if (res.verdict == proto::Verdict::Accept) ++accepted;
        clock += 0.01;
      } catch (const proto::PoolExhausted&) {
        ++refused;
      }
    }
  };
  {
    proto::VerifierState vs(bundle, kTmax, 77, state);
    run_block(vs, 512);
    auto ts = vs.take_transcripts();
    all.insert(all.end(), ts.begin(), ts.end());
  }
  {
    // Verifier restart: same state file, same draw seed.
    proto::VerifierState vs(bundle, kTmax, 77, state);
    run_block(vs, 10000 - 512);
    auto ts = vs.take_transcripts();
    all.insert(all.end(), ts.begin(), ts.end());
  }
  auto audit = attack::forward_secrecy_audit(all);
  const bool pass = audit.clean() && accepted == dataset().size() &&
                    refused == 10000 - dataset().size();
  char detail[128];
  std::snprintf(detail, sizeof detail,
                "[%zu issuances, %zu refusals, %zu index / %zu LC collisions]", accepted,
                refused, audit.index_collisions, audit.lc_collisions);
  verdict_line(6, "forward-secrecy mechanism", pass, detail);
  CHECK(audit.index_collisions == 0);
  CHECK(audit.lc_collisions == 0);
  CHECK(accepted == dataset().size());
  CHECK(refused == 10000 - dataset().size());
  std::filesystem::remove(state);
}

TEST_CASE("criterion 7: timer enforcement") {
  const auto& bundle = deployment().res.bundle;
  auto node = make_node(bundle);
  proto::VerifierState vs(bundle, kTmax, 85);
  double clock = 0.0;

  auto run_with_delay = [&](double delay) {
    net::FaultHooks hooks;
    hooks.delay_response = delay;
    auto res = net::run_session_loopback(vs, node, clock, hooks);
    clock += 0.01;
    return res.verdict;
  };

  const bool pass = run_with_delay(0.0) == proto::Verdict::Accept &&
                    run_with_delay(kTmax - 1e-6) == proto::Verdict::Accept &&
                    run_with_delay(kTmax) == proto::Verdict::Accept &&  // now == deadline
                    run_with_delay(kTmax + 1e-6) == proto::Verdict::RejectTimeout &&
                    run_with_delay(1.5 * kTmax) == proto::Verdict::RejectTimeout;
  verdict_line(7, "timer enforcement", pass,
               "[delays 0, Tmax-eps, Tmax, Tmax+eps, 1.5*Tmax]");
  CHECK(pass);
}

TEST_CASE("criterion 8: split-learning fidelity") {
  // Reduced-size dataset keeps the double training run inside the budget;
  // fidelity is a structural property, not a scale property.
  auto model = puf::simulate_ro_puf(101, 8);
  auto small = puf::generate_dataset(model, 16, 202);
  sl::TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.seed = 7;

  bool split_identical = false;
  {
    auto e1 = models::make_encoder1(71);
    auto b1 = models::make_basic_encoder2(72);
    auto d1 = models::make_decoder2(73);
    sl::InProcessLink link;
    sl::phase_a(small, e1, b1, d1, link, cfg);
    auto e2 = models::make_encoder1(71);
    auto b2 = models::make_basic_encoder2(72);
    auto d2 = models::make_decoder2(73);
    sl::train_autoencoder_monolithic(small, e2, b2, d2, cfg);
    split_identical = serialize_mlp(e1.net) == serialize_mlp(e2.net) &&
                      serialize_mlp(b1.net) == serialize_mlp(b2.net) &&
                      serialize_mlp(d1.net) == serialize_mlp(d2.net);
  }

  // Frozen-layer checksums constant through phase (b).
  bool frozen_constant = false;
  {
    auto res = sl::enroll(small, cfg);
    // enroll freezes a copy of benc2 as the extended encoder's base; every
    // weight and bias must survive phase (b) untouched (the frozen mask
    // itself differs by construction, so compare parameters, not serialized
    // bytes).
    auto params_equal = [](const nn::Mlp& a, const nn::Mlp& b) {
      if (a.layers.size() != b.layers.size()) return false;
      for (std::size_t k = 0; k < a.layers.size(); ++k)
        if (a.layers[k].weights.storage() != b.layers[k].weights.storage() ||
            a.layers[k].bias != b.layers[k].bias)
          return false;
      return true;
    };
    frozen_constant = params_equal(res.bundle.xenc2.base.net, res.bundle.benc2.net);
  }

  // Gradient checks against central finite differences on reduced-width
  // replicas of every production architecture (hidden widths / 16, floored
  // at 2).
  using nn::Activation;
  auto relu_chain = [](std::size_t hidden) {
    std::vector<Activation> a(hidden, Activation::ReLU);
    a.push_back(Activation::Linear);
    return a;
  };
  const std::vector<std::vector<std::size_t>> archs = {
      {10, 4, 8, 16, 32, 64, 48},          // generator
      {32, 64, 32, 16, 8, 4, 2, 2, 2, 4},  // encoder1
      {4, 2, 2, 2, 4, 8, 16, 32, 64, 16},  // decoder1
      {4, 64, 32, 16},                     // basic encoder2
      {16, 4, 2, 2, 2, 4},                 // encoder2 extension
      {16, 32, 16, 32},                    // decoder2
  };
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_real_distribution<double> ub(-0.4, 0.4);
  for (const auto& sizes : archs) {
    auto mlp = nn::init_mlp(sizes, relu_chain(sizes.size() - 2), 404);
    // Random biases move dead ReLU units off the kink, where central finite
    // differences are one-sided.
    for (auto& l : mlp.layers)
      for (double& b : l.bias) b = ub(rng);
    Matrix x(3, sizes.front()), t(3, sizes.back());
    for (double& v : x.storage()) v = u(rng);
    for (double& v : t.storage()) v = u(rng);
    testutil::check_grads_against_fd(mlp, x, t);
  }

  verdict_line(8, "split-learning fidelity", split_identical && frozen_constant,
               "[split == monolithic, frozen base constant, FD grad checks at 1e-4]");
  CHECK(split_identical);
  CHECK(frozen_constant);
}

TEST_CASE("criterion 9: wire-format regression") {
  const auto& bundle = deployment().res.bundle;
  auto node = make_node(bundle);
  proto::VerifierState vs(bundle, kTmax, 93);
  double clock = 0.0;
  auto res = net::run_session_loopback(vs, node, clock);

  const bool measured_ok = res.verdict == proto::Verdict::Accept &&
                           res.messages == proto::kSessionMessages &&
                           res.payload_bytes * 8 == proto::kSessionPayloadBits;
  const auto& rows = proto::literature_overhead();
  auto row_is = [&](std::size_t i, const char* name, std::size_t m, std::size_t b) {
    return i < rows.size() && std::string(rows[i].protocol) == name &&
           rows[i].messages == m && rows[i].bits == b;
  };
  const bool table_ok = rows.size() == 4 && row_is(0, "Chatterjee et al.", 6, 3504) &&
                        row_is(1, "Harishma et al.", 8, 856) &&
                        row_is(2, "Nimmy et al.", 3, 1792) &&
                        row_is(3, "Zhang et al.", 5, 1040);
  char detail[96];
  std::snprintf(detail, sizeof detail, "[measured %zu msgs / %zu bits; 4 literature rows]",
                res.messages, res.payload_bytes * 8);
  verdict_line(9, "wire-format regression", measured_ok && table_ok, detail);
  CHECK(measured_ok);
  CHECK(table_ok);
}
