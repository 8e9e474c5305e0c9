#include "CLI11.hpp"

#include "lpan/attack.hpp"
#include "lpan/protocol.hpp"
#include "lpan/puf.hpp"
#include "lpan/split_trainer.hpp"
#include "lpan/transport.hpp"

#include <csignal>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>

using namespace lpan;

namespace {

// Exit codes are a public contract.
constexpr int kExitAccept = 0;
constexpr int kExitFailure = 1;  // training / measurement / internal failure
constexpr int kExitReject = 2;
constexpr int kExitTimeout = 3;
constexpr int kExitNodeAbort = 4;
constexpr int kExitConfig = 5;
constexpr int kExitNetwork = 6;

struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t n = 1024;
  std::size_t oscillators = 8;
  std::string dataset = "dataset.lpan";
  std::string bundle = "bundle.lpan";
  std::string node_set = "node.lpan";
  std::string state = "verifier_state.txt";
  std::string report_dir = "reports";
  double t_max = 2.0;
  std::string host = "127.0.0.1";
  std::uint16_t port = 7421;
  std::uint8_t node_id = 1;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  std::size_t max_epochs = 3000;
  std::string checkpoint;
  std::size_t checkpoint_every = 0;
  bool force = false;
  bool verbose = false;
  // attack knobs
  std::string scenario;
  std::size_t trials = 1000;
  std::size_t log_sessions = 24;
  double delay = -1.0;  // mitm delay; default 1.5 * t_max
};

int exit_for_verdict(proto::Verdict v) {
  switch (v) {
    case proto::Verdict::Accept:
      return kExitAccept;
    case proto::Verdict::RejectResponseMismatch:
      return kExitReject;
    case proto::Verdict::RejectTimeout:
      return kExitTimeout;
    case proto::Verdict::NodeAbortUnauthenticLC:
      return kExitNodeAbort;
  }
  return kExitFailure;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

puf::CrpDataset load_dataset_any(const std::string& path) {
  return ends_with(path, ".csv") ? puf::load_csv(path) : puf::load_dataset(path);
}

void save_dataset_any(const puf::CrpDataset& ds, const std::string& path) {
  if (ends_with(path, ".csv"))
    puf::save_csv(ds, path);
  else
    puf::save_dataset(ds, path);
}

int refuse_overwrite(const RunConfig& cfg, const std::string& path) {
  if (cfg.force || !std::filesystem::exists(path)) return 0;
  std::fprintf(stderr, "refusing to overwrite %s (use --force)\n", path.c_str());
  return kExitConfig;
}

// Line-delimited report records; the report verb renders them.
void record(const RunConfig& cfg, const std::string& line) {
  std::filesystem::create_directories(cfg.report_dir);
  std::ofstream f(cfg.report_dir + "/records.txt", std::ios::app);
  char stamp[32];
  std::time_t now = std::time(nullptr);
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%S", std::gmtime(&now));
  f << "time=" << stamp << ' ' << line << '\n';
}

double wall_now() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

int cmd_simulate_puf(const RunConfig& cfg) {
  if (int rc = refuse_overwrite(cfg, cfg.dataset)) return rc;
  auto model = puf::simulate_ro_puf(cfg.seed, cfg.oscillators);
  auto ds = puf::generate_dataset(model, cfg.n, cfg.seed + 1);
  ds.validate();
  save_dataset_any(ds, cfg.dataset);
  std::printf("simulated RO PUF: banks=%zu oscillators/bank=%zu seed=%llu\n",
              puf::kBanks, cfg.oscillators, static_cast<unsigned long long>(cfg.seed));
  std::printf("dataset: %zu distinct CRPs -> %s\n", ds.size(), cfg.dataset.c_str());
  record(cfg, "cmd=simulate-puf n=" + std::to_string(ds.size()) + " seed=" +
                  std::to_string(cfg.seed) + " out=" + cfg.dataset);
  return kExitAccept;
}

sl::TrainConfig train_config(const RunConfig& cfg) {
  sl::TrainConfig tc;
  tc.batch_size = cfg.batch_size;
  tc.lr = cfg.lr;
  tc.max_epochs = cfg.max_epochs;
  tc.seed = cfg.seed;
  tc.checkpoint_path = cfg.checkpoint;
  tc.checkpoint_every = cfg.checkpoint_every;
  if (cfg.verbose)
    tc.on_check = [](std::size_t epoch, double loss, double acc, double margin, double mae) {
      std::printf("  epoch %zu: loss=%.3e bit-accuracy=%.4f margin=%.3f mae=%.3e\n",
                  epoch, loss, acc, margin, mae);
      std::fflush(stdout);
    };
  return tc;
}

void print_report(const char* stage, const sl::TrainReport& rep) {
  std::printf("%s: epochs=%zu bit-accuracy=%.4f mae=%.3e%s\n", stage, rep.epochs_run,
              rep.bit_accuracy, rep.mae, rep.converged ? "" : " (NOT CONVERGED)");
}

int cmd_enroll(const RunConfig& cfg) {
  if (int rc = refuse_overwrite(cfg, cfg.bundle)) return rc;
  if (int rc = refuse_overwrite(cfg, cfg.node_set)) return rc;
  puf::CrpDataset ds;
  try {
    ds = load_dataset_any(cfg.dataset);
    ds.validate();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "dataset error: %s\n", e.what());
    return kExitConfig;
  }
  std::printf("enrolling %zu CRPs from %s\n", ds.size(), cfg.dataset.c_str());
  sl::EnrollResult res;
  try {
    res = sl::enroll(ds, train_config(cfg));
  } catch (const sl::TrainError& e) {
    std::fprintf(stderr, "enrollment failed: %s\n", e.what());
    print_report("last stage", e.report);
    return kExitFailure;
  }
  print_report("dnn generator", res.dnn_report);
  print_report("phase (a)", res.phase_a_report);
  print_report("phase (b)", res.phase_b_report);
  auto eval = sl::evaluate_bundle(res.bundle, ds);
  std::printf("bundle: bit-accuracy=%.4f mae=%.3e bit-flip-rate=%.2e delta=%.3f\n",
              eval.bit_accuracy, eval.mae, eval.bit_flip_rate, res.bundle.meta.delta);
  res.bundle.save(cfg.bundle);
  models::save_node_set(res.bundle.node_model_set(), cfg.node_set);
  std::printf("wrote %s and %s\n", cfg.bundle.c_str(), cfg.node_set.c_str());
  record(cfg, "cmd=enroll n=" + std::to_string(ds.size()) +
                  " accuracy=" + std::to_string(eval.bit_accuracy) +
                  " mae=" + std::to_string(eval.mae) + " bundle=" + cfg.bundle);
  return kExitAccept;
}

net::ServerHandle* g_handle = nullptr;
void stop_server(int) {
  if (g_handle) g_handle->stop = true;
}

int cmd_serve(const RunConfig& cfg) {
  models::ModelBundle bundle;
  try {
    bundle = models::ModelBundle::load(cfg.bundle);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "bundle error: %s\n", e.what());
    return kExitConfig;
  }
  proto::VerifierState vs(bundle, cfg.t_max, cfg.seed, cfg.state);
  net::ServerHandle handle;
  g_handle = &handle;
  std::signal(SIGINT, stop_server);
  std::signal(SIGTERM, stop_server);
  std::printf("verifier: n=%zu unused-indices=%zu t_max=%.2fs state=%s\n",
              bundle.meta.n, vs.remaining_indices(), cfg.t_max, cfg.state.c_str());
  try {
    net::serve_verifier(cfg.host, cfg.port, vs, handle, wall_now, cfg.verbose);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "serve error: %s\n", e.what());
    return kExitNetwork;
  }
  std::filesystem::create_directories(cfg.report_dir);
  proto::export_transcripts(vs.take_transcripts(), cfg.report_dir + "/transcripts.txt");
  std::printf("stopped; transcripts -> %s/transcripts.txt\n", cfg.report_dir.c_str());
  return kExitAccept;
}

int cmd_authenticate(const RunConfig& cfg) {
  models::NodeModelSet nm;
  try {
    nm = models::load_node_set(cfg.node_set);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "node set error: %s\n", e.what());
    return kExitConfig;
  }
  proto::NodeState node(cfg.node_id, nm);
  net::NodeRunResult res;
  try {
    res = net::run_node(cfg.host, cfg.port, node, cfg.verbose);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "connection error: %s\n", e.what());
    return kExitNetwork;
  }
  if (res.node_aborted) {
    std::printf("node aborted: challenge LC failed the authenticity check\n");
    record(cfg, "cmd=authenticate verdict=node-abort");
    return kExitNodeAbort;
  }
  std::printf("verdict: %s\n", proto::verdict_name(res.verdict));
  record(cfg, std::string("cmd=authenticate verdict=") + proto::verdict_name(res.verdict));
  return exit_for_verdict(res.verdict);
}

int cmd_overhead(const RunConfig& cfg) {
  std::printf("%-22s %10s %10s\n", "protocol", "messages", "bits");
  for (const auto& r : proto::literature_overhead())
    std::printf("%-22s %10zu %10zu\n", r.protocol, r.messages, r.bits);

  models::ModelBundle bundle;
  try {
    bundle = models::ModelBundle::load(cfg.bundle);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "bundle error: %s\n", e.what());
    return kExitConfig;
  }
  proto::VerifierState vs(bundle, cfg.t_max, cfg.seed);
  proto::NodeState node(cfg.node_id, bundle.node_model_set());
  double clock = 0.0;
  auto res = net::run_session_loopback(vs, node, clock);
  const std::size_t bits = res.payload_bytes * 8;
  std::printf("%-22s %10zu %10zu  (measured, verdict=%s)\n", "this implementation",
              res.messages, bits, proto::verdict_name(res.verdict));
  std::printf("framed transport bytes: %zu (payload bytes: %zu)\n", res.framed_bytes,
              res.payload_bytes);
  record(cfg, "cmd=overhead messages=" + std::to_string(res.messages) +
                  " bits=" + std::to_string(bits));
  if (res.messages != proto::kSessionMessages || bits != proto::kSessionPayloadBits) {
    std::fprintf(stderr, "wire-format regression: expected 3 messages / 264 bits\n");
    return kExitFailure;
  }
  return kExitAccept;
}

int cmd_attack(const RunConfig& cfg) {
  models::ModelBundle bundle;
  puf::CrpDataset ds;
  try {
    bundle = models::ModelBundle::load(cfg.bundle);
    ds = load_dataset_any(cfg.dataset);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "load error: %s\n", e.what());
    return kExitConfig;
  }
  proto::NodeState node(cfg.node_id, bundle.node_model_set());
  double clock = 0.0;
  const std::uint32_t checksum_before = attack::bundle_checksum(bundle);
  std::string summary;

  if (cfg.scenario == "replay") {
    proto::VerifierState vs(bundle, cfg.t_max, cfg.seed + 17);
    auto log = attack::eavesdrop(vs, node, clock, cfg.log_sessions);
    auto rep = attack::replay_attack(log, vs, clock, cfg.trials);
    std::printf("replay: trials=%zu rejected=%zu rejection-rate=%.4f\n", rep.trials,
                rep.rejected, rep.rejection_rate());
    summary = "scenario=replay trials=" + std::to_string(rep.trials) +
              " rejection_rate=" + std::to_string(rep.rejection_rate());
  } else if (cfg.scenario == "impersonate") {
    auto uni = attack::impersonate_verifier(node, bundle, ds, attack::LcForgery::UniformRandom,
                                            0.0, cfg.trials, cfg.seed + 23);
    auto pert = attack::impersonate_verifier(node, bundle, ds,
                                             attack::LcForgery::PerturbedGenuine, 10.0,
                                             cfg.trials, cfg.seed + 29);
    std::printf("impersonate: uniform-random abort-rate=%.4f (%zu trials)\n",
                uni.abort_rate(), uni.trials);
    std::printf("impersonate: perturbed-genuine (10 delta) abort-rate=%.4f (%zu trials)\n",
                pert.abort_rate(), pert.trials);
    summary = "scenario=impersonate uniform_abort=" + std::to_string(uni.abort_rate()) +
              " perturbed_abort=" + std::to_string(pert.abort_rate());
  } else if (cfg.scenario == "ml-mlp" || cfg.scenario == "ml-rbf") {
    proto::VerifierState vs(bundle, cfg.t_max, cfg.seed + 31);
    const std::size_t logs = std::min(cfg.log_sessions, bundle.meta.n / 3);
    const std::size_t sessions = std::min(cfg.trials, vs.remaining_indices() - logs);
    auto log = attack::eavesdrop(vs, node, clock, logs);
    attack::ModelingAttackReport rep;
    if (cfg.scenario == "ml-mlp") {
      auto att = attack::make_mlp_attacker(cfg.seed + 37);
      sl::TrainConfig tc;
      tc.seed = cfg.seed + 41;
      attack::train_mlp_attacker(att, log, tc);
      rep = attack::ml_modeling_attack(att, log, vs, bundle, clock, sessions);
    } else {
      auto att = attack::train_rbf_attacker(log);
      rep = attack::ml_modeling_attack(att, log, vs, bundle, clock, sessions);
    }
    std::printf("%s: train-pairs=%zu sessions=%zu accept-rate=%.4f per-bit=%.4f "
                "exact-match=%.4f train-per-bit=%.4f\n",
                cfg.scenario.c_str(), log.pairs.size(), rep.sessions, rep.accept_rate(),
                rep.per_bit_accuracy, rep.exact_match_rate, rep.train_per_bit_accuracy);
    summary = "scenario=" + cfg.scenario + " accept_rate=" + std::to_string(rep.accept_rate()) +
              " per_bit=" + std::to_string(rep.per_bit_accuracy);
  } else if (cfg.scenario == "mitm-delay") {
    proto::VerifierState vs(bundle, cfg.t_max, cfg.seed + 43);
    const double delay = cfg.delay >= 0.0 ? cfg.delay : 1.5 * cfg.t_max;
    auto verdict = attack::mitm_delay_attack(vs, node, clock, delay);
    std::printf("mitm-delay: delay=%.2fs t_max=%.2fs verdict=%s\n", delay, cfg.t_max,
                proto::verdict_name(verdict));
    summary = std::string("scenario=mitm-delay verdict=") + proto::verdict_name(verdict);
  } else if (cfg.scenario == "fake-lc") {
    auto cm = attack::fake_lc_sweep(node, bundle, ds, cfg.trials, cfg.trials, cfg.seed + 47);
    std::printf("fake-lc: genuine=%zu fakes=%zu true-accept=%.4f true-reject=%.4f\n",
                cm.true_accept + cm.false_reject, cm.true_reject + cm.false_accept,
                cm.true_accept_rate(), cm.true_reject_rate());
    summary = "scenario=fake-lc true_accept=" + std::to_string(cm.true_accept_rate()) +
              " true_reject=" + std::to_string(cm.true_reject_rate());
  } else if (cfg.scenario == "forward-secrecy") {
    std::filesystem::create_directories(cfg.report_dir);
    const std::string state = cfg.report_dir + "/fs_state.txt";
    std::filesystem::remove(state);
    std::vector<proto::SessionTranscript> all;
    const std::size_t half = bundle.meta.n / 2;
    {
      proto::VerifierState vs(bundle, cfg.t_max, cfg.seed + 53, state);
      attack::eavesdrop(vs, node, clock, half);
      auto ts = vs.take_transcripts();
      all.insert(all.end(), ts.begin(), ts.end());
    }
    {
      // Fresh process image in spirit: state reloaded from disk.
      proto::VerifierState vs(bundle, cfg.t_max, cfg.seed + 53, state);
      attack::eavesdrop(vs, node, clock, vs.remaining_indices());
      auto ts = vs.take_transcripts();
      all.insert(all.end(), ts.begin(), ts.end());
    }
    auto rep = attack::forward_secrecy_audit(all);
    std::printf("forward-secrecy: sessions=%zu index-collisions=%zu lc-collisions=%zu %s\n",
                rep.sessions_audited, rep.index_collisions, rep.lc_collisions,
                rep.clean() ? "CLEAN" : "VIOLATION");
    std::filesystem::remove(state);
    summary = "scenario=forward-secrecy sessions=" + std::to_string(rep.sessions_audited) +
              std::string(" clean=") + (rep.clean() ? "1" : "0");
  } else {
    std::fprintf(stderr, "unknown attack scenario: %s\n", cfg.scenario.c_str());
    return kExitConfig;
  }

  if (attack::bundle_checksum(bundle) != checksum_before) {
    std::fprintf(stderr, "defender model parameters changed during the attack\n");
    return kExitFailure;
  }
  record(cfg, "cmd=attack " + summary);
  return kExitAccept;
}

int cmd_report(const RunConfig& cfg) {
  std::ifstream f(cfg.report_dir + "/records.txt");
  if (!f) {
    std::printf("no records under %s\n", cfg.report_dir.c_str());
    return kExitAccept;
  }
  std::printf("run records (%s/records.txt):\n", cfg.report_dir.c_str());
  std::string line;
  std::size_t count = 0;
  while (std::getline(f, line)) {
    std::printf("  %s\n", line.c_str());
    ++count;
  }
  std::printf("%zu record(s)\n", count);
  return kExitAccept;
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  CLI::App app{"ML-emulated PUF mutual authentication toolkit"};
  app.set_config("--config")->envname("LPAN_CONFIG");

  app.add_option("--seed", cfg.seed, "Global seed");
  app.add_option("--n", cfg.n, "CRP count for simulation");
  app.add_option("--oscillators", cfg.oscillators, "Oscillators per RO bank (>= 4)");
  app.add_option("--dataset", cfg.dataset, "CRP dataset path (.csv or container)");
  app.add_option("--bundle", cfg.bundle, "Verifier model bundle path");
  app.add_option("--node-set", cfg.node_set, "Provisioned node model set path");
  app.add_option("--state", cfg.state, "Verifier index-state file");
  app.add_option("--report-dir", cfg.report_dir, "Report output directory");
  app.add_option("--t-max", cfg.t_max, "Response deadline in seconds");
  app.add_option("--host", cfg.host, "Bind/connect address");
  app.add_option("--port", cfg.port, "TCP port");
  app.add_option("--node-id", cfg.node_id, "Node identifier (8-bit)");
  app.add_option("--batch-size", cfg.batch_size, "Training batch size");
  app.add_option("--lr", cfg.lr, "ADAM learning rate");
  app.add_option("--max-epochs", cfg.max_epochs, "Training epoch cap");
  app.add_option("--checkpoint", cfg.checkpoint, "Training checkpoint file");
  app.add_option("--checkpoint-every", cfg.checkpoint_every,
                 "Checkpoint every N batches (0 = off)");
  app.add_option("--trials", cfg.trials, "Attack trial count");
  app.add_option("--log-sessions", cfg.log_sessions, "Eavesdropped sessions before an attack");
  app.add_option("--delay", cfg.delay, "MITM delay seconds (default 1.5 * t-max)");
  app.add_flag("--force", cfg.force, "Allow overwriting existing output files");
  app.add_flag("-v,--verbose", cfg.verbose, "Verbose progress output");

  auto* sim = app.add_subcommand("simulate-puf", "Simulate an RO PUF and write a CRP dataset");
  auto* enr = app.add_subcommand("enroll", "Train all networks and write bundle + node set");
  auto* srv = app.add_subcommand("serve", "Run the verifier over TCP until interrupted");
  auto* auth = app.add_subcommand("authenticate", "Run one node authentication over TCP");
  auto* atk = app.add_subcommand("attack", "Run an attack scenario against a loopback deployment");
  atk->add_option("scenario", cfg.scenario,
                  "replay | impersonate | ml-mlp | ml-rbf | mitm-delay | fake-lc | "
                  "forward-secrecy")
      ->required();
  auto* ovh = app.add_subcommand("overhead", "Print the message/bit overhead table");
  auto* repv = app.add_subcommand("report", "Render collected run records");
  app.require_subcommand(1);
  for (auto* s : {sim, enr, srv, auth, atk, ovh, repv}) s->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (sim->parsed()) return cmd_simulate_puf(cfg);
    if (enr->parsed()) return cmd_enroll(cfg);
    if (srv->parsed()) return cmd_serve(cfg);
    if (auth->parsed()) return cmd_authenticate(cfg);
    if (atk->parsed()) return cmd_attack(cfg);
    if (ovh->parsed()) return cmd_overhead(cfg);
    if (repv->parsed()) return cmd_report(cfg);
  } catch (const proto::PoolExhausted& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return kExitFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitConfig;
}
