#pragma once

#include "lpan/nn.hpp"
#include "lpan/puf.hpp"

#include <array>
#include <cstdint>
#include <string>

namespace lpan::models {

constexpr std::size_t kLatentDim = 4;

using Latent = std::array<double, kLatentDim>;
using LatentChallenge = Latent;
using LatentResponse = Latent;

// Width in bits of the binary index vector fed to the CRP generator.
std::size_t index_width(std::size_t n);

// Fixed-width big-endian binary encoding of index i, 0 <= i < n.
puf::Bits index_to_bits(std::size_t i, std::size_t n);

// Thresholding of real network outputs back to bits; ties go to 1.
puf::Bits binarize(const std::vector<double>& v, double tau = 0.5);

// DNN CRP generator: index bits -> 48 outputs (challenge || response).
struct DnnCrpGenerator {
  nn::Mlp net;
  std::size_t n = 0;
};

struct Encoder1 {
  nn::Mlp net;  // 32 -> [1024..8] -> 4
};
struct Decoder1 {
  nn::Mlp net;  // 4 -> [8..1024] -> 16
};
struct BasicEncoder2 {
  nn::Mlp net;  // 4 -> [1024, 512] -> 256
};
struct ExtendedEncoder2 {
  BasicEncoder2 base;  // frozen after phase A
  nn::Mlp extension;   // 256 -> [64, 32, 16, 8] -> 4
};
struct Decoder2 {
  nn::Mlp net;  // 256 -> [512, 256] -> 32
};

DnnCrpGenerator make_dnn_generator(std::size_t n, std::uint64_t seed);
Encoder1 make_encoder1(std::uint64_t seed);
Decoder1 make_decoder1(std::uint64_t seed);
BasicEncoder2 make_basic_encoder2(std::uint64_t seed);
nn::Mlp make_encoder2_extension(std::uint64_t seed);
Decoder2 make_decoder2(std::uint64_t seed);

struct ModelError : std::runtime_error {
  explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

std::pair<puf::Challenge, puf::Response> generate_crp(const DnnCrpGenerator& gen,
                                                      std::size_t i, double tau = 0.5);

LatentChallenge encode_challenge(const Encoder1& e, const puf::Challenge& c);

// Decoder2(BasicEncoder2(lc)); caller binarizes.
std::vector<double> reconstruct_challenge(const BasicEncoder2& b, const Decoder2& d,
                                          const Latent& lc);

LatentResponse predict_latent_response(const ExtendedEncoder2& x, const Latent& lc);

// Decoder1 forward; caller binarizes.
std::vector<double> decode_response(const Decoder1& d, const Latent& lr);

// Per-element bounds of the enrolled LC cloud; normalizes the latent
// consistency gate and bounds the fake-LC sampling box.
struct LatentBox {
  Latent lo{};
  Latent hi{};
  double range(std::size_t i) const;
};

struct BundleMeta {
  std::size_t n = 0;
  double tau = 0.5;
  double delta = 0.05;  // latent consistency gate, normalized units
  LatentBox lc_box;
};

// Everything a provisioned node holds.
struct NodeModelSet {
  BasicEncoder2 basic_encoder2;
  ExtendedEncoder2 extended_encoder2;
  Decoder2 decoder2;
  Encoder1 verifier_encoder_copy;
  BundleMeta meta;
};

// Max-norm distance between two latents, normalized per-element by the
// enrolled LC box ranges.
double latent_distance(const Latent& a, const Latent& b, const LatentBox& box);

// Round-trip fixed-point check: genuine LCs reconstruct to an enrolled
// challenge whose re-encoding lands back on the LC; forgeries do not.
bool verify_lc_authentic(const NodeModelSet& nm, const Latent& lc);

// 64 -> 32 -> 64 bit round-trip of a latent, as it crosses the wire.
Latent wire_round_trip(const Latent& v);

// All six trained networks plus binarization config.
struct ModelBundle {
  DnnCrpGenerator dnn;
  Encoder1 enc1;
  Decoder1 dec1;
  BasicEncoder2 benc2;
  ExtendedEncoder2 xenc2;
  Decoder2 dec2;
  BundleMeta meta;

  NodeModelSet node_model_set() const;
  void save(const std::string& path) const;
  static ModelBundle load(const std::string& path);
};

// Provisioning files for the node side; same container format as the bundle
// but without the verifier-only networks.
void save_node_set(const NodeModelSet& nm, const std::string& path);
NodeModelSet load_node_set(const std::string& path);

}  // namespace lpan::models
