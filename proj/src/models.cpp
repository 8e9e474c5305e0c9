#include "lpan/models.hpp"

#include "lpan/container.hpp"

#include <cmath>

namespace lpan::models {

using nn::Activation;

std::size_t index_width(std::size_t n) {
  return static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(n) + 1.0)));
}

puf::Bits index_to_bits(std::size_t i, std::size_t n) {
  if (i >= n) throw ModelError("index out of range");
  const std::size_t w = index_width(n);
  puf::Bits b(w);
  for (std::size_t k = 0; k < w; ++k) b[k] = (i >> (w - 1 - k)) & 1u;
  return b;
}

puf::Bits binarize(const std::vector<double>& v, double tau) {
  puf::Bits out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) throw ModelError("binarize: non-finite input");
    out[i] = v[i] >= tau ? 1 : 0;
  }
  return out;
}

static std::vector<Activation> relu_chain(std::size_t hidden) {
  std::vector<Activation> a(hidden, Activation::ReLU);
  a.push_back(Activation::Linear);
  return a;
}

static void assert_widths(const nn::Mlp& net, const std::vector<std::size_t>& sizes,
                          const char* name) {
  bool ok = net.layers.size() == sizes.size() - 1;
  if (ok)
    for (std::size_t k = 0; k < net.layers.size(); ++k)
      ok = ok && net.layers[k].in_dim() == sizes[k] && net.layers[k].out_dim() == sizes[k + 1];
  if (!ok) throw ModelError(std::string(name) + ": layer widths do not match architecture");
}

DnnCrpGenerator make_dnn_generator(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> sizes{index_width(n), 64, 128, 256, 512, 1024,
                                 puf::kChallengeBits + puf::kResponseBits};
  DnnCrpGenerator g{nn::init_mlp(sizes, relu_chain(5), seed), n};
  assert_widths(g.net, sizes, "dnn generator");
  return g;
}

Encoder1 make_encoder1(std::uint64_t seed) {
  std::vector<std::size_t> sizes{32, 1024, 512, 256, 128, 64, 32, 16, 8, 4};
  Encoder1 e{nn::init_mlp(sizes, relu_chain(8), seed)};
  assert_widths(e.net, sizes, "encoder1");
  return e;
}

Decoder1 make_decoder1(std::uint64_t seed) {
  std::vector<std::size_t> sizes{4, 8, 16, 32, 64, 128, 256, 512, 1024, 16};
  Decoder1 d{nn::init_mlp(sizes, relu_chain(8), seed)};
  assert_widths(d.net, sizes, "decoder1");
  return d;
}

BasicEncoder2 make_basic_encoder2(std::uint64_t seed) {
  std::vector<std::size_t> sizes{4, 1024, 512, 256};
  BasicEncoder2 b{nn::init_mlp(sizes, relu_chain(2), seed)};
  assert_widths(b.net, sizes, "basic encoder2");
  return b;
}

nn::Mlp make_encoder2_extension(std::uint64_t seed) {
  std::vector<std::size_t> sizes{256, 64, 32, 16, 8, 4};
  nn::Mlp m = nn::init_mlp(sizes, relu_chain(4), seed);
  assert_widths(m, sizes, "encoder2 extension");
  return m;
}

Decoder2 make_decoder2(std::uint64_t seed) {
  std::vector<std::size_t> sizes{256, 512, 256, 32};
  Decoder2 d{nn::init_mlp(sizes, relu_chain(2), seed)};
  assert_widths(d.net, sizes, "decoder2");
  return d;
}

// Network inputs use a zero-mean +-0.5 bit encoding (conditioning); outputs
// and thresholds stay in 0/1 space.
static std::vector<double> bits_to_reals(const puf::Bits& b) {
  std::vector<double> v(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) v[i] = b[i] ? 0.5 : -0.5;
  return v;
}

std::pair<puf::Challenge, puf::Response> generate_crp(const DnnCrpGenerator& gen,
                                                      std::size_t i, double tau) {
  if (gen.n == 0) throw ModelError("generator not configured");
  auto out = nn::forward_vec(gen.net, bits_to_reals(index_to_bits(i, gen.n)));
  puf::Bits all = binarize(out, tau);
  puf::Bits cb(all.begin(), all.begin() + puf::kChallengeBits);
  puf::Bits rb(all.begin() + puf::kChallengeBits, all.end());
  return {puf::Challenge(std::move(cb)), puf::Response(std::move(rb))};
}

static Latent to_latent(const std::vector<double>& v) {
  if (v.size() != kLatentDim) throw ModelError("latent must have 4 elements");
  Latent l;
  for (std::size_t i = 0; i < kLatentDim; ++i) l[i] = v[i];
  return l;
}

static std::vector<double> from_latent(const Latent& l) {
  return std::vector<double>(l.begin(), l.end());
}

LatentChallenge encode_challenge(const Encoder1& e, const puf::Challenge& c) {
  return to_latent(nn::forward_vec(e.net, bits_to_reals(c.bits)));
}

std::vector<double> reconstruct_challenge(const BasicEncoder2& b, const Decoder2& d,
                                          const Latent& lc) {
  return nn::forward_vec(d.net, nn::forward_vec(b.net, from_latent(lc)));
}

LatentResponse predict_latent_response(const ExtendedEncoder2& x, const Latent& lc) {
  return to_latent(nn::forward_vec(x.extension, nn::forward_vec(x.base.net, from_latent(lc))));
}

std::vector<double> decode_response(const Decoder1& d, const Latent& lr) {
  return nn::forward_vec(d.net, from_latent(lr));
}

double LatentBox::range(std::size_t i) const {
  const double r = hi[i] - lo[i];
  return r > 1e-9 ? r : 1e-9;
}

double latent_distance(const Latent& a, const Latent& b, const LatentBox& box) {
  double d = 0.0;
  for (std::size_t i = 0; i < kLatentDim; ++i)
    d = std::max(d, std::fabs(a[i] - b[i]) / box.range(i));
  return d;
}

bool verify_lc_authentic(const NodeModelSet& nm, const Latent& lc) {
  for (double v : lc)
    if (!std::isfinite(v)) return false;
  try {
    auto c1 = binarize(reconstruct_challenge(nm.basic_encoder2, nm.decoder2, lc), nm.meta.tau);
    Latent lc2 = encode_challenge(nm.verifier_encoder_copy, puf::Challenge(c1));
    auto c2 =
        binarize(reconstruct_challenge(nm.basic_encoder2, nm.decoder2, lc2), nm.meta.tau);
    if (c1 != c2) return false;
    return latent_distance(lc, lc2, nm.meta.lc_box) <= nm.meta.delta;
  } catch (const ModelError&) {
    return false;  // non-finite intermediate
  }
}

Latent wire_round_trip(const Latent& v) {
  Latent out;
  for (std::size_t i = 0; i < kLatentDim; ++i) {
    // volatile keeps the narrowing cast from being vectorized away
    volatile float f = static_cast<float>(v[i]);
    out[i] = static_cast<double>(f);
  }
  return out;
}

NodeModelSet ModelBundle::node_model_set() const {
  return NodeModelSet{benc2, xenc2, dec2, enc1, meta};
}

static std::vector<std::uint8_t> serialize_meta(const BundleMeta& m) {
  ByteWriter w;
  w.u64(m.n);
  w.u32(puf::kChallengeBits);
  w.u32(puf::kResponseBits);
  w.f64(m.tau);
  w.f64(m.delta);
  for (double v : m.lc_box.lo) w.f64(v);
  for (double v : m.lc_box.hi) w.f64(v);
  return std::move(w.bytes);
}

static BundleMeta deserialize_meta(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  BundleMeta m;
  m.n = r.u64();
  if (r.u32() != puf::kChallengeBits || r.u32() != puf::kResponseBits)
    throw ModelError("bundle bit widths do not match this build");
  m.tau = r.f64();
  m.delta = r.f64();
  for (double& v : m.lc_box.lo) v = r.f64();
  for (double& v : m.lc_box.hi) v = r.f64();
  return m;
}

void ModelBundle::save(const std::string& path) const {
  Container c;
  c.set("dnn_", serialize_mlp(dnn.net));
  c.set("enc1", serialize_mlp(enc1.net));
  c.set("dec1", serialize_mlp(dec1.net));
  c.set("bnc2", serialize_mlp(benc2.net));
  c.set("xnc2", serialize_mlp(xenc2.extension));
  c.set("dec2", serialize_mlp(dec2.net));
  c.set("meta", serialize_meta(meta));
  c.save(path);
}

ModelBundle ModelBundle::load(const std::string& path) {
  Container c = Container::load(path);
  ModelBundle b;
  b.meta = deserialize_meta(c.get("meta"));
  b.dnn = DnnCrpGenerator{deserialize_mlp(c.get("dnn_")), b.meta.n};
  b.enc1 = Encoder1{deserialize_mlp(c.get("enc1"))};
  b.dec1 = Decoder1{deserialize_mlp(c.get("dec1"))};
  b.benc2 = BasicEncoder2{deserialize_mlp(c.get("bnc2"))};
  b.xenc2 = ExtendedEncoder2{b.benc2, deserialize_mlp(c.get("xnc2"))};
  b.xenc2.base.net.freeze_all();
  b.dec2 = Decoder2{deserialize_mlp(c.get("dec2"))};
  return b;
}

void save_node_set(const NodeModelSet& nm, const std::string& path) {
  Container c;
  c.set("bnc2", serialize_mlp(nm.basic_encoder2.net));
  c.set("xbas", serialize_mlp(nm.extended_encoder2.base.net));
  c.set("xnc2", serialize_mlp(nm.extended_encoder2.extension));
  c.set("dec2", serialize_mlp(nm.decoder2.net));
  c.set("venc", serialize_mlp(nm.verifier_encoder_copy.net));
  c.set("meta", serialize_meta(nm.meta));
  c.save(path);
}

NodeModelSet load_node_set(const std::string& path) {
  Container c = Container::load(path);
  NodeModelSet nm;
  nm.meta = deserialize_meta(c.get("meta"));
  nm.basic_encoder2 = BasicEncoder2{deserialize_mlp(c.get("bnc2"))};
  nm.extended_encoder2 =
      ExtendedEncoder2{BasicEncoder2{deserialize_mlp(c.get("xbas"))},
                       deserialize_mlp(c.get("xnc2"))};
  nm.extended_encoder2.base.net.freeze_all();
  nm.decoder2 = Decoder2{deserialize_mlp(c.get("dec2"))};
  nm.verifier_encoder_copy = Encoder1{deserialize_mlp(c.get("venc"))};
  return nm;
}

}  // namespace lpan::models
