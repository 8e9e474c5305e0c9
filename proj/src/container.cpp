#include "lpan/container.hpp"

#include "lpan/crc32.hpp"

#include <cstring>
#include <fstream>

namespace lpan {

void ByteWriter::u8(std::uint8_t v) { bytes.push_back(v); }
void ByteWriter::u16(std::uint16_t v) {
  for (int i = 0; i < 2; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void ByteWriter::f64(double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  u64(u);
}
void ByteWriter::raw(const void* p, std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  bytes.insert(bytes.end(), b, b + n);
}

static void need(const ByteReader& r, std::size_t n) {
  if (r.pos + n > r.bytes->size()) throw ContainerError("truncated byte stream");
}

std::uint8_t ByteReader::u8() {
  need(*this, 1);
  return (*bytes)[pos++];
}
std::uint16_t ByteReader::u16() {
  need(*this, 2);
  std::uint16_t v = 0;
  for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>((*bytes)[pos++]) << (8 * i);
  return v;
}
std::uint32_t ByteReader::u32() {
  need(*this, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>((*bytes)[pos++]) << (8 * i);
  return v;
}
std::uint64_t ByteReader::u64() {
  need(*this, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>((*bytes)[pos++]) << (8 * i);
  return v;
}
double ByteReader::f64() {
  std::uint64_t u = u64();
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}
void ByteReader::raw(void* p, std::size_t n) {
  need(*this, n);
  std::memcpy(p, bytes->data() + pos, n);
  pos += n;
}

void Container::set(const std::string& tag, std::vector<std::uint8_t> payload) {
  if (tag.size() != 4) throw ContainerError("section tag must be 4 chars: " + tag);
  sections_[tag] = std::move(payload);
}

bool Container::has(const std::string& tag) const { return sections_.count(tag) > 0; }

const std::vector<std::uint8_t>& Container::get(const std::string& tag) const {
  auto it = sections_.find(tag);
  if (it == sections_.end()) throw ContainerError("missing section: " + tag);
  return it->second;
}

std::vector<std::uint8_t> Container::serialize() const {
  ByteWriter w;
  w.raw("LPAN", 4);
  w.u16(kVersion);
  w.u32(static_cast<std::uint32_t>(sections_.size()));
  for (const auto& [tag, payload] : sections_) {
    w.raw(tag.data(), 4);
    w.u64(payload.size());
    w.raw(payload.data(), payload.size());
  }
  w.u32(crc32(w.bytes.data(), w.bytes.size()));
  return std::move(w.bytes);
}

Container Container::deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 14) throw ContainerError("container too short");
  const std::uint32_t stored = static_cast<std::uint32_t>(bytes[bytes.size() - 4]) |
                               static_cast<std::uint32_t>(bytes[bytes.size() - 3]) << 8 |
                               static_cast<std::uint32_t>(bytes[bytes.size() - 2]) << 16 |
                               static_cast<std::uint32_t>(bytes[bytes.size() - 1]) << 24;
  if (crc32(bytes.data(), bytes.size() - 4) != stored)
    throw ContainerError("container CRC mismatch");
  ByteReader r(bytes);
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, "LPAN", 4) != 0) throw ContainerError("bad magic");
  if (r.u16() != kVersion) throw ContainerError("unsupported container version");
  const std::uint32_t count = r.u32();
  Container c;
  for (std::uint32_t i = 0; i < count; ++i) {
    char tag[4];
    r.raw(tag, 4);
    const std::uint64_t len = r.u64();
    need(r, len);
    std::vector<std::uint8_t> payload(bytes.begin() + r.pos, bytes.begin() + r.pos + len);
    r.pos += len;
    c.sections_[std::string(tag, 4)] = std::move(payload);
  }
  return c;
}

void Container::save(const std::string& path) const {
  auto bytes = serialize();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ContainerError("cannot open for write: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  if (!f) throw ContainerError("write failed: " + path);
}

Container Container::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ContainerError("cannot open: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

std::vector<std::uint8_t> serialize_mlp(const nn::Mlp& mlp) {
  ByteWriter w;
  w.u32(static_cast<std::uint32_t>(mlp.layers.size()));
  for (std::size_t k = 0; k < mlp.layers.size(); ++k) {
    const auto& l = mlp.layers[k];
    w.u32(static_cast<std::uint32_t>(l.in_dim()));
    w.u32(static_cast<std::uint32_t>(l.out_dim()));
    w.u8(static_cast<std::uint8_t>(l.activation));
    w.u8(mlp.frozen[k] ? 1 : 0);
    for (double v : l.weights.storage()) w.f64(v);
    for (double v : l.bias) w.f64(v);
  }
  return std::move(w.bytes);
}

nn::Mlp deserialize_mlp(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  const std::uint32_t n = r.u32();
  nn::Mlp mlp;
  for (std::uint32_t k = 0; k < n; ++k) {
    nn::DenseLayer l;
    const std::uint32_t in = r.u32();
    const std::uint32_t out = r.u32();
    const std::uint8_t act = r.u8();
    if (act > 1) throw ContainerError("bad activation tag");
    const bool frozen = r.u8() != 0;
    l.activation = static_cast<nn::Activation>(act);
    l.weights = Matrix(out, in);
    for (double& v : l.weights.storage()) v = r.f64();
    l.bias.resize(out);
    for (double& v : l.bias) v = r.f64();
    mlp.layers.push_back(std::move(l));
    mlp.frozen.push_back(frozen);
  }
  mlp.check_consistent();
  return mlp;
}

std::vector<std::uint8_t> serialize_adam(const nn::AdamState& state) {
  ByteWriter w;
  w.f64(state.lr);
  w.f64(state.beta1);
  w.f64(state.beta2);
  w.f64(state.epsilon);
  w.u64(state.t);
  w.u32(static_cast<std::uint32_t>(state.layers.size()));
  for (const auto& l : state.layers) {
    w.u32(static_cast<std::uint32_t>(l.m_w.rows()));
    w.u32(static_cast<std::uint32_t>(l.m_w.cols()));
    for (double v : l.m_w.storage()) w.f64(v);
    for (double v : l.v_w.storage()) w.f64(v);
    for (double v : l.m_b) w.f64(v);
    for (double v : l.v_b) w.f64(v);
  }
  return std::move(w.bytes);
}

nn::AdamState deserialize_adam(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  nn::AdamState s;
  s.lr = r.f64();
  s.beta1 = r.f64();
  s.beta2 = r.f64();
  s.epsilon = r.f64();
  s.t = r.u64();
  const std::uint32_t n = r.u32();
  s.layers.resize(n);
  for (auto& l : s.layers) {
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    l.m_w = Matrix(rows, cols);
    l.v_w = Matrix(rows, cols);
    for (double& v : l.m_w.storage()) v = r.f64();
    for (double& v : l.v_w.storage()) v = r.f64();
    l.m_b.resize(rows);
    l.v_b.resize(rows);
    for (double& v : l.m_b) v = r.f64();
    for (double& v : l.v_b) v = r.f64();
  }
  return s;
}

}  // namespace lpan
