// SPDX-License-Identifier: Apache-2.0
#include "photofit/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "photofit/image_io.hpp"

namespace photofit {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'N', 'P', 'F', 'C'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(v >> (8 * i)));
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  put_u32(out, std::uint32_t(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw CheckpointCorrupt("checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b_[pos_ + std::size_t(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void floats(float* dst, std::size_t n) {
    need(n * 4);
    std::memcpy(dst, b_.data() + pos_, n * 4);
    pos_ += n * 4;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, Checkpoint::kVersion);
  put_string(out, c.kind);
  put_u32(out, std::uint32_t(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    put_string(out, name);
    put_u32(out, std::uint32_t(t.rank()));
    for (int d : t.dims()) put_u32(out, std::uint32_t(d));
    const auto* p = reinterpret_cast<const std::uint8_t*>(t.data());
    out.insert(out.end(), p, p + t.size() * sizeof(float));
  }
  put_u32(out, crc32_of(out));
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointCorrupt("not a checkpoint (bad magic)");
  }
  const auto body = bytes.first(bytes.size() - 4);
  Reader tail(bytes.last(4));
  const std::uint32_t stored = tail.u32();
  Reader r(body.subspan(4));
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion) {
    throw CheckpointCorrupt("unsupported checkpoint version " + std::to_string(version));
  }
  if (crc32_of(body) != stored) throw CheckpointCorrupt("checkpoint checksum mismatch");
  Checkpoint c;
  c.kind = r.str();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw CheckpointCorrupt("tensor " + name + " has rank " + std::to_string(rank));
    std::vector<int> dims(rank);
    std::size_t n = 1;
    for (auto& d : dims) {
      d = int(r.u32());
      n *= std::size_t(d);
    }
    r.need(n * 4);
    Tensor t(dims);
    r.floats(t.data(), n);
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (r.pos() != body.size() - 4) throw CheckpointCorrupt("trailing bytes in checkpoint");
  return c;
}

Checkpoint checkpoint_of(Model& m) {
  Checkpoint c;
  c.kind = m.kind();
  c.tensors = m.meta();
  for (const auto& s : m.state()) c.tensors.emplace_back(s.name, *s.tensor);
  return c;
}

void apply_checkpoint(const Checkpoint& c, Model& m) {
  if (c.kind != m.kind()) throw ConfigError("checkpoint holds a " + c.kind + ", expected " + m.kind());
  for (const auto& [name, t] : m.meta()) {
    const Tensor* got = c.find(name);
    if (!got || !(*got == t)) throw ConfigError("checkpoint " + name + " does not match the model config");
  }
  auto st = m.state();
  std::vector<Tensor> values;
  for (const auto& s : st) {
    const Tensor* got = c.find(s.name);
    if (!got) throw ConfigError("checkpoint lacks tensor " + s.name);
    values.push_back(*got);
  }
  restore(m, values);
}

void save_checkpoint(const std::filesystem::path& path, Model& m) {
  const auto bytes = encode_checkpoint(checkpoint_of(m));
  auto tmp = path;
  tmp += ".tmp";
  write_file(tmp, bytes);
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

void load_checkpoint(const std::filesystem::path& path, Model& m) { apply_checkpoint(read_checkpoint(path), m); }

}  // namespace photofit
