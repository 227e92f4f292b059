// Checkpoint container:
//   "DOCENTR1" | u32 version | u32 header length | header (key=value lines)
//   u32 tensor count | per tensor: u32 name length, name bytes, u32 rank,
//   u32 dims[rank], f32 payload
// All integers and floats are little-endian.

#include <array>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "docentr/error.hpp"
#include "docentr/training.hpp"

namespace docentr::training {

namespace {

constexpr std::array<char, 8> kMagic = {'D', 'O', 'C', 'E', 'N', 'T', 'R', '1'};

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void raw(std::string_view s) { bytes_.append(s); }
  void f32(float f) { u32(std::bit_cast<std::uint32_t>(f)); }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint32_t u32() {
    need(4, "integer");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string raw(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string("corrupt checkpoint container: truncated while reading ") + what);
    }
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string encode_header(const Checkpoint& c) {
  const auto& m = c.weights.config;
  const auto& t = c.train;
  std::ostringstream h;
  h << "layers=" << m.layers << '\n'
    << "dim=" << m.dim << '\n'
    << "heads=" << m.heads << '\n'
    << "patch_size=" << m.patch_size << '\n'
    << "window_size=" << m.window_size << '\n'
    << "in_channels=" << m.in_channels << '\n'
    << "out_channels=" << m.out_channels << '\n'
    << "mlp_ratio=" << m.mlp_ratio << '\n'
    << "eps=" << format_double(m.eps) << '\n'
    << "output_head=" << (m.head == model::OutputHead::Sigmoid ? "sigmoid" : "linear") << '\n'
    << "base_lr=" << format_double(t.base_lr) << '\n'
    << "min_lr=" << format_double(t.min_lr) << '\n'
    << "weight_decay=" << format_double(t.weight_decay) << '\n'
    << "beta1=" << format_double(t.beta1) << '\n'
    << "beta2=" << format_double(t.beta2) << '\n'
    << "eps_opt=" << format_double(t.eps_opt) << '\n'
    << "warmup_steps=" << t.warmup_steps << '\n'
    << "total_steps=" << t.total_steps << '\n'
    << "batch_size=" << t.batch_size << '\n'
    << "seed=" << t.seed << '\n'
    << "grad_clip_norm=" << format_double(t.grad_clip_norm) << '\n'
    << "step=" << c.step << '\n';
  return h.str();
}

class Header {
 public:
  explicit Header(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) throw FormatError("corrupt checkpoint header line: " + line);
      kv_[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }

  const std::string& text(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw FormatError("checkpoint header lacks key '" + key + "'");
    return it->second;
  }

  template <typename N>
  N number(const std::string& key) const {
    const std::string& s = text(key);
    N v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
      throw FormatError("checkpoint header value for '" + key + "' is not a number: " + s);
    }
    return v;
  }

 private:
  std::map<std::string, std::string> kv_;
};

void write_tensor(Writer& w, const std::string& name, const numerics::Tensor& t) {
  w.u32(static_cast<std::uint32_t>(name.size()));
  w.raw(name);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
  for (float v : t.values()) w.f32(v);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Writer w;
  w.raw(std::string_view(kMagic.data(), kMagic.size()));
  w.u32(Checkpoint::kFormatVersion);
  const std::string header = encode_header(ckpt);
  w.u32(static_cast<std::uint32_t>(header.size()));
  w.raw(header);

  const auto& params = ckpt.weights.params;
  const bool has_moments = ckpt.moments.m.size() == params.size() && ckpt.moments.v.size() == params.size();
  w.u32(static_cast<std::uint32_t>(params.size() * (has_moments ? 3 : 1)));
  for (const auto& p : params) write_tensor(w, p.name, p.value);
  if (has_moments) {
    for (std::size_t i = 0; i < params.size(); ++i) write_tensor(w, "adam.m/" + params[i].name, ckpt.moments.m[i]);
    for (std::size_t i = 0; i < params.size(); ++i) write_tensor(w, "adam.v/" + params[i].name, ckpt.moments.v[i]);
  }

  // write to a sibling file first so a crash never leaves a half-written checkpoint
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes));

  const std::string magic = r.raw(kMagic.size(), "magic");
  if (std::memcmp(magic.data(), kMagic.data(), kMagic.size()) != 0) {
    throw FormatError("not a checkpoint: expected magic \"DOCENTR1\"");
  }
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kFormatVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(Checkpoint::kFormatVersion) + ")");
  }
  const Header h(r.raw(r.u32(), "header"));

  model::ModelConfig m;
  m.layers = h.number<std::size_t>("layers");
  m.dim = h.number<std::size_t>("dim");
  m.heads = h.number<std::size_t>("heads");
  m.patch_size = h.number<std::size_t>("patch_size");
  m.window_size = h.number<std::size_t>("window_size");
  m.in_channels = h.number<std::size_t>("in_channels");
  m.out_channels = h.number<std::size_t>("out_channels");
  m.mlp_ratio = h.number<std::size_t>("mlp_ratio");
  m.eps = h.number<double>("eps");
  const std::string& head = h.text("output_head");
  if (head != "linear" && head != "sigmoid") throw FormatError("unknown output head '" + head + "'");
  m.head = head == "sigmoid" ? model::OutputHead::Sigmoid : model::OutputHead::Linear;
  try {
    m.validate();
  } catch (const ContractError& e) {
    throw FormatError(std::string("checkpoint carries an invalid model config: ") + e.what());
  }

  TrainConfig t;
  t.base_lr = h.number<double>("base_lr");
  t.min_lr = h.number<double>("min_lr");
  t.weight_decay = h.number<double>("weight_decay");
  t.beta1 = h.number<double>("beta1");
  t.beta2 = h.number<double>("beta2");
  t.eps_opt = h.number<double>("eps_opt");
  t.warmup_steps = h.number<std::size_t>("warmup_steps");
  t.total_steps = h.number<std::size_t>("total_steps");
  t.batch_size = h.number<std::size_t>("batch_size");
  t.seed = h.number<std::uint64_t>("seed");
  t.grad_clip_norm = h.number<double>("grad_clip_norm");

  Checkpoint c{model::zero_model<float>(m), t, h.number<std::size_t>("step"), {}};
  std::map<std::string, numerics::Tensor> tensors;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.raw(r.u32(), "tensor name");
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError("corrupt checkpoint container: tensor '" + name + "' has rank " + std::to_string(rank));
    numerics::Shape shape;
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      shape.push_back(r.u32());
      if (shape.back() == 0) throw FormatError("corrupt checkpoint container: zero dimension in '" + name + "'");
      n *= shape.back();
    }
    const std::string payload = r.raw(n * 4, "tensor payload");
    numerics::Tensor tensor(shape);
    for (std::size_t k = 0; k < n; ++k) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(payload[k * 4 + b])) << (8 * b);
      tensor[k] = std::bit_cast<float>(bits);
    }
    tensors.emplace(std::move(name), std::move(tensor));
  }
  if (!r.done()) throw FormatError("corrupt checkpoint container: trailing bytes");

  auto take = [&](const std::string& name, const numerics::Shape& expected) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint lacks tensor '" + name + "'");
    if (it->second.shape() != expected) {
      throw FormatError("tensor '" + name + "' has shape " + numerics::to_string(it->second.shape()) +
                        " but the embedded config implies " + numerics::to_string(expected));
    }
    return std::move(it->second);
  };
  for (auto& p : c.weights.params) p.value = take(p.name, p.value.shape());
  if (tensors.count("adam.m/" + c.weights.params.front().name)) {
    for (auto& p : c.weights.params) {
      c.moments.m.push_back(take("adam.m/" + p.name, p.value.shape()));
      c.moments.v.push_back(take("adam.v/" + p.name, p.value.shape()));
    }
  } else {
    c.moments = AdamState::zeros_like(c.weights.params);
  }
  return c;
}

}  // namespace docentr::training
