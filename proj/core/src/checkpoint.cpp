#include "dminter/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "dminter/error.hpp"

namespace dminter {

using nlohmann::json;

namespace {

class Writer {
 public:
  void bytes(std::string_view b) { out_.append(b.data(), b.size()); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u64(s.size());
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& data) : data_(data) {}
  std::string_view bytes(std::size_t n) {
    if (n > data_.size() - pos_) throw DataError("corrupt checkpoint: truncated");
    std::string_view v(data_.data() + pos_, n);
    pos_ += n;
    return v;
  }
  std::uint32_t u32() {
    auto b = bytes(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
    return v;
  }
  std::uint64_t u64() {
    auto b = bytes(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() { return std::string(bytes(u64())); }
  bool done() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(std::string_view(kCheckpointMagic, 4));
  w.u32(kCheckpointVersion);
  w.str(ckpt.config.to_json().dump());
  w.u64(ckpt.vocab.size());
  for (const auto& t : ckpt.vocab.tokens()) w.str(t);
  w.str(serialize_hierarchy(ckpt.hierarchy));
  const auto named = ckpt.params.named();
  w.u64(named.size());
  for (const auto& p : named) {
    w.str(p.name);
    const Tensor& v = p.var.value();
    w.u64(v.rank());
    for (std::size_t d : v.shape()) w.u64(d);
    for (double x : v.values()) w.f64(x);
  }
  w.f64(ckpt.best_val_macro_f1);
  w.u64(ckpt.epoch);
  w.u64(ckpt.config_digest());
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw DataError("not a checkpoint (bad magic)");
  }
  Reader r(bytes);
  r.bytes(4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  }

  Checkpoint ckpt;
  try {
    ckpt.config = TrainingConfig::from_json(json::parse(r.str()));
    const std::uint64_t n_tokens = r.u64();
    if (n_tokens > bytes.size()) throw DataError("corrupt checkpoint: vocabulary size");
    std::vector<std::string> tokens;
    for (std::uint64_t i = 0; i < n_tokens; ++i) tokens.push_back(r.str());
    ckpt.vocab = Vocabulary::from_tokens(std::move(tokens));
    ckpt.hierarchy = load_hierarchy(r.str());
    ckpt.config.model.validate();
  } catch (const json::exception&) {
    throw DataError("corrupt checkpoint: configuration record");
  } catch (const ConfigError& e) {
    throw DataError(std::string("corrupt checkpoint: ") + e.what());
  }

  ckpt.params = init_params(ckpt.config.model, 0);
  std::map<std::string, Var> by_name;
  for (const auto& p : ckpt.params.named()) by_name.emplace(p.name, p.var);
  const std::uint64_t n_tensors = r.u64();
  if (n_tensors != by_name.size()) throw DataError("corrupt checkpoint: tensor count mismatch");
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    const std::string name = r.str();
    auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("corrupt checkpoint: unexpected tensor '" + name + "'");
    Tensor& value = it->second.mutable_leaf_value();
    const std::uint64_t rank = r.u64();
    Shape shape;
    for (std::uint64_t d = 0; d < rank && d < 8; ++d) shape.push_back(r.u64());
    if (shape != value.shape()) throw DataError("corrupt checkpoint: shape mismatch for '" + name + "'");
    for (double& x : value.mutable_values()) x = r.f64();
    by_name.erase(it);
  }
  ckpt.best_val_macro_f1 = r.f64();
  ckpt.epoch = r.u64();
  const std::uint64_t digest = r.u64();
  if (!r.done()) throw DataError("corrupt checkpoint: trailing bytes");
  if (digest != ckpt.config_digest()) throw DataError("corrupt checkpoint: configuration digest mismatch");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return deserialize_checkpoint(buffer.str());
}

}  // namespace dminter
