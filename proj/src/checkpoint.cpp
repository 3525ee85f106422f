#include "psfr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace psfr::checkpoint {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

enum class DType : uint8_t { kFloat32 = 1, kFloat64 = 2, kInt64 = 3, kUInt8 = 4 };

DType dtype_code(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return DType::kFloat32;
    case torch::kFloat64: return DType::kFloat64;
    case torch::kInt64: return DType::kInt64;
    case torch::kUInt8: return DType::kUInt8;
    default: throw CheckpointError(std::string("unsupported tensor dtype ") + c10::toString(t));
  }
}

torch::ScalarType scalar_type(DType code) {
  switch (code) {
    case DType::kFloat32: return torch::kFloat32;
    case DType::kFloat64: return torch::kFloat64;
    case DType::kInt64: return torch::kInt64;
    case DType::kUInt8: return torch::kUInt8;
  }
  throw CheckpointError("unknown dtype code " + std::to_string(static_cast<int>(code)));
}

class Writer {
 public:
  template <class T>
  void pod(T v) {
    out_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<uint64_t>(s.size());
    out_ += s;
  }
  void raw(const void* p, size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  template <class T>
  T pod() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  std::string str() {
    auto n = pod<uint64_t>();
    return std::string(take(n), n);
  }
  const char* take(size_t n) {
    if (n > bytes_.size() - pos_) fail("truncated file");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }
  size_t remaining() const { return bytes_.size() - pos_; }
  [[noreturn]] void fail(const std::string& why) const {
    throw CheckpointError(source_ + ": " + why + " (offset " + std::to_string(pos_) + ")");
  }

 private:
  const std::string& bytes_;
  std::string source_;
  size_t pos_ = 0;
};

}  // namespace

const torch::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void Checkpoint::add(std::string name, const torch::Tensor& t) {
  tensors.emplace_back(std::move(name), t.detach().to(torch::kCPU).contiguous().clone());
}

std::string serialize(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.pod<uint32_t>(kVersion);
  w.str(ckpt.kind);
  w.str(ckpt.config);
  w.pod<int64_t>(ckpt.step);
  w.pod<uint64_t>(ckpt.tensors.size());
  for (const auto& [name, tensor] : ckpt.tensors) {
    auto t = tensor.detach().to(torch::kCPU).contiguous();
    w.str(name);
    w.pod<uint8_t>(static_cast<uint8_t>(dtype_code(t.scalar_type())));
    w.pod<uint32_t>(static_cast<uint32_t>(t.dim()));
    for (auto d : t.sizes()) w.pod<int64_t>(d);
    w.raw(t.data_ptr(), t.numel() * t.element_size());
  }
  return w.take();
}

Checkpoint deserialize(const std::string& bytes, const std::string& source) {
  Reader r(bytes, source);
  if (std::memcmp(r.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0) r.fail("bad magic, not a checkpoint");
  const auto version = r.pod<uint32_t>();
  if (version != kVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.kind = r.str();
  ckpt.config = r.str();
  ckpt.step = r.pod<int64_t>();
  const auto count = r.pod<uint64_t>();
  for (uint64_t i = 0; i < count; ++i) {
    auto name = r.str();
    const auto type = scalar_type(static_cast<DType>(r.pod<uint8_t>()));
    const auto ndim = r.pod<uint32_t>();
    if (ndim > 16) r.fail("implausible rank for '" + name + "'");
    std::vector<int64_t> dims(ndim);
    // Bound the element count by the bytes left so a corrupt header cannot trigger a huge allocation.
    uint64_t numel = 1;
    for (auto& d : dims) {
      d = r.pod<int64_t>();
      if (d < 0) r.fail("negative dimension in '" + name + "'");
      if (d != 0 && numel > r.remaining() / static_cast<uint64_t>(d)) r.fail("tensor '" + name + "' exceeds file size");
      numel *= static_cast<uint64_t>(d);
    }
    auto t = torch::empty(dims, torch::TensorOptions().dtype(type));
    const size_t nbytes = t.numel() * t.element_size();
    std::memcpy(t.data_ptr(), r.take(nbytes), nbytes);
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (!r.done()) r.fail("trailing bytes");
  return ckpt;
}

void write(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize(ckpt);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(tmp, "cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(tmp, "write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(path, "rename failed: " + ec.message());
}

Checkpoint read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open checkpoint");
  std::stringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str(), path.string());
}

void store_module(Checkpoint& ckpt, const torch::nn::Module& module, const std::string& prefix) {
  for (const auto& item : module.named_parameters()) ckpt.add(prefix + item.key(), item.value());
  for (const auto& item : module.named_buffers()) ckpt.add(prefix + item.key(), item.value());
}

void load_module(torch::nn::Module& module, const Checkpoint& ckpt, const std::string& prefix, bool strict) {
  torch::NoGradGuard no_grad;
  auto assign = [&](const std::string& name, torch::Tensor& target) {
    const auto* src = ckpt.find(prefix + name);
    if (!src) {
      if (strict) throw CheckpointError("checkpoint is missing '" + prefix + name + "'");
      return;
    }
    if (!src->sizes().equals(target.sizes())) {
      std::ostringstream msg;
      msg << "shape mismatch for '" << prefix << name << "': checkpoint " << src->sizes() << " vs model "
          << target.sizes();
      throw CheckpointError(msg.str());
    }
    target.copy_(*src);
  };
  for (auto& item : module.named_parameters()) assign(item.key(), item.value());
  for (auto& item : module.named_buffers()) assign(item.key(), item.value());
}

void store_adam(Checkpoint& ckpt, torch::optim::Adam& optimizer, const std::string& prefix) {
  size_t index = 0;
  for (auto& group : optimizer.param_groups()) {
    for (auto& p : group.params()) {
      const auto key = prefix + std::to_string(index++) + ".";
      auto it = optimizer.state().find(p.unsafeGetTensorImpl());
      if (it == optimizer.state().end()) continue;
      auto& st = static_cast<torch::optim::AdamParamState&>(*it->second);
      ckpt.add(key + "step", torch::tensor(st.step(), torch::kInt64));
      ckpt.add(key + "exp_avg", st.exp_avg());
      ckpt.add(key + "exp_avg_sq", st.exp_avg_sq());
    }
  }
}

void load_adam(torch::optim::Adam& optimizer, const Checkpoint& ckpt, const std::string& prefix) {
  size_t index = 0;
  for (auto& group : optimizer.param_groups()) {
    for (auto& p : group.params()) {
      const auto key = prefix + std::to_string(index++) + ".";
      const auto* step = ckpt.find(key + "step");
      if (!step) {
        optimizer.state().erase(p.unsafeGetTensorImpl());
        continue;
      }
      const auto* avg = ckpt.find(key + "exp_avg");
      const auto* avg_sq = ckpt.find(key + "exp_avg_sq");
      if (!avg || !avg_sq) throw CheckpointError("incomplete optimizer state for '" + key + "'");
      if (!avg->sizes().equals(p.sizes()) || !avg_sq->sizes().equals(p.sizes())) {
        throw CheckpointError("optimizer state shape mismatch for '" + key + "'");
      }
      auto st = std::make_unique<torch::optim::AdamParamState>();
      st->step(step->item<int64_t>());
      st->exp_avg(avg->to(p.options()).clone());
      st->exp_avg_sq(avg_sq->to(p.options()).clone());
      optimizer.state()[p.unsafeGetTensorImpl()] = std::move(st);
    }
  }
}

}  // namespace psfr::checkpoint
