// ----------------------------------------------------------------------------
// Copyright 2026 The FUDA Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ----------------------------------------------------------------------------

#include "fuda/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "fuda/error.hpp"

namespace fuda::ckpt {
namespace {

constexpr char kMagic[8] = {'F', 'U', 'D', 'A', 'C', 'K', 'P', 'T'};

struct Fnv1a {
  std::uint64_t h = 0xcbf29ce484222325ull;
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ull;
    }
  }
};

std::vector<std::pair<std::string, torch::Tensor>> named_state(const torch::nn::Module& m) {
  std::vector<std::pair<std::string, torch::Tensor>> out;
  for (const auto& item : m.named_parameters(/*recurse=*/true))
    out.emplace_back(item.key(), item.value());
  for (const auto& item : m.named_buffers(/*recurse=*/true))
    out.emplace_back(item.key(), item.value());
  return out;
}

std::uint8_t dtype_code(const torch::Tensor& t, const std::string& name) {
  if (t.scalar_type() == torch::kFloat32) return 0;
  if (t.scalar_type() == torch::kFloat64) return 1;
  throw CheckpointError("unsupported dtype for tensor " + name);
}

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <typename T>
  void pod(T v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void bytes(const void* p, std::size_t n) {
    os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string file) : is_(is), file_(std::move(file)) {}
  template <typename T>
  T pod() {
    T v;
    need(static_cast<bool>(is_.read(reinterpret_cast<char*>(&v), sizeof(T))));
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    if (n > (1u << 28)) fail("implausible string length");
    std::string s(n, '\0');
    need(static_cast<bool>(is_.read(s.data(), n)));
    return s;
  }
  void bytes(void* p, std::size_t n) { need(static_cast<bool>(is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n)))); }
  [[noreturn]] void fail(const std::string& what) const {
    throw CheckpointError(file_ + ": " + what);
  }

 private:
  void need(bool ok) const {
    if (!ok) fail("truncated checkpoint");
  }
  std::istream& is_;
  std::string file_;
};

}  // namespace

std::uint64_t config_hash(const nlohmann::json& config) {
  const std::string s = config.dump();
  Fnv1a f;
  f.update(s.data(), s.size());
  return f.h;
}

std::uint64_t parameter_hash(const torch::nn::Module& module) {
  Fnv1a f;
  for (const auto& [name, t] : named_state(module)) {
    f.update(name.data(), name.size());
    auto c = t.detach().contiguous().cpu();
    f.update(c.data_ptr(), static_cast<std::size_t>(c.numel()) * c.element_size());
  }
  return f.h;
}

void save(const std::filesystem::path& file, const std::string& kind,
          const nlohmann::json& config, const torch::nn::Module& module) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw CheckpointError(file.string() + ": cannot open for writing");
  Writer w(os);
  w.bytes(kMagic, sizeof(kMagic));
  w.pod<std::uint32_t>(kFormatVersion);
  w.str(kind);
  w.pod<std::uint64_t>(config_hash(config));
  w.str(config.dump());
  const auto state = named_state(module);
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(state.size()));
  for (const auto& [name, t] : state) {
    w.str(name);
    w.pod<std::uint8_t>(dtype_code(t, name));
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.sizes()) w.pod<std::int64_t>(d);
    auto c = t.detach().contiguous().cpu();
    w.bytes(c.data_ptr(), static_cast<std::size_t>(c.numel()) * c.element_size());
  }
  if (!os) throw CheckpointError(file.string() + ": write failed");
}

Checkpoint read(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw CheckpointError(file.string() + ": cannot open checkpoint");
  Reader r(is, file.string());
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) r.fail("not a checkpoint (bad magic)");
  const auto version = r.pod<std::uint32_t>();
  if (version != kFormatVersion) r.fail("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  ck.kind = r.str();
  const auto stored_hash = r.pod<std::uint64_t>();
  try {
    ck.config = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception&) {
    r.fail("malformed embedded config");
  }
  if (config_hash(ck.config) != stored_hash) r.fail("config hash mismatch");

  const auto n = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.str();
    const auto code = r.pod<std::uint8_t>();
    if (code > 1) r.fail("unknown dtype code for " + name);
    const auto ndim = r.pod<std::uint32_t>();
    if (ndim > 8) r.fail("implausible rank for " + name);
    std::vector<std::int64_t> dims(ndim);
    for (auto& d : dims) {
      d = r.pod<std::int64_t>();
      if (d < 0) r.fail("negative extent for " + name);
    }
    auto t = torch::empty(dims, code == 0 ? torch::kFloat32 : torch::kFloat64);
    r.bytes(t.data_ptr(), static_cast<std::size_t>(t.numel()) * t.element_size());
    ck.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ck;
}

void load_into(const Checkpoint& ckpt, torch::nn::Module& module,
               const std::string& expected_kind) {
  if (ckpt.kind != expected_kind)
    throw CheckpointError("checkpoint holds '" + ckpt.kind + "' networks, expected '" +
                          expected_kind + "'");
  std::map<std::string, torch::Tensor> by_name(ckpt.tensors.begin(), ckpt.tensors.end());
  torch::NoGradGuard no_grad;
  for (auto& [name, dst] : named_state(module)) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("checkpoint lacks tensor " + name);
    if (it->second.sizes() != dst.sizes())
      throw CheckpointError("shape mismatch for tensor " + name);
    dst.copy_(it->second.to(dst.dtype()));
  }
}

}  // namespace fuda::ckpt
