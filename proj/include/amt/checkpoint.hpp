// Copyright 2026 The amt Authors
//
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

#ifndef AMT_CHECKPOINT_HPP
#define AMT_CHECKPOINT_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>

#include "amt/model.hpp"
#include "amt/optim.hpp"

namespace amt {

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_u64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n));
}
inline std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
inline std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

inline void write_tensor(std::ostream& os, const Tensor& t) {
  write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) write_u64(os, d);
  write_bytes(os, t.data(), t.size() * sizeof(double));
}

inline Tensor read_tensor(std::istream& is) {
  const std::uint32_t rank = read_u32(is);
  std::vector<std::size_t> shape(rank);
  for (auto& d : shape) d = static_cast<std::size_t>(read_u64(is));
  Tensor t(shape);
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size() * sizeof(double)));
  return t;
}

}  // namespace detail

/// Versioned checkpoint: config echo, named parameter tensors, and optional
/// optimizer/sampler state for exact training resumption. Tensor payloads are
/// raw doubles, so save -> load -> forward is bit-identical.
struct CheckpointExtras {
  const Adam* optimizer = nullptr;
  std::optional<std::array<std::uint64_t, 4>> sampler_state;
  std::uint64_t step = 0;
};

inline void save_checkpoint(const std::string& path, const Model& model,
                            const CheckpointExtras& extras = {}) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot write checkpoint: " + path);
  os.write("AMTC", 4);
  detail::write_u32(os, 1);  // version
  detail::write_u64(os, config_hash(model.config()));
  const std::string cfg = to_json(model.config()).dump();
  detail::write_u32(os, static_cast<std::uint32_t>(cfg.size()));
  detail::write_bytes(os, cfg.data(), cfg.size());
  detail::write_u64(os, extras.step);
  os.put(extras.optimizer ? 1 : 0);
  os.put(extras.sampler_state ? 1 : 0);
  if (extras.sampler_state)
    for (std::uint64_t w : *extras.sampler_state) detail::write_u64(os, w);
  const ParameterStore& store = model.params();
  detail::write_u32(os, static_cast<std::uint32_t>(store.count()));
  for (std::size_t i = 0; i < store.count(); ++i) {
    const Parameter& p = store.at(i);
    detail::write_u32(os, static_cast<std::uint32_t>(p.name.size()));
    detail::write_bytes(os, p.name.data(), p.name.size());
    detail::write_tensor(os, p.value);
  }
  if (extras.optimizer) {
    Adam& opt = const_cast<Adam&>(*extras.optimizer);
    for (std::size_t i = 0; i < store.count(); ++i) {
      detail::write_tensor(os, opt.moment1(i));
      detail::write_tensor(os, opt.moment2(i));
    }
  }
  if (!os) throw io_error("write failed: " + path);
}

struct LoadedCheckpoint {
  ModelConfig config;
  std::uint64_t step = 0;
  std::optional<std::array<std::uint64_t, 4>> sampler_state;
  bool has_optimizer = false;
};

/// Restores parameter values (and optionally Adam moments) into an existing
/// model. The stored config hash and every tensor shape must match.
inline LoadedCheckpoint load_checkpoint(const std::string& path, Model& model,
                                        Adam* optimizer = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot read checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "AMTC", 4) != 0)
    throw io_error("not a checkpoint file: " + path);
  const std::uint32_t version = detail::read_u32(is);
  if (version != 1)
    throw io_error("unsupported checkpoint version " + std::to_string(version));
  LoadedCheckpoint out;
  const std::uint64_t hash = detail::read_u64(is);
  const std::uint32_t cfg_len = detail::read_u32(is);
  std::string cfg_str(cfg_len, '\0');
  is.read(cfg_str.data(), cfg_len);
  out.config = model_config_from_json(nlohmann::json::parse(cfg_str));
  if (hash != config_hash(model.config()))
    throw validation_error(
        "checkpoint config hash does not match the target model");
  out.step = detail::read_u64(is);
  out.has_optimizer = is.get() == 1;
  const bool has_rng = is.get() == 1;
  if (has_rng) {
    std::array<std::uint64_t, 4> st{};
    for (auto& w : st) w = detail::read_u64(is);
    out.sampler_state = st;
  }
  const std::uint32_t n = detail::read_u32(is);
  ParameterStore& store = model.params();
  if (n != store.count())
    throw validation_error("checkpoint parameter count mismatch");
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t name_len = detail::read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    Tensor t = detail::read_tensor(is);
    Parameter* p = store.find(name);
    if (!p) throw validation_error("unknown parameter in checkpoint: " + name);
    if (!p->value.same_shape(t))
      throw validation_error("shape mismatch for parameter " + name);
    p->value = std::move(t);
  }
  if (out.has_optimizer && optimizer) {
    for (std::size_t i = 0; i < store.count(); ++i) {
      Tensor m = detail::read_tensor(is);
      Tensor v = detail::read_tensor(is);
      if (!m.same_shape(optimizer->moment1(i)))
        throw validation_error("optimizer state shape mismatch");
      optimizer->moment1(i) = std::move(m);
      optimizer->moment2(i) = std::move(v);
    }
    optimizer->set_step_count(out.step);
  }
  if (!is) throw io_error("truncated checkpoint: " + path);
  return out;
}

/// Reads only the embedded config, for constructing a matching model.
inline ModelConfig peek_checkpoint_config(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot read checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "AMTC", 4) != 0)
    throw io_error("not a checkpoint file: " + path);
  detail::read_u32(is);
  detail::read_u64(is);
  const std::uint32_t cfg_len = detail::read_u32(is);
  std::string cfg_str(cfg_len, '\0');
  is.read(cfg_str.data(), cfg_len);
  return model_config_from_json(nlohmann::json::parse(cfg_str));
}

}  // namespace amt

#endif  // AMT_CHECKPOINT_HPP
