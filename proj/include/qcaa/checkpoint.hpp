#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "qcaa/errors.hpp"
#include "qcaa/model.hpp"
#include "qcaa/text.hpp"

namespace qcaa {

// Layout (all integers and values little-endian):
//   "QCAACKPT" | u32 version | u64 n + n bytes config text (key=value lines)
//   u64 tensor count | per tensor: u32 n + name, u32 rank, u64 dims[rank], f64 values
inline constexpr char kCheckpointMagic[8] = {'Q', 'C', 'A', 'A', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get() {
    unsigned char raw[sizeof(T)];
    take(raw, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  std::string get_string(std::size_t n) {
    std::string s(n, '\0');
    take(s.data(), n);
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void take(void* dst, std::size_t n) {
    if (n > bytes_.size() - pos_) throw CheckpointError("checkpoint is truncated");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }

  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string config_to_text(const ModelConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg.to_key_values()) out += k + "=" + v + "\n";
  return out;
}

inline ModelConfig config_from_text(const std::string& body) {
  ModelConfig cfg;
  std::istringstream in(body);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("bad config line '" + line + "'");
    try {
      if (!cfg.set(line.substr(0, eq), line.substr(eq + 1))) {
        throw CheckpointError("unknown config key '" + line.substr(0, eq) + "'");
      }
    } catch (const ConfigError& e) {
      throw CheckpointError(std::string("checkpoint config: ") + e.what());
    }
  }
  return cfg;
}

inline std::string serialize_checkpoint(const ModelConfig& cfg, const ModelParams& params) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  const std::string text = config_to_text(cfg);
  detail::put_le<std::uint64_t>(out, text.size());
  out += text;
  const auto tensors = params.named_tensors();
  detail::put_le<std::uint64_t>(out, tensors.size());
  for (const auto& [name, t] : tensors) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) detail::put_le<std::uint64_t>(out, d);
    for (double v : t.data()) detail::put_le<double>(out, v);
  }
  return out;
}

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

inline Checkpoint deserialize_checkpoint(std::string bytes) {
  detail::Reader in(std::move(bytes));
  if (in.get_string(sizeof(kCheckpointMagic)) != std::string(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto text_len = in.get<std::uint64_t>();
  Checkpoint ck;
  ck.config = config_from_text(in.get_string(text_len));
  try {
    ck.params = init_params(ck.config, 0);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config invalid: ") + e.what());
  }

  std::map<std::string, Tensor*> slots;
  for (auto& [name, t] : ck.params.named_tensors()) slots[name] = t;
  const auto count = in.get<std::uint64_t>();
  if (count != slots.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(count) + " tensors, config implies " +
                          std::to_string(slots.size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = in.get_string(in.get<std::uint32_t>());
    const auto it = slots.find(name);
    if (it == slots.end()) throw CheckpointError("unexpected tensor '" + name + "'");
    Shape shape(in.get<std::uint32_t>());
    for (auto& d : shape) d = in.get<std::uint64_t>();
    Tensor& slot = *it->second;
    if (shape != slot.shape()) {
      throw CheckpointError("tensor '" + name + "' has shape " + to_string(shape) + ", expected " +
                            to_string(slot.shape()));
    }
    for (auto& v : slot.data()) v = in.get<double>();
    slots.erase(it);
  }
  if (!in.done()) throw CheckpointError("trailing bytes after last tensor");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write " + path.string());
  const std::string bytes = serialize_checkpoint(cfg, params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace qcaa
