#pragma once

// Versioned binary checkpoint: header, encoder config JSON, named float32
// parameter arrays, optional training state (optimizer moments, RNG and data
// positions), and a trailing FNV-1a checksum over everything before it.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "quert/model.hpp"

namespace quert {

inline constexpr char kCheckpointMagic[8] = {'Q', 'R', 'T', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainState {
  std::vector<std::vector<float>> adam_m, adam_v;  // per parameter
  std::uint64_t step = 0;
  std::uint64_t total_steps = 0;
  std::uint64_t rng_seed = 0;
  std::uint64_t rng_position = 0;
  std::uint64_t stream_cursor = 0;
  std::uint64_t stream_rng_position = 0;
};

namespace detail {

class HashingWriter {
 public:
  explicit HashingWriter(std::ostream& os) : os_(os) {}
  void write(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ULL;
    }
    os_.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
  }
  template <class T>
  void write_pod(const T& x) {
    write(&x, sizeof(T));
  }
  void write_str(const std::string& s) {
    write_pod<std::uint64_t>(s.size());
    write(s.data(), s.size());
  }
  std::uint64_t hash() const { return hash_; }

 private:
  std::ostream& os_;
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

class HashingReader {
 public:
  explicit HashingReader(std::istream& is) : is_(is) {}
  void read(void* data, std::size_t n) {
    is_.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n));
    if (!is_) throw std::runtime_error("checkpoint: truncated file");
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ULL;
    }
  }
  template <class T>
  T read_pod() {
    T x;
    read(&x, sizeof(T));
    return x;
  }
  std::string read_str() {
    auto n = read_pod<std::uint64_t>();
    if (n > (1ULL << 32)) throw std::runtime_error("checkpoint: corrupt string length");
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  std::uint64_t hash() const { return hash_; }

 private:
  std::istream& is_;
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

}  // namespace detail

template <class Real>
void save_checkpoint(const EncoderModel<Real>& m, const std::string& path,
                     const TrainState* state = nullptr) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  detail::HashingWriter w(out);
  w.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.write_pod(kCheckpointVersion);
  w.write_str(m.cfg.to_json().dump());
  w.write_pod<std::uint64_t>(m.params.size());
  for (const auto* p : m.params) {
    w.write_str(p->name);
    w.write_pod<std::uint64_t>(p->value.shape.size());
    for (std::size_t d : p->value.shape) w.write_pod<std::uint64_t>(d);
    std::vector<float> data(p->value.v.begin(), p->value.v.end());
    w.write(data.data(), data.size() * sizeof(float));
  }
  w.write_pod<std::uint8_t>(state ? 1 : 0);
  if (state) {
    w.write_pod(state->step);
    w.write_pod(state->total_steps);
    w.write_pod(state->rng_seed);
    w.write_pod(state->rng_position);
    w.write_pod(state->stream_cursor);
    w.write_pod(state->stream_rng_position);
    for (std::size_t i = 0; i < m.params.size(); ++i) {
      w.write(state->adam_m[i].data(), state->adam_m[i].size() * sizeof(float));
      w.write(state->adam_v[i].data(), state->adam_v[i].size() * sizeof(float));
    }
  }
  std::uint64_t h = w.hash();
  out.write(reinterpret_cast<const char*>(&h), sizeof(h));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

template <class Real>
EncoderConfig load_checkpoint(const std::string& path, std::optional<EncoderModel<Real>>& model,
                              TrainState* state = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  detail::HashingReader r(in);
  char magic[8];
  r.read(magic, sizeof(magic));
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  auto version = r.read_pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  EncoderConfig cfg;
  try {
    cfg = EncoderConfig::from_json(nlohmann::json::parse(r.read_str()));
  } catch (const std::exception& ex) {
    throw std::runtime_error("checkpoint: corrupt config block in " + path + ": " + ex.what());
  }
  model.emplace(cfg);
  auto n_params = r.read_pod<std::uint64_t>();
  if (n_params != model->params.size())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  for (auto* p : model->params) {
    std::string name = r.read_str();
    if (name != p->name)
      throw std::runtime_error("checkpoint: parameter '" + name + "' where '" + p->name +
                               "' expected");
    auto ndims = r.read_pod<std::uint64_t>();
    std::vector<std::size_t> shape(ndims);
    for (auto& d : shape) d = r.read_pod<std::uint64_t>();
    if (shape != p->value.shape)
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
    std::vector<float> data(p->value.v.size());
    r.read(data.data(), data.size() * sizeof(float));
    for (std::size_t i = 0; i < data.size(); ++i) p->value.v[i] = static_cast<Real>(data[i]);
  }
  auto has_state = r.read_pod<std::uint8_t>();
  if (has_state) {
    TrainState s;
    s.step = r.read_pod<std::uint64_t>();
    s.total_steps = r.read_pod<std::uint64_t>();
    s.rng_seed = r.read_pod<std::uint64_t>();
    s.rng_position = r.read_pod<std::uint64_t>();
    s.stream_cursor = r.read_pod<std::uint64_t>();
    s.stream_rng_position = r.read_pod<std::uint64_t>();
    s.adam_m.resize(model->params.size());
    s.adam_v.resize(model->params.size());
    for (std::size_t i = 0; i < model->params.size(); ++i) {
      s.adam_m[i].resize(model->params[i]->value.v.size());
      s.adam_v[i].resize(model->params[i]->value.v.size());
      r.read(s.adam_m[i].data(), s.adam_m[i].size() * sizeof(float));
      r.read(s.adam_v[i].data(), s.adam_v[i].size() * sizeof(float));
    }
    if (state) *state = std::move(s);
  }
  std::uint64_t computed = r.hash();
  std::uint64_t stored;
  in.read(reinterpret_cast<char*>(&stored), sizeof(stored));
  if (!in || stored != computed)
    throw std::runtime_error("checkpoint: checksum mismatch in " + path);
  return cfg;
}

}  // namespace quert
