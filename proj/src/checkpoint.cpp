#include "nexus/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "nexus/errors.hpp"
#include "nexus/serialize.hpp"

namespace nexus {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

constexpr std::uint8_t kDtypeF64 = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& s) : s_(s) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, s_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string v = s_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  void doubles(std::span<double> dst) {
    need(dst.size() * sizeof(double));
    std::memcpy(dst.data(), s_.data() + pos_, dst.size() * sizeof(double));
    pos_ += dst.size() * sizeof(double);
  }
  bool done() const { return pos_ == s_.size(); }

 private:
  void need(std::size_t n) const {
    if (s_.size() - pos_ < n) throw ValidationError("checkpoint truncated");
  }
  const std::string& s_;
  std::size_t pos_ = 0;
};

std::vector<std::pair<std::string, const Matrix*>> all_matrices(const TrainState& s) {
  auto out = named_params(s.params);
  for (const auto& [n, m] : named_params(s.opt.m)) out.emplace_back("adam.m." + n, m);
  for (const auto& [n, m] : named_params(s.opt.v)) out.emplace_back("adam.v." + n, m);
  return out;
}

std::vector<std::pair<std::string, Matrix*>> all_matrices(TrainState& s) {
  auto out = named_params(s.params);
  for (const auto& [n, m] : named_params(s.opt.m)) out.emplace_back("adam.m." + n, m);
  for (const auto& [n, m] : named_params(s.opt.v)) out.emplace_back("adam.v." + n, m);
  return out;
}

}  // namespace

std::string save_checkpoint(const TrainState& s) {
  check_params(s.config, s.params);
  nlohmann::json meta;
  meta["config"] = model_config_to_json(s.config);
  meta["step"] = s.step;
  meta["tokens"] = s.tokens;
  meta["warmup_start"] = s.warmup_start;
  meta["warmup_steps"] = s.warmup_steps;
  meta["data_stream"] = s.data_stream;
  meta["adam_t"] = s.opt.t;
  meta["rng"] = {{"algorithm", s.rng.algorithm}, {"seed", s.rng.seed}, {"position", s.rng.position}};
  meta["base_m"] = s.base_m;
  meta["base_a"] = s.base_a;
  const std::string js = meta.dump();

  std::string out(kCheckpointMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, js.size());
  out += js;
  const auto mats = all_matrices(s);
  put<std::uint64_t>(out, mats.size());
  for (const auto& [name, m] : mats) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint64_t>(out, m->rows());
    put<std::uint64_t>(out, m->cols());
    put<std::uint8_t>(out, kDtypeF64);
    const auto v = m->values();
    out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  return out;
}

TrainState load_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.bytes(4) != std::string(kCheckpointMagic, 4)) throw ValidationError("not an NXF1 checkpoint");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto js_len = r.get<std::uint64_t>();
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.bytes(js_len));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint header: ") + e.what());
  }

  TrainState s;
  try {
    s.config = model_config_from_json(meta.at("config"));
    s.step = meta.at("step").get<std::uint64_t>();
    s.tokens = meta.at("tokens").get<std::uint64_t>();
    s.warmup_start = meta.at("warmup_start").get<std::uint64_t>();
    s.warmup_steps = meta.at("warmup_steps").get<std::uint64_t>();
    s.data_stream = meta.at("data_stream").get<std::uint64_t>();
    s.opt.t = meta.at("adam_t").get<std::uint64_t>();
    const auto& rng = meta.at("rng");
    s.rng.algorithm = rng.at("algorithm").get<std::string>();
    s.rng.seed = rng.at("seed").get<std::uint64_t>();
    s.rng.position = rng.at("position").get<std::uint64_t>();
    s.base_m = meta.at("base_m").get<std::size_t>();
    s.base_a = meta.at("base_a").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint header: ") + e.what());
  }
  s.config.validate();
  s.params = zeros_like(init_params(s.config, 0));
  s.opt.m = zeros_like(s.params);
  s.opt.v = zeros_like(s.params);

  std::map<std::string, Matrix*> slots;
  for (auto& [n, m] : all_matrices(s)) slots.emplace(n, m);
  const auto count = r.get<std::uint64_t>();
  if (count != slots.size()) {
    throw ValidationError("checkpoint has " + std::to_string(count) + " matrices, config needs " +
                          std::to_string(slots.size()));
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name = r.bytes(r.get<std::uint32_t>());
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    const auto dtype = r.get<std::uint8_t>();
    auto it = slots.find(name);
    if (it == slots.end()) throw ValidationError("checkpoint: unexpected matrix '" + name + "'");
    if (dtype != kDtypeF64) throw ValidationError("checkpoint: unsupported dtype tag for " + name);
    Matrix* m = it->second;
    if (m->rows() != rows || m->cols() != cols) {
      throw ValidationError("checkpoint: " + name + " has shape " + std::to_string(rows) + "x" +
                            std::to_string(cols) + ", expected " + m->shape_string());
    }
    r.doubles(m->values());
    slots.erase(it);
  }
  if (!r.done()) throw ValidationError("checkpoint: trailing bytes");
  return s;
}

void write_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  const auto bytes = save_checkpoint(state);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ValidationError("cannot write " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ValidationError("write failed: " + path.string());
}

TrainState read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return load_checkpoint(ss.str());
}

}  // namespace nexus
