#include "nexus/serialize.hpp"

#include <cmath>
#include <string>

#include "nexus/errors.hpp"

namespace nexus {

namespace {

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                         const char* where) {
  if (!j.is_object()) throw ValidationError(std::string(where) + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError(std::string(where) + ": unknown key '" + key + "'");
  }
}

nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"vocab", c.vocab}, {"context", c.context}, {"hidden", c.hidden}, {"heads", c.heads},
          {"layers", c.layers}, {"m", c.m}, {"a", c.a}, {"ffn", c.ffn}, {"dtype", c.dtype}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, {"vocab", "context", "hidden", "heads", "layers", "m", "a", "ffn", "dtype"},
                      "model");
  ModelConfig c;
  read_if(j, "vocab", c.vocab);
  read_if(j, "context", c.context);
  read_if(j, "hidden", c.hidden);
  read_if(j, "heads", c.heads);
  read_if(j, "layers", c.layers);
  read_if(j, "m", c.m);
  read_if(j, "a", c.a);
  read_if(j, "ffn", c.ffn);
  read_if(j, "dtype", c.dtype);
  return c;
}

nlohmann::json growth_report_to_json(const GrowthReport& r) {
  nlohmann::json blocks = nlohmann::json::object();
  for (std::size_t i = 0; i < kNewBlocks.size(); ++i) {
    blocks[new_block_name(kNewBlocks[i])] = {{"zero_init", r.block_is_zero[i]},
                                             {"grad_norm", num(r.gradient_norms.values[i])}};
  }
  return {{"old_m", r.old_m},
          {"old_a", r.old_a},
          {"new_m", r.new_m},
          {"new_a", r.new_a},
          {"policy", r.policy},
          {"seed", r.seed},
          {"layers_grown", r.layers_grown},
          {"reference_std", num(r.reference_std)},
          {"max_output_deviation", num(r.max_output_deviation)},
          {"new_blocks", blocks}};
}

nlohmann::json harmonic_to_json(const HarmonicFit& f) {
  return {{"a0", num(f.a0)},
          {"a1", num(f.a1)},
          {"freq", num(f.freq)},
          {"phase", num(f.phase)},
          {"r_squared", num(f.r_squared)},
          {"f_stat", num(f.f_stat)},
          {"p_value", num(f.p_value)},
          {"dof1", f.dof1},
          {"dof2", f.dof2},
          {"freq_min", num(f.freq_min)},
          {"freq_max", num(f.freq_max)},
          {"grid_step", num(f.grid_step)},
          {"grid_points", f.grid_points},
          {"p_value_search", f.p_value_search < 0 ? nlohmann::json(nullptr) : num(f.p_value_search)},
          {"search_trials", f.search_trials},
          {"degenerate", f.degenerate}};
}

nlohmann::json fisher_to_json(const FisherGResult& f) {
  nlohmann::json pg = nlohmann::json::array();
  for (double v : f.periodogram) pg.push_back(num(v));
  return {{"g_stat", num(f.g_stat)}, {"p_value", num(f.p_value)}, {"m", f.m},
          {"detrend", detrend_name(f.detrend)}, {"periodogram", pg}, {"degenerate", f.degenerate}};
}

nlohmann::json scaling_to_json(const ScalingFit& f, bool degenerate) {
  if (degenerate) {
    return {{"w", nullptr}, {"b", nullptr}, {"r_squared", nullptr}, {"used", f.used},
            {"excluded", f.excluded}, {"degenerate", true}};
  }
  return {{"w", num(f.w)}, {"b", num(f.b)}, {"r_squared", num(f.r_squared)}, {"used", f.used},
          {"excluded", f.excluded}, {"degenerate", false}};
}

}  // namespace nexus
