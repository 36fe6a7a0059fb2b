#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "nexus/align.hpp"
#include "nexus/checkpoint.hpp"
#include "nexus/errors.hpp"
#include "nexus/experiment.hpp"
#include "nexus/flops.hpp"
#include "nexus/growth.hpp"
#include "nexus/serialize.hpp"
#include "nexus/stats.hpp"
#include "nexus/trajectory.hpp"

namespace py = pybind11;
using namespace nexus;

namespace {

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw ValidationError("ragged matrix");
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

py::dict breakdown_dict(const FlopsBreakdown& b) {
  py::dict d;
  d["qkv_projections"] = b.qkv_projections;
  d["attention_scores"] = b.attention_scores;
  d["attention_aggregate"] = b.attention_aggregate;
  d["output_projection"] = b.output_projection;
  d["ffn"] = b.ffn;
  d["lm_head"] = b.lm_head;
  d["total"] = b.total;
  d["convention"] = b.convention;
  return d;
}

py::object json_to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Nexus-rank growth toolkit";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  m.def("percent_shift", &percent_shift, py::arg("current"), py::arg("initial"));
  m.def("radial_energy", &radial_energy, py::arg("up_pct"), py::arg("noc_pct"));
  m.def("perf_gain", &perf_gain, py::arg("current"), py::arg("baseline"));
  m.def(
      "noc",
      [](const std::vector<double>& f, const std::vector<double>& g, std::size_t bins) {
        return noc(f, g, bins);
      },
      py::arg("f"), py::arg("g"), py::arg("bins") = kDefaultNocBins);
  m.def(
      "mann_whitney",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const auto r = mann_whitney(a, b);
        return py::make_tuple(r.u, r.p_value, r.exact);
      },
      py::arg("a"), py::arg("b"), "Returns (U, p, exact).");

  m.def(
      "harmonic_fit",
      [](const std::vector<double>& t, const std::vector<double>& v, std::size_t grid) {
        HarmonicOptions o;
        o.grid = grid;
        return json_to_py(harmonic_to_json(harmonic_fit(t, v, o)));
      },
      py::arg("times"), py::arg("values"), py::arg("grid") = 512);
  m.def(
      "fisher_g_test",
      [](const std::vector<double>& v, const std::string& detrend) {
        return json_to_py(fisher_to_json(fisher_g_test(v, parse_detrend(detrend))));
      },
      py::arg("values"), py::arg("detrend") = "linear");
  m.def(
      "scaling_law_fit",
      [](const std::vector<std::pair<double, double>>& pairs) {
        return json_to_py(scaling_to_json(scaling_law_fit(pairs), false));
      },
      py::arg("r_ppl"));

  m.def(
      "grassmann_distance",
      [](const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
        return grassmann_distance(to_matrix(a), to_matrix(b));
      },
      py::arg("a"), py::arg("b"), "Bases as lists of rows with orthonormal columns.");

  m.def("nexus_proj_flops", &nexus_proj_flops, py::arg("d"), py::arg("m"), py::arg("a"));
  m.def("standard_proj_flops", &standard_proj_flops, py::arg("d"));
  m.def(
      "model_flops",
      [](bool nexus, std::uint64_t layers, std::uint64_t hidden, std::uint64_t vocab,
         std::uint64_t ffn, std::uint64_t m_, std::uint64_t a, std::uint64_t seq_len, bool lm_head) {
        FlopsConfig c;
        c.nexus = nexus;
        c.layers = layers;
        c.hidden = hidden;
        c.vocab = vocab;
        c.ffn = ffn;
        c.m = m_;
        c.a = a;
        c.seq_len = seq_len;
        c.lm_head = lm_head;
        return breakdown_dict(model_flops(c));
      },
      py::arg("nexus"), py::arg("layers"), py::arg("hidden"), py::arg("vocab"), py::arg("ffn"),
      py::arg("m") = 0, py::arg("a") = 0, py::arg("seq_len") = 4096, py::arg("lm_head") = true);
  m.def("efficiency_ratio", &efficiency_ratio, py::arg("ppl"), py::arg("flops"));

  m.def(
      "train",
      [](const std::string& config_json, const std::filesystem::path& out_dir) {
        const auto cfg = experiment_config_from_json(nlohmann::json::parse(config_json));
        py::gil_scoped_release release;
        const auto res = train(cfg, std::nullopt, out_dir);
        std::vector<std::pair<std::uint64_t, double>> log;
        for (const auto& s : res.snapshots) log.emplace_back(s.step, s.held_out_loss);
        return log;
      },
      py::arg("config_json"), py::arg("out_dir"),
      "Trains from a JSON config; returns [(step, held_out_loss)].");
  m.def(
      "grow_checkpoint",
      [](const std::filesystem::path& in, const std::filesystem::path& out, std::size_t dm,
         std::size_t da, const std::string& policy, std::uint64_t seed) {
        const auto s = read_checkpoint(in);
        ExperimentConfig cfg;
        cfg.model = s.config;
        GrowthReport rep;
        const auto grown = grow_train_state(s, cfg, {dm, da, InitPolicy::parse(policy), seed}, &rep);
        write_checkpoint(out, grown);
        return json_to_py(growth_report_to_json(rep));
      },
      py::arg("ckpt"), py::arg("out"), py::arg("dm"), py::arg("da"),
      py::arg("policy") = "guarded-zero", py::arg("seed") = 0);
  m.def(
      "max_logit_deviation",
      [](const std::filesystem::path& old_ckpt, const std::filesystem::path& new_ckpt) {
        const auto a = read_checkpoint(old_ckpt);
        const auto b = read_checkpoint(new_ckpt);
        const auto probe = make_probe(a.config, 0, 8, std::min<std::size_t>(a.config.context, 16));
        return verify_function_preservation(a.config, a.params, b.config, b.params, probe);
      },
      py::arg("old_ckpt"), py::arg("new_ckpt"));
}
