#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "adgn/error.hpp"
#include "adgn/experiment.hpp"
#include "adgn/metrics.hpp"
#include "adgn/mixture.hpp"
#include "adgn/oracle.hpp"
#include "adgn/protocol.hpp"

namespace py = pybind11;
using namespace adgn;

namespace {

using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;
using U32Array = py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>;
using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

void require_2d(const py::buffer_info& info) {
  if (info.ndim != 2) throw ContractViolation("mask must be a 2-D array");
}

BinaryMask to_binary(const U8Array& a) {
  const auto info = a.request();
  require_2d(info);
  const auto* p = static_cast<const std::uint8_t*>(info.ptr);
  return BinaryMask(static_cast<std::size_t>(info.shape[0]), static_cast<std::size_t>(info.shape[1]),
                    std::vector<std::uint8_t>(p, p + info.size));
}

InstanceMask to_instance(const U32Array& a) {
  const auto info = a.request();
  require_2d(info);
  const auto* p = static_cast<const std::uint32_t*>(info.ptr);
  return InstanceMask(static_cast<std::size_t>(info.shape[0]),
                      static_cast<std::size_t>(info.shape[1]),
                      std::vector<std::uint32_t>(p, p + info.size));
}

std::vector<float> to_floats(const F32Array& a) {
  const auto info = a.request();
  const auto* p = static_cast<const float*>(info.ptr);
  return std::vector<float>(p, p + info.size);
}

py::dict summary_dict(const RunArtifact& art) {
  py::dict d;
  d["dir"] = art.dir.string();
  d["js_marginal"] = art.eval.js_marginal;
  d["js_component"] = art.eval.js_component;
  d["bytes"] = art.bytes;
  d["privacy_violations"] = art.privacy_violations;
  d["rounds"] = art.reports.size();
  d["wall_seconds"] = art.wall_seconds;
  return d;
}

}  // namespace

PYBIND11_MODULE(_asyndgan, m) {
  m.doc() = "Distributed conditional GAN on a 1-D Gaussian mixture";

  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<PrecisionError>(m, "PrecisionError", PyExc_ArithmeticError);
  py::register_exception<RunFailure>(m, "RunFailure", PyExc_RuntimeError);

  // Mixture and evaluation.
  m.def(
      "sample_mixture",
      [](std::size_t n, std::uint64_t seed) {
        const Dataset data = sample(MixtureSpec::synthetic_default(), n, seed);
        py::array_t<std::uint32_t> xs(static_cast<py::ssize_t>(n));
        py::array_t<float> ys(static_cast<py::ssize_t>(n));
        auto x = xs.mutable_unchecked<1>();
        auto y = ys.mutable_unchecked<1>();
        for (std::size_t i = 0; i < n; ++i) {
          x(static_cast<py::ssize_t>(i)) = data[i].x;
          y(static_cast<py::ssize_t>(i)) = data[i].y;
        }
        return py::make_tuple(xs, ys);
      },
      py::arg("n"), py::arg("seed"),
      "Draw n (x, y) pairs from the default three-component mixture.");
  m.def(
      "js_divergence",
      [](const F32Array& a, const F32Array& b, std::size_t bins, double lo, double hi) {
        const auto va = to_floats(a), vb = to_floats(b);
        return js_divergence(va, vb, HistogramRange{bins, lo, hi});
      },
      py::arg("a"), py::arg("b"), py::arg("bins") = 100, py::arg("lo") = -10.0,
      py::arg("hi") = 10.0);

  // Oracle.
  m.def("theorem_checks", [] {
    py::list out;
    for (const auto& c : theorem_checks(MixtureSpec::synthetic_default())) {
      py::dict d;
      d["name"] = c.name;
      d["value"] = c.value;
      d["expected"] = c.expected;
      d["pass"] = c.pass;
      out.append(d);
    }
    return out;
  });
  m.def(
      "gaussian_pair_loss",
      [](double mean_a, double var_a, double mean_b, double var_b) {
        auto density = [](double mu, double var) {
          return [mu, var](double y) {
            return std::exp(-0.5 * (y - mu) * (y - mu) / var) / std::sqrt(2.0 * M_PI * var);
          };
        };
        return pair_loss(density(mean_a, var_a), density(mean_b, var_b));
      },
      py::arg("mean_a"), py::arg("var_a"), py::arg("mean_b"), py::arg("var_b"));

  // Protocol accounting.
  m.def("comm_cost", &comm_cost, py::arg("height"), py::arg("width"), py::arg("channels"),
        py::arg("batch"), py::arg("bytes_per_scalar"));
  m.def("gradient_sharing_cost", &gradient_sharing_cost, py::arg("parameters"),
        py::arg("bytes_per_scalar"));
  m.def(
      "encode_fake_batch",
      [](std::uint16_t node, std::uint32_t round, const F32Array& values) {
        const auto info = values.request();
        Shape shape(info.shape.begin(), info.shape.end());
        const auto frame = encode(
            make_tensor_message(MsgType::kFakeBatch, node, round, Tensor(shape, to_floats(values))));
        return py::bytes(reinterpret_cast<const char*>(frame.data()), frame.size());
      },
      py::arg("node"), py::arg("round"), py::arg("values"));
  m.def(
      "decode_frame",
      [](const py::bytes& frame) {
        const std::string raw = frame;
        std::vector<std::uint8_t> bytes(raw.begin(), raw.end());
        Message msg;
        try {
          msg = decode(bytes);
        } catch (const DecodeError& e) {
          throw py::value_error(e.what());
        }
        py::dict d;
        d["type"] = msg_type_name(msg.type);
        d["node"] = msg.node_id;
        d["round"] = msg.round;
        if (const auto* t = std::get_if<Tensor>(&msg.payload)) {
          std::vector<py::ssize_t> shape(t->shape.begin(), t->shape.end());
          py::array_t<float> arr(shape);
          std::memcpy(arr.mutable_data(), t->data.data(), t->data.size() * sizeof(float));
          d["tensor"] = arr;
        }
        return d;
      },
      py::arg("frame"));

  // Segmentation metrics on 2-D arrays.
  m.def("dice", [](const U8Array& g, const U8Array& s) { return dice(to_binary(g), to_binary(s)); });
  m.def("sensitivity",
        [](const U8Array& g, const U8Array& s) { return sensitivity(to_binary(g), to_binary(s)); });
  m.def("specificity",
        [](const U8Array& g, const U8Array& s) { return specificity(to_binary(g), to_binary(s)); });
  m.def("jaccard", [](const U8Array& g, const U8Array& s) { return jaccard(to_binary(g), to_binary(s)); });
  m.def("hd95", [](const U8Array& g, const U8Array& s) { return hd95(to_binary(g), to_binary(s)); });
  m.def("aji", [](const U32Array& g, const U32Array& s) { return aji(to_instance(g), to_instance(s)); });
  m.def("connected_components", [](const U8Array& mask) {
    const auto labels = connected_components(to_binary(mask));
    py::array_t<std::uint32_t> out({static_cast<py::ssize_t>(labels.height),
                                    static_cast<py::ssize_t>(labels.width)});
    std::memcpy(out.mutable_data(), labels.labels.data(), labels.labels.size() * sizeof(std::uint32_t));
    return out;
  });

  // Configs and runs.
  m.def("parse_config", [](const std::string& text) { return emit_config(parse_config(text)); },
        py::arg("text"), "Validate a config and return it with every key filled in.");
  m.def(
      "train",
      [](const std::string& config_text, const std::string& out_dir) {
        const RunConfig config = parse_config(config_text);
        RunOptions opts;
        opts.config_text = config_text;
        opts.dir = out_dir;
        RunArtifact art;
        {
          py::gil_scoped_release release;
          art = run_experiment(config, opts);
        }
        return summary_dict(art);
      },
      py::arg("config_text"), py::arg("out_dir") = "",
      "Run one experiment and return its summary.");
}
