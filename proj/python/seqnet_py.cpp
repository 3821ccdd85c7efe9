#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "seqnet/error.hpp"
#include "seqnet/eval.hpp"
#include "seqnet/matcher.hpp"
#include "seqnet/model.hpp"
#include "seqnet/trainer.hpp"

namespace py = pybind11;
using namespace seqnet;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IndexArray = py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>;

MatrixF to_matrix_f(const FloatArray& a) {
  if (a.ndim() != 2) throw Error(ErrorCode::ShapeMismatch, "expected a 2-D array");
  MatrixF m(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), m.data().begin());
  return m;
}

MatrixD to_matrix_d(const DoubleArray& a) {
  if (a.ndim() != 2) throw Error(ErrorCode::ShapeMismatch, "expected a 2-D array");
  MatrixD m(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), m.data().begin());
  return m;
}

template <typename T>
py::array_t<T> to_array(const std::vector<T>& v, std::vector<py::ssize_t> shape) {
  py::array_t<T> out(shape);
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::array_t<float> list_values(const DescriptorList& list) {
  const std::size_t d = list.empty() ? 0 : list[0].values.size();
  py::array_t<float> out({py::ssize_t(list.size()), py::ssize_t(d)});
  float* p = out.mutable_data();
  for (const auto& s : list) p = std::copy(s.values.begin(), s.values.end(), p);
  return out;
}

/// Rows of `values` as descriptors whose windows have the given centers and span.
DescriptorList as_list(const FloatArray& values, const std::optional<IndexArray>& centers, std::size_t span) {
  const auto m = to_matrix_f(values);
  if (centers && std::size_t(centers->size()) != m.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "centers must have one entry per row");
  }
  DescriptorList out;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const std::size_t c = centers ? std::size_t(centers->at(i)) : i;
    if (c < span / 2) throw Error(ErrorCode::WindowOutOfRange, "center before the first full window");
    const auto row = m.row(i);
    out.push_back({{row.begin(), row.end()}, window_at_center(c, span)});
  }
  return out;
}

py::dict table_dict(const MatchTable& t) {
  py::dict d;
  d["method"] = t.method;
  d["K"] = t.K;
  d["L_m"] = t.L_m;
  d["query_frames"] = t.query_frames;
  d["ref_frames"] = t.ref_frames;
  std::vector<std::vector<std::size_t>> refs;
  std::vector<std::vector<double>> scores;
  for (const auto& row : t.ranked) {
    refs.emplace_back();
    scores.emplace_back();
    for (const auto& c : row) {
      refs.back().push_back(t.ref_frames[c.ref]);
      scores.back().push_back(c.score);
    }
  }
  d["ranked_frames"] = refs;
  d["scores"] = scores;
  d["comparison_count"] = t.comparison_count;
  d["inadmissible"] = t.inadmissible;
  return d;
}

Traverse make(const FloatArray& descriptors, const DoubleArray& positions, const std::string& geometry) {
  PoseTable poses;
  if (geometry == "planar") {
    poses.kind = GeometryKind::Planar;
  } else if (geometry == "frames") {
    poses.kind = GeometryKind::FrameIndexed;
  } else {
    throw Error(ErrorCode::InvalidSpec, "geometry must be 'planar' or 'frames'");
  }
  const std::size_t cols = positions.ndim() == 1 ? 1 : std::size_t(positions.shape(1));
  if (positions.ndim() > 2 || cols > 2) throw Error(ErrorCode::ShapeMismatch, "positions must be n or n x 2");
  const std::size_t n = positions.shape(0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* p = positions.data() + i * cols;
    poses.positions.push_back({p[0], cols == 2 ? p[1] : 0.0});
  }
  return make_traverse(DescriptorSet(to_matrix_f(descriptors)), std::move(poses));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Sequential place descriptors and hierarchical sequence matching.";

  static py::exception<Error> error(m, "SeqNetError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  py::class_<SeqNetModel>(m, "Model")
      .def_readonly("d_in", &SeqNetModel::d_in)
      .def_readonly("d_out", &SeqNetModel::d_out)
      .def_readonly("w", &SeqNetModel::w)
      .def_readonly("L_d", &SeqNetModel::L_d)
      .def_property_readonly("kernel",
                             [](const SeqNetModel& s) {
                               return to_array(s.kernel, {py::ssize_t(s.d_out), py::ssize_t(s.w), py::ssize_t(s.d_in)});
                             })
      .def_property_readonly("bias", [](const SeqNetModel& s) { return to_array(s.bias, {py::ssize_t(s.d_out)}); })
      .def("forward", [](const SeqNetModel& s, const DoubleArray& x) {
        const auto y = forward(s, to_matrix_d(x));
        return to_array(y, {py::ssize_t(y.size())});
      }, py::arg("x"))
      .def("backward", [](const SeqNetModel& s, const DoubleArray& x, const DoubleArray& upstream) {
        const std::vector<double> u(upstream.data(), upstream.data() + upstream.size());
        const auto g = backward(s, to_matrix_d(x), u);
        return py::make_tuple(to_array(g.d_kernel, {py::ssize_t(s.d_out), py::ssize_t(s.w), py::ssize_t(s.d_in)}),
                              to_array(g.d_bias, {py::ssize_t(s.d_out)}),
                              to_array(g.d_input.data(), {py::ssize_t(g.d_input.rows()), py::ssize_t(g.d_input.cols())}));
      }, py::arg("x"), py::arg("upstream"))
      .def("save", [](const SeqNetModel& s, const std::string& path) { save_model(path, s); })
      .def("__eq__", [](const SeqNetModel& a, const SeqNetModel& b) { return a == b; });

  m.def("init_model", &init_model, py::arg("d_in"), py::arg("d_out"), py::arg("w"), py::arg("L_d"), py::arg("seed"),
        py::arg("identity_init") = false);
  m.def("load_model", [](const std::string& path) { return load_model(path); });

  py::class_<Traverse>(m, "Traverse")
      .def(py::init(&make), py::arg("descriptors"), py::arg("positions"), py::arg("geometry") = "planar")
      .def_property_readonly("descriptors", [](const Traverse& t) {
        return to_array(t.descriptors.data.data(), {py::ssize_t(t.size()), py::ssize_t(t.descriptors.d())});
      })
      .def_property_readonly("positions", [](const Traverse& t) {
        std::vector<double> flat;
        for (const auto& p : t.positions) {
          flat.push_back(p.x);
          flat.push_back(p.y);
        }
        return to_array(flat, {py::ssize_t(t.size()), 2});
      })
      .def_property_readonly("geometry",
                             [](const Traverse& t) { return t.kind == GeometryKind::Planar ? "planar" : "frames"; })
      .def("__len__", &Traverse::size)
      .def("reversed", &reverse_traverse);

  m.def("_synth_pair", [](const std::string& spec_text) {
    auto pair = synth_traverse_pair(parse_synth_spec(spec_text));
    return py::make_tuple(std::move(pair.reference), std::move(pair.query));
  });

  m.def("_train", [](const Traverse& ref, const Traverse& qry, const std::string& config_text) {
    auto kv = KeyValueConfig::parse(config_text);
    const auto cfg = read_train_config(kv);
    kv.reject_unknown();
    TrainResult result;
    {
      py::gil_scoped_release release;
      result = train(ref, qry, cfg);
    }
    py::list log;
    for (const auto& e : result.log.epochs) {
      py::dict row;
      row["epoch"] = e.epoch;
      row["lr"] = e.lr;
      row["mean_loss"] = e.mean_loss;
      row["active_fraction"] = e.active_fraction;
      log.append(row);
    }
    return py::make_tuple(std::move(result.model), log);
  });

  m.def("extract", [](const SeqNetModel& s, const Traverse& t) {
    const auto out = forward_batch(s, prepared(t), s.L_d);
    std::vector<std::int64_t> centers;
    for (const auto& d : out) centers.push_back(std::int64_t(d.source_window.center()));
    return py::make_tuple(list_values(out), to_array(centers, {py::ssize_t(centers.size())}));
  }, py::arg("model"), py::arg("traverse"), "Sequential descriptors of every full window and their center frames.");

  m.def("retrieve_topk", [](const FloatArray& ref, const FloatArray& qry, std::size_t K, unsigned threads) {
    return table_dict(retrieve_topk(as_list(ref, std::nullopt, 1), as_list(qry, std::nullopt, 1), K, threads));
  }, py::arg("ref"), py::arg("qry"), py::arg("K"), py::arg("threads") = 1);

  m.def("seqmatch_full", [](const FloatArray& ref_s1, const FloatArray& qry_s1, std::size_t L_m, bool reverse) {
    SeqMatchOptions opt;
    opt.reverse = reverse;
    return table_dict(seqmatch_full(as_list(ref_s1, std::nullopt, 1), as_list(qry_s1, std::nullopt, 1), L_m, opt));
  }, py::arg("ref_s1"), py::arg("qry_s1"), py::arg("L_m"), py::arg("reverse") = false);

  m.def("hvpr_match",
        [](const FloatArray& ref_seq, const IndexArray& ref_centers, const FloatArray& qry_seq,
           const IndexArray& qry_centers, const FloatArray& ref_s1, const FloatArray& qry_s1, std::size_t K,
           std::size_t L_m, std::size_t L_d, bool reverse) {
          HvprOptions opt;
          opt.reverse = reverse;
          return table_dict(hvpr_match(as_list(ref_seq, ref_centers, L_d), as_list(qry_seq, qry_centers, L_d),
                                       as_list(ref_s1, std::nullopt, 1), as_list(qry_s1, std::nullopt, 1), K, L_m,
                                       opt));
        },
        py::arg("ref_seq"), py::arg("ref_centers"), py::arg("qry_seq"), py::arg("qry_centers"), py::arg("ref_s1"),
        py::arg("qry_s1"), py::arg("K") = 20, py::arg("L_m") = 5, py::arg("L_d") = 5, py::arg("reverse") = false);

  m.def("evaluate",
        [](const Traverse& ref, const Traverse& qry, const SeqNetModel* s1, const SeqNetModel* sequential,
           std::size_t K, std::size_t L_m, double radius, std::vector<std::size_t> ks, bool reverse_db,
           bool include_empty, std::size_t baseline_length, std::vector<std::string> methods) {
          ProtocolConfig cfg;
          cfg.K = K;
          cfg.L_m = L_m;
          cfg.radius = radius;
          cfg.ks = std::move(ks);
          cfg.reverse_db = reverse_db;
          cfg.include_empty = include_empty;
          cfg.baseline_length = baseline_length;
          cfg.methods = std::move(methods);
          ProtocolResult result;
          {
            py::gil_scoped_release release;
            result = run_protocol(ref, qry, {s1, sequential}, cfg);
          }
          py::list out;
          for (const auto& r : result.reports) {
            py::dict row;
            row["method"] = r.method;
            row["K"] = r.K;
            row["L_m"] = r.L_m;
            py::dict recall;
            for (std::size_t i = 0; i < r.ks.size(); ++i) recall[py::int_(r.ks[i])] = r.recall[i];
            row["recall"] = recall;
            row["n_queries"] = r.n_queries;
            row["n_excluded"] = r.n_excluded;
            row["comparison_count"] = r.comparison_count;
            out.append(row);
          }
          return out;
        },
        py::arg("reference"), py::arg("query"), py::arg("s1") = nullptr, py::arg("sequential") = nullptr,
        py::arg("K") = 20, py::arg("L_m") = 5, py::arg("radius") = 2.0,
        py::arg("ks") = std::vector<std::size_t>{1, 5, 20}, py::arg("reverse_db") = false,
        py::arg("include_empty") = false, py::arg("baseline_length") = 5,
        py::arg("methods") = std::vector<std::string>{});
}
