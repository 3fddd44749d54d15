#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "admix/bleu.hpp"
#include "admix/mixing.hpp"
#include "admix/noise.hpp"
#include "admix/objective.hpp"
#include "admix/rng.hpp"
#include "admix/tensor.hpp"
#include "admix/vocab.hpp"

namespace py = pybind11;
using namespace admix;

namespace {

// Distribution-pair JS on plain vectors (natural log, same flooring as the
// training objective).
double js_divergence_vec(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("js_divergence: length mismatch");
  TensorT<double> pt({1, 1, static_cast<int64_t>(p.size())}, p);
  TensorT<double> qt({1, 1, static_cast<int64_t>(q.size())}, q);
  BoolMat mask(1, 1, true);
  return js_divergence(pt, qt, mask).item();
}

std::vector<std::vector<double>> mix_embeddings(
    const std::vector<std::vector<std::vector<double>>>& variants,
    const std::vector<std::vector<double>>& clean, const std::vector<double>& w, double m) {
  if (variants.empty()) throw std::invalid_argument("mix_embeddings: no variants");
  const auto rows = static_cast<int64_t>(clean.size());
  const auto cols = static_cast<int64_t>(clean.empty() ? 0 : clean[0].size());
  auto flatten = [&](const std::vector<std::vector<double>>& mat) {
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(rows * cols));
    for (const auto& row : mat) {
      if (static_cast<int64_t>(row.size()) != cols)
        throw std::invalid_argument("mix_embeddings: ragged matrix");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    return TensorT<double>({rows, cols}, std::move(flat));
  };
  std::vector<TensorT<double>> vts;
  vts.reserve(variants.size());
  for (const auto& v : variants) vts.push_back(flatten(v));
  const auto mixed = detail::mix_variants(vts, flatten(clean), w, m);
  std::vector<std::vector<double>> out(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r)
    out[static_cast<size_t>(r)].assign(mixed.data().begin() + r * cols,
                                       mixed.data().begin() + (r + 1) * cols);
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "AdMix NMT core operations";

  py::class_<Rng>(m, "Rng")
      .def(py::init<uint64_t>(), py::arg("seed"))
      .def("stream", &Rng::stream, py::arg("label"))
      .def("uniform", &Rng::uniform)
      .def("normal", py::overload_cast<>(&Rng::normal))
      .def("gamma", &Rng::gamma, py::arg("alpha"))
      .def("beta", &Rng::beta, py::arg("beta"))
      .def("dirichlet", &Rng::dirichlet, py::arg("k"), py::arg("alpha"));

  m.def("sample_dirichlet", &sample_dirichlet, py::arg("rng"), py::arg("k"), py::arg("alpha"));
  m.def("sample_beta", &sample_beta, py::arg("rng"), py::arg("beta"));

  py::class_<Vocab>(m, "Vocab")
      .def_static("build", &Vocab::build, py::arg("corpus_paths"), py::arg("min_freq") = 1,
                  py::arg("max_size") = 0)
      .def_static("from_tokens", &Vocab::from_tokens, py::arg("content_tokens"))
      .def_static("load", &Vocab::load, py::arg("path"))
      .def("save", &Vocab::save, py::arg("path"))
      .def("size", &Vocab::size)
      .def("id", &Vocab::id, py::arg("token"))
      .def("token", &Vocab::token, py::arg("id"))
      .def("encode", &Vocab::encode, py::arg("line"))
      .def("decode", &Vocab::decode, py::arg("ids"))
      .def_property_readonly_static("PAD", [](py::object) { return Vocab::kPad; })
      .def_property_readonly_static("BOS", [](py::object) { return Vocab::kBos; })
      .def_property_readonly_static("EOS", [](py::object) { return Vocab::kEos; })
      .def_property_readonly_static("UNK", [](py::object) { return Vocab::kUnk; })
      .def_property_readonly_static("BLANK", [](py::object) { return Vocab::kBlank; });

  m.def("word_replace", &word_replace, py::arg("seq"), py::arg("gamma"), py::arg("rng"),
        py::arg("vocab"));
  m.def("word_swap", &word_swap, py::arg("seq"), py::arg("gamma"), py::arg("rng"));
  m.def(
      "word_drop",
      [](const std::vector<int32_t>& seq, double gamma, Rng& rng, const std::string& mode) {
        if (mode != "remove" && mode != "blank")
          throw std::invalid_argument("word_drop: mode must be 'remove' or 'blank'");
        return word_drop(seq, gamma, rng, mode == "blank" ? DropMode::blank : DropMode::remove);
      },
      py::arg("seq"), py::arg("gamma"), py::arg("rng"), py::arg("mode") = "remove");
  m.def("switchout_baseline", &switchout_baseline, py::arg("seq"), py::arg("tau"), py::arg("rng"),
        py::arg("vocab"));

  py::class_<BleuReport>(m, "BleuReport")
      .def_readonly("bleu", &BleuReport::bleu)
      .def_readonly("precisions", &BleuReport::precisions)
      .def_readonly("brevity_penalty", &BleuReport::brevity_penalty)
      .def_readonly("hyp_len", &BleuReport::hyp_len)
      .def_readonly("ref_len", &BleuReport::ref_len)
      .def("__repr__", &BleuReport::to_string);

  m.def("corpus_bleu", &corpus_bleu, py::arg("hypotheses"), py::arg("references"),
        py::arg("smooth") = false, py::arg("lowercase") = false);

  m.def("js_divergence", &js_divergence_vec, py::arg("p"), py::arg("q"));
  m.def("mix_embeddings", &mix_embeddings, py::arg("variants"), py::arg("clean"), py::arg("w"),
        py::arg("m"),
        "Convex mix of variant embeddings plus the residual interpolation with the clean one");
}
