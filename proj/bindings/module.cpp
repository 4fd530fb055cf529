// Python bindings for the main operations: data generation, curation,
// splitting, the two-stage training pipeline, the UFM oracle, and metrics.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cfa/experiment.hpp"
#include "cfa/linalg.hpp"
#include "cfa/metrics.hpp"
#include "cfa/ufm.hpp"

namespace py = pybind11;

namespace {

cfa::Matrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
    cfa::Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    std::copy(a.data(), a.data() + m.data.size(), m.data.begin());
    return m;
}

py::array_t<double> to_numpy(const cfa::Matrix& m) {
    py::array_t<double> a({m.rows, m.cols});
    std::copy(m.data.begin(), m.data.end(), a.mutable_data());
    return a;
}

}  // namespace

PYBIND11_MODULE(_cfa, mod) {
    mod.doc() = "compositional-feature-alignment laboratory";

    py::class_<cfa::RngState>(mod, "RngState").def(py::init<std::uint64_t>());

    py::class_<cfa::LabeledDataset>(mod, "LabeledDataset")
        .def(py::init<>())
        .def_property(
            "inputs", [](const cfa::LabeledDataset& d) { return to_numpy(d.inputs); },
            [](cfa::LabeledDataset& d, const py::array_t<double>& a) { d.inputs = to_matrix(a); })
        .def_readwrite("class_labels", &cfa::LabeledDataset::class_labels)
        .def_readwrite("domain_labels", &cfa::LabeledDataset::domain_labels)
        .def_readwrite("domain_label_present", &cfa::LabeledDataset::domain_label_present)
        .def_readwrite("num_classes", &cfa::LabeledDataset::num_classes)
        .def_readwrite("num_domains", &cfa::LabeledDataset::num_domains)
        .def("__len__", &cfa::LabeledDataset::size);

    py::class_<cfa::CombinationMask>(mod, "CombinationMask")
        .def(py::init<>())
        .def_readwrite("num_domains", &cfa::CombinationMask::num_domains)
        .def_readwrite("num_classes", &cfa::CombinationMask::num_classes)
        .def_readwrite("id_cells", &cfa::CombinationMask::id_cells);

    py::class_<cfa::SplitManifest>(mod, "SplitManifest")
        .def_readonly("train_indices", &cfa::SplitManifest::train_indices)
        .def_readonly("id_val_indices", &cfa::SplitManifest::id_val_indices)
        .def_readonly("ood_val_indices", &cfa::SplitManifest::ood_val_indices)
        .def_readonly("ood_test_indices", &cfa::SplitManifest::ood_test_indices);

    py::class_<cfa::HeadPair>(mod, "HeadPair")
        .def(py::init<>())
        .def_property(
            "w1", [](const cfa::HeadPair& h) { return to_numpy(h.w1); },
            [](cfa::HeadPair& h, const py::array_t<double>& a) { h.w1 = to_matrix(a); })
        .def_property(
            "w2", [](const cfa::HeadPair& h) { return to_numpy(h.w2); },
            [](cfa::HeadPair& h, const py::array_t<double>& a) { h.w2 = to_matrix(a); })
        .def_readwrite("beta1", &cfa::HeadPair::beta1)
        .def_readwrite("beta2", &cfa::HeadPair::beta2);

    mod.def("save_dataset", &cfa::save_dataset);
    mod.def("load_dataset", &cfa::load_dataset);

    mod.def(
        "gen_pixel_toy",
        [](std::size_t k, std::size_t e, std::size_t img_side, std::size_t n_per_cell,
           double pixel_noise, std::uint64_t seed) {
            cfa::CombinationMask full{e, k, std::vector<std::uint8_t>(e * k, 1)};
            cfa::RngState rng(seed);
            return cfa::gen_pixel_toy(k, e, img_side, n_per_cell, full, pixel_noise, rng);
        },
        py::arg("num_classes"), py::arg("num_domains"), py::arg("img_side"),
        py::arg("n_per_cell"), py::arg("pixel_noise") = 0.02, py::arg("seed") = 0);

    mod.def("curate_mask", [](const cfa::LabeledDataset& ds, double ood_fraction) {
        return cfa::curate_from_scores(cfa::reference_probe_scores(ds), ood_fraction);
    });

    mod.def("split_dataset",
            [](const cfa::LabeledDataset& ds, const cfa::CombinationMask& mask,
               double id_val_ratio, std::uint64_t seed) {
                cfa::RngState rng(seed);
                return cfa::split_dataset(ds, mask, id_val_ratio, rng);
            });

    mod.def(
        "make_feasible_heads",
        [](std::size_t k, std::size_t e, std::size_t dim, double beta, std::uint64_t seed) {
            cfa::RngState rng(seed);
            return cfa::make_feasible_heads(k, e, dim, beta, rng);
        },
        py::arg("num_classes"), py::arg("num_domains"), py::arg("dim"), py::arg("beta") = 20.0,
        py::arg("seed") = 0);

    mod.def(
        "solve_ufm",
        [](const py::array_t<double>& w1, const py::array_t<double>& w2, double beta,
           const std::vector<int>& y, const std::vector<int>& e, double lam, std::size_t steps,
           double lr, std::uint64_t seed, bool beta_anneal) {
            cfa::UFMProblem prob;
            prob.heads.w1 = to_matrix(w1);
            prob.heads.w2 = to_matrix(w2);
            prob.heads.beta1 = prob.heads.beta2 = beta;
            prob.y = y;
            prob.e = e;
            prob.lambda = lam;
            prob.beta_anneal = beta_anneal;
            cfa::RngState rng(seed);
            const auto sol = cfa::solve_ufm(prob, steps, lr, rng);
            return py::make_tuple(to_numpy(sol.z), sol.objective_trace.back());
        },
        py::arg("w1"), py::arg("w2"), py::arg("beta"), py::arg("y"), py::arg("e"),
        py::arg("lam") = 1.0, py::arg("steps") = 100000, py::arg("lr") = 5.0, py::arg("seed") = 0,
        py::arg("beta_anneal") = true);

    mod.def("verify_theorem1",
            [](const py::array_t<double>& z, const py::array_t<double>& w1,
               const py::array_t<double>& w2, const std::vector<int>& y,
               const std::vector<int>& e) {
                cfa::HeadPair heads;
                heads.w1 = to_matrix(w1);
                heads.w2 = to_matrix(w2);
                const auto rep = cfa::verify_theorem1(to_matrix(z), heads, y, e);
                py::dict d;
                d["residual_fraction"] = rep.residual_fraction;
                d["gamma1_hat"] = rep.gamma1_hat;
                d["gamma2_hat"] = rep.gamma2_hat;
                d["within_class_spread"] = rep.within_class_spread;
                d["within_domain_spread"] = rep.within_domain_spread;
                d["a_coeffs"] = to_numpy(rep.a_coeffs);
                d["b_coeffs"] = to_numpy(rep.b_coeffs);
                return d;
            });

    mod.def("stage1_linear_probe",
            [](const py::array_t<double>& features, const std::vector<int>& y,
               const std::vector<int>& e, std::size_t k, std::size_t ecount, double lambda_ortho,
               std::size_t iters, std::uint64_t seed) {
                cfa::TrainConfig cfg;
                cfg.lambda_ortho = lambda_ortho;
                cfg.stage1_iters = iters;
                cfg.seed = seed;
                const std::vector<std::uint8_t> present(y.size(), 1);
                const auto res =
                    cfa::stage1_linear_probe(to_matrix(features), y, e, present, k, ecount, cfg);
                return py::make_tuple(to_numpy(res.heads.w1), to_numpy(res.heads.w2),
                                      res.ortho_trace);
            });

    mod.def("top1_accuracy", &cfa::top1_accuracy);
    mod.def("macro_f1", &cfa::macro_f1);

    mod.def("run_single_seed", [](const std::string& config_text, std::uint64_t seed) {
        const auto cfg = cfa::parse_run_config(config_text);
        const auto out = cfa::run_single_seed(cfg, seed);
        py::dict d;
        d["seed"] = out.seed;
        d["id_acc"] = out.report.id_acc;
        d["ood_acc"] = out.report.ood_acc;
        d["id_f1"] = out.report.id_f1;
        d["ood_f1"] = out.report.ood_f1;
        return d;
    });
}
