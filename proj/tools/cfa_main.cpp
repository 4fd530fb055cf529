// cfa: experiment runner for the compositional-feature-alignment laboratory.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical non-convergence,
// 4 I/O error.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cfa/experiment.hpp"
#include "cfa/linalg.hpp"
#include "cfa/metrics.hpp"
#include "cfa/ufm.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNoConverge = 3;
constexpr int kExitIo = 4;

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write: " + path);
    os << text;
}

cfa::RunConfig config_from_flags(const std::string& config_path, std::uint64_t seed,
                                 bool seed_set, const std::string& out,
                                 const std::string& method, double wise_alpha) {
    cfa::RunConfig cfg =
        config_path.empty() ? cfa::RunConfig{} : cfa::load_run_config(config_path);
    if (seed_set) cfg.seeds = {seed};
    if (!out.empty()) cfg.out_dir = out;
    if (!method.empty()) cfg.method = cfa::method_from_name(method);
    if (wise_alpha >= 0.0) cfg.wise_alpha = wise_alpha;
    cfg.validate();
    return cfg;
}

nlohmann::json matrix_json(const cfa::Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < m.rows; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < m.cols; ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

cfa::Matrix matrix_from_json(const nlohmann::json& j) {
    const std::size_t rows = j.size();
    const std::size_t cols = rows ? j.at(0).size() : 0;
    cfa::Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
    return m;
}

int run(int argc, char** argv) {
    CLI::App app{"compositional-feature-alignment laboratory"};
    app.require_subcommand(1);

    std::string config_path, out, method, data_path, mask_path, manifest_path;
    std::uint64_t seed = 0;
    double wise_alpha = -1.0;
    bool seed_set = false;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "config file (key = value lines)");
        sub->add_option("--out", out, "output path");
        sub->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
            seed_set = true;
        });
    };

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    add_common(gen);

    // curate
    auto* curate = app.add_subcommand("curate", "curate an ID/OOD combination mask");
    curate->add_option("--data", data_path, "dataset file")->required();
    curate->add_option("--out", out, "mask JSON output")->required();
    double ood_fraction = 0.2;
    curate->add_option("--ood-fraction", ood_fraction, "fraction of cells held out");

    // split
    auto* split = app.add_subcommand("split", "stratified train/val/test split");
    split->add_option("--data", data_path)->required();
    split->add_option("--mask", mask_path)->required();
    split->add_option("--out", out)->required();
    double id_val_ratio = 0.1;
    split->add_option("--id-val-ratio", id_val_ratio);
    split->add_option("--seed", seed);

    // lp (stage-1 only)
    auto* lp = app.add_subcommand("lp", "stage-1 orthogonal linear probe");
    add_common(lp);

    // ft (stage-2 / baselines, full pipeline)
    auto* ft = app.add_subcommand("ft", "train a method end to end");
    add_common(ft);
    ft->add_option("--method", method, "cfa | ft | lp_ft | reweight_e | reweight_yxe");
    ft->add_option("--wise-alpha", wise_alpha, "WiSE-FT interpolation weight");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a config end to end (alias of ft)");
    add_common(eval);
    eval->add_option("--method", method);

    // wise
    auto* wise = app.add_subcommand("wise", "interpolate two checkpoints");
    std::string ckpt_a, ckpt_b;
    wise->add_option("--ckpt-a", ckpt_a)->required();
    wise->add_option("--ckpt-b", ckpt_b)->required();
    wise->add_option("--alpha", wise_alpha)->required();
    wise->add_option("--out", out)->required();

    // ufm solve / verify
    auto* ufm = app.add_subcommand("ufm", "unconstrained-feature-model oracle");
    ufm->require_subcommand(1);
    auto* solve = ufm->add_subcommand("solve", "optimize free features");
    std::size_t uk = 3, ue = 2, ud = 8, un = 60, usteps = 100000;
    double ulambda = 1.0, ubeta = 20.0, ulr = 5.0;
    bool no_anneal = false;
    solve->add_option("--classes", uk);
    solve->add_option("--domains", ue);
    solve->add_option("--dim", ud);
    solve->add_option("--samples", un);
    solve->add_option("--steps", usteps);
    solve->add_option("--lambda", ulambda);
    solve->add_option("--beta", ubeta);
    solve->add_option("--lr", ulr);
    solve->add_option("--seed", seed);
    solve->add_flag("--no-anneal", no_anneal, "disable logit-scale annealing");
    solve->add_option("--out", out)->required();
    auto* verify = ufm->add_subcommand("verify", "decompose a solved feature matrix");
    std::string z_path;
    verify->add_option("--solution", z_path, "output of `ufm solve`")->required();
    verify->add_option("--out", out, "report JSON (stdout when omitted)");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "orthogonality-coefficient trace sweep");
    add_common(sweep);
    std::string lo_list = "1,10,100,1000";
    sweep->add_option("--lambda-ortho", lo_list, "comma-separated coefficients");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    if (gen->parsed()) {
        cfa::RunConfig cfg = config_from_flags(config_path, seed, seed_set, "", "", -1.0);
        if (out.empty()) throw std::runtime_error("gen: --out required");
        cfa::RngState rng(seed_set ? seed : 0xDA7Aull);
        cfa::CombinationMask full;
        full.num_domains = cfg.num_domains;
        full.num_classes = cfg.num_classes;
        full.id_cells.assign(cfg.num_domains * cfg.num_classes, 1);
        cfa::LabeledDataset ds;
        if (cfg.dataset_kind == "pixel_toy") {
            ds = cfa::gen_pixel_toy(cfg.num_classes, cfg.num_domains, cfg.img_side, cfg.n_per_cell,
                                    full, cfg.pixel_noise, rng);
        } else {
            const auto spec = cfa::make_default_spec(cfg.num_classes, cfg.num_domains,
                                                     cfg.class_dim, cfg.domain_dim, cfg.total_dim,
                                                     cfg.sigma, cfg.noise_scale, true, rng);
            ds = cfa::gen_structured_features(spec, full, cfg.n_per_cell, rng);
        }
        cfa::save_dataset(ds, out);
        std::cout << "wrote " << out << " (" << ds.size() << " samples)\n";
        return kExitOk;
    }
    if (curate->parsed()) {
        const auto ds = cfa::load_dataset(data_path);
        const auto mask = cfa::curate_from_scores(cfa::reference_probe_scores(ds), ood_fraction);
        cfa::save_mask(mask, out);
        std::cout << "wrote " << out << "\n";
        return kExitOk;
    }
    if (split->parsed()) {
        const auto ds = cfa::load_dataset(data_path);
        const auto mask = cfa::load_mask(mask_path);
        cfa::RngState rng(seed);
        const auto manifest = cfa::split_dataset(ds, mask, id_val_ratio, rng);
        cfa::save_manifest(manifest, out);
        std::cout << "wrote " << out << "\n";
        return kExitOk;
    }
    if (ft->parsed() || eval->parsed() || lp->parsed()) {
        cfa::RunConfig cfg =
            config_from_flags(config_path, seed, seed_set, out, method, wise_alpha);
        if (lp->parsed()) {
            // stage-1 only: report the probe's final orthogonality residual
            cfg.train.epochs = 1;
            cfg.method = cfa::Method::cfa;
        }
        const auto outcomes = cfa::run_experiment(cfg);
        bool all_ok = true;
        for (const auto& o : outcomes) {
            if (o.ok) {
                std::cout << "seed " << o.seed << ": id_acc=" << o.report.id_acc
                          << " ood_acc=" << o.report.ood_acc << "\n";
            } else {
                all_ok = false;
                std::cerr << "seed " << o.seed << " failed: " << o.error << "\n";
            }
        }
        return all_ok ? kExitOk : kExitNoConverge;
    }
    if (wise->parsed()) {
        const auto a = cfa::load_checkpoint(ckpt_a);
        if (wise_alpha == 0.0) {
            write_file(out, read_file(ckpt_a));
        } else if (wise_alpha == 1.0) {
            write_file(out, read_file(ckpt_b));
        } else {
            const auto b = cfa::load_checkpoint(ckpt_b);
            cfa::CheckpointBundle mix = a;
            mix.encoder.unflatten(
                cfa::wise_interpolate(a.encoder.flatten(), b.encoder.flatten(), wise_alpha));
            mix.heads.w1.data =
                cfa::wise_interpolate(a.heads.w1.data, b.heads.w1.data, wise_alpha);
            mix.heads.w2.data =
                cfa::wise_interpolate(a.heads.w2.data, b.heads.w2.data, wise_alpha);
            mix.heads.b1 = cfa::wise_interpolate(a.heads.b1, b.heads.b1, wise_alpha);
            mix.heads.b2 = cfa::wise_interpolate(a.heads.b2, b.heads.b2, wise_alpha);
            cfa::save_checkpoint(mix, out);
        }
        std::cout << "wrote " << out << "\n";
        return kExitOk;
    }
    if (solve->parsed()) {
        cfa::UFMProblem prob;
        cfa::RngState rng(seed);
        cfa::RngState head_rng = rng.split(1);
        prob.heads = cfa::make_feasible_heads(uk, ue, ud, ubeta, head_rng);
        prob.lambda = ulambda;
        prob.beta_anneal = !no_anneal;
        for (std::size_t i = 0; i < un; ++i) {
            prob.y.push_back(static_cast<int>(i % uk));
            prob.e.push_back(static_cast<int>((i / uk) % ue));
        }
        cfa::RngState z_rng = rng.split(2);
        const auto sol = cfa::solve_ufm(prob, usteps, ulr, z_rng);
        nlohmann::json j{
            {"w1", matrix_json(prob.heads.w1)}, {"w2", matrix_json(prob.heads.w2)},
            {"beta1", prob.heads.beta1},        {"beta2", prob.heads.beta2},
            {"lambda", prob.lambda},            {"y", prob.y},
            {"e", prob.e},                      {"z", matrix_json(sol.z)},
            {"objective", sol.objective_trace.back()},
        };
        write_file(out, j.dump(2) + "\n");
        std::cout << "objective " << sol.objective_trace.back() << " after "
                  << sol.objective_trace.size() << " steps\n";
        return kExitOk;
    }
    if (verify->parsed()) {
        const auto j = nlohmann::json::parse(read_file(z_path));
        cfa::HeadPair heads;
        heads.w1 = matrix_from_json(j.at("w1"));
        heads.w2 = matrix_from_json(j.at("w2"));
        heads.beta1 = j.at("beta1").get<double>();
        heads.beta2 = j.at("beta2").get<double>();
        const auto y = j.at("y").get<std::vector<int>>();
        const auto e = j.at("e").get<std::vector<int>>();
        const auto rep = cfa::verify_theorem1(matrix_from_json(j.at("z")), heads, y, e);
        const std::string text = cfa::report_to_json(rep);
        if (!out.empty()) write_file(out, text + "\n");
        std::cout << "residual_fraction " << rep.residual_fraction << "\n";
        std::cout << text << "\n";
        return kExitOk;
    }
    if (sweep->parsed()) {
        cfa::RunConfig cfg = config_from_flags(config_path, seed, seed_set, "", "", -1.0);
        if (out.empty()) throw std::runtime_error("sweep: --out required");
        std::vector<double> coeffs;
        {
            std::stringstream ss(lo_list);
            std::string item;
            while (std::getline(ss, item, ',')) coeffs.push_back(std::stod(item));
        }
        if (coeffs.empty()) throw std::invalid_argument("sweep: empty coefficient list");
        // stage-1 traces on normalized raw synthetic features
        cfa::RngState rng(seed_set ? seed : 0xDA7Aull);
        cfa::CombinationMask full;
        full.num_domains = cfg.num_domains;
        full.num_classes = cfg.num_classes;
        full.id_cells.assign(cfg.num_domains * cfg.num_classes, 1);
        const auto spec = cfa::make_default_spec(cfg.num_classes, cfg.num_domains, cfg.class_dim,
                                                 cfg.domain_dim, cfg.total_dim, cfg.sigma,
                                                 cfg.noise_scale, true, rng);
        const auto ds = cfa::gen_structured_features(spec, full, cfg.n_per_cell, rng);
        const cfa::Matrix feats = cfa::l2_normalize_rows(ds.inputs);
        std::vector<std::vector<double>> traces;
        for (double lo : coeffs) {
            cfa::TrainConfig tc = cfg.train;
            tc.lambda_ortho = lo;
            tc.ortho_threshold = 1e18;  // the sweep reports raw traces
            tc.ortho_mode = cfa::OrthoMode::penalty;
            tc.seed = seed_set ? seed : 0;
            const auto r = cfa::stage1_linear_probe(feats, ds.class_labels, ds.domain_labels,
                                                    ds.domain_label_present, cfg.num_classes,
                                                    cfg.num_domains, tc);
            traces.push_back(r.ortho_trace);
        }
        std::ostringstream csv;
        csv.precision(10);
        csv << "step";
        for (double lo : coeffs) csv << ",lambda_ortho_" << lo;
        csv << "\n";
        std::size_t longest = 0;
        for (const auto& t : traces) longest = std::max(longest, t.size());
        for (std::size_t i = 0; i < longest; ++i) {
            csv << i;
            for (const auto& t : traces) {
                csv << ',';
                if (i < t.size()) csv << t[i];
            }
            csv << "\n";
        }
        write_file(out, csv.str());
        std::cout << "wrote " << out << "\n";
        return kExitOk;
    }
    return kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const cfa::ConvergenceError& ex) {
        std::cerr << "non-convergence: " << ex.what() << "\n";
        return kExitNoConverge;
    } catch (const std::invalid_argument& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return kExitConfig;
    } catch (const nlohmann::json::exception& ex) {
        std::cerr << "I/O error: " << ex.what() << "\n";
        return kExitIo;
    } catch (const std::exception& ex) {
        std::cerr << "I/O error: " << ex.what() << "\n";
        return kExitIo;
    }
}
