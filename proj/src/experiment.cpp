#include "cfa/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace cfa {

Method method_from_name(const std::string& name) {
    if (name == "cfa") return Method::cfa;
    if (name == "ft") return Method::ft;
    if (name == "lp_ft") return Method::lp_ft;
    if (name == "reweight_e") return Method::reweight_e;
    if (name == "reweight_yxe") return Method::reweight_yxe;
    throw std::invalid_argument("unknown method: " + name);
}

std::string method_name(Method m) {
    switch (m) {
        case Method::cfa: return "cfa";
        case Method::ft: return "ft";
        case Method::lp_ft: return "lp_ft";
        case Method::reweight_e: return "reweight_e";
        case Method::reweight_yxe: return "reweight_yxe";
    }
    return "cfa";
}

void RunConfig::validate() const {
    train.validate();
    if (train.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (dataset_kind != "pixel_toy" && dataset_kind != "structured")
        throw std::invalid_argument("dataset_kind must be pixel_toy or structured");
    if (num_classes < 2 || num_domains < 1)
        throw std::invalid_argument("need num_classes >= 2 and num_domains >= 1");
    if (n_per_cell < 2) throw std::invalid_argument("n_per_cell must be >= 2");
    if (ood_fraction < 0.0 || ood_fraction >= 1.0)
        throw std::invalid_argument("ood_fraction must be in [0, 1)");
    if (id_val_ratio <= 0.0 || id_val_ratio >= 1.0)
        throw std::invalid_argument("id_val_ratio must be in (0, 1)");
    if (domain_label_ratio < 0.0 || domain_label_ratio > 1.0)
        throw std::invalid_argument("domain_label_ratio must be in [0, 1]");
    if (wise_alpha > 1.0) throw std::invalid_argument("wise_alpha must be <= 1");
    if (seeds.empty()) throw std::invalid_argument("need at least one seed");
    if (feature_dim < num_classes + num_domains)
        throw std::invalid_argument("feature_dim must be >= num_classes + num_domains");
}

namespace {

std::vector<std::string> split_csv_field(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& msg) {
        throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        if (eq == std::string::npos) fail("expected key = value");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty()) fail("empty key or value");
        try {
            if (key == "lambda") cfg.train.lambda = std::stod(val);
            else if (key == "lambda_ortho") cfg.train.lambda_ortho = std::stod(val);
            else if (key == "beta1") cfg.train.beta1 = std::stod(val);
            else if (key == "beta2") cfg.train.beta2 = std::stod(val);
            else if (key == "lr") cfg.train.lr = std::stod(val);
            else if (key == "epochs") cfg.train.epochs = std::stoul(val);
            else if (key == "batch_size") cfg.train.batch_size = std::stoul(val);
            else if (key == "reweight") {
                if (val == "none") cfg.train.reweight = ReweightMode::none;
                else if (val == "by_domain") cfg.train.reweight = ReweightMode::by_domain;
                else if (val == "by_domain_class") cfg.train.reweight = ReweightMode::by_domain_class;
                else if (val == "by_class") cfg.train.reweight = ReweightMode::by_class;
                else fail("bad reweight mode: " + val);
            } else if (key == "freeze_heads") cfg.train.freeze_heads = (val == "true" || val == "1");
            else if (key == "head_mode") {
                if (val == "normalized_no_bias") cfg.train.head_mode = HeadMode::normalized_no_bias;
                else if (val == "unconstrained_with_bias")
                    cfg.train.head_mode = HeadMode::unconstrained_with_bias;
                else fail("bad head_mode: " + val);
            } else if (key == "ortho_mode") {
                if (val == "penalty") cfg.train.ortho_mode = OrthoMode::penalty;
                else if (val == "projection") cfg.train.ortho_mode = OrthoMode::projection;
                else fail("bad ortho_mode: " + val);
            } else if (key == "weight_decay") cfg.train.weight_decay = std::stod(val);
            else if (key == "stage1_iters") cfg.train.stage1_iters = std::stoul(val);
            else if (key == "stage1_lr") cfg.train.stage1_lr = std::stod(val);
            else if (key == "ortho_threshold") cfg.train.ortho_threshold = std::stod(val);
            else if (key == "pretrain_epochs") cfg.train.pretrain_epochs = std::stoul(val);
            else if (key == "dataset_kind") cfg.dataset_kind = val;
            else if (key == "num_classes") cfg.num_classes = std::stoul(val);
            else if (key == "num_domains") cfg.num_domains = std::stoul(val);
            else if (key == "n_per_cell") cfg.n_per_cell = std::stoul(val);
            else if (key == "img_side") cfg.img_side = std::stoul(val);
            else if (key == "pixel_noise") cfg.pixel_noise = std::stod(val);
            else if (key == "class_dim") cfg.class_dim = std::stoul(val);
            else if (key == "domain_dim") cfg.domain_dim = std::stoul(val);
            else if (key == "total_dim") cfg.total_dim = std::stoul(val);
            else if (key == "sigma") cfg.sigma = std::stod(val);
            else if (key == "noise_scale") cfg.noise_scale = std::stod(val);
            else if (key == "hidden_dims") {
                cfg.hidden_dims.clear();
                for (const auto& f : split_csv_field(val)) cfg.hidden_dims.push_back(std::stoul(f));
            } else if (key == "feature_dim") cfg.feature_dim = std::stoul(val);
            else if (key == "ood_fraction") cfg.ood_fraction = std::stod(val);
            else if (key == "id_val_ratio") cfg.id_val_ratio = std::stod(val);
            else if (key == "domain_label_ratio") cfg.domain_label_ratio = std::stod(val);
            else if (key == "method") cfg.method = method_from_name(val);
            else if (key == "wise_alpha") cfg.wise_alpha = std::stod(val);
            else if (key == "seeds") {
                cfg.seeds.clear();
                for (const auto& f : split_csv_field(val)) cfg.seeds.push_back(std::stoull(f));
            } else if (key == "seed") cfg.train.seed = std::stoull(val);
            else if (key == "out_dir") cfg.out_dir = val;
            else if (key == "dataset_path") cfg.dataset_path = val;
            else if (key == "mask_path") cfg.mask_path = val;
            else fail("unknown key: " + key);
        } catch (const std::invalid_argument&) {
            throw;
        } catch (const std::exception& ex) {
            fail(std::string("bad value for ") + key + ": " + ex.what());
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_run_config(buf.str());
}

std::string run_config_echo(const RunConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    auto joined = [](const auto& v) {
        std::ostringstream s;
        for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
        return s.str();
    };
    const char* reweight = cfg.train.reweight == ReweightMode::none ? "none"
                           : cfg.train.reweight == ReweightMode::by_domain ? "by_domain"
                           : cfg.train.reweight == ReweightMode::by_domain_class ? "by_domain_class"
                                                                                 : "by_class";
    os << "method = " << method_name(cfg.method) << "\n"
       << "dataset_kind = " << cfg.dataset_kind << "\n"
       << "num_classes = " << cfg.num_classes << "\n"
       << "num_domains = " << cfg.num_domains << "\n"
       << "n_per_cell = " << cfg.n_per_cell << "\n"
       << "img_side = " << cfg.img_side << "\n"
       << "pixel_noise = " << cfg.pixel_noise << "\n"
       << "class_dim = " << cfg.class_dim << "\n"
       << "domain_dim = " << cfg.domain_dim << "\n"
       << "total_dim = " << cfg.total_dim << "\n"
       << "sigma = " << cfg.sigma << "\n"
       << "noise_scale = " << cfg.noise_scale << "\n"
       << "hidden_dims = " << joined(cfg.hidden_dims) << "\n"
       << "feature_dim = " << cfg.feature_dim << "\n"
       << "ood_fraction = " << cfg.ood_fraction << "\n"
       << "id_val_ratio = " << cfg.id_val_ratio << "\n"
       << "domain_label_ratio = " << cfg.domain_label_ratio << "\n"
       << "wise_alpha = " << cfg.wise_alpha << "\n"
       << "seeds = " << joined(cfg.seeds) << "\n"
       << "out_dir = " << cfg.out_dir << "\n";
    if (!cfg.dataset_path.empty()) os << "dataset_path = " << cfg.dataset_path << "\n";
    if (!cfg.mask_path.empty()) os << "mask_path = " << cfg.mask_path << "\n";
    os << "lambda = " << cfg.train.lambda << "\n"
       << "lambda_ortho = " << cfg.train.lambda_ortho << "\n"
       << "beta1 = " << cfg.train.beta1 << "\n"
       << "beta2 = " << cfg.train.beta2 << "\n"
       << "lr = " << cfg.train.lr << "\n"
       << "epochs = " << cfg.train.epochs << "\n"
       << "batch_size = " << cfg.train.batch_size << "\n"
       << "reweight = " << reweight << "\n"
       << "freeze_heads = " << (cfg.train.freeze_heads ? "true" : "false") << "\n"
       << "head_mode = "
       << (cfg.train.head_mode == HeadMode::normalized_no_bias ? "normalized_no_bias"
                                                               : "unconstrained_with_bias")
       << "\n"
       << "ortho_mode = " << (cfg.train.ortho_mode == OrthoMode::penalty ? "penalty" : "projection")
       << "\n"
       << "weight_decay = " << cfg.train.weight_decay << "\n"
       << "stage1_iters = " << cfg.train.stage1_iters << "\n"
       << "stage1_lr = " << cfg.train.stage1_lr << "\n"
       << "ortho_threshold = " << cfg.train.ortho_threshold << "\n"
       << "pretrain_epochs = " << cfg.train.pretrain_epochs << "\n";
    return os.str();
}

std::uint64_t config_hash(const RunConfig& cfg) {
    const std::string echo = run_config_echo(cfg);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : echo) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

namespace {

// Data, mask, and split are shared across seeds: the benchmark is fixed and
// seeds only vary initialization and batch order.
struct Benchmark {
    LabeledDataset ds;
    CombinationMask mask;
    SplitManifest split;
};

Benchmark build_benchmark(const RunConfig& cfg) {
    Benchmark b;
    RngState rng(0xDA7Aull);
    CombinationMask full;
    full.num_domains = cfg.num_domains;
    full.num_classes = cfg.num_classes;
    full.id_cells.assign(cfg.num_domains * cfg.num_classes, 1);

    if (!cfg.dataset_path.empty()) {
        b.ds = load_dataset(cfg.dataset_path);
    } else if (cfg.dataset_kind == "pixel_toy") {
        b.ds = gen_pixel_toy(cfg.num_classes, cfg.num_domains, cfg.img_side, cfg.n_per_cell, full,
                             cfg.pixel_noise, rng);
    } else {
        const auto spec = make_default_spec(cfg.num_classes, cfg.num_domains, cfg.class_dim,
                                            cfg.domain_dim, cfg.total_dim, cfg.sigma,
                                            cfg.noise_scale, true, rng);
        b.ds = gen_structured_features(spec, full, cfg.n_per_cell, rng);
    }

    if (!cfg.mask_path.empty()) {
        b.mask = load_mask(cfg.mask_path);
    } else {
        b.mask = curate_from_scores(reference_probe_scores(b.ds), cfg.ood_fraction);
    }
    RngState split_rng = rng.split(7);
    b.split = split_dataset(b.ds, b.mask, cfg.id_val_ratio, split_rng);
    return b;
}

SplitMetrics eval_split(const std::string& name, const MLPEncoder& enc, const HeadPair& heads,
                        const LabeledDataset& ds, const std::vector<std::size_t>& idx) {
    SplitMetrics m;
    m.split = name;
    if (idx.empty()) return m;
    const auto pred = predict_classes(enc, heads, ds, idx);
    std::vector<int> truth;
    for (std::size_t i : idx) truth.push_back(ds.class_labels[i]);
    m.acc = top1_accuracy(pred, truth);
    m.f1 = macro_f1(pred, truth, ds.num_classes);
    return m;
}

void write_seed_json(const RunConfig& cfg, const SeedOutcome& out) {
    nlohmann::json j{
        {"config_hash", config_hash(cfg)},
        {"seed", out.seed},
        {"method", method_name(cfg.method)},
        {"ok", out.ok},
        {"config_echo", run_config_echo(cfg)},
    };
    if (!out.ok) {
        j["error"] = out.error;
    } else {
        j["metrics"] = nlohmann::json::parse(metrics_to_json(out.report));
        nlohmann::json splits = nlohmann::json::object();
        for (const auto& s : out.splits)
            splits[s.split] = {{"acc", s.acc}, {"f1", s.f1}};
        j["splits"] = splits;
    }
    const std::filesystem::path path =
        std::filesystem::path(cfg.out_dir) / ("seed_" + std::to_string(out.seed) + ".json");
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << j.dump(2) << "\n";
}

}  // namespace

SeedOutcome run_single_seed(const RunConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    SeedOutcome out;
    out.seed = seed;
    const Benchmark bench = build_benchmark(cfg);

    LabeledDataset ds = bench.ds;
    RngState seed_rng(seed);
    if (cfg.domain_label_ratio < 1.0) {
        RngState sub_rng = seed_rng.split(11);
        ds = subsample_domain_labels(ds, cfg.domain_label_ratio, sub_rng);
    }

    std::vector<std::size_t> dims;
    dims.push_back(ds.inputs.cols);
    dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
    dims.push_back(cfg.feature_dim);
    RngState init_rng = seed_rng.split(13);
    const MLPEncoder init_enc = MLPEncoder::init(dims, Activation::tanh_act, true, init_rng);

    TrainConfig tcfg = cfg.train;
    tcfg.seed = seed;

    // pretrained anchor (the desk-scale zero-shot stand-in and WiSE endpoint)
    MLPEncoder anchor = init_enc;
    if (tcfg.pretrain_epochs > 0) {
        TrainConfig pre = tcfg;
        pre.epochs = tcfg.pretrain_epochs;
        pre.reweight = ReweightMode::none;
        pre.freeze_heads = true;
        anchor = baseline_full_finetune(init_enc, ds, bench.split.train_indices, pre).encoder;
    }

    CheckpointBundle final;
    switch (cfg.method) {
        case Method::cfa: {
            Matrix train_inputs(bench.split.train_indices.size(), ds.inputs.cols);
            std::vector<int> y, e;
            std::vector<std::uint8_t> present;
            for (std::size_t i = 0; i < bench.split.train_indices.size(); ++i) {
                const std::size_t s = bench.split.train_indices[i];
                std::copy(ds.inputs.row(s).begin(), ds.inputs.row(s).end(),
                          train_inputs.row(i).begin());
                y.push_back(ds.class_labels[s]);
                e.push_back(ds.domain_labels[s]);
                present.push_back(ds.domain_label_present[s]);
            }
            const Matrix feats = encoder_forward(anchor, train_inputs);
            const auto stage1 =
                stage1_linear_probe(feats, y, e, present, ds.num_classes, ds.num_domains, tcfg);
            TrainConfig s2 = tcfg;
            s2.freeze_heads = true;
            final = stage2_finetune(anchor, stage1.heads, ds, bench.split.train_indices, s2);
            break;
        }
        case Method::ft: {
            TrainConfig c = tcfg;
            c.reweight = ReweightMode::none;
            final = baseline_full_finetune(anchor, ds, bench.split.train_indices, c);
            break;
        }
        case Method::lp_ft:
            final = baseline_lp_ft(anchor, ds, bench.split.train_indices, tcfg).finetuned;
            break;
        case Method::reweight_e: {
            TrainConfig c = tcfg;
            c.reweight = ReweightMode::by_domain;
            final = baseline_full_finetune(anchor, ds, bench.split.train_indices, c);
            break;
        }
        case Method::reweight_yxe: {
            TrainConfig c = tcfg;
            c.reweight = ReweightMode::by_domain_class;
            final = baseline_full_finetune(anchor, ds, bench.split.train_indices, c);
            break;
        }
    }

    if (cfg.wise_alpha >= 0.0) {
        final.encoder.unflatten(
            wise_interpolate(anchor.flatten(), final.encoder.flatten(), cfg.wise_alpha));
    }

    out.splits.push_back(
        eval_split("train", final.encoder, final.heads, ds, bench.split.train_indices));
    out.splits.push_back(
        eval_split("id_val", final.encoder, final.heads, ds, bench.split.id_val_indices));
    out.splits.push_back(
        eval_split("ood_val", final.encoder, final.heads, ds, bench.split.ood_val_indices));
    out.splits.push_back(
        eval_split("ood_test", final.encoder, final.heads, ds, bench.split.ood_test_indices));
    out.report.id_acc = out.splits[1].acc;
    out.report.id_f1 = out.splits[1].f1;
    out.report.ood_acc = out.splits[3].acc;
    out.report.ood_f1 = out.splits[3].f1;

    std::vector<std::size_t> all_eval;
    for (const auto* v : {&bench.split.id_val_indices, &bench.split.ood_val_indices,
                          &bench.split.ood_test_indices})
        all_eval.insert(all_eval.end(), v->begin(), v->end());
    const auto pred_all = predict_classes(final.encoder, final.heads, ds, all_eval);
    std::vector<int> y_all, e_all;
    for (std::size_t i : all_eval) {
        y_all.push_back(ds.class_labels[i]);
        e_all.push_back(ds.domain_labels[i]);
    }
    out.report.per_cell_acc =
        per_cell_accuracy(pred_all, y_all, e_all, ds.num_classes, ds.num_domains);
    {
        std::vector<int> yt, et;
        for (std::size_t i : bench.split.ood_test_indices) {
            yt.push_back(ds.class_labels[i]);
            et.push_back(ds.domain_labels[i]);
        }
        const auto pred_ood = predict_classes(final.encoder, final.heads, ds, bench.split.ood_test_indices);
        out.report.ood_worst_domain_acc = worst_domain_accuracy(pred_ood, yt, et, ds.num_domains);
    }
    {
        Matrix eval_inputs(all_eval.size(), ds.inputs.cols);
        for (std::size_t i = 0; i < all_eval.size(); ++i)
            std::copy(ds.inputs.row(all_eval[i]).begin(), ds.inputs.row(all_eval[i]).end(),
                      eval_inputs.row(i).begin());
        const Matrix z = encoder_forward(final.encoder, eval_inputs);
        out.report.diag = feature_diagnostics(z, y_all, e_all, final.heads);
    }
    out.ok = true;
    return out;
}

std::vector<SeedOutcome> run_experiment(const RunConfig& cfg) {
    cfg.validate();
    std::filesystem::create_directories(cfg.out_dir);

    std::size_t threads = 1;
    if (const char* env = std::getenv("CFA_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) threads = static_cast<std::size_t>(v);
    }
    threads = std::min(threads, cfg.seeds.size());

    std::vector<SeedOutcome> outcomes(cfg.seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cfg.seeds.size()) break;
            try {
                outcomes[i] = run_single_seed(cfg, cfg.seeds[i]);
            } catch (const std::exception& ex) {
                outcomes[i].seed = cfg.seeds[i];
                outcomes[i].ok = false;
                outcomes[i].error = ex.what();
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    for (const auto& out : outcomes) write_seed_json(cfg, out);

    std::ostringstream csv;
    csv.precision(10);
    csv << "# config_hash=" << config_hash(cfg) << "\n";
    csv << "method,seeds_ok,id_acc,ood_acc,id_f1,ood_f1,ood_worst_domain_acc\n";
    double id_acc = 0, ood_acc = 0, id_f1 = 0, ood_f1 = 0, worst = 0;
    std::size_t ok = 0;
    for (const auto& out : outcomes) {
        if (!out.ok) continue;
        ++ok;
        id_acc += out.report.id_acc;
        ood_acc += out.report.ood_acc;
        id_f1 += out.report.id_f1;
        ood_f1 += out.report.ood_f1;
        worst += out.report.ood_worst_domain_acc;
    }
    const double n = ok > 0 ? static_cast<double>(ok) : 1.0;
    csv << method_name(cfg.method) << ',' << ok << ',' << id_acc / n << ',' << ood_acc / n << ','
        << id_f1 / n << ',' << ood_f1 / n << ',' << worst / n << "\n";
    const std::filesystem::path agg = std::filesystem::path(cfg.out_dir) / "aggregate.csv";
    std::ofstream os(agg);
    if (!os) throw std::runtime_error("cannot write " + agg.string());
    os << csv.str();
    return outcomes;
}

}  // namespace cfa
