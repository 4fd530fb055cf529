#include "cfa/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "cfa/linalg.hpp"

namespace cfa {

void TrainConfig::validate() const {
    if (lambda < 0.0 || lambda_ortho < 0.0 || lr < 0.0 || weight_decay < 0.0)
        throw std::invalid_argument("TrainConfig: coefficients must be >= 0");
    // epochs = 0 is a well-defined no-op (checkpoint equals initialization);
    // experiment configs additionally require epochs >= 1.
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (beta1 <= 0.0 || beta2 <= 0.0) throw std::invalid_argument("TrainConfig: logit scales must be > 0");
}

namespace {

const char* reweight_name(ReweightMode m) {
    switch (m) {
        case ReweightMode::none: return "none";
        case ReweightMode::by_domain: return "by_domain";
        case ReweightMode::by_domain_class: return "by_domain_class";
        case ReweightMode::by_class: return "by_class";
    }
    return "none";
}

ReweightMode reweight_from_name(const std::string& s) {
    if (s == "none") return ReweightMode::none;
    if (s == "by_domain") return ReweightMode::by_domain;
    if (s == "by_domain_class") return ReweightMode::by_domain_class;
    if (s == "by_class") return ReweightMode::by_class;
    throw std::invalid_argument("unknown reweight mode: " + s);
}

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& idx) {
    Matrix out(idx.size(), m.cols);
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy(m.row(idx[i]).begin(), m.row(idx[i]).end(), out.row(i).begin());
    return out;
}

template <typename T>
std::vector<T> gather(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
    std::vector<T> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(v[i]);
    return out;
}

// Weighted single-head cross-entropy over precomputed features; the stage-1
// workhorse. Weights must sum to 1 over the included samples.
struct HeadCe {
    double loss = 0.0;
    Matrix grad_w;
    std::vector<double> grad_b;
    double accuracy = 0.0;
};

HeadCe head_ce(const Matrix& w, const std::vector<double>* bias, double beta, const Matrix& z,
               const std::vector<int>& labels, const std::vector<double>& weights,
               double loss_scale) {
    HeadCe r;
    r.grad_w = Matrix(w.rows, w.cols);
    if (bias) r.grad_b.assign(bias->size(), 0.0);
    std::vector<double> logits(w.rows);
    std::size_t hits = 0, counted = 0;
    for (std::size_t i = 0; i < z.rows; ++i) {
        if (weights[i] == 0.0) continue;
        for (std::size_t c = 0; c < w.rows; ++c) {
            double v = dot(w.row(c), z.row(i));
            if (bias) v += (*bias)[c];
            logits[c] = beta * v;
        }
        const auto ce = softmax_cross_entropy(logits, static_cast<std::size_t>(labels[i]));
        r.loss += weights[i] * ce.loss * loss_scale;
        const double s = weights[i] * beta * loss_scale;
        for (std::size_t c = 0; c < w.rows; ++c) {
            const double g = s * ce.grad[c];
            for (std::size_t j = 0; j < w.cols; ++j) r.grad_w(c, j) += g * z(i, j);
            if (bias) r.grad_b[c] += g;
        }
        ++counted;
        const auto pred = static_cast<std::size_t>(
            std::max_element(logits.begin(), logits.end()) - logits.begin());
        if (pred == static_cast<std::size_t>(labels[i])) ++hits;
    }
    r.accuracy = counted > 0 ? static_cast<double>(hits) / static_cast<double>(counted) : 0.0;
    return r;
}

}  // namespace

Matrix class_mean_head(const Matrix& features, const std::vector<int>& y, std::size_t num_classes) {
    Matrix means(num_classes, features.cols);
    std::vector<std::size_t> counts(num_classes, 0);
    for (std::size_t i = 0; i < features.rows; ++i) {
        const auto c = static_cast<std::size_t>(y[i]);
        ++counts[c];
        for (std::size_t j = 0; j < features.cols; ++j) means(c, j) += features(i, j);
    }
    for (std::size_t c = 0; c < num_classes; ++c)
        if (counts[c] > 0)
            for (std::size_t j = 0; j < features.cols; ++j)
                means(c, j) /= static_cast<double>(counts[c]);
    l2_normalize_rows_inplace(means);
    return means;
}

Stage1Result stage1_linear_probe(const Matrix& features, const std::vector<int>& y,
                                 const std::vector<int>& e,
                                 const std::vector<std::uint8_t>& present, std::size_t num_classes,
                                 std::size_t num_domains, const TrainConfig& cfg) {
    cfg.validate();
    const std::size_t n = features.rows, d = features.cols;
    if (d < num_classes + num_domains)
        throw std::invalid_argument("stage1_linear_probe: requires d >= K + E");
    RngState rng(cfg.seed);
    Stage1Result res;
    res.heads.beta1 = cfg.beta1;
    res.heads.beta2 = cfg.beta2;
    res.heads.mode = HeadMode::normalized_no_bias;
    res.heads.w1 = class_mean_head(features, y, num_classes);
    res.heads.w2 = l2_normalize_rows(random_gaussian(num_domains, d, rng));

    // full-batch reweighting masses (deterministic, no sampling noise)
    LabeledDataset meta;
    meta.inputs = Matrix(n, 1);
    meta.class_labels = y;
    meta.domain_labels = e;
    meta.domain_label_present = present;
    meta.num_classes = num_classes;
    meta.num_domains = num_domains;
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    const auto domain_weights = make_sampler(meta, all, ReweightMode::by_domain).sample_weights(n);
    const auto cell_weights =
        make_sampler(meta, all, ReweightMode::by_domain_class).sample_weights(n);

    const AdamWConfig opt_cfg{cfg.stage1_lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
    const double inv_e = 1.0 / static_cast<double>(num_domains);
    const double inv_k = 1.0 / static_cast<double>(num_classes);

    // step (i): domain head
    AdamWState state;
    for (std::size_t t = 0; t < cfg.stage1_iters; ++t) {
        const auto ce = head_ce(res.heads.w2, nullptr, cfg.beta2, features, e, domain_weights, inv_e);
        res.domain_loss_trace.push_back(ce.loss);
        adamw_cosine_step(res.heads.w2.data, ce.grad_w.data, state, t, cfg.stage1_iters, opt_cfg);
        l2_normalize_rows_inplace(res.heads.w2);
    }
    {
        const std::size_t window = std::min<std::size_t>(100, cfg.stage1_iters / 2);
        const double last = res.domain_loss_trace.back();
        const double earlier = res.domain_loss_trace[res.domain_loss_trace.size() - 1 - window];
        if (std::abs(last - earlier) > 1e-3 * std::max(1.0, std::abs(last)))
            throw ConvergenceError("stage1 step (i): domain loss did not converge",
                                   res.domain_loss_trace);
    }

    // step (ii): class head with orthogonality penalty, w2 fixed
    state.reset(res.heads.w1.data.size());
    for (std::size_t t = 0; t < cfg.stage1_iters; ++t) {
        auto ce = head_ce(res.heads.w1, nullptr, cfg.beta1, features, y, cell_weights, inv_k);
        const auto pen = ortho_penalty(res.heads.w1, res.heads.w2);
        res.class_loss_trace.push_back(ce.loss + cfg.lambda_ortho * pen.value);
        res.ortho_trace.push_back(std::sqrt(pen.value));
        for (std::size_t i = 0; i < ce.grad_w.data.size(); ++i)
            ce.grad_w.data[i] += cfg.lambda_ortho * pen.grad_w1.data[i];
        adamw_cosine_step(res.heads.w1.data, ce.grad_w.data, state, t, cfg.stage1_iters, opt_cfg);
        l2_normalize_rows_inplace(res.heads.w1);
    }

    res.heads = retract_heads(res.heads, cfg.ortho_mode, &rng);
    const double resid = std::sqrt(ortho_penalty(res.heads.w1, res.heads.w2).value);
    if (resid > cfg.ortho_threshold)
        throw ConvergenceError("stage1: final head orthogonality " + std::to_string(resid) +
                                   " exceeds threshold",
                               res.ortho_trace);
    return res;
}

namespace {

// Shared mini-batch loop for stage-2 and the finetuning baselines.
struct LoopSetup {
    bool train_encoder = true;
    bool train_heads = false;
    double lambda = 0.0;
};

CheckpointBundle run_training_loop(MLPEncoder enc, HeadPair heads, const LabeledDataset& ds,
                                   const std::vector<std::size_t>& train_indices,
                                   const TrainConfig& cfg, const LoopSetup& setup) {
    cfg.validate();
    if (train_indices.empty()) throw std::invalid_argument("training: empty train split");
    RngState rng(cfg.seed);
    const std::size_t n = train_indices.size();
    const std::size_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = cfg.epochs * batches_per_epoch;

    const std::size_t enc_params = setup.train_encoder ? enc.param_count() : 0;
    const std::size_t head_params =
        setup.train_heads
            ? heads.w1.size() + heads.w2.size() + heads.b1.size() + heads.b2.size()
            : 0;
    std::vector<double> params(enc_params + head_params);
    auto pack = [&] {
        std::size_t off = 0;
        if (setup.train_encoder) {
            const auto f = enc.flatten();
            std::copy(f.begin(), f.end(), params.begin());
            off = f.size();
        }
        if (setup.train_heads) {
            for (const auto* m : {&heads.w1, &heads.w2}) {
                std::copy(m->data.begin(), m->data.end(), params.begin() + off);
                off += m->data.size();
            }
            for (const auto* b : {&heads.b1, &heads.b2}) {
                std::copy(b->begin(), b->end(), params.begin() + off);
                off += b->size();
            }
        }
    };
    auto unpack = [&] {
        std::size_t off = 0;
        if (setup.train_encoder) {
            enc.unflatten({params.data(), enc_params});
            off = enc_params;
        }
        if (setup.train_heads) {
            for (auto* m : {&heads.w1, &heads.w2}) {
                std::copy(params.begin() + off, params.begin() + off + m->data.size(),
                          m->data.begin());
                off += m->data.size();
            }
            for (auto* b : {&heads.b1, &heads.b2}) {
                std::copy(params.begin() + off, params.begin() + off + b->size(), b->begin());
                off += b->size();
            }
        }
    };
    pack();

    BatchSampler sampler;
    const bool use_sampler = cfg.reweight != ReweightMode::none;
    if (use_sampler) sampler = make_sampler(ds, train_indices, cfg.reweight);

    const AdamWConfig opt_cfg{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
    AdamWState state;
    CheckpointBundle bundle;
    std::vector<std::size_t> order = train_indices;
    std::vector<double> grads(params.size());
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (!use_sampler) {
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[rng.uniform_index(i)]);
        }
        double ep_class = 0.0, ep_domain = 0.0;
        for (std::size_t b = 0; b < batches_per_epoch; ++b) {
            std::vector<std::size_t> batch;
            if (use_sampler) {
                batch.reserve(cfg.batch_size);
                for (std::size_t i = 0; i < cfg.batch_size; ++i) batch.push_back(sampler.draw(rng));
            } else {
                const std::size_t lo = b * cfg.batch_size;
                const std::size_t hi = std::min(lo + cfg.batch_size, order.size());
                batch.assign(order.begin() + lo, order.begin() + hi);
            }
            const Matrix x = gather_rows(ds.inputs, batch);
            const auto y = gather(ds.class_labels, batch);
            const auto e = gather(ds.domain_labels, batch);
            const auto present = gather(ds.domain_label_present, batch);

            ForwardCache cache;
            const Matrix z = encoder_forward(enc, x, &cache);
            const auto loss = cfa_loss(heads, z, y, e, present, setup.lambda);
            ep_class += loss.class_loss;
            ep_domain += loss.domain_loss;

            std::fill(grads.begin(), grads.end(), 0.0);
            std::size_t off = 0;
            if (setup.train_encoder) {
                const auto eg = encoder_backward(enc, cache, loss.grad_z).flatten();
                std::copy(eg.begin(), eg.end(), grads.begin());
                off = eg.size();
            }
            if (setup.train_heads) {
                for (const auto* m : {&loss.grad_w1, &loss.grad_w2}) {
                    std::copy(m->data.begin(), m->data.end(), grads.begin() + off);
                    off += m->data.size();
                }
                for (const auto* gb : {&loss.grad_b1, &loss.grad_b2}) {
                    std::copy(gb->begin(), gb->end(), grads.begin() + off);
                    off += gb->size();
                }
            }
            adamw_cosine_step(params, grads, state, step, total_steps, opt_cfg);
            ++step;
            unpack();
            if (setup.train_heads && heads.mode == HeadMode::normalized_no_bias) {
                l2_normalize_rows_inplace(heads.w1);
                if (heads.w2.rows > 0) l2_normalize_rows_inplace(heads.w2);
                pack();
            }
        }
        EpochMetrics m;
        m.epoch = epoch;
        m.split = "train";
        m.loss_class = ep_class / static_cast<double>(batches_per_epoch);
        m.loss_domain = ep_domain / static_cast<double>(batches_per_epoch);
        m.loss_ortho = heads.w2.rows > 0
                           ? std::sqrt(ortho_penalty(heads.w1, heads.w2).value)
                           : 0.0;
        const auto preds = predict_classes(enc, heads, ds, train_indices);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < train_indices.size(); ++i)
            if (preds[i] == ds.class_labels[train_indices[i]]) ++hits;
        m.acc = static_cast<double>(hits) / static_cast<double>(train_indices.size());
        bundle.trace.push_back(m);
    }
    bundle.encoder = std::move(enc);
    bundle.heads = std::move(heads);
    bundle.config_echo = config_to_json(cfg);
    return bundle;
}

}  // namespace

CheckpointBundle stage2_finetune(const MLPEncoder& enc, const HeadPair& heads,
                                 const LabeledDataset& ds,
                                 const std::vector<std::size_t>& train_indices,
                                 const TrainConfig& cfg) {
    if (!cfg.freeze_heads)
        throw std::invalid_argument("stage2_finetune: heads must be frozen (freeze_heads=true)");
    LoopSetup setup;
    setup.train_encoder = true;
    setup.train_heads = false;
    setup.lambda = cfg.lambda;
    return run_training_loop(enc, heads, ds, train_indices, cfg, setup);
}

namespace {

HeadPair make_class_only_head(const MLPEncoder& enc, const LabeledDataset& ds,
                              const std::vector<std::size_t>& train_indices,
                              const TrainConfig& cfg) {
    const Matrix feats = encoder_forward(enc, ds.inputs);
    HeadPair heads;
    heads.beta1 = cfg.beta1;
    heads.beta2 = cfg.beta2;
    heads.mode = cfg.head_mode;
    Matrix train_feats = Matrix(train_indices.size(), feats.cols);
    std::vector<int> train_y;
    for (std::size_t i = 0; i < train_indices.size(); ++i) {
        std::copy(feats.row(train_indices[i]).begin(), feats.row(train_indices[i]).end(),
                  train_feats.row(i).begin());
        train_y.push_back(ds.class_labels[train_indices[i]]);
    }
    heads.w1 = class_mean_head(train_feats, train_y, ds.num_classes);
    heads.w2 = Matrix(0, feats.cols);
    if (cfg.head_mode == HeadMode::unconstrained_with_bias) heads.b1.assign(ds.num_classes, 0.0);
    return heads;
}

}  // namespace

CheckpointBundle baseline_full_finetune(const MLPEncoder& enc, const LabeledDataset& ds,
                                        const std::vector<std::size_t>& train_indices,
                                        const TrainConfig& cfg) {
    HeadPair head = make_class_only_head(enc, ds, train_indices, cfg);
    LoopSetup setup;
    setup.train_encoder = true;
    setup.train_heads = !cfg.freeze_heads;
    setup.lambda = 0.0;
    return run_training_loop(enc, head, ds, train_indices, cfg, setup);
}

LpFtResult baseline_lp_ft(const MLPEncoder& enc, const LabeledDataset& ds,
                          const std::vector<std::size_t>& train_indices, const TrainConfig& cfg) {
    cfg.validate();
    LpFtResult out;
    HeadPair head = make_class_only_head(enc, ds, train_indices, cfg);
    // probe: class head only on frozen features, class-reweighted, full batch
    const Matrix feats = encoder_forward(enc, ds.inputs);
    const Matrix train_feats = gather_rows(feats, train_indices);
    const auto train_y = gather(ds.class_labels, train_indices);
    LabeledDataset meta;
    meta.inputs = Matrix(train_indices.size(), 1);
    meta.class_labels = train_y;
    meta.domain_labels.assign(train_indices.size(), 0);
    meta.domain_label_present.assign(train_indices.size(), 1);
    meta.num_classes = ds.num_classes;
    meta.num_domains = 1;
    std::vector<std::size_t> all(train_indices.size());
    std::iota(all.begin(), all.end(), 0);
    const auto weights =
        make_sampler(meta, all, ReweightMode::by_class).sample_weights(train_indices.size());

    const AdamWConfig opt_cfg{cfg.stage1_lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
    AdamWState state;
    const double inv_k = 1.0 / static_cast<double>(ds.num_classes);
    for (std::size_t t = 0; t < cfg.stage1_iters; ++t) {
        const bool biased = head.mode == HeadMode::unconstrained_with_bias;
        auto ce = head_ce(head.w1, biased ? &head.b1 : nullptr, cfg.beta1, train_feats, train_y,
                          weights, inv_k);
        std::vector<double> grad = std::move(ce.grad_w.data);
        grad.insert(grad.end(), ce.grad_b.begin(), ce.grad_b.end());
        std::vector<double> p = head.w1.data;
        p.insert(p.end(), head.b1.begin(), head.b1.end());
        adamw_cosine_step(p, grad, state, t, cfg.stage1_iters, opt_cfg);
        std::copy(p.begin(), p.begin() + head.w1.data.size(), head.w1.data.begin());
        std::copy(p.begin() + head.w1.data.size(), p.end(), head.b1.begin());
        if (head.mode == HeadMode::normalized_no_bias) l2_normalize_rows_inplace(head.w1);
    }
    out.probe.encoder = enc;
    out.probe.heads = head;
    out.probe.config_echo = config_to_json(cfg);

    LoopSetup setup;
    setup.train_encoder = true;
    setup.train_heads = !cfg.freeze_heads;
    setup.lambda = 0.0;
    out.finetuned = run_training_loop(enc, head, ds, train_indices, cfg, setup);
    return out;
}

std::vector<int> predict_classes(const MLPEncoder& enc, const HeadPair& heads,
                                 const LabeledDataset& ds,
                                 const std::vector<std::size_t>& indices) {
    const Matrix x = gather_rows(ds.inputs, indices);
    const Matrix z = encoder_forward(enc, x);
    const bool biased = heads.mode == HeadMode::unconstrained_with_bias;
    std::vector<int> preds(indices.size());
    for (std::size_t i = 0; i < z.rows; ++i) {
        std::size_t best = 0;
        double best_v = 0.0;
        for (std::size_t c = 0; c < heads.w1.rows; ++c) {
            double v = dot(heads.w1.row(c), z.row(i));
            if (biased) v += heads.b1[c];
            if (c == 0 || v > best_v) {
                best_v = v;
                best = c;
            }
        }
        preds[i] = static_cast<int>(best);
    }
    return preds;
}

std::string config_to_json(const TrainConfig& cfg) {
    nlohmann::json j{
        {"lambda", cfg.lambda},
        {"lambda_ortho", cfg.lambda_ortho},
        {"beta1", cfg.beta1},
        {"beta2", cfg.beta2},
        {"lr", cfg.lr},
        {"epochs", cfg.epochs},
        {"batch_size", cfg.batch_size},
        {"seed", cfg.seed},
        {"reweight", reweight_name(cfg.reweight)},
        {"freeze_heads", cfg.freeze_heads},
        {"head_mode", cfg.head_mode == HeadMode::normalized_no_bias ? "normalized_no_bias"
                                                                    : "unconstrained_with_bias"},
        {"ortho_mode", cfg.ortho_mode == OrthoMode::penalty ? "penalty" : "projection"},
        {"weight_decay", cfg.weight_decay},
        {"stage1_iters", cfg.stage1_iters},
        {"stage1_lr", cfg.stage1_lr},
        {"ortho_threshold", cfg.ortho_threshold},
        {"pretrain_epochs", cfg.pretrain_epochs},
    };
    return j.dump();
}

TrainConfig config_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    TrainConfig cfg;
    cfg.lambda = j.value("lambda", cfg.lambda);
    cfg.lambda_ortho = j.value("lambda_ortho", cfg.lambda_ortho);
    cfg.beta1 = j.value("beta1", cfg.beta1);
    cfg.beta2 = j.value("beta2", cfg.beta2);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.reweight = reweight_from_name(j.value("reweight", std::string("none")));
    cfg.freeze_heads = j.value("freeze_heads", cfg.freeze_heads);
    cfg.head_mode = j.value("head_mode", std::string("normalized_no_bias")) == "normalized_no_bias"
                        ? HeadMode::normalized_no_bias
                        : HeadMode::unconstrained_with_bias;
    cfg.ortho_mode = j.value("ortho_mode", std::string("projection")) == "penalty"
                         ? OrthoMode::penalty
                         : OrthoMode::projection;
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.stage1_iters = j.value("stage1_iters", cfg.stage1_iters);
    cfg.stage1_lr = j.value("stage1_lr", cfg.stage1_lr);
    cfg.ortho_threshold = j.value("ortho_threshold", cfg.ortho_threshold);
    cfg.pretrain_epochs = j.value("pretrain_epochs", cfg.pretrain_epochs);
    cfg.validate();
    return cfg;
}

namespace {

void write_raw(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_raw(std::istream& is, void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!is) throw std::runtime_error("checkpoint file truncated");
}

}  // namespace

void save_checkpoint(const CheckpointBundle& b, const std::string& path) {
    nlohmann::json tensors = nlohmann::json::array();
    std::vector<const std::vector<double>*> payloads;
    auto add = [&](const std::string& name, std::vector<std::size_t> shape,
                   const std::vector<double>& data) {
        tensors.push_back({{"name", name}, {"shape", shape}});
        payloads.push_back(&data);
    };
    for (std::size_t l = 0; l < b.encoder.num_layers(); ++l) {
        add("encoder/w" + std::to_string(l), {b.encoder.weights[l].rows, b.encoder.weights[l].cols},
            b.encoder.weights[l].data);
        add("encoder/b" + std::to_string(l), {b.encoder.biases[l].size()}, b.encoder.biases[l]);
    }
    add("heads/w1", {b.heads.w1.rows, b.heads.w1.cols}, b.heads.w1.data);
    add("heads/w2", {b.heads.w2.rows, b.heads.w2.cols}, b.heads.w2.data);
    add("heads/b1", {b.heads.b1.size()}, b.heads.b1);
    add("heads/b2", {b.heads.b2.size()}, b.heads.b2);

    nlohmann::json trace = nlohmann::json::array();
    for (const auto& m : b.trace)
        trace.push_back({{"epoch", m.epoch},
                         {"split", m.split},
                         {"loss_class", m.loss_class},
                         {"loss_domain", m.loss_domain},
                         {"loss_ortho", m.loss_ortho},
                         {"acc", m.acc}});

    nlohmann::json header{
        {"format", "CFA1"},
        {"encoder",
         {{"layer_dims", b.encoder.layer_dims},
          {"activation", b.encoder.activation == Activation::tanh_act ? "tanh" : "relu"},
          {"output_normalize", b.encoder.output_normalize}}},
        {"heads",
         {{"beta1", b.heads.beta1},
          {"beta2", b.heads.beta2},
          {"mode", b.heads.mode == HeadMode::normalized_no_bias ? "normalized_no_bias"
                                                                : "unconstrained_with_bias"}}},
        {"tensors", tensors},
        {"config_echo", b.config_echo},
        {"trace", trace},
    };
    const std::string hs = header.dump();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write("CFA1", 4);
    const std::uint64_t len = hs.size();
    write_raw(os, &len, sizeof(len));
    write_raw(os, hs.data(), hs.size());
    for (const auto* p : payloads) write_raw(os, p->data(), p->size() * sizeof(double));
    if (!os) throw std::runtime_error("write failed: " + path);
}

CheckpointBundle load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    char magic[4];
    read_raw(is, magic, 4);
    if (std::string(magic, 4) != "CFA1") throw std::runtime_error("bad magic in " + path);
    std::uint64_t len = 0;
    read_raw(is, &len, sizeof(len));
    std::string hs(len, '\0');
    read_raw(is, hs.data(), len);
    const auto header = nlohmann::json::parse(hs);
    if (header.at("format").get<std::string>() != "CFA1")
        throw std::runtime_error("unexpected checkpoint format");

    CheckpointBundle b;
    const auto& ej = header.at("encoder");
    b.encoder.layer_dims = ej.at("layer_dims").get<std::vector<std::size_t>>();
    b.encoder.activation =
        ej.at("activation").get<std::string>() == "tanh" ? Activation::tanh_act : Activation::relu_act;
    b.encoder.output_normalize = ej.at("output_normalize").get<bool>();
    const auto& hj = header.at("heads");
    b.heads.beta1 = hj.at("beta1").get<double>();
    b.heads.beta2 = hj.at("beta2").get<double>();
    b.heads.mode = hj.at("mode").get<std::string>() == "normalized_no_bias"
                       ? HeadMode::normalized_no_bias
                       : HeadMode::unconstrained_with_bias;
    b.config_echo = header.at("config_echo").get<std::string>();
    for (const auto& t : header.at("trace")) {
        EpochMetrics m;
        m.epoch = t.at("epoch").get<std::size_t>();
        m.split = t.at("split").get<std::string>();
        m.loss_class = t.at("loss_class").get<double>();
        m.loss_domain = t.at("loss_domain").get<double>();
        m.loss_ortho = t.at("loss_ortho").get<double>();
        m.acc = t.at("acc").get<double>();
        b.trace.push_back(m);
    }

    for (const auto& t : header.at("tensors")) {
        const auto name = t.at("name").get<std::string>();
        const auto shape = t.at("shape").get<std::vector<std::size_t>>();
        std::size_t count = 1;
        for (std::size_t s : shape) count *= s;
        std::vector<double> data(count);
        read_raw(is, data.data(), count * sizeof(double));
        if (name.starts_with("encoder/w")) {
            Matrix w(shape.at(0), shape.at(1));
            w.data = std::move(data);
            b.encoder.weights.push_back(std::move(w));
        } else if (name.starts_with("encoder/b")) {
            b.encoder.biases.push_back(std::move(data));
        } else if (name == "heads/w1") {
            b.heads.w1 = Matrix(shape.at(0), shape.at(1));
            b.heads.w1.data = std::move(data);
        } else if (name == "heads/w2") {
            b.heads.w2 = Matrix(shape.at(0), shape.at(1));
            b.heads.w2.data = std::move(data);
        } else if (name == "heads/b1") {
            b.heads.b1 = std::move(data);
        } else if (name == "heads/b2") {
            b.heads.b2 = std::move(data);
        } else {
            throw std::runtime_error("unknown tensor in checkpoint: " + name);
        }
    }
    return b;
}

}  // namespace cfa
