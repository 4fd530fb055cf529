#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfa/dataset.hpp"
#include "cfa/encoder.hpp"
#include "cfa/heads.hpp"
#include "cfa/optim.hpp"

namespace cfa {

struct TrainConfig {
    double lambda = 0.0;          // domain-loss coefficient
    double lambda_ortho = 100.0;  // stage-1 orthogonality penalty coefficient
    double beta1 = 20.0;
    double beta2 = 20.0;
    double lr = 1e-3;
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    ReweightMode reweight = ReweightMode::none;
    bool freeze_heads = true;
    HeadMode head_mode = HeadMode::normalized_no_bias;
    OrthoMode ortho_mode = OrthoMode::projection;  // final stage-1 cleanup
    double weight_decay = 0.01;
    std::size_t stage1_iters = 6000;
    double stage1_lr = 3e-4;
    double ortho_threshold = 1e-3;  // required ‖w1 w2ᵀ‖_F after stage-1
    std::size_t pretrain_epochs = 3;

    void validate() const;
};

struct EpochMetrics {
    std::size_t epoch = 0;
    std::string split;
    double loss_class = 0.0;
    double loss_domain = 0.0;
    double loss_ortho = 0.0;
    double acc = 0.0;
};

struct CheckpointBundle {
    MLPEncoder encoder;
    HeadPair heads;
    std::string config_echo;  // JSON text
    std::vector<EpochMetrics> trace;
};

// Binary container: magic "CFA1", u64 little-endian header length, UTF-8
// JSON header (tensor names/shapes, config echo, metric trace), then raw
// little-endian f64 tensor data in header order. Round-trips bit-exactly.
void save_checkpoint(const CheckpointBundle& b, const std::string& path);
CheckpointBundle load_checkpoint(const std::string& path);

struct ConvergenceError : std::runtime_error {
    std::vector<double> loss_trace;
    ConvergenceError(const std::string& what, std::vector<double> trace)
        : std::runtime_error(what), loss_trace(std::move(trace)) {}
};

struct Stage1Result {
    HeadPair heads;
    std::vector<double> domain_loss_trace;  // step (i), per iteration
    std::vector<double> class_loss_trace;   // step (ii), per iteration
    std::vector<double> ortho_trace;        // ‖w1 w2ᵀ‖_F per step-(ii) iteration
};

// Two-step orthogonal linear probe over precomputed unit-norm features:
// (i) W2 on domain labels with by-domain reweighting, W1 fixed at its
// class-mean initialization; (ii) W1 on class labels with by-cell
// reweighting plus lambda_ortho·‖w1 w2ᵀ‖_F², W2 fixed; then retraction per
// ortho_mode. Throws ConvergenceError if step (i) fails to level off or the
// final ‖w1 w2ᵀ‖_F exceeds cfg.ortho_threshold.
Stage1Result stage1_linear_probe(const Matrix& features, const std::vector<int>& y,
                                 const std::vector<int>& e,
                                 const std::vector<std::uint8_t>& present, std::size_t num_classes,
                                 std::size_t num_domains, const TrainConfig& cfg);

// Class-mean features per class, rows renormalized; the stage-1 W1 init.
Matrix class_mean_head(const Matrix& features, const std::vector<int>& y, std::size_t num_classes);

// Encoder finetuning with both heads frozen (stage 2). Only encoder
// parameters change; the returned bundle's heads are bit-identical to the
// input heads.
CheckpointBundle stage2_finetune(const MLPEncoder& enc, const HeadPair& heads,
                                 const LabeledDataset& ds,
                                 const std::vector<std::size_t>& train_indices,
                                 const TrainConfig& cfg);

// Joint encoder + single-class-head training (head frozen at its class-mean
// init when cfg.freeze_heads). The vanilla finetuning baseline, also used as
// desk-scale "pretraining" to produce the WiSE-FT anchor.
CheckpointBundle baseline_full_finetune(const MLPEncoder& enc, const LabeledDataset& ds,
                                        const std::vector<std::size_t>& train_indices,
                                        const TrainConfig& cfg);

struct LpFtResult {
    CheckpointBundle probe;      // linear probe only, encoder untouched
    CheckpointBundle finetuned;  // full finetuning from the probed head
};

// Linear probe of the class head (with class reweighting), then full
// finetuning initialized from the probed head.
LpFtResult baseline_lp_ft(const MLPEncoder& enc, const LabeledDataset& ds,
                          const std::vector<std::size_t>& train_indices, const TrainConfig& cfg);

// Class predictions argmax(β1·(w1 Φ(x) + b1)) over the given indices.
std::vector<int> predict_classes(const MLPEncoder& enc, const HeadPair& heads,
                                 const LabeledDataset& ds,
                                 const std::vector<std::size_t>& indices);

std::string config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const std::string& text);

}  // namespace cfa
