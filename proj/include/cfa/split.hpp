#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfa/dataset.hpp"
#include "cfa/matrix.hpp"
#include "cfa/rng.hpp"

namespace cfa {

// E×K binary matrix of in-distribution domain-class combinations. The OOD
// mask is always the complement, never stored.
struct CombinationMask {
    std::size_t num_domains = 0;  // E
    std::size_t num_classes = 0;  // K
    std::vector<std::uint8_t> id_cells;  // row-major E×K

    std::uint8_t& at(std::size_t e, std::size_t k) { return id_cells[e * num_classes + k]; }
    std::uint8_t at(std::size_t e, std::size_t k) const { return id_cells[e * num_classes + k]; }
};

struct MaskViolation {
    enum class Kind { row_without_id, col_without_id, row_without_ood, col_without_ood };
    Kind kind;
    std::size_t index;
    std::string describe() const;
};

// Diagnostic: reports every row/column lacking an ID cell, and when
// require_ood_per_line also those lacking an OOD cell. Empty result = ok.
std::vector<MaskViolation> validate_mask(const CombinationMask& mask, bool require_ood_per_line = false);

// The floor(ood_fraction·E·K) lowest-scoring cells become OOD; a repair pass
// flips the highest-scoring OOD cell back to ID in any row/column left
// without one. Ties break by (row, col) lexicographic order.
CombinationMask curate_from_scores(const Matrix& scores, double ood_fraction);

// Per-cell accuracy of a nearest class-mean probe on raw inputs; the
// desk-scale stand-in for zero-shot accuracy scores.
Matrix reference_probe_scores(const LabeledDataset& ds);

struct SplitManifest {
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> id_val_indices;
    std::vector<std::size_t> ood_val_indices;
    std::vector<std::size_t> ood_test_indices;
};

// Stratified per-cell split: ID cells at (1-id_val_ratio):id_val_ratio with
// train taking the ceiling, OOD cells 50:50 into val/test. Throws if any
// class or domain ends up absent from train.
SplitManifest split_dataset(const LabeledDataset& ds, const CombinationMask& mask,
                            double id_val_ratio, RngState& rng);

std::string mask_to_json(const CombinationMask& mask);
CombinationMask mask_from_json(const std::string& text);
std::string manifest_to_json(const SplitManifest& m);
SplitManifest manifest_from_json(const std::string& text);

void save_mask(const CombinationMask& mask, const std::string& path);
CombinationMask load_mask(const std::string& path);
void save_manifest(const SplitManifest& m, const std::string& path);
SplitManifest load_manifest(const std::string& path);

}  // namespace cfa
