#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfa/matrix.hpp"

namespace cfa {

// Inputs plus class/domain labels and per-sample domain-label-present flags.
struct LabeledDataset {
    Matrix inputs;                        // N × p
    std::vector<int> class_labels;        // in [0, K)
    std::vector<int> domain_labels;       // in [0, E)
    std::vector<std::uint8_t> domain_label_present;
    std::size_t num_classes = 0;
    std::size_t num_domains = 0;

    std::size_t size() const { return inputs.rows; }
    void validate() const;  // throws std::invalid_argument on shape/label errors
};

// Binary container: magic "CFD1", u64 little-endian JSON header length,
// UTF-8 JSON header {N, p, K, E, dtypes}, then raw little-endian f64 inputs
// and i32 label arrays plus u8 presence flags.
void save_dataset(const LabeledDataset& ds, const std::string& path);
LabeledDataset load_dataset(const std::string& path);

}  // namespace cfa
