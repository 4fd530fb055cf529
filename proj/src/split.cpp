#include "cfa/split.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace cfa {

std::string MaskViolation::describe() const {
    std::ostringstream os;
    switch (kind) {
        case Kind::row_without_id: os << "row " << index << " has no ID cell"; break;
        case Kind::col_without_id: os << "column " << index << " has no ID cell"; break;
        case Kind::row_without_ood: os << "row " << index << " has no OOD cell"; break;
        case Kind::col_without_ood: os << "column " << index << " has no OOD cell"; break;
    }
    return os.str();
}

std::vector<MaskViolation> validate_mask(const CombinationMask& mask, bool require_ood_per_line) {
    std::vector<MaskViolation> out;
    const std::size_t e_count = mask.num_domains, k_count = mask.num_classes;
    for (std::size_t e = 0; e < e_count; ++e) {
        bool has_id = false, has_ood = false;
        for (std::size_t k = 0; k < k_count; ++k) (mask.at(e, k) ? has_id : has_ood) = true;
        if (!has_id) out.push_back({MaskViolation::Kind::row_without_id, e});
        if (require_ood_per_line && !has_ood) out.push_back({MaskViolation::Kind::row_without_ood, e});
    }
    for (std::size_t k = 0; k < k_count; ++k) {
        bool has_id = false, has_ood = false;
        for (std::size_t e = 0; e < e_count; ++e) (mask.at(e, k) ? has_id : has_ood) = true;
        if (!has_id) out.push_back({MaskViolation::Kind::col_without_id, k});
        if (require_ood_per_line && !has_ood) out.push_back({MaskViolation::Kind::col_without_ood, k});
    }
    return out;
}

CombinationMask curate_from_scores(const Matrix& scores, double ood_fraction) {
    if (!(ood_fraction > 0.0 && ood_fraction < 1.0))
        throw std::invalid_argument("curate_from_scores: ood_fraction must be in (0,1)");
    const std::size_t e_count = scores.rows, k_count = scores.cols;
    CombinationMask mask{e_count, k_count, std::vector<std::uint8_t>(e_count * k_count, 1)};
    std::vector<std::size_t> order(e_count * k_count);
    std::iota(order.begin(), order.end(), 0);
    // ascending score, ties by (row, col) lexicographic i.e. flat index
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return scores.data[i] < scores.data[j];
    });
    const auto n_ood =
        static_cast<std::size_t>(std::floor(ood_fraction * static_cast<double>(e_count * k_count)));
    for (std::size_t i = 0; i < n_ood; ++i) mask.id_cells[order[i]] = 0;

    // repair: flip the highest-scoring OOD cell back to ID in any starved line
    auto repair_line = [&](bool is_row, std::size_t idx) {
        std::size_t best = SIZE_MAX;
        for (std::size_t j = 0; j < (is_row ? k_count : e_count); ++j) {
            const std::size_t flat = is_row ? idx * k_count + j : j * k_count + idx;
            if (mask.id_cells[flat]) return;  // already has an ID cell
            if (best == SIZE_MAX || scores.data[flat] > scores.data[best]) best = flat;
        }
        mask.id_cells[best] = 1;
    };
    for (std::size_t e = 0; e < e_count; ++e) repair_line(true, e);
    for (std::size_t k = 0; k < k_count; ++k) repair_line(false, k);
    return mask;
}

Matrix reference_probe_scores(const LabeledDataset& ds) {
    ds.validate();
    const std::size_t k_count = ds.num_classes, e_count = ds.num_domains, p = ds.inputs.cols;
    Matrix means(k_count, p);
    std::vector<std::size_t> counts(k_count, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto y = static_cast<std::size_t>(ds.class_labels[i]);
        ++counts[y];
        for (std::size_t j = 0; j < p; ++j) means(y, j) += ds.inputs(i, j);
    }
    for (std::size_t y = 0; y < k_count; ++y)
        if (counts[y] > 0)
            for (std::size_t j = 0; j < p; ++j) means(y, j) /= static_cast<double>(counts[y]);
    Matrix hits(e_count, k_count), totals(e_count, k_count);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::size_t best = 0;
        double best_d = 0.0;
        for (std::size_t y = 0; y < k_count; ++y) {
            double d = 0.0;
            for (std::size_t j = 0; j < p; ++j) {
                const double diff = ds.inputs(i, j) - means(y, j);
                d += diff * diff;
            }
            if (y == 0 || d < best_d) {
                best_d = d;
                best = y;
            }
        }
        const auto e = static_cast<std::size_t>(ds.domain_labels[i]);
        const auto y = static_cast<std::size_t>(ds.class_labels[i]);
        totals(e, y) += 1.0;
        if (best == y) hits(e, y) += 1.0;
    }
    Matrix acc(e_count, k_count);
    for (std::size_t i = 0; i < acc.data.size(); ++i)
        acc.data[i] = totals.data[i] > 0.0 ? hits.data[i] / totals.data[i] : 0.0;
    return acc;
}

namespace {

void shuffle_indices(std::vector<std::size_t>& v, RngState& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[rng.uniform_index(i)]);
}

}  // namespace

SplitManifest split_dataset(const LabeledDataset& ds, const CombinationMask& mask,
                            double id_val_ratio, RngState& rng) {
    ds.validate();
    if (!(id_val_ratio > 0.0 && id_val_ratio < 1.0))
        throw std::invalid_argument("split_dataset: id_val_ratio must be in (0,1)");
    if (mask.num_domains != ds.num_domains || mask.num_classes != ds.num_classes)
        throw std::invalid_argument("split_dataset: mask dimensions do not match dataset");
    const std::size_t e_count = ds.num_domains, k_count = ds.num_classes;
    std::vector<std::vector<std::size_t>> cells(e_count * k_count);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto e = static_cast<std::size_t>(ds.domain_labels[i]);
        const auto y = static_cast<std::size_t>(ds.class_labels[i]);
        cells[e * k_count + y].push_back(i);
    }
    SplitManifest out;
    for (std::size_t e = 0; e < e_count; ++e) {
        for (std::size_t k = 0; k < k_count; ++k) {
            auto& cell = cells[e * k_count + k];
            if (cell.empty()) continue;
            shuffle_indices(cell, rng);
            if (mask.at(e, k)) {
                const auto n_train = static_cast<std::size_t>(
                    std::ceil((1.0 - id_val_ratio) * static_cast<double>(cell.size())));
                out.train_indices.insert(out.train_indices.end(), cell.begin(), cell.begin() + n_train);
                out.id_val_indices.insert(out.id_val_indices.end(), cell.begin() + n_train, cell.end());
            } else {
                const std::size_t n_val = cell.size() / 2;
                out.ood_val_indices.insert(out.ood_val_indices.end(), cell.begin(), cell.begin() + n_val);
                out.ood_test_indices.insert(out.ood_test_indices.end(), cell.begin() + n_val, cell.end());
            }
        }
    }
    std::vector<bool> class_seen(k_count, false), domain_seen(e_count, false);
    for (std::size_t i : out.train_indices) {
        class_seen[static_cast<std::size_t>(ds.class_labels[i])] = true;
        domain_seen[static_cast<std::size_t>(ds.domain_labels[i])] = true;
    }
    for (std::size_t k = 0; k < k_count; ++k)
        if (!class_seen[k])
            throw std::invalid_argument("split_dataset: class " + std::to_string(k) + " absent from train");
    for (std::size_t e = 0; e < e_count; ++e)
        if (!domain_seen[e])
            throw std::invalid_argument("split_dataset: domain " + std::to_string(e) + " absent from train");
    return out;
}

std::string mask_to_json(const CombinationMask& mask) {
    nlohmann::json cells = nlohmann::json::array();
    for (std::size_t e = 0; e < mask.num_domains; ++e) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t k = 0; k < mask.num_classes; ++k) row.push_back(static_cast<int>(mask.at(e, k)));
        cells.push_back(row);
    }
    return nlohmann::json{{"E", mask.num_domains}, {"K", mask.num_classes}, {"id_cells", cells}}.dump(2);
}

CombinationMask mask_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    CombinationMask mask;
    mask.num_domains = j.at("E").get<std::size_t>();
    mask.num_classes = j.at("K").get<std::size_t>();
    const auto& cells = j.at("id_cells");
    if (cells.size() != mask.num_domains) throw std::runtime_error("mask JSON: row count mismatch");
    for (const auto& row : cells) {
        if (row.size() != mask.num_classes) throw std::runtime_error("mask JSON: column count mismatch");
        for (const auto& v : row) {
            const int x = v.get<int>();
            if (x != 0 && x != 1) throw std::runtime_error("mask JSON: cells must be 0 or 1");
            mask.id_cells.push_back(static_cast<std::uint8_t>(x));
        }
    }
    return mask;
}

std::string manifest_to_json(const SplitManifest& m) {
    return nlohmann::json{{"train", m.train_indices},
                          {"id_val", m.id_val_indices},
                          {"ood_val", m.ood_val_indices},
                          {"ood_test", m.ood_test_indices}}
        .dump(2);
}

SplitManifest manifest_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    SplitManifest m;
    m.train_indices = j.at("train").get<std::vector<std::size_t>>();
    m.id_val_indices = j.at("id_val").get<std::vector<std::size_t>>();
    m.ood_val_indices = j.at("ood_val").get<std::vector<std::size_t>>();
    m.ood_test_indices = j.at("ood_test").get<std::vector<std::size_t>>();
    return m;
}

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open: " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << text;
}

}  // namespace

void save_mask(const CombinationMask& mask, const std::string& path) { spit(path, mask_to_json(mask)); }
CombinationMask load_mask(const std::string& path) { return mask_from_json(slurp(path)); }
void save_manifest(const SplitManifest& m, const std::string& path) { spit(path, manifest_to_json(m)); }
SplitManifest load_manifest(const std::string& path) { return manifest_from_json(slurp(path)); }

}  // namespace cfa
