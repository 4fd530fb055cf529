#pragma once

#include <string>
#include <vector>

#include "cfa/heads.hpp"
#include "cfa/matrix.hpp"
#include "cfa/split.hpp"

namespace cfa {

// Fraction of exact matches. Throws invalid_argument on empty or
// length-mismatched input (the metric is undefined).
double top1_accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

// Unweighted mean of per-class F1 over classes present in truth; a class's
// F1 is 0 when precision + recall = 0.
double macro_f1(const std::vector<int>& pred, const std::vector<int>& truth,
                std::size_t num_classes);

// E×K matrix of per-(domain, class) accuracies; -1 marks empty cells.
Matrix per_cell_accuracy(const std::vector<int>& pred, const std::vector<int>& truth_y,
                         const std::vector<int>& truth_e, std::size_t num_classes,
                         std::size_t num_domains);

// Mean accuracy over the worst-performing domain (domains with no samples
// are skipped; throws if every domain is empty).
double worst_domain_accuracy(const std::vector<int>& pred, const std::vector<int>& truth_y,
                             const std::vector<int>& truth_e, std::size_t num_domains);

struct FeatureDiagnostics {
    double class_energy = 0.0;     // fraction of feature energy in span(w1 rows)
    double domain_energy = 0.0;    // fraction in span(w2 rows)
    double residual_energy = 0.0;  // fraction outside both (the three sum to 1)
    std::vector<double> alignment_cosines;  // per class: cos(mean feature proj, w1 row)
    double within_cell_variance = 0.0;      // mean within-(e,k)-cell feature variance
    double ortho_norm = 0.0;                // ‖w1 w2ᵀ‖_F
};

// Structure diagnostics of features z (N×d rows) against the heads.
FeatureDiagnostics feature_diagnostics(const Matrix& z, const std::vector<int>& y,
                                       const std::vector<int>& e, const HeadPair& heads);

struct MetricsReport {
    double id_acc = 0.0, ood_acc = 0.0;
    double id_f1 = 0.0, ood_f1 = 0.0;
    double ood_worst_domain_acc = 0.0;
    Matrix per_cell_acc;  // E × K over all evaluated samples, -1 empty
    FeatureDiagnostics diag;
};

std::string metrics_to_json(const MetricsReport& report);

// 2-D projection of features onto the top-2 principal directions of the
// stacked head rows; CSV with header x,y,class,domain,split.
std::string visualization_csv(const Matrix& z, const std::vector<int>& y,
                              const std::vector<int>& e, const std::vector<std::string>& split,
                              const HeadPair& heads);

}  // namespace cfa
