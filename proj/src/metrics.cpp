#include "cfa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cfa/linalg.hpp"

namespace cfa {

double top1_accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.empty() || pred.size() != truth.size())
        throw std::invalid_argument("top1_accuracy: undefined on empty or mismatched input");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == truth[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double macro_f1(const std::vector<int>& pred, const std::vector<int>& truth,
                std::size_t num_classes) {
    if (pred.size() != truth.size())
        throw std::invalid_argument("macro_f1: length mismatch");
    std::vector<std::size_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
    std::vector<bool> present(num_classes, false);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const auto t = static_cast<std::size_t>(truth[i]);
        const auto p = static_cast<std::size_t>(pred[i]);
        if (t >= num_classes || p >= num_classes)
            throw std::invalid_argument("macro_f1: label out of range");
        present[t] = true;
        if (p == t) {
            ++tp[t];
        } else {
            ++fp[p];
            ++fn[t];
        }
    }
    double sum = 0.0;
    std::size_t counted = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (!present[c]) continue;
        ++counted;
        const double denom_p = static_cast<double>(tp[c] + fp[c]);
        const double denom_r = static_cast<double>(tp[c] + fn[c]);
        const double prec = denom_p > 0.0 ? tp[c] / denom_p : 0.0;
        const double rec = denom_r > 0.0 ? tp[c] / denom_r : 0.0;
        sum += (prec + rec) > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    }
    if (counted == 0) throw std::invalid_argument("macro_f1: no classes present in truth");
    return sum / static_cast<double>(counted);
}

Matrix per_cell_accuracy(const std::vector<int>& pred, const std::vector<int>& truth_y,
                         const std::vector<int>& truth_e, std::size_t num_classes,
                         std::size_t num_domains) {
    Matrix hits(num_domains, num_classes);
    Matrix counts(num_domains, num_classes);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const auto k = static_cast<std::size_t>(truth_y[i]);
        const auto d = static_cast<std::size_t>(truth_e[i]);
        counts(d, k) += 1.0;
        if (pred[i] == truth_y[i]) hits(d, k) += 1.0;
    }
    Matrix acc(num_domains, num_classes);
    for (std::size_t i = 0; i < acc.data.size(); ++i)
        acc.data[i] = counts.data[i] > 0.0 ? hits.data[i] / counts.data[i] : -1.0;
    return acc;
}

double worst_domain_accuracy(const std::vector<int>& pred, const std::vector<int>& truth_y,
                             const std::vector<int>& truth_e, std::size_t num_domains) {
    std::vector<std::size_t> hits(num_domains, 0), counts(num_domains, 0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const auto d = static_cast<std::size_t>(truth_e[i]);
        ++counts[d];
        if (pred[i] == truth_y[i]) ++hits[d];
    }
    double worst = 2.0;
    for (std::size_t d = 0; d < num_domains; ++d)
        if (counts[d] > 0)
            worst = std::min(worst, static_cast<double>(hits[d]) / static_cast<double>(counts[d]));
    if (worst > 1.0) throw std::invalid_argument("worst_domain_accuracy: no samples");
    return worst;
}

FeatureDiagnostics feature_diagnostics(const Matrix& z, const std::vector<int>& y,
                                       const std::vector<int>& e, const HeadPair& heads) {
    FeatureDiagnostics diag;
    const Matrix basis1 = orthonormal_row_basis(heads.w1);
    const Matrix basis2 = orthonormal_row_basis(heads.w2);

    double e1 = 0.0, e2 = 0.0, total = 0.0;
    for (std::size_t i = 0; i < z.rows; ++i) {
        const auto row = z.row(i);
        total += dot(row, row);
        for (std::size_t r = 0; r < basis1.rows; ++r) {
            const double c = dot(basis1.row(r), row);
            e1 += c * c;
        }
        for (std::size_t r = 0; r < basis2.rows; ++r) {
            const double c = dot(basis2.row(r), row);
            e2 += c * c;
        }
    }
    if (total > 0.0) {
        diag.class_energy = e1 / total;
        diag.domain_energy = e2 / total;
        diag.residual_energy = 1.0 - diag.class_energy - diag.domain_energy;
    }

    // per-class: cosine between the class-mean feature projected into
    // span(w1) and that class's head row
    const std::size_t k = heads.num_classes();
    Matrix means(k, z.cols);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < z.rows; ++i) {
        const auto c = static_cast<std::size_t>(y[i]);
        ++counts[c];
        for (std::size_t j = 0; j < z.cols; ++j) means(c, j) += z(i, j);
    }
    diag.alignment_cosines.assign(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) continue;
        std::vector<double> proj(z.cols, 0.0);
        for (std::size_t r = 0; r < basis1.rows; ++r) {
            const double coef = dot(basis1.row(r), means.row(c));
            for (std::size_t j = 0; j < z.cols; ++j) proj[j] += coef * basis1(r, j);
        }
        const double pn = norm2(proj);
        if (pn > 0.0)
            diag.alignment_cosines[c] = dot(proj, heads.w1.row(c)) /
                                        (pn * std::max(norm2(heads.w1.row(c)), 1e-300));
    }

    // mean within-(e,k)-cell variance (trace of the per-cell covariance);
    // cells come from the labels so a missing domain head still works
    std::size_t ecount = heads.num_domains();
    for (int d : e) ecount = std::max(ecount, static_cast<std::size_t>(d) + 1);
    std::vector<Matrix> cell_sum(ecount * k, Matrix(1, z.cols));
    std::vector<double> cell_sq(ecount * k, 0.0);
    std::vector<std::size_t> cell_n(ecount * k, 0);
    for (std::size_t i = 0; i < z.rows; ++i) {
        const std::size_t cell = static_cast<std::size_t>(e[i]) * k + static_cast<std::size_t>(y[i]);
        ++cell_n[cell];
        const auto row = z.row(i);
        for (std::size_t j = 0; j < z.cols; ++j) cell_sum[cell](0, j) += row[j];
        cell_sq[cell] += dot(row, row);
    }
    double var_sum = 0.0;
    std::size_t var_cells = 0;
    for (std::size_t cell = 0; cell < cell_n.size(); ++cell) {
        if (cell_n[cell] == 0) continue;
        const double n = static_cast<double>(cell_n[cell]);
        const double mean_sq = dot(cell_sum[cell].row(0), cell_sum[cell].row(0)) / (n * n);
        var_sum += cell_sq[cell] / n - mean_sq;
        ++var_cells;
    }
    if (var_cells > 0) diag.within_cell_variance = var_sum / static_cast<double>(var_cells);

    diag.ortho_norm = std::sqrt(ortho_penalty(heads.w1, heads.w2).value);
    return diag;
}

std::string metrics_to_json(const MetricsReport& report) {
    nlohmann::json cells = nlohmann::json::array();
    for (std::size_t r = 0; r < report.per_cell_acc.rows; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t c = 0; c < report.per_cell_acc.cols; ++c)
            row.push_back(report.per_cell_acc(r, c));
        cells.push_back(row);
    }
    const nlohmann::json j{
        {"id_acc", report.id_acc},
        {"ood_acc", report.ood_acc},
        {"id_f1", report.id_f1},
        {"ood_f1", report.ood_f1},
        {"ood_worst_domain_acc", report.ood_worst_domain_acc},
        {"per_cell_acc", cells},
        {"diag",
         {{"class_energy", report.diag.class_energy},
          {"domain_energy", report.diag.domain_energy},
          {"residual_energy", report.diag.residual_energy},
          {"alignment_cosines", report.diag.alignment_cosines},
          {"within_cell_variance", report.diag.within_cell_variance},
          {"ortho_norm", report.diag.ortho_norm}}},
    };
    return j.dump(2);
}

std::string visualization_csv(const Matrix& z, const std::vector<int>& y,
                              const std::vector<int>& e, const std::vector<std::string>& split,
                              const HeadPair& heads) {
    if (y.size() != z.rows || e.size() != z.rows || split.size() != z.rows)
        throw std::invalid_argument("visualization_csv: length mismatch");
    // top-2 principal directions of the stacked head rows
    Matrix stacked(heads.w1.rows + heads.w2.rows, heads.dim());
    for (std::size_t r = 0; r < heads.w1.rows; ++r)
        std::copy(heads.w1.row(r).begin(), heads.w1.row(r).end(), stacked.row(r).begin());
    for (std::size_t r = 0; r < heads.w2.rows; ++r)
        std::copy(heads.w2.row(r).begin(), heads.w2.row(r).end(),
                  stacked.row(heads.w1.rows + r).begin());
    const auto svd = svd_compact(stacked);
    if (svd.v.cols < 2)
        throw std::invalid_argument("visualization_csv: head rows span fewer than 2 directions");

    std::ostringstream os;
    os << "x,y,class,domain,split\n";
    os.precision(10);
    for (std::size_t i = 0; i < z.rows; ++i) {
        double px = 0.0, py = 0.0;
        for (std::size_t j = 0; j < z.cols; ++j) {
            px += z(i, j) * svd.v(j, 0);
            py += z(i, j) * svd.v(j, 1);
        }
        os << px << ',' << py << ',' << y[i] << ',' << e[i] << ',' << split[i] << '\n';
    }
    return os.str();
}

}  // namespace cfa
