#include "paraspace/analysis/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "paraspace/core/csv.hpp"
#include "paraspace/error.hpp"

namespace paraspace::analysis {
namespace {

[[noreturn]] void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

std::string join_indices(const std::vector<std::size_t>& idx) {
    std::string s;
    for (std::size_t i = 0; i < idx.size() && i < 20; ++i) {
        s += (i ? "," : "") + std::to_string(idx[i]);
    }
    if (idx.size() > 20) {
        s += ",...";
    }
    return s;
}

/// Width of a column in X, or 0 when it is not numeric.
std::size_t column_width(const core::DataTable& table, const core::Variable& v,
                         std::span<const core::RowId> rows) {
    if (v.role == core::Role::label) {
        fail(ErrorCode::type_mismatch, "'" + v.name + "' is a label column");
    }
    if (!v.vector_valued) {
        return 1;
    }
    if (v.vector_length) {
        return *v.vector_length;
    }
    for (const auto id : rows) {
        if (const auto* vec = std::get_if<std::vector<double>>(&table.cell(id, v.name))) {
            return vec->size();
        }
    }
    return 0;
}

/// Mirrors the upper triangle so A(i,j) == A(j,i) bit for bit.
void symmetrize(Eigen::MatrixXd& A) {
    A.triangularView<Eigen::StrictlyLower>() = A.transpose().triangularView<Eigen::StrictlyLower>();
}

} // namespace

std::string_view to_string(Kernel kernel) {
    return kernel == Kernel::gaussian ? "gaussian" : "dot_product";
}

std::string_view to_string(Normalization n) {
    switch (n) {
    case Normalization::center: return "center";
    case Normalization::sphere: return "sphere";
    case Normalization::l1_row: return "l1_row";
    }
    return "center";
}

Kernel kernel_from_string(std::string_view text) {
    if (text == "dot_product" || text == "dot") {
        return Kernel::dot_product;
    }
    if (text == "gaussian") {
        return Kernel::gaussian;
    }
    fail(ErrorCode::invalid_argument, "unknown kernel '" + std::string(text) + "'");
}

Normalization normalization_from_string(std::string_view text) {
    for (auto n : {Normalization::center, Normalization::sphere, Normalization::l1_row}) {
        if (to_string(n) == text) {
            return n;
        }
    }
    fail(ErrorCode::invalid_argument, "unknown normalization '" + std::string(text) + "'");
}

void AffinitySpec::validate() const {
    if (columns.empty()) {
        fail(ErrorCode::invalid_argument, "affinity needs at least one feature column");
    }
    if (!weights.empty() && weights.size() != columns.size()) {
        fail(ErrorCode::invalid_argument, "one weight per feature column is required");
    }
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            fail(ErrorCode::invalid_argument, "weights must be finite and non-negative");
        }
    }
    if (sigma && !(*sigma > 0.0 && std::isfinite(*sigma))) {
        fail(ErrorCode::invalid_argument, "sigma must be positive");
    }
    if (normalization.contains(Normalization::sphere) && normalization.contains(Normalization::l1_row)) {
        fail(ErrorCode::invalid_argument, "sphere and l1_row are mutually exclusive");
    }
}

FeatureMatrix feature_matrix(const core::DataTable& table, std::span<const core::RowId> rows,
                             std::span<const std::string> columns) {
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& name : columns) {
        widths.push_back(column_width(table, table.variable(name), rows));
        total += widths.back();
    }
    FeatureMatrix fm;
    std::vector<std::vector<double>> data;
    for (const auto id : rows) {
        std::vector<double> row;
        row.reserve(total);
        bool complete = true;
        for (std::size_t c = 0; c < columns.size() && complete; ++c) {
            const auto& cell = table.cell(id, columns[c]);
            const auto* d = std::get_if<double>(&cell);
            const auto* vec = std::get_if<std::vector<double>>(&cell);
            if (d && !table.variable(columns[c]).vector_valued) {
                row.push_back(*d);
            } else if (vec && vec->size() == widths[c]) {
                row.insert(row.end(), vec->begin(), vec->end());
            } else {
                complete = false;
            }
        }
        if (complete && total > 0) {
            fm.rows.push_back(id);
            data.push_back(std::move(row));
        } else {
            fm.dropped.push_back(id);
        }
    }
    if (fm.rows.empty()) {
        fail(ErrorCode::empty_selection, "no selected row has all feature values");
    }
    fm.X.resize(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(total));
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t j = 0; j < total; ++j) {
            fm.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = data[i][j];
        }
    }
    return fm;
}

void center_columns(Eigen::MatrixXd& X) {
    if (X.rows() == 0) {
        return;
    }
    const Eigen::RowVectorXd mean = X.colwise().mean();
    X.rowwise() -= mean;
}

void l1_rows(Eigen::MatrixXd& X) {
    std::vector<std::size_t> zero;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        if ((X.row(i).array() < 0.0).any()) {
            fail(ErrorCode::invalid_for_l1, "row " + std::to_string(i) + " has negative entries");
        }
        const double s = X.row(i).sum();
        if (s > 0.0) {
            X.row(i) /= s;
        } else {
            zero.push_back(static_cast<std::size_t>(i));
        }
    }
    if (!zero.empty()) {
        fail(ErrorCode::zero_norm_row, "rows with zero sum: " + join_indices(zero));
    }
}

Eigen::MatrixXd sphere(const Eigen::MatrixXd& A) {
    std::vector<std::size_t> zero;
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
        if (!(A(i, i) > 0.0)) {
            zero.push_back(static_cast<std::size_t>(i));
        }
    }
    if (!zero.empty()) {
        fail(ErrorCode::zero_norm_row, "rows with zero self-affinity: " + join_indices(zero));
    }
    const Eigen::VectorXd d = A.diagonal().array().sqrt().inverse();
    Eigen::MatrixXd C = d.asDiagonal() * A * d.asDiagonal();
    symmetrize(C);
    C.diagonal().setOnes();
    return C;
}

Eigen::MatrixXd dot_affinity(const Eigen::MatrixXd& X) {
    Eigen::MatrixXd A = X * X.transpose();
    symmetrize(A);
    return A;
}

namespace {

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& X) {
    const Eigen::VectorXd norms = X.rowwise().squaredNorm();
    Eigen::MatrixXd D = (-2.0 * X * X.transpose()).colwise() + norms;
    D.rowwise() += norms.transpose();
    D = D.cwiseMax(0.0);
    symmetrize(D);
    D.diagonal().setZero();
    return D;
}

} // namespace

Eigen::MatrixXd gaussian_affinity(const Eigen::MatrixXd& X, double sigma) {
    Eigen::MatrixXd A = (-squared_distances(X) / (2.0 * sigma * sigma)).array().exp().matrix();
    A.diagonal().setOnes();
    return A;
}

double median_pairwise_distance(const Eigen::MatrixXd& X) {
    const auto m = X.rows();
    if (m < 2) {
        return 0.0;
    }
    const Eigen::MatrixXd D = squared_distances(X);
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = i + 1; j < m; ++j) {
            d.push_back(std::sqrt(D(i, j)));
        }
    }
    const auto mid = d.size() / 2;
    std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
    double med = d[mid];
    if (d.size() % 2 == 0) {
        med = 0.5 * (med + *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid)));
    }
    return med;
}

Affinity build_affinity(const core::DataTable& table, std::span<const core::RowId> rows, const AffinitySpec& spec,
                        Limits limits) {
    spec.validate();
    FeatureMatrix fm = feature_matrix(table, rows, spec.columns);
    if (static_cast<std::size_t>(fm.X.rows()) > limits.max_rows) {
        fail(ErrorCode::too_many_rows, std::to_string(fm.X.rows()) + " rows exceed the limit of " +
                                           std::to_string(limits.max_rows) + "; select a subset of rows");
    }
    if (!spec.weights.empty()) {
        Eigen::Index col = 0;
        for (std::size_t c = 0; c < spec.columns.size(); ++c) {
            const auto width = static_cast<Eigen::Index>(column_width(table, table.variable(spec.columns[c]), fm.rows));
            fm.X.middleCols(col, width) *= spec.weights[c];
            col += width;
        }
    }
    if (spec.normalization.contains(Normalization::center)) {
        center_columns(fm.X);
    }
    if (spec.normalization.contains(Normalization::l1_row)) {
        l1_rows(fm.X);
    }
    Affinity out;
    if (spec.kernel == Kernel::gaussian) {
        double sigma = spec.sigma.value_or(median_pairwise_distance(fm.X));
        if (!(sigma > 0.0)) {
            // All points coincide; any width gives the same all-ones matrix.
            sigma = 1.0;
        }
        out.sigma = sigma;
        out.C = gaussian_affinity(fm.X, sigma);
    } else {
        out.C = dot_affinity(fm.X);
    }
    if (spec.normalization.contains(Normalization::sphere)) {
        try {
            out.C = sphere(out.C);
        } catch (const Error&) {
            std::string ids;
            for (Eigen::Index i = 0; i < out.C.rows(); ++i) {
                if (!(out.C(i, i) > 0.0)) {
                    ids += (ids.empty() ? "" : ",") + std::to_string(core::to_int(fm.rows[static_cast<std::size_t>(i)]));
                }
            }
            fail(ErrorCode::zero_norm_row, "rows with zero self-affinity: " + ids);
        }
    }
    out.rows = std::move(fm.rows);
    out.dropped = std::move(fm.dropped);
    return out;
}

Spectrum spectral_embed(const Eigen::MatrixXd& C, Limits limits) {
    const auto m = C.rows();
    if (m != C.cols()) {
        fail(ErrorCode::invalid_matrix, "matrix is not square");
    }
    if (static_cast<std::size_t>(m) > limits.max_rows) {
        fail(ErrorCode::too_many_rows, std::to_string(m) + " rows exceed the limit of " +
                                           std::to_string(limits.max_rows));
    }
    if (!C.allFinite()) {
        fail(ErrorCode::invalid_matrix, "matrix has non-finite entries");
    }
    const double scale = std::max(1.0, m > 0 ? C.cwiseAbs().maxCoeff() : 0.0);
    if (m > 0 && (C - C.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        fail(ErrorCode::invalid_matrix, "matrix is not symmetric");
    }
    Spectrum s;
    s.coords = Eigen::MatrixX2d::Zero(m, 2);
    if (m == 0) {
        return s;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(C);
    if (solver.info() != Eigen::Success) {
        fail(ErrorCode::invalid_matrix, "eigendecomposition did not converge");
    }
    // Eigen returns ascending order.
    s.eigenvalues = solver.eigenvalues().reverse();
    s.eigenvectors = solver.eigenvectors().rowwise().reverse();
    for (Eigen::Index k = 0; k < m; ++k) {
        auto v = s.eigenvectors.col(k);
        Eigen::Index best = 0;
        double best_abs = -1.0;
        for (Eigen::Index i = 0; i < m; ++i) {
            if (std::abs(v(i)) > best_abs + 1e-12) {
                best_abs = std::abs(v(i));
                best = i;
            }
        }
        if (v(best) < 0.0) {
            v = -v;
        }
    }
    for (Eigen::Index k = 1; k <= 2 && k < m; ++k) {
        s.coords.col(k - 1) = s.eigenvalues(k) * s.eigenvectors.col(k);
    }
    if (m >= 3) {
        s.degenerate_axes =
            std::abs(s.eigenvalues(1) - s.eigenvalues(2)) <= 1e-9 * std::max(1.0, std::abs(s.eigenvalues(0)));
    }
    return s;
}

EmbeddingResult embed(const core::DataTable& table, std::span<const core::RowId> rows, const AffinitySpec& spec,
                      Limits limits) {
    Affinity a = build_affinity(table, rows, spec, limits);
    Spectrum s = spectral_embed(a.C, limits);
    EmbeddingResult r;
    r.rows = std::move(a.rows);
    r.dropped = std::move(a.dropped);
    r.coords = std::move(s.coords);
    r.eigenvalues = std::move(s.eigenvalues);
    r.degenerate_axes = s.degenerate_axes;
    r.sigma = a.sigma;
    r.spec = spec;
    return r;
}

void apply_embedding(core::DataTable& table, const EmbeddingResult& result) {
    for (const auto name : {kEmbedX, kEmbedY}) {
        if (!table.has_variable(name)) {
            core::Variable v;
            v.name = std::string(name);
            v.role = core::Role::embedding;
            table.add_variable(std::move(v));
        } else if (table.variable(name).role != core::Role::embedding) {
            fail(ErrorCode::type_mismatch, "'" + std::string(name) + "' exists and is not an embedding column");
        }
    }
    for (const auto id : table.row_ids()) {
        table.set_cell(id, kEmbedX, core::Missing{});
        table.set_cell(id, kEmbedY, core::Missing{});
    }
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        table.set_cell(result.rows[i], kEmbedX, result.coords(r, 0));
        table.set_cell(result.rows[i], kEmbedY, result.coords(r, 1));
    }
}

void write_spectrum_csv(std::ostream& out, const Eigen::VectorXd& eigenvalues) {
    out << "index,eigenvalue\n";
    for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
        out << (i + 1) << ',' << core::format_double(eigenvalues(i)) << '\n';
    }
}

PcaResult pca(const Eigen::MatrixXd& X) {
    if (X.rows() < 2) {
        fail(ErrorCode::invalid_argument, "PCA needs at least two rows");
    }
    if (X.cols() < 1) {
        fail(ErrorCode::invalid_argument, "PCA needs at least one column");
    }
    PcaResult r;
    r.mean = X.colwise().mean().transpose();
    Eigen::MatrixXd centered = X.rowwise() - r.mean.transpose();
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(X.rows());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    r.variances = solver.eigenvalues().reverse().cwiseMax(0.0);
    r.components = solver.eigenvectors().rowwise().reverse();
    for (Eigen::Index k = 0; k < r.components.cols(); ++k) {
        auto v = r.components.col(k);
        Eigen::Index best = 0;
        v.cwiseAbs().maxCoeff(&best);
        if (v(best) < 0.0) {
            v = -v;
        }
    }
    return r;
}

PcaResult pca(const core::DataTable& table, std::span<const core::RowId> rows,
              std::span<const std::string> columns) {
    if (columns.empty()) {
        fail(ErrorCode::invalid_argument, "PCA needs at least one column");
    }
    FeatureMatrix fm = feature_matrix(table, rows, columns);
    PcaResult r = pca(fm.X);
    r.columns.assign(columns.begin(), columns.end());
    r.rows = std::move(fm.rows);
    return r;
}

double WeightedMetric::distance(std::span<const double> u, std::span<const double> v) const {
    if (u.size() != weights.size() || v.size() != weights.size()) {
        fail(ErrorCode::invalid_argument, "vector length does not match the metric");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double d = weights[i] * (u[i] - v[i]);
        s += d * d;
    }
    return std::sqrt(s);
}

WeightedMetric combine_features(const core::DataTable& table, std::span<const std::string> columns,
                                std::optional<std::vector<double>> weights) {
    if (columns.empty()) {
        fail(ErrorCode::invalid_argument, "metric needs at least one column");
    }
    WeightedMetric m;
    m.columns.assign(columns.begin(), columns.end());
    for (const auto& name : columns) {
        const auto& v = table.variable(name);
        if (v.vector_valued || v.role == core::Role::label) {
            fail(ErrorCode::type_mismatch, "'" + name + "' is not a scalar numeric column");
        }
    }
    if (weights) {
        if (weights->size() != columns.size()) {
            fail(ErrorCode::invalid_argument, "one weight per column is required");
        }
        for (double w : *weights) {
            if (!(w >= 0.0) || !std::isfinite(w)) {
                fail(ErrorCode::invalid_value, "weights must be finite and non-negative");
            }
        }
        m.weights = *weights;
        return m;
    }
    for (const auto& name : columns) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (const auto id : table.row_ids()) {
            if (const auto x = table.numeric(id, name)) {
                lo = std::min(lo, *x);
                hi = std::max(hi, *x);
            }
        }
        if (hi > lo) {
            m.weights.push_back(1.0 / (hi - lo));
        } else {
            m.weights.push_back(0.0);
            m.warnings.push_back("column '" + name + "' has no spread; weight set to 0");
        }
    }
    return m;
}

void add_distance_column(core::DataTable& table, const std::string& name, const WeightedMetric& metric,
                         std::span<const double> focus) {
    if (focus.size() != metric.columns.size()) {
        fail(ErrorCode::invalid_argument, "focus point needs one value per metric column");
    }
    if (!table.has_variable(name)) {
        core::Variable v;
        v.name = name;
        v.role = core::Role::derived;
        table.add_variable(std::move(v));
    }
    std::vector<double> u(metric.columns.size());
    for (const auto id : table.row_ids()) {
        bool complete = true;
        for (std::size_t i = 0; i < u.size() && complete; ++i) {
            const auto x = table.numeric(id, metric.columns[i]);
            complete = x.has_value();
            u[i] = x.value_or(0.0);
        }
        table.set_cell(id, name, complete ? core::Cell(metric.distance(u, focus)) : core::Cell(core::Missing{}));
    }
}

std::string_view to_string(Modality m) {
    return m == Modality::spread_out ? "spread_out" : "localized";
}

ClusterSummary summarize_cluster(const core::DataTable& table, std::string_view label_column,
                                 const std::string& label, std::span<const std::string> factors,
                                 double spread_threshold) {
    if (table.variable(label_column).role != core::Role::label) {
        fail(ErrorCode::type_mismatch, "'" + std::string(label_column) + "' is not a label column");
    }
    std::vector<core::RowId> members;
    for (const auto id : table.row_ids()) {
        const auto* s = std::get_if<std::string>(&table.cell(id, label_column));
        if (s && *s == label) {
            members.push_back(id);
        }
    }
    if (members.empty()) {
        fail(ErrorCode::empty_cluster, "no row is labeled '" + label + "'");
    }
    ClusterSummary out;
    out.label = label;
    out.rows = members.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    for (const auto& name : factors) {
        FactorSummary f;
        f.name = name;
        double lo = inf, hi = -inf, all_lo = inf, all_hi = -inf;
        for (const auto id : table.row_ids()) {
            if (const auto x = table.numeric(id, name)) {
                all_lo = std::min(all_lo, *x);
                all_hi = std::max(all_hi, *x);
            }
        }
        for (const auto id : members) {
            if (const auto x = table.numeric(id, name)) {
                lo = std::min(lo, *x);
                hi = std::max(hi, *x);
            }
        }
        if (lo > hi) {
            // No member has a value for this factor.
            f.min = f.max = std::numeric_limits<double>::quiet_NaN();
        } else {
            f.min = lo;
            f.max = hi;
            if (all_hi > all_lo) {
                f.spread = (hi - lo) / (all_hi - all_lo);
                f.modality = *f.spread > spread_threshold ? Modality::spread_out : Modality::localized;
            }
        }
        out.factors.push_back(std::move(f));
    }
    return out;
}

} // namespace paraspace::analysis
