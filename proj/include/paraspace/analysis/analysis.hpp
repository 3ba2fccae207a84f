#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "paraspace/core/table.hpp"

namespace paraspace::analysis {

enum class Kernel { dot_product, gaussian };
enum class Normalization { center, sphere, l1_row };

std::string_view to_string(Kernel kernel);
std::string_view to_string(Normalization n);
/// Throws InvalidArgument.
Kernel kernel_from_string(std::string_view text);
Normalization normalization_from_string(std::string_view text);

struct AffinitySpec {
    std::vector<std::string> columns;
    /// Per column, ≥ 0. Empty means all ones.
    std::vector<double> weights;
    Kernel kernel = Kernel::dot_product;
    /// Gaussian width; defaults to the median pairwise distance.
    std::optional<double> sigma;
    std::set<Normalization> normalization;

    /// Throws InvalidArgument.
    void validate() const;

    friend bool operator==(const AffinitySpec&, const AffinitySpec&) = default;
};

struct Limits {
    std::size_t max_rows = 5000;
};

/// Rows of X in `rows` order; rows lacking a feature value are dropped.
struct FeatureMatrix {
    std::vector<core::RowId> rows;
    std::vector<core::RowId> dropped;
    Eigen::MatrixXd X;
};

/// Vector columns contribute one matrix column per element. Throws
/// UnknownVariable, TypeMismatch for label columns, EmptySelection.
FeatureMatrix feature_matrix(const core::DataTable& table, std::span<const core::RowId> rows,
                             std::span<const std::string> columns);

void center_columns(Eigen::MatrixXd& X);
/// Rescales rows to sum 1. Throws InvalidForL1 on negative entries and
/// ZeroNormRow on all-zero rows.
void l1_rows(Eigen::MatrixXd& X);
/// C_ij = A_ij / sqrt(A_ii A_jj). Throws ZeroNormRow naming the row indices.
Eigen::MatrixXd sphere(const Eigen::MatrixXd& A);

Eigen::MatrixXd dot_affinity(const Eigen::MatrixXd& X);
Eigen::MatrixXd gaussian_affinity(const Eigen::MatrixXd& X, double sigma);
/// Median of the distances over all unordered row pairs (0 for < 2 rows).
double median_pairwise_distance(const Eigen::MatrixXd& X);

struct Affinity {
    std::vector<core::RowId> rows;
    std::vector<core::RowId> dropped;
    /// Normalized affinity (sphered when requested).
    Eigen::MatrixXd C;
    std::optional<double> sigma;
};

/// Weights, then centering, then l1 scaling, then the kernel, then sphering.
Affinity build_affinity(const core::DataTable& table, std::span<const core::RowId> rows,
                        const AffinitySpec& spec, Limits limits = {});

struct Spectrum {
    /// Descending.
    Eigen::VectorXd eigenvalues;
    /// Column i pairs with eigenvalues(i), largest-magnitude entry positive.
    Eigen::MatrixXd eigenvectors;
    /// m×2: (λ₂v₂, λ₃v₃), zero columns where m < 3.
    Eigen::MatrixX2d coords;
    bool degenerate_axes = false;
};

/// Throws InvalidMatrix for asymmetric or non-finite input, TooManyRows past
/// the limit.
Spectrum spectral_embed(const Eigen::MatrixXd& C, Limits limits = {});

struct EmbeddingResult {
    std::vector<core::RowId> rows;
    std::vector<core::RowId> dropped;
    Eigen::MatrixX2d coords;
    Eigen::VectorXd eigenvalues;
    bool degenerate_axes = false;
    std::optional<double> sigma;
    AffinitySpec spec;
};

EmbeddingResult embed(const core::DataTable& table, std::span<const core::RowId> rows, const AffinitySpec& spec,
                      Limits limits = {});

inline constexpr std::string_view kEmbedX = "embed_x";
inline constexpr std::string_view kEmbedY = "embed_y";

/// Writes embed_x/embed_y (role embedding); rows outside the result get
/// missing cells.
void apply_embedding(core::DataTable& table, const EmbeddingResult& result);

/// "index,eigenvalue" lines, 1-based.
void write_spectrum_csv(std::ostream& out, const Eigen::VectorXd& eigenvalues);

struct PcaResult {
    std::vector<std::string> columns;
    Eigen::VectorXd mean;
    /// Column i is the i-th principal direction.
    Eigen::MatrixXd components;
    /// Descending; variance of the projections onto each direction.
    Eigen::VectorXd variances;
    std::vector<core::RowId> rows;
};

/// Throws InvalidArgument for fewer than two rows.
PcaResult pca(const Eigen::MatrixXd& X);
PcaResult pca(const core::DataTable& table, std::span<const core::RowId> rows,
              std::span<const std::string> columns);

/// d(u, v) = ‖W(u − v)‖₂ with diagonal W.
struct WeightedMetric {
    std::vector<std::string> columns;
    std::vector<double> weights;
    std::vector<std::string> warnings;

    double distance(std::span<const double> u, std::span<const double> v) const;
};

/// Without explicit weights each column gets 1/(max − min) over the table;
/// a constant column gets weight 0 and a warning. Throws TypeMismatch for
/// non-scalar columns, InvalidValue for negative weights.
WeightedMetric combine_features(const core::DataTable& table, std::span<const std::string> columns,
                                std::optional<std::vector<double>> weights = std::nullopt);

/// Adds a derived column holding each row's distance to `focus`.
void add_distance_column(core::DataTable& table, const std::string& name, const WeightedMetric& metric,
                         std::span<const double> focus);

enum class Modality { spread_out, localized };
std::string_view to_string(Modality m);

struct FactorSummary {
    std::string name;
    double min = 0.0;
    double max = 0.0;
    /// (max − min) / sampled factor range; empty when the range is zero.
    std::optional<double> spread;
    Modality modality = Modality::localized;
};

struct ClusterSummary {
    std::string label;
    std::size_t rows = 0;
    std::vector<FactorSummary> factors;
};

/// Throws EmptyCluster when no row carries the label.
ClusterSummary summarize_cluster(const core::DataTable& table, std::string_view label_column,
                                 const std::string& label, std::span<const std::string> factors,
                                 double spread_threshold = 0.8);

} // namespace paraspace::analysis
