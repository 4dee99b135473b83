#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lmmsel/errors.hpp"

namespace lmmsel {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Sorted, duplicate-free list of indices.
using IndexSet = std::vector<std::size_t>;

IndexSet make_index_set(std::vector<std::size_t> indices);
IndexSet set_union(const IndexSet& a, const IndexSet& b);
bool contains(const IndexSet& set, std::size_t index);

/// Partition of the n observations into dense levels.
///
/// Levels are stored 0-based; the external (file) convention is 1..N_k.
class GroupingFactor {
public:
    GroupingFactor() = default;

    /// Zero-based levels; every level in [0, level_count) must occur.
    GroupingFactor(std::vector<std::size_t> assignment, std::size_t level_count);

    /// Levels given as 1..N_k, N_k = max level.
    static GroupingFactor from_one_based(std::span<const long long> levels);

    /// Arbitrary labels, mapped to dense levels in order of first appearance.
    static GroupingFactor from_labels(std::span<const std::string> labels);

    std::size_t size() const noexcept { return assignment_.size(); }
    std::size_t level_count() const noexcept { return level_count_; }
    std::size_t level(std::size_t obs) const { return assignment_[obs]; }
    const std::vector<std::size_t>& assignment() const noexcept { return assignment_; }

    /// n_{i,k}: number of observations at each level.
    std::vector<std::size_t> level_sizes() const;

    const std::vector<std::string>& labels() const noexcept { return labels_; }

private:
    std::vector<std::size_t> assignment_;
    std::size_t level_count_ = 0;
    std::vector<std::string> labels_;
};

/// One random effect u_k: a grouping factor, optionally interacted with a
/// covariate and optionally correlated through a relationship matrix A.
struct RandomEffectSpec {
    std::string name;
    GroupingFactor factor;
    std::optional<Vector> covariate;
    // Column of X that generates this effect; exempt from the l1 penalty
    // while the effect is active.
    std::optional<std::size_t> covariate_column;
    std::optional<Matrix> relationship;
};

/// Incidence matrix of a factor (times a covariate when given): entry (i, j)
/// is covariate_i if observation i sits at level j, 0 otherwise.
Matrix build_incidence(const GroupingFactor& factor, const std::optional<Vector>& covariate = {});

struct Standardized {
    Matrix X;
    Vector centers;
    Vector scales;
};

/// Center every column not in `skip` and scale it to unit second moment
/// (1/n) sum x^2 = 1. Skipped columns get center 0 and scale 1.
Standardized standardize(const Matrix& X, const IndexSet& skip = {});

/// Map coefficients fitted on standardized columns back to the original
/// scale. The intercept column, when given, absorbs the centering shift.
Vector unstandardize_coefficients(const Vector& beta, const Standardized& st,
                                  std::optional<std::size_t> intercept_column);

/// Immutable linear mixed model data y = X beta + sum_k Z_k u_k + e.
class MixedModelData {
public:
    MixedModelData(Vector y, Matrix X, std::vector<RandomEffectSpec> effects,
                   IndexSet unpenalized = {}, std::vector<std::string> column_names = {});

    std::size_t n() const noexcept { return static_cast<std::size_t>(y_.size()); }
    std::size_t p() const noexcept { return static_cast<std::size_t>(X_.cols()); }
    std::size_t q() const noexcept { return effects_.size(); }

    const Vector& y() const noexcept { return y_; }
    const Matrix& X() const noexcept { return X_; }
    const std::vector<std::string>& column_names() const noexcept { return column_names_; }
    const RandomEffectSpec& effect(std::size_t k) const { return effects_.at(k); }
    const std::vector<RandomEffectSpec>& effects() const noexcept { return effects_; }

    /// Columns that are never penalized (the intercept by default).
    const IndexSet& unpenalized_base() const noexcept { return unpenalized_; }

    /// Base exemptions plus the generating columns of the given effects.
    IndexSet exempt_columns(const IndexSet& active) const;

    std::size_t level_count(std::size_t k) const { return effects_.at(k).factor.level_count(); }
    /// N = sum of N_k over the given effects.
    std::size_t total_levels(const IndexSet& active) const;
    IndexSet all_effects() const;

    /// Per-observation incidence value (covariate or 1) of effect k.
    const Vector& incidence_values(std::size_t k) const { return values_.at(k); }

    bool has_relationship(std::size_t k) const { return effects_.at(k).relationship.has_value(); }
    /// Cached A^{-1}; identity-sized empty matrix when no relationship.
    const Matrix& relationship_inverse(std::size_t k) const { return a_inverse_.at(k); }
    double relationship_log_det(std::size_t k) const { return a_log_det_.at(k); }

    /// Dense Z_k.
    Matrix incidence(std::size_t k) const;
    /// Dense concatenation of Z_k over `active`, in the given order.
    Matrix Z(const IndexSet& active) const;

    /// Z' r for the concatenated active blocks, without forming Z.
    Vector Zt_times(const IndexSet& active, const Vector& r) const;
    /// Z u for the concatenated active blocks.
    Vector Z_times(const IndexSet& active, const Vector& u) const;
    /// Z'Z for the concatenated active blocks (N x N).
    Matrix ZtZ(const IndexSet& active) const;

    /// Data with X restricted to `columns` and effects restricted to
    /// `effects`. Covariate-column links are remapped; links to dropped
    /// columns are cleared. All retained columns become unpenalized when
    /// `all_unpenalized` is set.
    MixedModelData restrict(const IndexSet& columns, const IndexSet& effects,
                            bool all_unpenalized) const;

    /// Same data without any random effect (plain linear model).
    MixedModelData without_effects() const;

private:
    Vector y_;
    Matrix X_;
    std::vector<RandomEffectSpec> effects_;
    IndexSet unpenalized_;
    std::vector<std::string> column_names_;
    std::vector<Vector> values_;
    std::vector<Matrix> a_inverse_;
    std::vector<double> a_log_det_;
};

}  // namespace lmmsel
