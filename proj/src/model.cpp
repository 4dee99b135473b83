#include "lmmsel/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "lmmsel/linalg.hpp"

namespace lmmsel {

IndexSet make_index_set(std::vector<std::size_t> indices) {
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    return indices;
}

IndexSet set_union(const IndexSet& a, const IndexSet& b) {
    IndexSet out;
    out.reserve(a.size() + b.size());
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

bool contains(const IndexSet& set, std::size_t index) {
    return std::binary_search(set.begin(), set.end(), index);
}

// ---------------------------------------------------------------------------

GroupingFactor::GroupingFactor(std::vector<std::size_t> assignment, std::size_t level_count)
    : assignment_(std::move(assignment)), level_count_(level_count) {
    if (level_count_ == 0) throw DimensionError("grouping factor needs at least one level");
    std::vector<std::size_t> seen(level_count_, 0);
    for (std::size_t lv : assignment_) {
        if (lv >= level_count_)
            throw DimensionError("grouping level " + std::to_string(lv + 1) + " exceeds level count " +
                                 std::to_string(level_count_));
        ++seen[lv];
    }
    for (std::size_t j = 0; j < level_count_; ++j)
        if (seen[j] == 0)
            throw DimensionError("grouping level " + std::to_string(j + 1) + " has no observation");
}

GroupingFactor GroupingFactor::from_one_based(std::span<const long long> levels) {
    std::vector<std::size_t> zero_based;
    zero_based.reserve(levels.size());
    long long top = 0;
    for (long long lv : levels) {
        if (lv < 1) throw DimensionError("grouping levels must be integers >= 1");
        top = std::max(top, lv);
        zero_based.push_back(static_cast<std::size_t>(lv - 1));
    }
    return GroupingFactor(std::move(zero_based), static_cast<std::size_t>(top));
}

GroupingFactor GroupingFactor::from_labels(std::span<const std::string> labels) {
    std::map<std::string, std::size_t> index;
    std::vector<std::string> names;
    std::vector<std::size_t> assignment;
    assignment.reserve(labels.size());
    for (const auto& label : labels) {
        auto [it, inserted] = index.emplace(label, names.size());
        if (inserted) names.push_back(label);
        assignment.push_back(it->second);
    }
    GroupingFactor f(std::move(assignment), names.size());
    f.labels_ = std::move(names);
    return f;
}

std::vector<std::size_t> GroupingFactor::level_sizes() const {
    std::vector<std::size_t> counts(level_count_, 0);
    for (std::size_t lv : assignment_) ++counts[lv];
    return counts;
}

// ---------------------------------------------------------------------------

Matrix build_incidence(const GroupingFactor& factor, const std::optional<Vector>& covariate) {
    const auto n = static_cast<Eigen::Index>(factor.size());
    if (covariate && covariate->size() != n)
        throw DimensionError("covariate length " + std::to_string(covariate->size()) +
                             " does not match grouping length " + std::to_string(n));
    Matrix Z = Matrix::Zero(n, static_cast<Eigen::Index>(factor.level_count()));
    for (Eigen::Index i = 0; i < n; ++i)
        Z(i, static_cast<Eigen::Index>(factor.level(static_cast<std::size_t>(i)))) =
            covariate ? (*covariate)(i) : 1.0;
    return Z;
}

Standardized standardize(const Matrix& X, const IndexSet& skip) {
    const auto n = X.rows();
    Standardized out{X, Vector::Zero(X.cols()), Vector::Ones(X.cols())};
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        if (contains(skip, static_cast<std::size_t>(j))) continue;
        const double mean = X.col(j).mean();
        out.X.col(j).array() -= mean;
        const double second = out.X.col(j).squaredNorm() / static_cast<double>(n);
        if (!(second > 0.0) || second <= 1e-24 * (1.0 + mean * mean))
            throw DegenerateColumnError("column " + std::to_string(j) + " is constant", static_cast<std::size_t>(j));
        const double scale = std::sqrt(second);
        out.X.col(j) /= scale;
        out.centers(j) = mean;
        out.scales(j) = scale;
    }
    return out;
}

Vector unstandardize_coefficients(const Vector& beta, const Standardized& st,
                                  std::optional<std::size_t> intercept_column) {
    Vector out = beta.cwiseQuotient(st.scales);
    if (intercept_column) {
        const auto ic = static_cast<Eigen::Index>(*intercept_column);
        out(ic) -= out.dot(st.centers) - out(ic) * st.centers(ic);
    }
    return out;
}

// ---------------------------------------------------------------------------

MixedModelData::MixedModelData(Vector y, Matrix X, std::vector<RandomEffectSpec> effects,
                               IndexSet unpenalized, std::vector<std::string> column_names)
    : y_(std::move(y)),
      X_(std::move(X)),
      effects_(std::move(effects)),
      unpenalized_(make_index_set(std::move(unpenalized))),
      column_names_(std::move(column_names)) {
    const auto n = y_.size();
    if (X_.rows() != n)
        throw DimensionError("X has " + std::to_string(X_.rows()) + " rows but y has " + std::to_string(n));
    if (!y_.allFinite() || !X_.allFinite()) throw DimensionError("y and X must be finite");
    for (std::size_t j : unpenalized_)
        if (j >= p()) throw DimensionError("unpenalized column " + std::to_string(j) + " out of range");
    if (column_names_.empty()) {
        for (std::size_t j = 0; j < p(); ++j) column_names_.push_back("x" + std::to_string(j + 1));
    } else if (column_names_.size() != p()) {
        throw DimensionError("column name count does not match X");
    }

    for (std::size_t k = 0; k < effects_.size(); ++k) {
        auto& e = effects_[k];
        if (e.name.empty()) e.name = "u" + std::to_string(k + 1);
        if (static_cast<Eigen::Index>(e.factor.size()) != n)
            throw DimensionError("effect " + e.name + ": grouping length does not match n");
        if (e.covariate_column && *e.covariate_column >= p())
            throw DimensionError("effect " + e.name + ": covariate column out of range");
        if (e.covariate_column && !e.covariate) e.covariate = X_.col(static_cast<Eigen::Index>(*e.covariate_column));
        if (e.covariate && e.covariate->size() != n)
            throw DimensionError("effect " + e.name + ": covariate length does not match n");
        values_.push_back(e.covariate ? *e.covariate : Vector::Ones(n));

        if (e.relationship) {
            const auto& A = *e.relationship;
            const auto nk = static_cast<Eigen::Index>(e.factor.level_count());
            if (A.rows() != nk || A.cols() != nk)
                throw DimensionError("effect " + e.name + ": relationship matrix must be N_k x N_k");
            if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + A.cwiseAbs().maxCoeff()))
                throw NumericError("effect " + e.name + ": relationship matrix is not symmetric");
            auto llt = factorize_spd(A, "relationship matrix");
            a_inverse_.push_back(llt.solve(Matrix::Identity(nk, nk)));
            a_log_det_.push_back(log_det(llt));
        } else {
            a_inverse_.emplace_back();
            a_log_det_.push_back(0.0);
        }
    }
}

IndexSet MixedModelData::exempt_columns(const IndexSet& active) const {
    std::vector<std::size_t> cols(unpenalized_.begin(), unpenalized_.end());
    for (std::size_t k : active)
        if (effects_.at(k).covariate_column) cols.push_back(*effects_[k].covariate_column);
    return make_index_set(std::move(cols));
}

std::size_t MixedModelData::total_levels(const IndexSet& active) const {
    std::size_t total = 0;
    for (std::size_t k : active) total += level_count(k);
    return total;
}

IndexSet MixedModelData::all_effects() const {
    IndexSet all(q());
    for (std::size_t k = 0; k < q(); ++k) all[k] = k;
    return all;
}

Matrix MixedModelData::incidence(std::size_t k) const {
    return build_incidence(effects_.at(k).factor, values_.at(k));
}

Matrix MixedModelData::Z(const IndexSet& active) const {
    Matrix out(static_cast<Eigen::Index>(n()), static_cast<Eigen::Index>(total_levels(active)));
    Eigen::Index offset = 0;
    for (std::size_t k : active) {
        const auto nk = static_cast<Eigen::Index>(level_count(k));
        out.middleCols(offset, nk) = incidence(k);
        offset += nk;
    }
    return out;
}

Vector MixedModelData::Zt_times(const IndexSet& active, const Vector& r) const {
    Vector out = Vector::Zero(static_cast<Eigen::Index>(total_levels(active)));
    std::size_t offset = 0;
    for (std::size_t k : active) {
        const auto& asg = effects_[k].factor.assignment();
        const Vector& v = values_[k];
        for (std::size_t i = 0; i < asg.size(); ++i)
            out(static_cast<Eigen::Index>(offset + asg[i])) += v(static_cast<Eigen::Index>(i)) * r(static_cast<Eigen::Index>(i));
        offset += level_count(k);
    }
    return out;
}

Vector MixedModelData::Z_times(const IndexSet& active, const Vector& u) const {
    Vector out = Vector::Zero(static_cast<Eigen::Index>(n()));
    std::size_t offset = 0;
    for (std::size_t k : active) {
        const auto& asg = effects_[k].factor.assignment();
        const Vector& v = values_[k];
        for (std::size_t i = 0; i < asg.size(); ++i)
            out(static_cast<Eigen::Index>(i)) += v(static_cast<Eigen::Index>(i)) * u(static_cast<Eigen::Index>(offset + asg[i]));
        offset += level_count(k);
    }
    return out;
}

Matrix MixedModelData::ZtZ(const IndexSet& active) const {
    const auto N = static_cast<Eigen::Index>(total_levels(active));
    Matrix out = Matrix::Zero(N, N);
    std::vector<std::size_t> offsets;
    std::size_t offset = 0;
    for (std::size_t k : active) {
        offsets.push_back(offset);
        offset += level_count(k);
    }
    for (std::size_t a = 0; a < active.size(); ++a) {
        const auto& asg_a = effects_[active[a]].factor.assignment();
        const Vector& va = values_[active[a]];
        for (std::size_t b = a; b < active.size(); ++b) {
            const auto& asg_b = effects_[active[b]].factor.assignment();
            const Vector& vb = values_[active[b]];
            for (std::size_t i = 0; i < asg_a.size(); ++i) {
                const auto ii = static_cast<Eigen::Index>(i);
                out(static_cast<Eigen::Index>(offsets[a] + asg_a[i]), static_cast<Eigen::Index>(offsets[b] + asg_b[i])) +=
                    va(ii) * vb(ii);
            }
        }
    }
    // Mirror the upper block triangle.
    for (std::size_t a = 0; a < active.size(); ++a)
        for (std::size_t b = a + 1; b < active.size(); ++b) {
            const auto ra = static_cast<Eigen::Index>(offsets[a]);
            const auto rb = static_cast<Eigen::Index>(offsets[b]);
            const auto na = static_cast<Eigen::Index>(level_count(active[a]));
            const auto nb = static_cast<Eigen::Index>(level_count(active[b]));
            out.block(rb, ra, nb, na) = out.block(ra, rb, na, nb).transpose();
        }
    return out;
}

MixedModelData MixedModelData::restrict(const IndexSet& columns, const IndexSet& effects,
                                        bool all_unpenalized) const {
    const auto n_rows = static_cast<Eigen::Index>(n());
    Matrix Xs(n_rows, static_cast<Eigen::Index>(columns.size()));
    std::vector<std::string> names;
    IndexSet unpen;
    std::vector<long> remap(p(), -1);
    for (std::size_t c = 0; c < columns.size(); ++c) {
        if (columns[c] >= p()) throw DimensionError("restricted column out of range");
        Xs.col(static_cast<Eigen::Index>(c)) = X_.col(static_cast<Eigen::Index>(columns[c]));
        names.push_back(column_names_[columns[c]]);
        remap[columns[c]] = static_cast<long>(c);
        if (all_unpenalized || contains(unpenalized_, columns[c])) unpen.push_back(c);
    }
    std::vector<RandomEffectSpec> kept;
    for (std::size_t k : effects) {
        RandomEffectSpec e = effects_.at(k);
        e.covariate = values_[k];
        if (e.covariate_column) {
            const long to = remap[*e.covariate_column];
            if (to >= 0)
                e.covariate_column = static_cast<std::size_t>(to);
            else
                e.covariate_column.reset();
        }
        kept.push_back(std::move(e));
    }
    return MixedModelData(y_, std::move(Xs), std::move(kept), std::move(unpen), std::move(names));
}

MixedModelData MixedModelData::without_effects() const {
    return MixedModelData(y_, X_, {}, unpenalized_, column_names_);
}

}  // namespace lmmsel
