#ifndef NIFS_SINGULAR_VALUE_HPP
#define NIFS_SINGULAR_VALUE_HPP

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "nifs/code_space.hpp"
#include "nifs/error.hpp"

namespace nifs {

class AffineSystem;

template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Largest condition number accepted as nonsingular.
inline constexpr double kMaxCondition = 1e14;

/// α_1 >= ... >= α_d > 0, the semi-axes of T(B).
template <class Scalar>
struct SingularSpectrum {
    VectorX<Scalar> values;

    Eigen::Index dimension() const { return values.size(); }
    Scalar product() const { return values.prod(); }
};

template <class Derived>
SingularSpectrum<typename Derived::Scalar> singular_values(const Eigen::MatrixBase<Derived>& T)
{
    using Scalar = typename Derived::Scalar;
    if (T.rows() != T.cols() || T.rows() == 0)
        throw std::invalid_argument("singular_values: expected a non-empty square matrix");
    // Two-sided Jacobi keeps small singular values accurate relative to their size.
    Eigen::JacobiSVD<MatrixX<Scalar>> svd(T.eval());
    SingularSpectrum<Scalar> out{svd.singularValues()};
    const Scalar top = out.values(0);
    const Scalar bottom = out.values(out.values.size() - 1);
    if (!(bottom > Scalar(0)) || top / bottom > Scalar(kMaxCondition))
        throw SingularMatrixError("singular_values: matrix is numerically singular");
    return out;
}

/**
 * Singular value function from log singular values (sorted nonincreasing).
 *
 * For m-1 < s <= m <= d: log(α_1 ... α_{m-1} α_m^{s-m+1}); for s > d: (s/d) log|det T|.
 */
template <class Scalar>
Scalar log_psi_from_log_values(std::span<const Scalar> log_alpha, Scalar s)
{
    if (s < Scalar(0))
        throw DomainError("singular value function needs s >= 0");
    const auto d = static_cast<Scalar>(log_alpha.size());
    Scalar sum = 0;
    if (s > d) {
        for (auto v : log_alpha)
            sum += v;
        return sum * s / d;
    }
    if (s == Scalar(0))
        return 0;
    const auto m = static_cast<std::size_t>(std::ceil(s));
    for (std::size_t i = 0; i + 1 < m; ++i)
        sum += log_alpha[i];
    return sum + (s - static_cast<Scalar>(m) + 1) * log_alpha[m - 1];
}

/**
 * Same function from the prefix products P_m = α_1 ... α_m, given as log P_0 = 0, log P_1, ..., log P_d.
 * ψ^s = P_{m-1}^{m-s} P_m^{s-m+1} for m-1 < s <= m.
 */
template <class Scalar>
Scalar log_psi_from_prefix(std::span<const Scalar> log_prefix, Scalar s)
{
    if (s < Scalar(0))
        throw DomainError("singular value function needs s >= 0");
    const auto d = static_cast<Scalar>(log_prefix.size() - 1);
    if (s > d)
        return log_prefix.back() * s / d;
    if (s == Scalar(0))
        return 0;
    const auto m = static_cast<std::size_t>(std::ceil(s));
    const Scalar frac = s - static_cast<Scalar>(m) + 1;
    return (1 - frac) * log_prefix[m - 1] + frac * log_prefix[m];
}

template <class Scalar>
Scalar psi_s(const SingularSpectrum<Scalar>& spectrum, Scalar s)
{
    VectorX<Scalar> logs = spectrum.values.array().log();
    return std::exp(log_psi_from_log_values<Scalar>({logs.data(), static_cast<std::size_t>(logs.size())}, s));
}

template <class Derived>
typename Derived::Scalar psi_s(const Eigen::MatrixBase<Derived>& T, typename Derived::Scalar s)
{
    if (s < 0)
        throw DomainError("singular value function needs s >= 0");
    return psi_s(singular_values(T), s);
}

/// All m-element subsets of {0, ..., d-1} in lexicographic order.
std::vector<std::vector<int>> index_subsets(int d, int m);

/// The m-th compound matrix: minors of T indexed by lexicographically ordered m-subsets.
/// Compounds are multiplicative, and the spectral norm of the m-th compound is α_1 ... α_m.
template <class Derived>
MatrixX<typename Derived::Scalar> compound_matrix(const Eigen::MatrixBase<Derived>& T, int m)
{
    using Scalar = typename Derived::Scalar;
    const int d = static_cast<int>(T.rows());
    if (m == 1)
        return T;
    const auto subsets = index_subsets(d, m);
    const auto n = static_cast<Eigen::Index>(subsets.size());
    MatrixX<Scalar> C(n, n);
    MatrixX<Scalar> minor(m, m);
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = 0; b < n; ++b) {
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < m; ++j)
                    minor(i, j) = T(subsets[a][i], subsets[b][j]);
            C(a, b) = minor.determinant();
        }
    return C;
}

/// Spectral norm; closed form for 1x1 and 2x2.
template <class Scalar>
Scalar spectral_norm(const MatrixX<Scalar>& A)
{
    if (A.rows() == 1 && A.cols() == 1)
        return std::abs(A(0, 0));
    if (A.rows() == 2 && A.cols() == 2) {
        const Scalar f = A.squaredNorm();
        const Scalar det = A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0);
        const Scalar disc = std::sqrt(std::max(Scalar(0), (f - 2 * det) * (f + 2 * det)));
        return std::sqrt((f + disc) / 2);
    }
    Eigen::JacobiSVD<MatrixX<Scalar>> svd(A);
    return svd.singularValues()(0);
}

/// The compound matrices of one map, precomputed for repeated products.
template <class Scalar>
struct CompoundSet {
    std::vector<MatrixX<Scalar>> compounds; // compounds[m-1] is the m-th compound, m < d
    Scalar log_abs_det = 0;

    CompoundSet() = default;

    template <class Derived>
    explicit CompoundSet(const Eigen::MatrixBase<Derived>& T)
    {
        const int d = static_cast<int>(T.rows());
        for (int m = 1; m < d; ++m)
            compounds.push_back(compound_matrix(T, m));
        log_abs_det = std::log(std::abs(T.determinant()));
    }
};

/**
 * Running product T_1 T_2 ... T_k tracked through its compound matrices in log-scaled form.
 *
 * Each compound product is kept as exp(log_scale) * N with N renormalized every
 * `kRenormalizeEvery` multiplications, so log(α_1 ... α_m) of long products is available
 * without underflow and without losing the small singular values to cancellation.
 */
template <class Scalar>
class LogWordProduct {
public:
    static constexpr int kRenormalizeEvery = 32;

    LogWordProduct() = default;
    explicit LogWordProduct(int d) : d_(d)
    {
        for (int m = 1; m < d; ++m) {
            const auto n = static_cast<Eigen::Index>(index_subsets(d, m).size());
            scaled_.push_back(MatrixX<Scalar>::Identity(n, n));
            log_scale_.push_back(0);
        }
        tmp_.resize(scaled_.size());
    }

    int dimension() const noexcept { return d_; }
    int length() const noexcept { return length_; }

    void push(const CompoundSet<Scalar>& map)
    {
        for (std::size_t i = 0; i < scaled_.size(); ++i) {
            tmp_[i].noalias() = scaled_[i] * map.compounds[i];
            std::swap(tmp_[i], scaled_[i]);
        }
        log_abs_det_ += map.log_abs_det;
        if (++length_ % kRenormalizeEvery == 0)
            renormalize();
    }

    /// log P_0 = 0, log P_1, ..., log P_d where P_m = α_1 ... α_m of the current product.
    std::vector<Scalar> log_prefix_products() const
    {
        std::vector<Scalar> out(static_cast<std::size_t>(d_) + 1, Scalar(0));
        for (std::size_t i = 0; i < scaled_.size(); ++i)
            out[i + 1] = log_scale_[i] + std::log(spectral_norm(scaled_[i]));
        out[static_cast<std::size_t>(d_)] = log_abs_det_;
        return out;
    }

    Scalar log_psi(Scalar s) const
    {
        const auto prefix = log_prefix_products();
        return log_psi_from_prefix<Scalar>(prefix, s);
    }

    void renormalize()
    {
        for (std::size_t i = 0; i < scaled_.size(); ++i) {
            const Scalar scale = scaled_[i].cwiseAbs().maxCoeff();
            if (scale > Scalar(0)) {
                scaled_[i] /= scale;
                log_scale_[i] += std::log(scale);
            }
        }
    }

private:
    int d_ = 0;
    int length_ = 0;
    std::vector<MatrixX<Scalar>> scaled_;
    std::vector<MatrixX<Scalar>> tmp_;
    std::vector<Scalar> log_scale_;
    Scalar log_abs_det_ = 0;
};

/// T_u = T_{1,u_1} ... T_{k,u_k}; identity for the empty word.
Eigen::MatrixXd word_product(const AffineSystem& system, const Word& u);

/// log ψ^s(T_u) computed through the log-scaled compound product, safe for long words.
double log_psi_word(const AffineSystem& system, const Word& u, double s);

struct AlphaEnvelope {
    double alpha_minus; ///< inf of the smallest singular values over the stored table
    double alpha_plus;  ///< sup of the largest singular values over the stored table

    /// α_-^{s k} <= ψ^s(T_u) <= α_+^{s k}, checked in log form with relative slack.
    bool contains(double log_psi, int k, double s, double slack = 1e-10) const
    {
        const double lo = s * k * std::log(alpha_minus);
        const double hi = s * k * std::log(alpha_plus);
        const double tol = slack * (1.0 + std::abs(lo));
        return log_psi >= lo - tol && log_psi <= hi + tol;
    }
};

AlphaEnvelope alpha_envelope(const AffineSystem& system);

} // namespace nifs

#endif // NIFS_SINGULAR_VALUE_HPP
