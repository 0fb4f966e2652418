#include "nifs/singular_value.hpp"

#include "nifs/systems.hpp"

namespace nifs {

std::vector<std::vector<int>> index_subsets(int d, int m)
{
    if (m < 0 || m > d)
        throw std::invalid_argument("index_subsets: need 0 <= m <= d");
    std::vector<std::vector<int>> out;
    std::vector<int> current(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i)
        current[static_cast<std::size_t>(i)] = i;
    while (true) {
        out.push_back(current);
        int i = m - 1;
        while (i >= 0 && current[static_cast<std::size_t>(i)] == d - m + i)
            --i;
        if (i < 0)
            break;
        ++current[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < m; ++j)
            current[static_cast<std::size_t>(j)] = current[static_cast<std::size_t>(j - 1)] + 1;
    }
    return out;
}

Eigen::MatrixXd word_product(const AffineSystem& system, const Word& u)
{
    validate_word(system.profile(), u);
    Eigen::MatrixXd T = Eigen::MatrixXd::Identity(system.dimension(), system.dimension());
    for (std::size_t j = 0; j < u.size(); ++j)
        T = T * system.matrix(static_cast<int>(j) + 1, u[j]);
    return T;
}

double log_psi_word(const AffineSystem& system, const Word& u, double s)
{
    if (s < 0.0)
        throw DomainError("singular value function needs s >= 0");
    validate_word(system.profile(), u);
    LogWordProduct<double> product(system.dimension());
    for (std::size_t j = 0; j < u.size(); ++j)
        product.push(system.compounds(static_cast<int>(j) + 1, u[j]));
    return product.log_psi(s);
}

AlphaEnvelope alpha_envelope(const AffineSystem& system)
{
    return {system.alpha_minus(), system.alpha_plus()};
}

} // namespace nifs
