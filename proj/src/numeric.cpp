#include "hufu/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hufu/common.hpp"

namespace hufu {

std::array<double, 3> svd3_singular_values(const std::array<float, 9>& m) {
    // columns of the working matrix
    double col[3][3];
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) col[c][r] = static_cast<double>(m[static_cast<std::size_t>(r * 3 + c)]);

    auto dot = [&](int a, int b) {
        return col[a][0] * col[b][0] + col[a][1] * col[b][1] + col[a][2] * col[b][2];
    };

    constexpr double eps = 1e-15;
    for (int sweep = 0; sweep < 60; ++sweep) {
        bool rotated = false;
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                const double alpha = dot(p, p);
                const double beta = dot(q, q);
                const double gamma = dot(p, q);
                if (std::fabs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (int r = 0; r < 3; ++r) {
                    const double vp = col[p][r], vq = col[q][r];
                    col[p][r] = c * vp - s * vq;
                    col[q][r] = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }

    std::array<double, 3> sv{std::sqrt(dot(0, 0)), std::sqrt(dot(1, 1)), std::sqrt(dot(2, 2))};
    std::sort(sv.begin(), sv.end(), std::greater<double>());
    return sv;
}

std::vector<std::size_t> assignment_max(const std::vector<double>& weights,
                                        std::size_t rows, std::size_t cols) {
    if (rows > cols) fail(ErrorKind::InvalidArgument, "assignment needs rows <= cols");
    if (weights.size() != rows * cols) fail(ErrorKind::InvalidArgument, "assignment weight matrix size mismatch");

    // Hungarian with potentials on the minimization problem cost = -weight,
    // 1-based arrays; way[j] tracks the augmenting path.
    const std::size_t n = rows, m = cols;
    const double INF = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<std::size_t> match(m + 1, 0); // column -> row
    std::vector<std::size_t> way(m + 1, 0);

    auto cost = [&](std::size_t i, std::size_t j) { return -weights[(i - 1) * m + (j - 1)]; };

    for (std::size_t i = 1; i <= n; ++i) {
        match[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(m + 1, INF);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = match[j0];
            double delta = INF;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0, j) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0 != 0);
    }

    std::vector<std::size_t> row_to_col(n, 0);
    for (std::size_t j = 1; j <= m; ++j)
        if (match[j] != 0) row_to_col[match[j] - 1] = j - 1;
    return row_to_col;
}

} // namespace hufu
