#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kbc {

// Discrete torus Z^2/(2N+1)Z^2. Sites and frequencies are stored at index
// (k mod side); centered() recovers the representative in {-N..N}.
struct Torus {
    int N = 0;
    int side = 1;
    double eps = 2.0;

    Torus() = default;
    explicit Torus(int n) : N(n), side(2 * n + 1), eps(2.0 / (2.0 * n + 1.0))
    {
        if (n < 1) throw std::invalid_argument("torus: N must be positive, got " + std::to_string(n));
    }

    std::size_t size() const { return static_cast<std::size_t>(side) * side; }

    int wrap(int k) const
    {
        int r = k % side;
        return r < 0 ? r + side : r;
    }

    int centered(int i) const { return i > N ? i - side : i; }

    std::size_t index(int k1, int k2) const
    {
        return static_cast<std::size_t>(wrap(k1)) * side + wrap(k2);
    }

    bool operator==(const Torus& o) const { return N == o.N; }
};

} // namespace kbc
