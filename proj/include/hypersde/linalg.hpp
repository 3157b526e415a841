#pragma once

#include "hypersde/types.hpp"

namespace hypersde {

/// Matrix exponential by scaling and squaring with a Pade approximant.
Mat expm(const Mat& a);

/// [B, AB, ..., A^{n-1} B].
Mat controllability_matrix(const Mat& a, const Vec& b);

bool is_controllable(const Mat& a, const Vec& b);

/// Symmetric part (P + P^T)/2.
inline Mat symmetrize(const Mat& p) { return 0.5 * (p + p.transpose()); }

/// Smallest eigenvalue of the symmetric part.
double min_symmetric_eigenvalue(const Mat& p);

}  // namespace hypersde
