#include "hypersde/linalg.hpp"

#include <unsupported/Eigen/MatrixFunctions>

namespace hypersde {

Mat expm(const Mat& a) {
    if (a.rows() != a.cols()) throw InvalidArgument("expm: matrix must be square");
    if (a.size() == 1) return Mat::Constant(1, 1, std::exp(a(0, 0)));
    return a.exp();
}

Mat controllability_matrix(const Mat& a, const Vec& b) {
    const long n = a.rows();
    Mat c(n, n);
    Vec col = b;
    for (long j = 0; j < n; ++j) {
        c.col(j) = col;
        col = a * col;
    }
    return c;
}

bool is_controllable(const Mat& a, const Vec& b) {
    if (a.rows() != a.cols() || b.size() != a.rows()) return false;
    const Mat c = controllability_matrix(a, b);
    Eigen::FullPivLU<Mat> lu(c);
    const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
    lu.setThreshold(1e-12 * scale);
    return lu.rank() == a.rows();
}

double min_symmetric_eigenvalue(const Mat& p) {
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(p), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

}  // namespace hypersde
