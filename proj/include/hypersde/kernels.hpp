#pragma once

#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "hypersde/params.hpp"

namespace hypersde {

enum class KernelName { uu, uv, vu, vv };

std::string_view to_string(KernelName name);

/// Scalar field sampled on the lattice nodes (i dx, j dx), 0 <= j <= i <= nx,
/// of the triangle {0 <= y <= x <= 1}.
class TriangleField {
public:
    TriangleField() = default;
    explicit TriangleField(int nx);

    int nx() const { return nx_; }
    double& at(int i, int j) { return data_[index(i, j)]; }
    double at(int i, int j) const { return data_[index(i, j)]; }

    /// Bilinear on full lattice cells, linear on the half cells cut by the
    /// diagonal. Exact at nodes. Throws InvalidArgument outside the triangle.
    double eval(double x, double y) const;

    double sup_norm() const;
    const std::vector<double>& data() const { return data_; }

private:
    std::size_t index(int i, int j) const {
        return static_cast<std::size_t>(i) * static_cast<std::size_t>(i + 1) / 2 +
               static_cast<std::size_t>(j);
    }
    int nx_ = 0;
    std::vector<double> data_;
};

/// Backstepping kernels K_uu, K_uv, K_vu, K_vv on the triangle and the
/// boundary gains gamma_alpha, gamma_beta (1 x n rows) on [0, 1].
///
/// The alpha/beta change of variables is
///   alpha = u + int_0^x (K_uu u + K_uv v) dy + gamma_alpha(x) X,
///   beta  = v + int_0^x (K_vu u + K_vv v) dy + gamma_beta(x) X.
class KernelSet {
public:
    KernelSet() = default;
    KernelSet(int nx, int n);

    int nx() const { return nx_; }
    int n() const { return n_; }
    double dx() const { return 1.0 / nx_; }

    TriangleField& field(KernelName name);
    const TriangleField& field(KernelName name) const;

    std::vector<RowVec>& gamma_alpha_nodes() { return gamma_alpha_; }
    std::vector<RowVec>& gamma_beta_nodes() { return gamma_beta_; }
    const std::vector<RowVec>& gamma_alpha_nodes() const { return gamma_alpha_; }
    const std::vector<RowVec>& gamma_beta_nodes() const { return gamma_beta_; }

    /// Clamped cubic-spline interpolants of the gamma nodes; the end slopes
    /// come from the gamma ODEs, so finalize() needs the plant parameters.
    RowVec gamma_alpha(double x) const;
    RowVec gamma_beta(double x) const;
    RowVec gamma_beta_prime(double x) const;

    /// Builds the interpolants. Call once the node values are final.
    void finalize(const SystemParams& params);

    double residual_norm = 0.0;
    int iterations = 0;
    double last_change = 0.0;

private:
    struct Splines;
    int nx_ = 0;
    int n_ = 0;
    TriangleField uu_, uv_, vu_, vv_;
    std::vector<RowVec> gamma_alpha_;
    std::vector<RowVec> gamma_beta_;
    std::shared_ptr<const Splines> splines_;
};

/// All-zero kernel set (the identity transform).
KernelSet zero_kernels(int nx, int n);

struct KernelSolverOptions {
    double tol = 1e-10;
    int max_iter = 200;
};

/// Successive approximation of the kernel equations along characteristics,
/// starting from the zero kernel. gamma_beta_0 is the imposed value of
/// gamma_beta at x = 0 (zero in the standard design). Throws NonConvergence
/// or NumericalError.
KernelSet solve_kernels(const SystemParams& params, int nx, const RowVec& gamma_beta_0,
                        const KernelSolverOptions& options = {});
KernelSet solve_kernels(const SystemParams& params, int nx,
                        const KernelSolverOptions& options = {});

/// One Picard sweep mapping `previous` to the next iterate.
KernelSet kernel_picard_sweep(const SystemParams& params, const RowVec& gamma_beta_0,
                              const KernelSet& previous);

double eval_kernel(const KernelSet& ks, KernelName which, double x, double y);

struct ResidualStat {
    double max = 0.0;
    double mean = 0.0;
};

/// Finite-difference residuals of every kernel relation on interior nodes.
struct KernelResiduals {
    ResidualStat transport_uu, transport_uv, transport_vu, transport_vv;
    ResidualStat gamma_alpha_ode, gamma_beta_ode;
    ResidualStat boundary_alpha, boundary_beta;
    ResidualStat diagonal_uv, diagonal_vu;

    /// Largest residual among the four transport PDEs and two gamma ODEs.
    double max_differential() const;
    /// Largest violation of the algebraic edge and diagonal identities.
    double max_algebraic() const;
};

/// Requires nx >= 8.
KernelResiduals kernel_residuals(const KernelSet& ks, const SystemParams& params);

}  // namespace hypersde
