#include "hypersde/control.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hypersde/analysis.hpp"
#include "hypersde/linalg.hpp"
#include "hypersde/quadrature.hpp"
#include "lag_sum.hpp"

namespace hypersde {

namespace {
std::size_t at(int i) { return static_cast<std::size_t>(i); }
}  // namespace

double v_bs(const SystemParams& params, const Vec& u, const Vec& v, const Vec& X,
            const KernelSet& ks) {
    const int nx = ks.nx();
    if (u.size() != nx + 1 || v.size() != nx + 1)
        throw InvalidArgument("v_bs: profile size does not match the kernel grid");
    const double dx = ks.dx();
    const auto& vu = ks.field(KernelName::vu);
    const auto& vv = ks.field(KernelName::vv);
    double iu = 0.0, iv = 0.0;
    for (int j = 0; j <= nx; ++j) {
        const double w = (j == 0 || j == nx) ? 0.5 : 1.0;
        iu += w * vu.at(nx, j) * u(j);
        iv += w * vv.at(nx, j) * v(j);
    }
    return -params.rho * u(nx) - ks.gamma_beta_nodes().back().dot(X.transpose()) - dx * iu - dx * iv;
}

ArtsteinState::ArtsteinState(const Mat& A, const Vec& B, double dt, int delay_steps,
                             std::span<const double> history)
    : h_(delay_steps * dt), dt_(dt), L_(delay_steps), B_(B) {
    if (delay_steps < 1 || !(dt > 0.0)) throw InvalidArgument("artstein: empty delay window");
    if (static_cast<int>(history.size()) != delay_steps)
        throw InvalidArgument("artstein: history must hold exactly one delay window");
    if (A.rows() != A.cols() || B.size() != A.rows())
        throw InvalidArgument("artstein: shape mismatch");
    Bbar_ = expm(-A * h_) * B;
    expAdt_ = expm(A * dt);
    buffer_.assign(history.begin(), history.end());
    head_ = at(L_ - 1);
    S_ = Vec::Zero(A.rows());
    bool any = false;
    for (double v : buffer_) any = any || v != 0.0;
    if (any) {
        for (int i = 1; i <= L_; ++i) S_ += (dt * lag(i)) * (expm(A * (i * dt - h_)) * B);
    }
}

double ArtsteinState::lag(int i) const {
    if (i < 1 || i > L_) throw InvalidArgument("artstein: lag outside the window");
    return buffer_[(head_ + at(L_) - at(i - 1)) % at(L_)];
}

Vec ArtsteinState::predict(const Vec& X) const { return X + S_; }

void ArtsteinState::push(double value) {
    const double oldest = lag(L_);
    if (value != 0.0 || oldest != 0.0) S_ = expAdt_ * (S_ + dt_ * (Bbar_ * value - B_ * oldest));
    else if (S_.any()) S_ = expAdt_ * S_;
    head_ = (head_ + 1) % at(L_);
    buffer_[head_] = value;
}

Vec artstein_predict(const ArtsteinState& state, const Vec& X) { return state.predict(X); }

std::vector<std::complex<double>> default_poles(int n) {
    std::vector<std::complex<double>> p;
    for (int i = 0; i < n; ++i) p.emplace_back(-1.0 - 0.5 * i, 0.0);
    return p;
}

RowVec stabilizing_gain(const Mat& A, const Vec& B, double h,
                        const std::vector<std::complex<double>>& poles) {
    const long n = A.rows();
    if (A.cols() != n || B.size() != n) throw InvalidArgument("placement: shape mismatch");
    if (static_cast<long>(poles.size()) != n)
        throw InvalidArgument("placement: need exactly n poles");
    for (const auto& p : poles)
        if (!(p.real() < 0.0)) throw InvalidArgument("placement: poles must have negative real part");
    // conjugate closure
    std::vector<bool> used(poles.size(), false);
    for (std::size_t i = 0; i < poles.size(); ++i) {
        if (poles[i].imag() == 0.0 || used[i]) continue;
        bool found = false;
        for (std::size_t j = 0; j < poles.size() && !found; ++j) {
            if (j == i || used[j]) continue;
            if (std::abs(poles[j] - std::conj(poles[i])) <= 1e-12 * std::abs(poles[i])) {
                used[i] = used[j] = true;
                found = true;
            }
        }
        if (!found) throw InvalidArgument("placement: complex poles must come in conjugate pairs");
    }
    if (!is_controllable(A, B)) throw NotControllable("placement: (A, B) is not controllable");
    const Vec Bbar = expm(-A * h) * B;
    if (!is_controllable(A, Bbar)) throw NotControllable("placement: (A, Bbar) is not controllable");

    // characteristic polynomial coefficients, lowest degree first
    std::vector<std::complex<double>> c{1.0};
    for (const auto& p : poles) {
        std::vector<std::complex<double>> d(c.size() + 1, 0.0);
        for (std::size_t k = 0; k < c.size(); ++k) {
            d[k + 1] += c[k];
            d[k] -= p * c[k];
        }
        c = std::move(d);
    }
    Mat phiA = Mat::Zero(n, n);
    Mat power = Mat::Identity(n, n);
    for (std::size_t k = 0; k < c.size(); ++k) {
        phiA += c[k].real() * power;
        power = power * A;
    }
    const Mat C = controllability_matrix(A, Bbar);
    Vec e = Vec::Zero(n);
    e(n - 1) = 1.0;
    const Vec y = C.transpose().fullPivLu().solve(e);
    return y.transpose() * phiA;
}

namespace {

class FeedbackImpl final : public ControllerImpl {
    class Law final : public ControlLaw {
    public:
        Law(const RowVec& K, const Mat& A, const Vec& B, const ControlContext& ctx)
            : K_(K), art_(A, B, ctx.grid.dt, ctx.grid.delay_steps, ctx.history) {}
        double next(int, const Vec& X, std::span<const double>) override {
            const double v = -K_.dot(art_.predict(X).transpose());
            art_.push(v);
            return v;
        }

    private:
        RowVec K_;
        ArtsteinState art_;
    };

public:
    FeedbackImpl(RowVec K, Mat A, Vec B) : K_(std::move(K)), A_(std::move(A)), B_(std::move(B)) {}
    Controller::Kind kind() const override { return Controller::Kind::stabilizing_feedback; }
    std::unique_ptr<ControlLaw> start(const ControlContext& ctx) const override {
        return std::make_unique<Law>(K_, A_, B_, ctx);
    }

private:
    RowVec K_;
    Mat A_;
    Vec B_;
};

}  // namespace

Controller feedback_controller(const RowVec& K, const DelayedSdeModel& model) {
    if (K.size() != model.A.rows()) throw InvalidArgument("feedback: gain must be 1 x n");
    return Controller(std::make_shared<FeedbackImpl>(K, model.A, model.B));
}

LqWeights LqWeights::constant(const Mat& Q, double R) {
    if (Q.rows() != Q.cols()) throw InvalidArgument("lq: Q must be square");
    if (!(R > 0.0)) throw InvalidArgument("lq: R must be positive");
    if (min_symmetric_eigenvalue(Q) < -1e-12 || (Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw InvalidArgument("lq: Q must be symmetric positive semidefinite");
    LqWeights w;
    w.Q = [Q](double) { return Q; };
    w.R = [R](double) { return R; };
    return w;
}

Mat LqWeights::Qbar(double t, double h, const Mat& expAh) const {
    return symmetrize(expAh.transpose() * Q(t + h) * expAh);
}

Mat LqSolution::P_at(double t) const {
    const double s = std::clamp(t / dt, 0.0, static_cast<double>(K));
    const int k = std::min(static_cast<int>(std::floor(s)), std::max(0, K - 1));
    if (K == 0) return P[0];
    const double a = s - k;
    const double h00 = (1 + 2 * a) * (1 - a) * (1 - a);
    const double h10 = a * (1 - a) * (1 - a);
    const double h01 = a * a * (3 - 2 * a);
    const double h11 = a * a * (a - 1);
    return h00 * P[at(k)] + h10 * dt * Pdot[at(k)] + h01 * P[at(k + 1)] + h11 * dt * Pdot[at(k + 1)];
}

Mat LqSolution::Pi_at(double t) const {
    return P_at(t) * Bbar * (Bbar.transpose() / R(t)) - A;
}

Mat LqSolution::phi_kernel(int k, int j) const {
    if (k < 0 || k > K || j < 1 || j > L) throw InvalidArgument("phi kernel index out of range");
    const int nn = n() * n();
    const std::size_t off = (at(k) * at(L) + at(j - 1)) * at(nn);
    return Eigen::Map<const Mat>(F_flat.data() + off, n(), n());
}

LqSolution solve_riccati(const LqWeights& weights, const Mat& A, const Vec& Bbar, double h,
                         double T_minus_h, double dt) {
    if (!(dt > 0.0) || !(T_minus_h > 0.0)) throw InvalidArgument("riccati: empty horizon");
    const double steps = T_minus_h / dt;
    const int K = static_cast<int>(std::llround(steps));
    if (K < 1 || std::abs(steps - K) > 1e-9 * std::max(1.0, steps))
        throw InvalidArgument("riccati: dt must divide T - h");

    LqSolution lq;
    lq.dt = dt;
    lq.h = h;
    lq.K = K;
    lq.A = A;
    lq.Bbar = Bbar;
    lq.expAh = expm(A * h);
    lq.R = weights.R;
    const Mat eAh = lq.expAh;
    lq.Qbar = [weights, h, eAh](double t) { return weights.Qbar(t, h, eAh); };

    const auto rhs = [&](double t, const Mat& P) -> Mat {
        const Vec PB = P * Bbar;
        return -A.transpose() * P - P * A - lq.Qbar(t) + PB * (PB.transpose() / weights.R(t));
    };
    const long n = A.rows();
    lq.P.assign(at(K + 1), Mat::Zero(n, n));
    lq.Pdot.assign(at(K + 1), Mat::Zero(n, n));
    lq.Pdot[at(K)] = rhs(K * dt, lq.P[at(K)]);
    for (int k = K - 1; k >= 0; --k) {
        const double t1 = (k + 1) * dt;
        const Mat& P1 = lq.P[at(k + 1)];
        const Mat k1 = rhs(t1, P1);
        const Mat k2 = rhs(t1 - 0.5 * dt, P1 - 0.5 * dt * k1);
        const Mat k3 = rhs(t1 - 0.5 * dt, P1 - 0.5 * dt * k2);
        const Mat k4 = rhs(k * dt, P1 - dt * k3);
        Mat P0 = symmetrize(P1 - (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
        if (!P0.allFinite())
            throw NumericalError("riccati: non-finite P at step " + std::to_string(k));
        lq.P[at(k)] = P0;
        lq.Pdot[at(k)] = rhs(k * dt, P0);
    }
    return lq;
}

namespace {

void build_phi_table(LqSolution& lq) {
    const int n = lq.n(), K = lq.K, L = lq.L;
    const double dt = lq.dt;
    const std::size_t nn = at(n * n);
    lq.F_flat.assign(at(K + 1) * at(L) * nn, 0.0);
    bool any = false;
    for (const auto& g : lq.Gamma_lags) any = any || g.any();
    if (!any) return;

    const Mat I = Mat::Identity(n, n);
    std::vector<Mat> H;  // H[m] = Phi(t_k, t_k + m dt) P(t_k + m dt)
    for (int k = 0; k <= K; ++k) {
        const int span_max = std::min(L - 1, K - k);
        H.assign(at(span_max + 1), Mat::Zero(n, n));
        Mat Phi = I;
        for (int m = 0; m <= span_max; ++m) {
            const double tau = (k + m) * dt;
            H[at(m)] = Phi * lq.P[at(k + m)];
            if (m == span_max) break;
            // d/dtau Phi(t, tau) = -Phi(t, tau) Pi(tau)
            const Mat k1 = -Phi * lq.Pi_at(tau);
            const Mat k2 = -(Phi + 0.5 * dt * k1) * lq.Pi_at(tau + 0.5 * dt);
            const Mat k3 = -(Phi + 0.5 * dt * k2) * lq.Pi_at(tau + 0.5 * dt);
            const Mat k4 = -(Phi + dt * k3) * lq.Pi_at(tau + dt);
            Phi += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        for (int j = 1; j <= L; ++j) {
            const int mj = std::min(L - j, K - k);
            if (mj <= 0) continue;
            const auto w = quad::uniform_weights(mj);
            Mat acc = Mat::Zero(n, n);
            for (int m = 0; m <= mj; ++m) acc += w[at(m)] * H[at(m)] * lq.Gamma_lags[at(m + j)];
            acc *= dt;
            std::copy(acc.data(), acc.data() + nn,
                      lq.F_flat.begin() + static_cast<std::ptrdiff_t>((at(k) * at(L) + at(j - 1)) * nn));
        }
    }
}

}  // namespace

LqSolution solve_lq(const SystemParams& params, const KernelSet& ks, const DelayedSdeModel& model,
                    const LqWeights& weights, const SpaceTimeGrid& grid) {
    const int L = grid.delay_steps;
    const double dt = grid.dt;
    const Vec Bbar = expm(-model.A * model.h) * model.B;
    LqSolution lq = solve_riccati(weights, model.A, Bbar, model.h, (grid.nt - L) * dt, dt);
    lq.L = L;
    lq.B = model.B;
    lq.g_lags.resize(at(L + 1));
    lq.Gamma_lags.resize(at(L + 1));
    for (int j = 0; j <= L; ++j) {
        lq.g_lags[at(j)] = g_function(params, ks, j * dt);
        lq.Gamma_lags[at(j)] = gamma_fn(params, ks, j * dt);
    }
    lq.g_lags[at(L)].setZero();
    lq.g_flat = detail::flatten(lq.g_lags);
    build_phi_table(lq);
    return lq;
}

void set_gamma(LqSolution& lq, std::vector<Mat> gamma_lags) {
    if (static_cast<int>(gamma_lags.size()) != lq.L + 1)
        throw InvalidArgument("set_gamma: need L + 1 samples");
    lq.Gamma_lags = std::move(gamma_lags);
    build_phi_table(lq);
}

Mat fundamental_matrix(const LqSolution& lq, double t, double tau) {
    const double end = lq.K * lq.dt;
    const double slack = 1e-12 * std::max(1.0, end);
    if (t < -slack || tau < -slack || t > end + slack || tau > end + slack)
        throw InvalidArgument("fundamental_matrix: times outside [0, T - h]");
    const long n = lq.A.rows();
    Mat Phi = Mat::Identity(n, n);
    if (t == tau) return Phi;
    const int m = std::max(1, static_cast<int>(std::ceil(std::abs(t - tau) / lq.dt - 1e-9)));
    const double hs = (t - tau) / m;
    double s = tau;
    for (int i = 0; i < m; ++i) {
        const Mat k1 = lq.Pi_at(s) * Phi;
        const Mat k2 = lq.Pi_at(s + 0.5 * hs) * (Phi + 0.5 * hs * k1);
        const Mat k3 = lq.Pi_at(s + 0.5 * hs) * (Phi + 0.5 * hs * k2);
        const Mat k4 = lq.Pi_at(s + hs) * (Phi + hs * k3);
        Phi += (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        s = tau + (i + 1) * hs;
    }
    return Phi;
}

Vec compute_phi(const LqSolution& lq, std::span<const double> past_increments,
                const Profile& sigma, int k) {
    const int n = lq.n();
    Vec phi = Vec::Zero(n);
    if (k < 0 || k > lq.K || lq.F_flat.empty()) return phi;
    if (static_cast<int>(past_increments.size()) < k)
        throw InvalidArgument("compute_phi: not enough increments");
    const std::size_t nn = at(n * n);
    for (int j = 1; j <= std::min(lq.L, k); ++j) {
        const Vec z = sigma.vec((k - j) * lq.dt) * past_increments[at(k - j)];
        const std::size_t off = (at(k) * at(lq.L) + at(j - 1)) * nn;
        phi += Eigen::Map<const Mat>(lq.F_flat.data() + off, n, n) * z;
    }
    return phi;
}

namespace {

class LqImpl final : public ControllerImpl {
    class Law final : public ControlLaw {
    public:
        Law(std::shared_ptr<const LqSolution> lq, const Profile& sigma, const ControlContext& ctx)
            : lq_(std::move(lq)),
              art_(lq_->A, lq_->B, ctx.grid.dt, ctx.grid.delay_steps, ctx.history),
              noise_(sigma, ctx.grid.dt, lq_->n()) {
            if (std::abs(ctx.grid.dt - lq_->dt) > 1e-12 * lq_->dt || ctx.grid.delay_steps != lq_->L)
                throw InvalidArgument("lq controller: grid differs from the LQ solution grid");
        }
        double next(int k, const Vec& X, std::span<const double> inc) override {
            noise_.catch_up(inc.data(), k);
            const LqSolution& lq = *lq_;
            double v = 0.0;
            if (k <= lq.K) {
                const int n = lq.n();
                const int last = std::min(lq.L, k);
                Vec ybar = art_.predict(X);
                detail::lag_sum(lq.g_flat.data(), n, noise_.z(), k, 1, last, ybar.data());
                Vec phi = Vec::Zero(n);
                if (!lq.F_flat.empty() && last >= 1) {
                    const double* row = lq.F_flat.data() + at(k) * at(lq.L) * at(n * n);
                    // F(k, j) lives at slot j - 1, hence the shifted base pointer
                    detail::lag_sum(row - at(n * n), n, noise_.z(), k, 1, last, phi.data());
                }
                v = -lq.Bbar.dot(lq.P[at(k)] * ybar + phi) / lq.R(k * lq.dt);
            }
            art_.push(v);
            return v;
        }

    private:
        std::shared_ptr<const LqSolution> lq_;
        ArtsteinState art_;
        detail::NoiseRecord noise_;
    };

public:
    LqImpl(std::shared_ptr<const LqSolution> lq, Profile sigma)
        : lq_(std::move(lq)), sigma_(std::move(sigma)) {}
    Controller::Kind kind() const override { return Controller::Kind::lq_optimal; }
    std::unique_ptr<ControlLaw> start(const ControlContext& ctx) const override {
        return std::make_unique<Law>(lq_, sigma_, ctx);
    }

private:
    std::shared_ptr<const LqSolution> lq_;
    Profile sigma_;
};

}  // namespace

Controller lq_controller(std::shared_ptr<const LqSolution> lq, const Profile& sigma) {
    if (!lq) throw InvalidArgument("lq controller: null solution");
    if (lq->g_flat.empty()) throw InvalidArgument("lq controller: solution lacks the g table");
    return Controller(std::make_shared<LqImpl>(std::move(lq), sigma));
}

}  // namespace hypersde
