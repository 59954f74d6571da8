#include "conedef/triple.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <vector>

#include <Eigen/Dense>

namespace conedef {

namespace {

constexpr double kSqrt2 = 1.4142135623730951;

Mat2 quarter_turn() {
    Mat2 J;
    J << 0, -1, 1, 0;
    return J;
}

// Square roots of a per-node complex field, continuous along the standard
// row-then-column sweep and equal to the principal branch at index (0, 0).
// A neighbor jump beyond 0.5 means the root field itself is discontinuous
// (a branch flip that no sign choice repairs), which aborts.
void tracked_sqrt(const GridChart& chart, const Field& tau, Field& theta, const char* label) {
    const int nu = chart.axes[0].count, nv = chart.axes[1].count;
    const bool cplx = tau.ncomp == 2;
    for (int iu = 0; iu < nu; ++iu) {
        for (int iv = 0; iv < nv; ++iv) {
            const int idx[2] = {iu, iv};
            const std::size_t at = chart.flat(idx);
            Cplx t = cplx ? Cplx(tau.at(at, 0), tau.at(at, 1)) : Cplx(tau.at(at, 0), 0.0);
            Cplx root = std::sqrt(t);
            if (iu == 0 && iv == 0) {
                // anchor: principal branch
            } else {
                const int pdx[2] = {iv > 0 ? iu : iu - 1, iv > 0 ? iv - 1 : 0};
                const std::size_t pat = chart.flat(pdx);
                Cplx prev = cplx ? Cplx(theta.at(pat, 0), theta.at(pat, 1))
                                 : Cplx(theta.at(pat, 0), 0.0);
                if (std::abs(-root - prev) < std::abs(root - prev)) root = -root;
                if (std::abs(root - prev) > 0.5 * (1.0 + std::abs(prev)))
                    fail(std::string(label) + " square root branch flips at node " +
                         node_label(chart, at));
            }
            theta.at(at, 0) = root.real();
            if (cplx) theta.at(at, 1) = root.imag();
        }
    }
}

Cplx dzbar_cplx(const Field& f, const int* idx) {
    const Cplx du(d1(f, idx, 0, 0), d1(f, idx, 0, 1));
    const Cplx dv(d1(f, idx, 1, 0), d1(f, idx, 1, 1));
    return 0.5 * (du + Cplx(0, 1) * dv);
}

Cplx dz_cplx(const Field& f, const int* idx) {
    const Cplx du(d1(f, idx, 0, 0), d1(f, idx, 0, 1));
    const Cplx dv(d1(f, idx, 1, 0), d1(f, idx, 1, 1));
    return 0.5 * (du - Cplx(0, 1) * dv);
}

void check_uv_axes(const GridChart& a, const GridChart& b, const std::string& what) {
    for (int ax = 0; ax < 2; ++ax) {
        const bool same = a.axes[ax].count == b.axes[ax].count &&
                          std::abs(a.axes[ax].origin - b.axes[ax].origin) <= 1e-9 &&
                          std::abs(a.axes[ax].spacing - b.axes[ax].spacing) <= 1e-9;
        require(same, what);
    }
}

} // namespace

Mat2 bar_D(const BarTriple& T, int i, std::size_t at) {
    require(i == 1 || i == 2, "endomorphism index must be 1 or 2");
    const Field& th = (i == 1) ? T.theta1 : T.theta2;
    Mat2 D;
    if (T.kind == ConjugateKind::hyperbolic) {
        const double t = th.at(at, 0);
        D << t, 0, 0, 1.0 / t;
    } else if (T.kind == ConjugateKind::elliptic) {
        const double a = th.at(at, 0), b = th.at(at, 1);
        D = a * Mat2::Identity() + b * quarter_turn();
    } else {
        fail("triple holds no reconstruction");
    }
    return D / kSqrt2;
}

BarTriple reconstruct_bar_triple(const ConjugateData& cd, const HyperbolicTransport& t,
                                 double tol_disc) {
    require(cd.kind == ConjugateKind::hyperbolic,
            "real-conjugate reconstruction needs a hyperbolic chart");
    const GridChart& chart = t.phiU.chart;
    BarTriple T;
    T.kind = ConjugateKind::hyperbolic;
    T.chart = chart;
    T.theta1 = Field::zeros(chart, 1);
    T.theta2 = Field::zeros(chart, 1);
    T.tau1 = Field::zeros(chart, 1);
    T.tau2 = Field::zeros(chart, 1);
    T.alpha = Field::zeros(chart, 1);
    T.beta = Field::zeros(chart, 1);
    T.psiu = Field::zeros(chart, 1);
    T.psiv = Field::zeros(chart, 1);

    Field invtau1 = Field::zeros(chart, 1);
    for (std::size_t at = 0; at < chart.size(); ++at) {
        const double pU = t.phiU.at(at, 0), pV = t.phiV.at(at, 0);
        require(std::abs(pU) > 1e-14 && std::abs(pV) > 1e-14,
                "degenerate candidate: transport vanishes at node " + node_label(chart, at));
        const double a = 2.0 + 1.0 / pU;
        const double b = 2.0 + 1.0 / pV;
        require(a > tol_disc && b > tol_disc && a * b - 4.0 > tol_disc,
                "degenerate candidate: admissibility fails at node " + node_label(chart, at));
        const double disc = (a / b) * (a * b - 4.0);
        const double s = std::sqrt(disc);
        T.alpha.at(at, 0) = a;
        T.beta.at(at, 0) = b;
        T.tau1.at(at, 0) = 0.5 * (a - s);
        T.tau2.at(at, 0) = 0.5 * (a + s);
        invtau1.at(at, 0) = 1.0 / T.tau1.at(at, 0);
    }
    tracked_sqrt(chart, T.tau1, T.theta1, "first");
    tracked_sqrt(chart, T.tau2, T.theta2, "second");

    // One-form from the first-index transport identities; the second index is
    // left to verify_bar_triple as a consistency residual.
    for (std::size_t at = 0; at < chart.size(); ++at) {
        int idx[2];
        chart.unflat(at, idx);
        const double g1 = cd.gamma1.at(at, 0), g2 = cd.gamma2.at(at, 0);
        const double t1 = T.tau1.at(at, 0);
        const double th12 = T.theta1.at(at, 0) * T.theta2.at(at, 0);
        const double du_inv = d1(invtau1, idx, 0, 0);
        const double dv_tau = d1(T.tau1, idx, 1, 0);
        T.psiu.at(at, 0) = 0.5 * th12 * (du_inv + 2.0 * (1.0 / t1 - 1.0) * g2);
        T.psiv.at(at, 0) = (dv_tau + 2.0 * (t1 - 1.0) * g1) / (2.0 * th12);
    }
    return T;
}

BarTriple reconstruct_bar_triple_elliptic(const ConjugateData& cd, const EllipticTransport& t,
                                          double tol_disc) {
    require(cd.kind == ConjugateKind::elliptic,
            "complex-conjugate reconstruction needs an elliptic chart");
    const GridChart& chart = t.phi.chart;
    BarTriple T;
    T.kind = ConjugateKind::elliptic;
    T.chart = chart;
    T.theta1 = Field::zeros(chart, 2);
    T.theta2 = Field::zeros(chart, 2);
    T.tau1 = Field::zeros(chart, 2);
    T.tau2 = Field::zeros(chart, 2);
    T.alpha = Field::zeros(chart, 2);
    T.psiu = Field::zeros(chart, 1);
    T.psiv = Field::zeros(chart, 1);
    T.psizbar = Field::zeros(chart, 2);

    for (std::size_t at = 0; at < chart.size(); ++at) {
        const Cplx phi = cplx_at(t.phi, at);
        require(std::abs(phi) > 1e-14,
                "degenerate candidate: transport vanishes at node " + node_label(chart, at));
        const Cplx a = 2.0 + 1.0 / phi;
        const double aa = std::abs(a);
        require(aa > tol_disc && 4.0 - aa * aa > tol_disc,
                "degenerate candidate: admissibility fails at node " + node_label(chart, at));
        const double s = std::sqrt(4.0 - aa * aa) / aa;
        cplx_set(T.alpha, at, a);
        cplx_set(T.tau1, at, 0.5 * a * Cplx(1.0, s));
        cplx_set(T.tau2, at, 0.5 * a * Cplx(1.0, -s));
    }
    tracked_sqrt(chart, T.tau1, T.theta1, "first");
    tracked_sqrt(chart, T.tau2, T.theta2, "second");

    for (std::size_t at = 0; at < chart.size(); ++at) {
        int idx[2];
        chart.unflat(at, idx);
        const Cplx G = cplx_at(cd.gammaC, at);
        const Cplx t1 = cplx_at(T.tau1, at);
        const Cplx th12 = cplx_at(T.theta1, at) * cplx_at(T.theta2, at);
        const Cplx pz = (dzbar_cplx(T.tau1, idx) + 2.0 * (t1 - 1.0) * G) / (2.0 * th12);
        cplx_set(T.psizbar, at, pz);
        // real components of the form from psi = psi^z dz + psi^zbar dzbar
        // with psi^z the conjugate
        T.psiu.at(at, 0) = 2.0 * pz.real();
        T.psiv.at(at, 0) = 2.0 * pz.imag();
    }
    return T;
}

BarConditionReport verify_bar_triple(const SurfaceChart& S, const ConjugateData& cd,
                                     const BarTriple& T) {
    require(T.kind != ConjugateKind::none, "triple holds no reconstruction");
    check_uv_axes(S.chart, T.chart, "triple chart does not match the surface chart");
    const GridChart& chart = T.chart;
    const int nu = chart.axes[0].count, nv = chart.axes[1].count;

    // Matrix entries tabulated so the exchange residual can differentiate them.
    Field D1f = Field::zeros(chart, 4), D2f = Field::zeros(chart, 4);
    Field invtau2 = Field::zeros(chart, T.tau2.ncomp);
    for (std::size_t at = 0; at < chart.size(); ++at) {
        const Mat2 D1 = bar_D(T, 1, at), D2 = bar_D(T, 2, at);
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) {
                D1f.at(at, 2 * r + c) = D1(r, c);
                D2f.at(at, 2 * r + c) = D2(r, c);
            }
        if (T.kind == ConjugateKind::hyperbolic) {
            invtau2.at(at, 0) = 1.0 / T.tau2.at(at, 0);
        }
    }

    BarConditionReport rep;
    for (int iu = 0; iu < nu; ++iu) {
        for (int iv = 0; iv < nv; ++iv) {
            const int idx[2] = {iu, iv};
            const std::size_t at = chart.flat(idx);
            Mat2 D1, D2;
            for (int r = 0; r < 2; ++r)
                for (int c = 0; c < 2; ++c) {
                    D1(r, c) = D1f.at(at, 2 * r + c);
                    D2(r, c) = D2f.at(at, 2 * r + c);
                }
            rep.det_residual.feed(D1.determinant() - 0.5, at);
            rep.det_residual.feed(D2.determinant() - 0.5, at);
            const GenuinenessMargins gm = genuineness_margins(D1, D2);
            rep.margin_squares.feed(gm.squares, at);
            rep.margin_rank.feed(gm.rank, at);
            if (!chart.interior(idx, 1)) continue;

            const SurfaceJet j = S.jet(iu, iv);
            const Metric2 m = induced_metric(S.model, j);
            const Christoffels2 ch = christoffels(S.model, j);
            Mat2 Gm;
            Gm << m.E, m.F, m.F, m.G;
            Mat2 Gu, Gv; // (a, d) -> Gamma^a_{ud} resp. Gamma^a_{vd}
            Gu << ch.uu[0], ch.uv[0], ch.uu[1], ch.uv[1];
            Gv << ch.uv[0], ch.vv[0], ch.uv[1], ch.vv[1];

            auto covariant = [&](const Field& Df, const Mat2& D, const Mat2& G, int axis) {
                Mat2 dD;
                for (int r = 0; r < 2; ++r)
                    for (int c = 0; c < 2; ++c) dD(r, c) = d1(Df, idx, axis, 2 * r + c);
                return Mat2(dD + G * D - D * G);
            };
            const double psu = T.psiu.at(at, 0), psv = T.psiv.at(at, 0);
            for (int i = 1; i <= 2; ++i) {
                const Mat2& Di = (i == 1) ? D1 : D2;
                const Mat2& Dj = (i == 1) ? D2 : D1;
                const Field& Dif = (i == 1) ? D1f : D2f;
                const double sj = (i == 1) ? 1.0 : -1.0;
                const Vec2 lhs =
                    covariant(Dif, Di, Gu, 0).col(1) - covariant(Dif, Di, Gv, 1).col(0);
                const Vec2 rhs = sj * (psu * Dj.col(1) - psv * Dj.col(0));
                const Vec2 r = lhs - rhs;
                rep.derivative_exchange.feed(std::sqrt(std::max(0.0, r.dot(Gm * r))), at);
            }

            const double curl = d1(T.psiv, idx, 0, 0) - d1(T.psiu, idx, 1, 0);
            const double pair = (D2.col(0)).dot(Gm * D1.col(1)) - (D1.col(0)).dot(Gm * D2.col(1));
            rep.oneform_curl.feed(curl - pair, at);

            if (T.kind == ConjugateKind::hyperbolic) {
                const double g1 = cd.gamma1.at(at, 0), g2 = cd.gamma2.at(at, 0);
                const double t2v = T.tau2.at(at, 0);
                const double th12 = T.theta1.at(at, 0) * T.theta2.at(at, 0);
                rep.consistency_u.feed(
                    d1(invtau2, idx, 0, 0) + 2.0 * (1.0 / t2v - 1.0) * g2 + 2.0 * psu / th12, at);
                rep.consistency_v.feed(
                    d1(T.tau2, idx, 1, 0) + 2.0 * (t2v - 1.0) * g1 + 2.0 * psv * th12, at);
            } else {
                const Cplx G = cplx_at(cd.gammaC, at);
                const Cplx t2v = cplx_at(T.tau2, at);
                const Cplx th12 = cplx_at(T.theta1, at) * cplx_at(T.theta2, at);
                const Cplx pz = cplx_at(T.psizbar, at);
                const Cplx res = dzbar_cplx(T.tau2, idx) + 2.0 * (t2v - 1.0) * G + 2.0 * pz * th12;
                rep.consistency_u.feed(std::abs(res), at);
            }
        }
    }
    return rep;
}

ThetaIdentityReport theta_identity_residuals(const SurfaceChart& S, const ConjugateData& cd,
                                             const BarTriple& T, const Field* rho) {
    require(T.kind != ConjugateKind::none, "triple holds no reconstruction");
    check_uv_axes(S.chart, T.chart, "triple chart does not match the surface chart");
    const GridChart& chart = T.chart;
    const int nu = chart.axes[0].count, nv = chart.axes[1].count;
    ThetaIdentityReport rep;

    for (int iu = 1; iu + 1 < nu; ++iu) {
        for (int iv = 1; iv + 1 < nv; ++iv) {
            const int idx[2] = {iu, iv};
            const std::size_t at = chart.flat(idx);
            if (T.kind == ConjugateKind::hyperbolic) {
                const double t1 = T.theta1.at(at, 0), t2 = T.theta2.at(at, 0);
                const double t1u = d1(T.theta1, idx, 0, 0), t1v = d1(T.theta1, idx, 1, 0);
                const double t2u = d1(T.theta2, idx, 0, 0), t2v = d1(T.theta2, idx, 1, 0);
                const double q1 = t1 * t1, q2 = t2 * t2;
                const double den1 = q1 + q2 - 2.0;
                const double den2 = 2.0 * q1 * q2 - q1 - q2;
                if (std::abs(den1) < 1e-6 * (q1 + q2 + 2.0) ||
                    std::abs(den2) < 1e-6 * (2.0 * q1 * q2 + q1 + q2)) {
                    ++rep.skipped;
                    continue;
                }
                const double g1 = cd.gamma1.at(at, 0), g2 = cd.gamma2.at(at, 0);
                rep.gamma1.feed(g1 + (t1 * t1v + t2 * t2v) / den1, at);
                rep.gamma2.feed(g2 + (q1 * t1 * t2u + q2 * t2 * t1u) / (t1 * t2 * den2), at);
                const double psu = T.psiu.at(at, 0), psv = T.psiv.at(at, 0);
                rep.psiu.feed(psu - (t2u * q1 * t1 - t1u * q2 * t2 - t2u * t1 + t1u * t2) / den2,
                              at);
                rep.psiv.feed(
                    psv + (t2v * t2 * q1 - t1v * q2 * t1 - t2 * t2v + t1 * t1v) / (t1 * t2 * den1),
                    at);
                const double curl = d1(T.psiv, idx, 0, 0) - d1(T.psiu, idx, 1, 0);
                if (std::abs(q2 - q1) > 1e-8 * (q1 + q2)) {
                    rep.metricF.feed(cd.metricF.at(at, 0) - 2.0 * t1 * t2 * curl / (q2 - q1), at);
                }
                const double a = T.alpha.at(at, 0), b = T.beta.at(at, 0);
                if (rho) {
                    const double r = rho->at(at, 0);
                    const double num = (q1 + q2) * (q1 + q2) / (q1 * q2) - 4.0;
                    const double den = std::abs((q1 + q2 - 2.0) * (1.0 / q1 + 1.0 / q2 - 2.0));
                    rep.rho_theta.feed(r - std::sqrt(num / den), at);
                    rep.rho_alpha.feed(
                        r - std::sqrt((a * b - 4.0) / std::abs((a - 2.0) * (b - 2.0))), at);
                }
                rep.seed_sum_u.feed(d1(T.beta, idx, 0, 0) + 2.0 * (b - 2.0) * g2, at);
                rep.seed_sum_v.feed(d1(T.alpha, idx, 1, 0) + 2.0 * (a - 2.0) * g1, at);
            } else {
                const Cplx t1 = cplx_at(T.theta1, at), t2 = cplx_at(T.theta2, at);
                const Cplx t1z = dzbar_cplx(T.theta1, idx), t2z = dzbar_cplx(T.theta2, idx);
                const Cplx a = cplx_at(T.alpha, at);
                const Cplx den = t1 * t1 + t2 * t2 - 2.0; // equals alpha - 2, away from 0
                if (std::abs(den) < 1e-8) {
                    ++rep.skipped;
                    continue;
                }
                const Cplx G = cplx_at(cd.gammaC, at);
                rep.gamma1.feed(std::abs(G + (t1 * t1z + t2 * t2z) / den), at);
                const Cplx pz = cplx_at(T.psizbar, at);
                const Cplx pred = (t1 * t2 * t2 * t1z - t1 * t1 * t2 * t2z - t1 * t1z + t2 * t2z) /
                                  (t1 * t2 * den);
                rep.psiu.feed(std::abs(pz - pred), at);
                // pairing of the conjugate directions from the curl of the form
                const Cplx tau1 = cplx_at(T.tau1, at), tau2 = cplx_at(T.tau2, at);
                const Cplx th12 = t1 * t2;
                const double lhs = 4.0 * std::imag(std::conj(dz_cplx(T.psizbar, idx)));
                const double factor = std::real(Cplx(0, 1) * (tau2 - tau1) / th12);
                rep.metricF.feed(lhs - factor * cd.metricFc.at(at, 0), at);
                if (rho) {
                    const double r = rho->at(at, 0);
                    const double aa = std::abs(t1 * t1 + t2 * t2);
                    rep.rho_theta.feed(
                        r - std::sqrt(std::max(0.0, 4.0 - aa * aa)) / std::abs(den), at);
                    const double am = std::abs(a);
                    rep.rho_alpha.feed(
                        r - std::sqrt(std::max(0.0, 4.0 - am * am)) / std::abs(a - 2.0), at);
                }
                rep.seed_sum_u.feed(std::abs(dzbar_cplx(T.alpha, idx) + 2.0 * (a - 2.0) * G), at);
            }
        }
    }
    return rep;
}

double triple_distance(const BarTriple& a, const BarTriple& b) {
    require(a.kind == b.kind && a.kind != ConjugateKind::none,
            "triples of different kinds are not comparable");
    check_uv_axes(a.chart, b.chart, "triples live on different charts");
    const Field* fa[4] = {&a.theta1, &a.theta2, &a.psiu, &a.psiv};
    const Field* fb[4] = {&b.theta1, &b.theta2, &b.psiu, &b.psiv};
    double dist = 0;
    for (int q = 0; q < 4; ++q) {
        double diff = 0, scale = 0;
        for (std::size_t k = 0; k < fa[q]->data.size(); ++k) {
            diff = std::max(diff, std::abs(fa[q]->data[k] - fb[q]->data[k]));
            scale = std::max(scale, std::max(std::abs(fa[q]->data[k]), std::abs(fb[q]->data[k])));
        }
        dist = std::max(dist, diff / (1.0 + scale));
    }
    return dist;
}

GenuinenessMargins genuineness_margins(const Mat2& D1, const Mat2& D2) {
    const Mat2 S1 = D1 * D1, S2 = D2 * D2;
    GenuinenessMargins m;
    m.squares = std::min((S2 - S1).norm(), (S2 + S1).norm());
    const Mat2 R = S1 + S2 - Mat2::Identity();
    m.rank = Eigen::JacobiSVD<Mat2>(R).singularValues()(1);
    return m;
}

std::pair<Mat2, Mat2> make_rank_deficient_pair(double theta) {
    require(theta * theta > 0.5, "rank-deficient pair needs theta^2 > 1/2");
    Mat2 D1 = Mat2::Zero(), D2 = Mat2::Zero();
    D1(0, 0) = theta / kSqrt2;
    D1(1, 1) = 1.0 / (theta * kSqrt2);
    const double m2 = 1.0 - 1.0 / (2.0 * theta * theta);
    const double m1 = 1.0 / (4.0 * m2);
    D2(0, 0) = std::sqrt(m1);
    D2(1, 1) = std::sqrt(m2);
    return {D1, D2};
}

SplittingReport analyze_splitting(const HypersurfaceChart& H, const Mat2* J) {
    const GridChart& chart = H.chart;
    const int n = chart.dim();
    require(n >= 3, "splitting analysis needs an adapted chart");
    SplittingReport total;
    std::mutex mu;
    parallel_blocks(chart.size(), [&](std::size_t lo, std::size_t hi) {
        SplittingReport r;
        std::vector<int> idx(n);
        for (std::size_t at = lo; at < hi; ++at) {
            chart.unflat(at, idx.data());
            const PointGeometry P = H.geometry(idx.data(), true, false);
            const AdaptedPoint ap = adapt(P);
            for (int k = 0; k + 2 < n; ++k) {
                const Mat2 C = splitting_tensor(P, ap, k);
                r.span_identity.feed(span_identity_residual(C), at);
                if (J) r.span_conjugate.feed(span_ij_residual(C, *J), at);
            }
        }
        std::scoped_lock lock(mu);
        total.span_identity.merge(r.span_identity);
        total.span_conjugate.merge(r.span_conjugate);
    });
    return total;
}

LiftedTriple lift_to_M(const BarTriple& T, const QuotientMap& q, const HypersurfaceChart& H) {
    require(T.kind == ConjugateKind::hyperbolic || T.kind == ConjugateKind::elliptic,
            "no reconstruction to lift");
    const int n = H.chart.dim();
    require(n >= 3, "lift target must be an adapted chart");
    require(static_cast<int>(q.fiber_center.size()) == n - 2,
            "quotient map does not match the chart");
    check_uv_axes(T.chart, H.chart, "triple chart does not match the hypersurface chart");
    return {T, H.chart};
}

Vec lifted_psi(const LiftedTriple& L, const int* idx) {
    Vec p = Vec::Zero(L.mchart.dim());
    const std::size_t at = L.bar.at(idx[0], idx[1]);
    p(0) = L.bar.psiu.at(at, 0);
    p(1) = L.bar.psiv.at(at, 0);
    return p;
}

Mat lifted_D(const LiftedTriple& L, int i, const int* idx, const AdaptedPoint& ap) {
    return lift_endomorphism(ap, bar_D(L.bar, i, L.bar.at(idx[0], idx[1])));
}

namespace {

struct LiftPack {
    Mat D[2], B[2];
};

LiftPack lift_pack(const HypersurfaceChart& H, const LiftedTriple& L, const int* idx,
                   std::size_t at) {
    const PointGeometry P = H.geometry(idx, false);
    const AdaptedPoint ap = adapt(P);
    const double lam = H.lambda.at(at, 0);
    const Mat Alam = P.A - lam * Mat::Identity(P.n, P.n);
    LiftPack pk;
    for (int i = 0; i < 2; ++i) {
        pk.D[i] = lifted_D(L, i + 1, idx, ap);
        pk.B[i] = Alam * pk.D[i];
    }
    return pk;
}

void merge_lifted(LiftedConditionReport& total, const LiftedConditionReport& r, std::mutex& mu) {
    std::scoped_lock lock(mu);
    total.psi_vertical.merge(r.psi_vertical);
    total.det_residual.merge(r.det_residual);
    total.leaf_derivative.merge(r.leaf_derivative);
    total.splitting_commutator.merge(r.splitting_commutator);
    total.shape_codazzi.merge(r.shape_codazzi);
    total.grad_exchange_raw.merge(r.grad_exchange_raw);
    total.grad_exchange_proj.merge(r.grad_exchange_proj);
    total.psi_leaf_curl.merge(r.psi_leaf_curl);
    total.psi_curvature.merge(r.psi_curvature);
    total.margin_squares.merge(r.margin_squares);
    total.margin_rank.merge(r.margin_rank);
}

} // namespace

LiftedConditionReport verify_lifted_triple(const LiftedTriple& L, const HypersurfaceChart& H) {
    const GridChart& chart = H.chart;
    const int n = chart.dim();
    require(n >= 3, "verification needs an adapted chart");
    require(H.lambda.data.size() == chart.size(),
            "repeated curvature missing: run analyze() before verifying");
    check_uv_axes(L.bar.chart, chart, "triple chart does not match the hypersurface chart");

    LiftedConditionReport total;
    std::mutex mu;
    parallel_blocks(chart.size(), [&](std::size_t lo, std::size_t hi) {
        LiftedConditionReport r;
        std::vector<int> idx(n), jdx(n);
        std::vector<Mat> dD[2], dB[2], cD[2], cB[2], Ga;
        for (int i = 0; i < 2; ++i) {
            dD[i].assign(n, Mat());
            dB[i].assign(n, Mat());
            cD[i].assign(n, Mat());
            cB[i].assign(n, Mat());
        }
        Ga.assign(n, Mat());
        for (std::size_t at = lo; at < hi; ++at) {
            chart.unflat(at, idx.data());
            const std::size_t at2 = L.bar.at(idx[0], idx[1]);
            const Mat2 Db[2] = {bar_D(L.bar, 1, at2), bar_D(L.bar, 2, at2)};
            r.det_residual.feed(Db[0].determinant() - 0.5, at);
            r.det_residual.feed(Db[1].determinant() - 0.5, at);
            const GenuinenessMargins gm = genuineness_margins(Db[0], Db[1]);
            r.margin_squares.feed(gm.squares, at);
            r.margin_rank.feed(gm.rank, at);
            // the lift stores exact zeros on the leaf components of the form,
            // and the form is leaf-constant, so these two vanish identically
            r.psi_vertical.feed(0.0, at);
            r.psi_leaf_curl.feed(0.0, at);
            if (!chart.interior(idx.data(), 1)) continue;

            const PointGeometry P = H.geometry(idx.data(), true, false);
            const AdaptedPoint ap = adapt(P);
            const Mat2 ghinv = ap.gh.inverse();
            const double lam = H.lambda.at(at, 0);
            const Mat Alam = P.A - lam * Mat::Identity(n, n);
            Mat DL[2], BL[2];
            for (int i = 0; i < 2; ++i) {
                DL[i] = lift_endomorphism(ap, Db[i]);
                BL[i] = Alam * DL[i];
            }
            Vec dlam(n);
            for (int a = 0; a < n; ++a) dlam(a) = d1(H.lambda, idx.data(), a, 0);
            const Vec X = ap.lift.col(0), Y = ap.lift.col(1);
            const double psu = L.bar.psiu.at(at2, 0), psv = L.bar.psiv.at(at2, 0);

            // neighbor packs give the coordinate derivatives of the lifted
            // tensors; central differences, so interior margin 1 suffices
            for (int a = 0; a < n; ++a) {
                jdx = idx;
                jdx[a] += 1;
                const LiftPack pp = lift_pack(H, L, jdx.data(), chart.flat(jdx.data()));
                jdx[a] -= 2;
                const LiftPack pm = lift_pack(H, L, jdx.data(), chart.flat(jdx.data()));
                const double inv2h = 0.5 / chart.axes[a].spacing;
                for (int i = 0; i < 2; ++i) {
                    dD[i][a] = (pp.D[i] - pm.D[i]) * inv2h;
                    dB[i][a] = (pp.B[i] - pm.B[i]) * inv2h;
                }
                Ga[a].resize(n, n);
                for (int c = 0; c < n; ++c)
                    for (int d = 0; d < n; ++d) Ga[a](c, d) = P.gamma[c](a, d);
            }
            for (int a = 0; a < n; ++a)
                for (int i = 0; i < 2; ++i) {
                    cD[i][a] = dD[i][a] + Ga[a] * DL[i] - DL[i] * Ga[a];
                    cB[i][a] = dB[i][a] + Ga[a] * BL[i] - BL[i] * Ga[a];
                }

            auto gnorm = [&](const Vec& w) { return std::sqrt(std::max(0.0, w.dot(P.g * w))); };
            auto hproj = [&](const Vec& w) {
                const Vec2 c = ghinv * (ap.lift.transpose() * (P.g * w));
                return Vec(ap.lift * c);
            };

            // vertical parallelism and the splitting commutators
            for (int t = 2; t < n; ++t) {
                const Mat2 Ct = splitting_tensor(P, ap, t - 2);
                for (int i = 0; i < 2; ++i) {
                    r.leaf_derivative.feed(gnorm(hproj(cD[i][t] * X)), at);
                    r.leaf_derivative.feed(gnorm(hproj(cD[i][t] * Y)), at);
                    r.splitting_commutator.feed((Db[i] * Ct - Ct * Db[i]).norm(), at);
                }
            }

            // exchange identity of the composite tensors (A - lambda I) D_i
            for (int i = 0; i < 2; ++i) {
                const int o = 1 - i;
                const double sj = (i == 0) ? 1.0 : -1.0;
                Mat MX = Mat::Zero(n, n), MY = Mat::Zero(n, n);
                for (int a = 0; a < n; ++a) {
                    MX += X(a) * cB[i][a];
                    MY += Y(a) * cB[i][a];
                }
                const Vec lhs = MX * Y - MY * X;
                const Vec v1 = P.ginv * (DL[i].transpose() * dlam);
                const Vec wedge = Y.dot(P.g * v1) * X - X.dot(P.g * v1) * Y;
                const Vec rhs = wedge + sj * (Alam * (psu * (DL[o] * Y) - psv * (DL[o] * X)));
                r.shape_codazzi.feed(gnorm(lhs - rhs), at);
            }

            // gradient/Hessian exchange identity
            Mat Hl(n, n);
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) {
                    double v = (a == b) ? d2(H.lambda, idx.data(), a, 0)
                                        : d11(H.lambda, idx.data(), a, b, 0);
                    for (int c = 0; c < n; ++c) v -= P.gamma[c](a, b) * dlam(c);
                    Hl(a, b) = v;
                }
            for (int i = 0; i < 2; ++i) {
                const int o = 1 - i;
                const double sj = (i == 0) ? 1.0 : -1.0;
                Mat MX = Mat::Zero(n, n), MY = Mat::Zero(n, n);
                for (int a = 0; a < n; ++a) {
                    MX += X(a) * cD[i][a];
                    MY += Y(a) * cD[i][a];
                }
                const Vec W = MY * X - MX * Y;
                const double t2 = (DL[i] * X).dot(Hl * Y) - X.dot(Hl * (DL[i] * Y));
                const double t3 =
                    sj * (psu * (DL[o] * Y).dot(dlam) - psv * (DL[o] * X).dot(dlam));
                const double rhs =
                    lam * ((P.A * X).dot(P.g * (BL[i] * Y)) - (BL[i] * X).dot(P.g * (P.A * Y)));
                r.grad_exchange_raw.feed(W.dot(dlam) + t2 + t3 - rhs, at);
                r.grad_exchange_proj.feed(hproj(W).dot(dlam) + t2 + t3 - rhs, at);
            }

            // curl of the form against the commutator of the composites
            const int idx2[2] = {idx[0], idx[1]};
            const double curl = d1(L.bar.psiv, idx2, 0, 0) - d1(L.bar.psiu, idx2, 1, 0);
            const Mat comm = BL[0] * BL[1] - BL[1] * BL[0];
            r.psi_curvature.feed(curl - (comm * X).dot(P.g * Y), at);
        }
        merge_lifted(total, r, mu);
    });
    return total;
}

FlatnessReport flatness_check(const HypersurfaceChart& H, const LiftedTriple& L) {
    const GridChart& chart = H.chart;
    const int n = chart.dim();
    require(H.lambda.data.size() == chart.size(),
            "repeated curvature missing: run analyze() before verifying");
    check_uv_axes(L.bar.chart, chart, "triple chart does not match the hypersurface chart");
    FlatnessReport total;
    total.grid = Field::zeros(chart, 1);
    std::mutex mu;
    parallel_blocks(chart.size(), [&](std::size_t lo, std::size_t hi) {
        MaxAbs rel;
        std::size_t excluded = 0;
        std::vector<int> idx(n);
        for (std::size_t at = lo; at < hi; ++at) {
            chart.unflat(at, idx.data());
            const PointGeometry P = H.geometry(idx.data(), false);
            const AdaptedPoint ap = adapt(P);
            const double lam = H.lambda.at(at, 0);
            const Mat Alam = P.A - lam * Mat::Identity(n, n);
            // restriction of A - lambda I to the horizontal space
            const Mat2 Mh = ap.gh.inverse() * (ap.lift.transpose() * (P.g * (Alam * ap.lift)));
            const double detA = Mh.determinant();
            const std::size_t at2 = L.bar.at(idx[0], idx[1]);
            const double d1v = bar_D(L.bar, 1, at2).determinant();
            const double d2v = bar_D(L.bar, 2, at2).determinant();
            const double res = detA * (1.0 - d1v - d2v);
            total.grid.at(at, 0) = res;
            if (std::abs(detA) <= 1e-10 * std::max(1.0, Mh.squaredNorm())) {
                ++excluded;
            } else {
                rel.feed(res / detA, at);
            }
        }
        std::scoped_lock lock(mu);
        total.relative.merge(rel);
        total.excluded += excluded;
    });
    return total;
}

} // namespace conedef
