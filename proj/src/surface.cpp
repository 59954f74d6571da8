#include "conedef/surface.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "conedef/util.hpp"

namespace conedef {

const char* to_string(ConjugateKind k) {
    switch (k) {
        case ConjugateKind::hyperbolic: return "hyperbolic";
        case ConjugateKind::elliptic: return "elliptic";
        case ConjugateKind::parabolic: return "parabolic";
        default: return "none";
    }
}

SurfaceJet SurfaceChart::jet(int iu, int iv) const {
    const int idx[2] = {iu, iv};
    SurfaceJet j;
    j.s = pos.sample(pos.chart.flat(idx));
    j.su = d1_vec(pos, idx, 0);
    j.sv = d1_vec(pos, idx, 1);
    j.suu = d2_vec(pos, idx, 0);
    j.suv = d11_vec(pos, idx, 0, 1);
    j.svv = d2_vec(pos, idx, 1);
    return j;
}

double SurfaceChart::validate(double tol) const {
    require(chart.dim() == 2, "surface chart needs exactly two axes");
    require(pos.ncomp == model.ambient_dim(), "surface samples have wrong ambient dimension");
    chart.validate();
    double worst = 0.0;
    for (std::size_t at = 0; at < pos.size(); ++at) {
        Vec s = pos.sample(at);
        worst = std::max(worst, std::abs(mdot(s, s) - 1.0));
    }
    require(worst <= tol, "surface leaves the unit pseudo-sphere");
    return worst;
}

Metric2 induced_metric(const LightConeModel&, const SurfaceJet& j) {
    Metric2 g;
    g.E = mdot(j.su, j.su);
    g.F = mdot(j.su, j.sv);
    g.G = mdot(j.sv, j.sv);
    return g;
}

namespace {

// Tangential coefficients of a second derivative: solve the 2x2 Gram system
// [E F; F G] x = (<d, s_u>, <d, s_v>).
Eigen::Vector2d tangential_pair(const Metric2& g, const SurfaceJet& j, const Vec& d) {
    Eigen::Matrix2d gram;
    gram << g.E, g.F, g.F, g.G;
    Eigen::Vector2d rhs(mdot(d, j.su), mdot(d, j.sv));
    double det = g.det();
    require(std::abs(det) > 1e-14 * (g.E * g.G + g.F * g.F + 1e-300),
            "degenerate induced metric");
    return gram.inverse() * rhs;
}

} // namespace

Christoffels2 christoffels(const LightConeModel& model, const SurfaceJet& j) {
    Metric2 g = induced_metric(model, j);
    Christoffels2 c;
    Eigen::Vector2d p;
    p = tangential_pair(g, j, j.suu);
    c.uu[0] = p[0];
    c.uu[1] = p[1];
    p = tangential_pair(g, j, j.suv);
    c.uv[0] = p[0];
    c.uv[1] = p[1];
    p = tangential_pair(g, j, j.svv);
    c.vv[0] = p[0];
    c.vv[1] = p[1];
    return c;
}

SphereAlpha sphere_alpha(const LightConeModel&, const SurfaceJet& j) {
    // Remove the span{s, s_u, s_v} component with the Lorentz Gram matrix.
    Mat B(j.s.size(), 3);
    B.col(0) = j.s;
    B.col(1) = j.su;
    B.col(2) = j.sv;
    Mat G = mgram(B);
    Eigen::FullPivLU<Mat> lu(G);
    require(lu.isInvertible(), "degenerate surface frame {s, s_u, s_v}");
    auto project_off = [&](const Vec& d) -> Vec {
        Vec rhs(3);
        for (int k = 0; k < 3; ++k) rhs[k] = mdot(B.col(k), d);
        Vec coef = lu.solve(rhs);
        return d - B * coef;
    };
    SphereAlpha a;
    a.auu = project_off(j.suu);
    a.auv = project_off(j.suv);
    a.avv = project_off(j.svv);
    return a;
}

ConjugateStructure classify_conjugate(const SurfaceChart& S, double rel_tol) {
    ConjugateStructure out;
    double scale = 0, r_real = 0, r_cplx = 0, r_uu = 0, r_vv = 0;
    for (int iu = 1; iu + 1 < S.nu(); ++iu) {
        for (int iv = 1; iv + 1 < S.nv(); ++iv) {
            SurfaceJet j = S.jet(iu, iv);
            SphereAlpha a = sphere_alpha(S.model, j);
            scale = std::max({scale, a.auu.norm(), a.auv.norm(), a.avv.norm()});
            r_real = std::max(r_real, a.auv.norm());
            r_cplx = std::max(r_cplx, 0.25 * (a.auu + a.avv).norm());
            r_uu = std::max(r_uu, a.auu.norm());
            r_vv = std::max(r_vv, a.avv.norm());
        }
    }
    out.scale = scale;
    out.residual_real = r_real;
    out.residual_complex = r_cplx;
    out.residual_parabolic = std::min(r_uu, r_vv);
    // Metric scale gives the yardstick for "alpha vanishes identically".
    double metric_scale = 0;
    {
        SurfaceJet j = S.jet(S.nu() / 2, S.nv() / 2);
        Metric2 g = induced_metric(S.model, j);
        metric_scale = std::max(std::abs(g.E), std::abs(g.G));
    }
    if (scale <= rel_tol * metric_scale) {
        // Degenerate: no usable conjugate directions, reported as the
        // nilpotent class so downstream stages refuse to proceed.
        out.kind = ConjugateKind::parabolic;
        out.J << 0, 1, 0, 0;
        return out;
    }
    const double bar = rel_tol * scale;
    if (r_real <= bar) {
        out.kind = ConjugateKind::hyperbolic;
        out.J << 1, 0, 0, -1;
    } else if (r_cplx <= bar) {
        out.kind = ConjugateKind::elliptic;
        out.J << 0, -1, 1, 0;
    } else if (r_uu <= bar) {
        out.kind = ConjugateKind::parabolic;
        out.J << 0, 1, 0, 0;
    } else if (r_vv <= bar) {
        out.kind = ConjugateKind::parabolic;
        out.J << 0, 0, 1, 0;
    } else {
        out.kind = ConjugateKind::none;
    }
    return out;
}

ConjugateData tabulate_conjugate(const SurfaceChart& S, ConjugateKind kind) {
    require(kind == ConjugateKind::hyperbolic || kind == ConjugateKind::elliptic,
            "conjugate data needs a hyperbolic or elliptic chart");
    ConjugateData cd;
    cd.kind = kind;
    cd.metricF = Field::zeros(S.chart, 1);
    if (kind == ConjugateKind::hyperbolic) {
        cd.gamma1 = Field::zeros(S.chart, 1);
        cd.gamma2 = Field::zeros(S.chart, 1);
    } else {
        cd.gammaC = Field::zeros(S.chart, 2);
        cd.metricFc = Field::zeros(S.chart, 1);
    }
    for (int iu = 0; iu < S.nu(); ++iu) {
        for (int iv = 0; iv < S.nv(); ++iv) {
            std::size_t at = S.at(iu, iv);
            SurfaceJet j = S.jet(iu, iv);
            Metric2 g = induced_metric(S.model, j);
            cd.metricF.at(at, 0) = g.F;
            if (kind == ConjugateKind::hyperbolic) {
                Eigen::Vector2d p = tangential_pair(g, j, j.suv);
                cd.gamma1.at(at, 0) = p[0];
                cd.gamma2.at(at, 0) = p[1];
            } else {
                // s_zzbar = (s_uu + s_vv)/4; in the complexified frame the
                // tangential pair (a, b) with s_zzbar = a s_u + b s_v gives
                // Gamma via dz = (du - i dv)/2:
                //   a s_u + b s_v = Gamma dz + conj(Gamma) dzbar
                //   => Gamma = a + i b (matching real and imaginary parts).
                Vec szz = 0.25 * (j.suu + j.svv);
                Eigen::Vector2d p = tangential_pair(g, j, szz);
                cplx_set(cd.gammaC, at, Cplx(p[0], p[1]));
                cd.metricFc.at(at, 0) = 0.25 * (g.E + g.G);
            }
        }
    }
    return cd;
}

Field q_apply(const SurfaceChart& S, const ConjugateData& cd, const Field& theta) {
    require(cd.kind == ConjugateKind::hyperbolic, "q_apply expects hyperbolic data");
    require(theta.ncomp == 1, "q_apply expects a scalar field");
    Field out = Field::zeros(S.chart, 1);
    for (int iu = 0; iu < S.nu(); ++iu) {
        for (int iv = 0; iv < S.nv(); ++iv) {
            const int idx[2] = {iu, iv};
            std::size_t at = S.at(iu, iv);
            double tu = d1(theta, idx, 0, 0);
            double tv = d1(theta, idx, 1, 0);
            double tuv = d11(theta, idx, 0, 1, 0);
            out.at(at, 0) = tuv - cd.gamma1.at(at, 0) * tu - cd.gamma2.at(at, 0) * tv +
                            cd.metricF.at(at, 0) * theta.at(at, 0);
        }
    }
    return out;
}

Field q_apply_complex(const SurfaceChart& S, const ConjugateData& cd, const Field& theta) {
    require(cd.kind == ConjugateKind::elliptic, "q_apply_complex expects elliptic data");
    require(theta.ncomp == 2, "q_apply_complex expects a complex field");
    const Cplx I(0, 1);
    Field out = Field::zeros(S.chart, 2);
    for (int iu = 0; iu < S.nu(); ++iu) {
        for (int iv = 0; iv < S.nv(); ++iv) {
            const int idx[2] = {iu, iv};
            std::size_t at = S.at(iu, iv);
            Cplx tu(d1(theta, idx, 0, 0), d1(theta, idx, 0, 1));
            Cplx tv(d1(theta, idx, 1, 0), d1(theta, idx, 1, 1));
            Cplx tuu(d2(theta, idx, 0, 0), d2(theta, idx, 0, 1));
            Cplx tvv(d2(theta, idx, 1, 0), d2(theta, idx, 1, 1));
            Cplx tz = 0.5 * (tu - I * tv);
            Cplx tzb = 0.5 * (tu + I * tv);
            Cplx tzzb = 0.25 * (tuu + tvv);
            Cplx gamma = cplx_at(cd.gammaC, at);
            Cplx q = tzzb - gamma * tz - std::conj(gamma) * tzb +
                     cd.metricFc.at(at, 0) * cplx_at(theta, at);
            cplx_set(out, at, q);
        }
    }
    return out;
}

} // namespace conedef
