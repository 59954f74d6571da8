#include "conedef/cs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace conedef {

namespace {

SeedLine find_zero_line(const GridAxis& ax, const char* what) {
    const double lo = ax.origin, hi = ax.origin + ax.spacing * (ax.count - 1);
    require(0.0 >= lo - 0.5 * ax.spacing && 0.0 <= hi + 0.5 * ax.spacing,
            std::string(what) + " transport seed line lies outside the chart");
    int k = static_cast<int>(std::llround(-ax.origin / ax.spacing));
    k = std::clamp(k, 0, ax.count - 1);
    return SeedLine{k, ax.origin + ax.spacing * k};
}

HyperbolicTransport run_transport(const GridChart& chart, const ConjugateData& cd,
                                  const std::vector<double>& Useed,
                                  const std::vector<double>& Vseed) {
    require(cd.kind == ConjugateKind::hyperbolic,
            "hyperbolic transport needs a real conjugate structure");
    const int nu = chart.axes[0].count, nv = chart.axes[1].count;
    const double hu = chart.axes[0].spacing, hv = chart.axes[1].spacing;

    HyperbolicTransport out;
    out.seedU = find_zero_line(chart.axes[1], "v = 0");
    out.seedV = find_zero_line(chart.axes[0], "u = 0");
    out.phiU = Field::zeros(chart, 1);
    out.phiV = Field::zeros(chart, 1);
    out.U_samples = Useed;
    out.V_samples = Vseed;

    parallel_blocks(nu, [&](std::size_t b, std::size_t e) {
        std::vector<double> a(nv);
        for (std::size_t iu = b; iu < e; ++iu) {
            for (int iv = 0; iv < nv; ++iv) {
                const int idx[2] = {static_cast<int>(iu), iv};
                a[iv] = 2.0 * cd.gamma1.at(chart.flat(idx), 0);
            }
            const auto line = transport_linear_line(a, hv, Useed[iu], out.seedU.node);
            for (int iv = 0; iv < nv; ++iv) {
                const int idx[2] = {static_cast<int>(iu), iv};
                out.phiU.at(chart.flat(idx), 0) = line[iv];
            }
        }
    });
    parallel_blocks(nv, [&](std::size_t b, std::size_t e) {
        std::vector<double> a(nu);
        for (std::size_t iv = b; iv < e; ++iv) {
            for (int iu = 0; iu < nu; ++iu) {
                const int idx[2] = {iu, static_cast<int>(iv)};
                a[iu] = 2.0 * cd.gamma2.at(chart.flat(idx), 0);
            }
            const auto line = transport_linear_line(a, hu, Vseed[iv], out.seedV.node);
            for (int iu = 0; iu < nu; ++iu) {
                const int idx[2] = {iu, static_cast<int>(iv)};
                out.phiV.at(chart.flat(idx), 0) = line[iu];
            }
        }
    });
    return out;
}

} // namespace

HyperbolicTransport transport_hyperbolic(const GridChart& chart, const ConjugateData& cd,
                                         const std::function<double(double)>& U,
                                         const std::function<double(double)>& V) {
    const int nu = chart.axes[0].count, nv = chart.axes[1].count;
    std::vector<double> Useed(nu), Vseed(nv);
    for (int iu = 0; iu < nu; ++iu) Useed[iu] = U(chart.coord(0, iu));
    for (int iv = 0; iv < nv; ++iv) Vseed[iv] = V(chart.coord(1, iv));
    return run_transport(chart, cd, Useed, Vseed);
}

HyperbolicTransport transport_hyperbolic(const SurfaceChart& S, const ConjugateData& cd,
                                         const std::function<double(double)>& U,
                                         const std::function<double(double)>& V,
                                         const TransportOptions& opt) {
    const int nu = S.nu(), nv = S.nv();
    std::vector<double> Useed(nu), Vseed(nv);
    for (int iu = 0; iu < nu; ++iu) Useed[iu] = U(S.u(iu));
    for (int iv = 0; iv < nv; ++iv) Vseed[iv] = V(S.v(iv));
    if (opt.normalize_by_conformal_factor) {
        const SeedLine su = find_zero_line(S.chart.axes[1], "v = 0");
        const SeedLine sv = find_zero_line(S.chart.axes[0], "u = 0");
        for (int iu = 0; iu < nu; ++iu)
            Useed[iu] *= induced_metric(S.model, S.jet(iu, su.node)).E;
        for (int iv = 0; iv < nv; ++iv)
            Vseed[iv] *= induced_metric(S.model, S.jet(sv.node, iv)).E;
    }
    return run_transport(S.chart, cd, Useed, Vseed);
}

SignReport sign_conditions(const HyperbolicTransport& t) {
    SignReport out;
    out.branch_grid = Field::zeros(t.phiU.chart, 1);
    double m1 = std::numeric_limits<double>::infinity();
    double m2 = m1, m3 = m1;
    const std::size_t total = t.phiU.chart.size();
    for (std::size_t at = 0; at < total; ++at) {
        const double pu = t.phiU.at(at, 0), pv = t.phiV.at(at, 0);
        const double b1 = std::min(pu, pv);
        const double b2 = std::min(2.0 * pu, -(2.0 * pv + 1.0) - 2.0 * pu);
        const double b3 = std::min(2.0 * pv, -(2.0 * pu + 1.0) - 2.0 * pv);
        m1 = std::min(m1, b1);
        m2 = std::min(m2, b2);
        m3 = std::min(m3, b3);
        out.branch_grid.at(at, 0) = b1 > 0 ? 1 : b2 > 0 ? 2 : b3 > 0 ? 3 : 0;
    }
    out.margin[0] = m1;
    out.margin[1] = m2;
    out.margin[2] = m3;
    out.branch = m1 > 0 ? 1 : m2 > 0 ? 2 : m3 > 0 ? 3 : 0;
    return out;
}

Field rho_hyperbolic(const HyperbolicTransport& t, double min_radicand) {
    Field rho = Field::zeros(t.phiU.chart, 1);
    const std::size_t total = rho.size();
    for (std::size_t at = 0; at < total; ++at) {
        const double rad = 2.0 * (t.phiU.at(at, 0) + t.phiV.at(at, 0)) + 1.0;
        require(std::abs(rad) > min_radicand, "degenerate candidate");
        rho.at(at, 0) = std::sqrt(std::abs(rad));
    }
    return rho;
}

EllipticTransport transport_elliptic(const GridChart& chart, const ConjugateData& cd,
                                     const std::function<Cplx(Cplx)>& zeta) {
    require(cd.kind == ConjugateKind::elliptic,
            "elliptic transport needs a complex conjugate structure");
    const int nu = chart.axes[0].count, nv = chart.axes[1].count;
    const int cu = nu / 2, cv = nv / 2;
    const int cidx[2] = {cu, cv};
    const Cplx gamma = cplx_at(cd.gammaC, chart.flat(cidx));
    double dev = 0;
    for (std::size_t at = 0; at < chart.size(); ++at)
        dev = std::max(dev, std::abs(cplx_at(cd.gammaC, at) - gamma));
    require(dev <= 1e-8 * (1.0 + std::abs(gamma)),
            "elliptic transport supports charts with constant coefficient only");

    EllipticTransport out;
    out.gamma = gamma;
    out.phi = Field::zeros(chart, 2);
    out.zeta_re.resize(nu);
    out.zeta_im.resize(nu);
    for (int iu = 0; iu < nu; ++iu) {
        const Cplx z0 = zeta(Cplx(chart.coord(0, iu), 0.0));
        out.zeta_re[iu] = z0.real();
        out.zeta_im[iu] = z0.imag();
    }
    for (int iu = 0; iu < nu; ++iu)
        for (int iv = 0; iv < nv; ++iv) {
            const double u = chart.coord(0, iu), v = chart.coord(1, iv);
            const Cplx z(u, v), zbar(u, -v);
            const int idx[2] = {iu, iv};
            cplx_set(out.phi, chart.flat(idx), zeta(z) * std::exp(2.0 * gamma * zbar));
        }
    return out;
}

EllipticSignReport sign_conditions_elliptic(const EllipticTransport& t) {
    EllipticSignReport out;
    out.margin_pole = std::numeric_limits<double>::infinity();
    out.margin_neg = out.margin_pole;
    for (std::size_t at = 0; at < t.phi.chart.size(); ++at) {
        const Cplx p = cplx_at(t.phi, at);
        out.margin_pole = std::min(out.margin_pole, std::abs(p + 0.5));
        out.margin_neg = std::min(out.margin_neg, -(4.0 * p.real() + 1.0));
    }
    return out;
}

Field rho_elliptic(const EllipticTransport& t, double min_radicand) {
    Field rho = Field::zeros(t.phi.chart, 1);
    for (std::size_t at = 0; at < rho.size(); ++at) {
        const double rad = -(4.0 * t.phi.at(at, 0) + 1.0);
        require(rad > min_radicand, "degenerate candidate");
        rho.at(at, 0) = std::sqrt(rad);
    }
    return rho;
}

MembershipReport membership_residual(const SurfaceChart& S, const ConjugateData& cd,
                                     const Field& rho, double C) {
    MembershipReport out;
    MaxAbs res;
    if (cd.kind == ConjugateKind::hyperbolic) {
        const Field q = q_apply(S, cd, rho);
        res = max_abs_interior(q);
    } else {
        require(cd.kind == ConjugateKind::elliptic, "membership needs a conjugate structure");
        Field rc = Field::zeros(rho.chart, 2);
        for (std::size_t at = 0; at < rho.size(); ++at) rc.at(at, 0) = rho.at(at, 0);
        const Field q = q_apply_complex(S, cd, rc);
        res = max_norm_interior(q);
    }
    MaxAbs sup;
    for (std::size_t at = 0; at < rho.size(); ++at) sup.feed(rho.at(at, 0), at);
    const double h = std::max(S.chart.axes[0].spacing, S.chart.axes[1].spacing);
    out.residual = res.value;
    out.where = res.where;
    out.rho_sup = sup.value;
    out.threshold = C * h * h * sup.value;
    out.member = out.residual <= out.threshold;
    return out;
}

} // namespace conedef
