#include "conedef/congruence.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

namespace conedef {

namespace {

constexpr double kPi = std::numbers::pi;

double gallery_A(const GallerySpec& spec) { return std::sqrt(1.0 + spec.beta_c * spec.beta_c); }

// Writes s(u, v) = beta0 e0 + beta2 e1 + rho * alpha(v) into the field row,
// where alpha is the circle of radius r inside the unit sphere of the
// Euclidean coordinates 2..ambient-1.
void write_gallery_sample(Field& pos, std::size_t at, const GallerySpec& spec, double beta0,
                          double beta2, double rho, double v) {
    const double r = spec.circle_r;
    pos.at(at, 0) = beta0;
    pos.at(at, 1) = beta2;
    pos.at(at, 2) = rho * r * std::cos(v / r);
    pos.at(at, 3) = rho * r * std::sin(v / r);
    pos.at(at, 4) = rho * std::sqrt(std::max(0.0, 1.0 - r * r));
    for (int c = 5; c < pos.ncomp; ++c) pos.at(at, c) = 0.0;
}

void check_gallery_spec(const GallerySpec& spec, const GridChart& uv) {
    require(uv.dim() == 2, "gallery chart must be two-dimensional");
    require(spec.ambient >= 7, "gallery ambient dimension must be at least 7");
    require(spec.circle_r > 0.0 && spec.circle_r <= 1.0, "gallery circle radius must lie in (0,1]");
}

} // namespace

double gallery_lambda(const GallerySpec& spec, double ut) {
    return std::log(gallery_A(spec)) - std::log(std::cosh(ut));
}

double gallery_lambda_prime(double ut) { return -std::tanh(ut); }

SurfaceChart gallery_surface_arc(const GallerySpec& spec, const GridChart& uv) {
    check_gallery_spec(spec, uv);
    const double A = gallery_A(spec);
    SurfaceChart S;
    S.chart = uv;
    S.model = LightConeModel::canonical(spec.ambient - 2);
    S.pos = Field::zeros(uv, spec.ambient);
    const int nu = uv.axes[0].count, nv = uv.axes[1].count;
    for (int iu = 0; iu < nu; ++iu) {
        const double u = uv.coord(0, iu);
        require(std::abs(u / A) < kPi / 2, "u window leaves the positive-radius band");
        const double rho = A * std::cos(u / A);
        const double beta2 = A * std::sin(u / A);
        for (int iv = 0; iv < nv; ++iv)
            write_gallery_sample(S.pos, S.at(iu, iv), spec, spec.beta_c, beta2, rho,
                                 uv.coord(1, iv));
    }
    return S;
}

SurfaceChart gallery_surface_isothermal(const GallerySpec& spec, const GridChart& uv) {
    check_gallery_spec(spec, uv);
    const double A = gallery_A(spec);
    SurfaceChart S;
    S.chart = uv;
    S.model = LightConeModel::canonical(spec.ambient - 2);
    S.pos = Field::zeros(uv, spec.ambient);
    const int nu = uv.axes[0].count, nv = uv.axes[1].count;
    for (int iu = 0; iu < nu; ++iu) {
        const double ut = uv.coord(0, iu);
        const double rho = A / std::cosh(ut);
        const double beta2 = A * std::tanh(ut);
        for (int iv = 0; iv < nv; ++iv)
            write_gallery_sample(S.pos, S.at(iu, iv), spec, spec.beta_c, beta2, rho,
                                 uv.coord(1, iv));
    }
    return S;
}

IsothermalResult isothermal_reparam(const SurfaceChart& S) {
    const int nu = S.nu(), nv = S.nv();
    require(nu >= 7, "isothermal reparametrization needs at least 7 u-nodes");
    const double hu = S.chart.axes[0].spacing;
    const int iv_mid = nv / 2;

    // The chart must carry the metric du^2 + rho^2(u) dv^2; the bar scales
    // with the stencil truncation error.
    const double bar = 100.0 * hu * hu + 1e-10;
    std::vector<double> rho(nu);
    for (int iu = 0; iu < nu; ++iu) {
        const Metric2 m = induced_metric(S.model, S.jet(iu, iv_mid));
        require(m.G > 0, "degenerate v-circle in the revolution chart");
        rho[iu] = std::sqrt(m.G);
    }
    double worst_E = 0, worst_F = 0, worst_v = 0;
    for (int iu = 0; iu < nu; ++iu)
        for (int iv = 0; iv < nv; ++iv) {
            const Metric2 m = induced_metric(S.model, S.jet(iu, iv));
            worst_E = std::max(worst_E, std::abs(m.E - 1.0));
            worst_F = std::max(worst_F, std::abs(m.F));
            require(m.G > 0, "degenerate v-circle in the revolution chart");
            worst_v = std::max(worst_v, std::abs(std::sqrt(m.G) - rho[iu]));
        }
    require(worst_E <= bar && worst_F <= bar && worst_v <= bar,
            "chart metric is not du^2 + rho^2(u) dv^2");

    std::vector<double> inv_rho(nu);
    for (int iu = 0; iu < nu; ++iu) inv_rho[iu] = 1.0 / rho[iu];
    std::vector<double> ut = cumulative_integral(inv_rho, hu);

    // Anchor the isothermal coordinate at the node nearest u = 0.
    int iu0 = 0;
    for (int iu = 1; iu < nu; ++iu)
        if (std::abs(S.u(iu)) < std::abs(S.u(iu0))) iu0 = iu;
    const double shift = ut[iu0];
    for (double& t : ut) t -= shift;

    // New axis: drop one node per side so cubic interpolation stays inside
    // the data, and keep a node at 0 when the window straddles it.
    const double lo = ut[1], hi = ut[nu - 2];
    require(hi > lo, "isothermal coordinate failed to increase");
    const int cn = nu - 2;
    GridAxis uax;
    if (lo < 0.0 && hi > 0.0) {
        const double R = std::min(-lo, hi);
        const double h_new = (cn % 2 == 1) ? 2.0 * R / (cn - 1) : 2.0 * R / cn;
        uax = axis_through_zero("ut", h_new, cn, cn / 2);
    } else {
        uax = GridAxis{"ut", lo, (hi - lo) / (cn - 1), cn};
    }

    IsothermalResult out;
    out.S.chart = GridChart::make({uax, S.chart.axes[1]});
    out.S.model = S.model;
    out.S.pos = Field::zeros(out.S.chart, S.pos.ncomp);
    out.lambda = Field::zeros(out.S.chart, 1);
    out.u_of_ut.resize(cn);

    const double u_origin = S.chart.axes[0].origin;
    auto ut_of_u = [&](double u) { return lagrange4(ut.data(), nu, u_origin, hu, u); };
    for (int i = 0; i < cn; ++i) {
        // ut is strictly increasing, so plain bisection inverts it.
        const double target = uax.origin + uax.spacing * i;
        double a = u_origin, b = u_origin + hu * (nu - 1);
        for (int it = 0; it < 64; ++it) {
            const double mid = 0.5 * (a + b);
            (ut_of_u(mid) < target ? a : b) = mid;
        }
        out.u_of_ut[i] = 0.5 * (a + b);
    }

    std::vector<double> line(nu);
    for (int iv = 0; iv < nv; ++iv) {
        for (int c = 0; c < S.pos.ncomp; ++c) {
            for (int iu = 0; iu < nu; ++iu) line[iu] = S.pos.at(S.at(iu, iv), c);
            for (int i = 0; i < cn; ++i)
                out.S.pos.at(out.S.at(i, iv), c) =
                    lagrange4(line.data(), nu, u_origin, hu, out.u_of_ut[i]);
        }
    }
    // Interpolation detunes the unit constraint at fourth order; polish it.
    for (int i = 0; i < cn; ++i)
        for (int iv = 0; iv < nv; ++iv) {
            auto s = out.S.pos.sample(out.S.at(i, iv));
            const double q = mdot(s, s);
            require(q > 0, "resampled position left the unit pseudo-sphere");
            s /= std::sqrt(q);
        }
    for (int i = 0; i < cn; ++i) {
        const double r = lagrange4(rho.data(), nu, u_origin, hu, out.u_of_ut[i]);
        require(r > 0, "interpolated radius must stay positive");
        for (int iv = 0; iv < nv; ++iv) out.lambda.at(out.S.at(i, iv), 0) = std::log(r);
    }
    return out;
}

EuclideanSphere sphere_from_sigma(const LightConeModel& model, const Vec& sigma) {
    const double sq = mdot(sigma, sigma);
    require(sq > 0, "sphere vector must be space-like");
    double omega = mdot(sigma, model.w);
    require(std::abs(omega) > 1e-12 * sigma.norm(),
            "sphere vector pairs to zero with infinity (hyperplane)");
    const double sgn = omega < 0 ? -1.0 : 1.0;
    EuclideanSphere out;
    out.center = sgn * (model.C.transpose() * mlower(sigma)) / std::abs(omega);
    out.radius = std::sqrt(sq) / std::abs(omega);
    return out;
}

SphereCongruence build_congruence(const HypersurfaceChart& H, const LightConeModel& model,
                                  double min_lambda) {
    require(H.lambda.ncomp == 1 && H.lambda.data.size() == H.chart.size(),
            "hypersurface chart must be analyzed before building the congruence");
    require(model.m == H.ambient(), "light-cone model must match the ambient dimension");
    const std::size_t total = H.chart.size();

    MinVal lam_floor;
    for (std::size_t at = 0; at < total; ++at) lam_floor.feed(std::abs(H.lambda.at(at, 0)), at);
    require(lam_floor.value > min_lambda,
            "repeated curvature vanishes near node " + std::to_string(lam_floor.where) +
                "; curvature spheres degenerate to hyperplanes");

    SphereCongruence out;
    out.chart = H.chart;
    out.S = Field::zeros(H.chart, model.ambient_dim());
    out.center = Field::zeros(H.chart, H.ambient());
    out.radius = Field::zeros(H.chart, 1);

    parallel_blocks(total, [&](std::size_t b, std::size_t e) {
        std::vector<int> idx(H.chart.dim());
        for (std::size_t at = b; at < e; ++at) {
            H.chart.unflat(at, idx.data());
            const PointGeometry P = H.geometry(idx.data(), false);
            const double lam = H.lambda.at(at, 0);
            const Vec S = model.psi_push(P.f, P.N) + lam * model.psi(P.f);
            out.S.sample(at) = S;
            out.center.sample(at) = P.f + P.N / lam;
            out.radius.at(at, 0) = 1.0 / lam;
        }
    });
    return out;
}

QuotientMap center_quotient(const GridChart& mchart) {
    require(mchart.dim() > 2, "quotient expects trailing fiber axes");
    QuotientMap q;
    for (int a = 2; a < mchart.dim(); ++a) q.fiber_center.push_back(mchart.axes[a].count / 2);
    return q;
}

QuotientResult quotient_surface(const SphereCongruence& SC, const LightConeModel& model,
                                const QuotientMap& q, double tol) {
    const GridChart& full = SC.chart;
    const int dim = full.dim();
    require(static_cast<int>(q.fiber_center.size()) == dim - 2,
            "quotient map does not match the chart");
    for (int k = 0; k < dim - 2; ++k)
        require(q.fiber_center[k] >= 0 && q.fiber_center[k] < full.axes[2 + k].count,
                "quotient reference leaf is outside the chart");

    QuotientResult out;
    out.S.chart = GridChart::make({full.axes[0], full.axes[1]});
    out.S.model = model;
    out.S.pos = Field::zeros(out.S.chart, SC.S.ncomp);

    const int nu = full.axes[0].count, nv = full.axes[1].count;
    std::vector<int> idx(dim);
    for (int k = 0; k < dim - 2; ++k) idx[2 + k] = q.fiber_center[k];
    for (int iu = 0; iu < nu; ++iu)
        for (int iv = 0; iv < nv; ++iv) {
            idx[0] = iu;
            idx[1] = iv;
            out.S.pos.sample(out.S.at(iu, iv)) = SC.S.sample(full.flat(idx.data()));
        }

    MaxAbs dev;
    std::vector<int> node(dim);
    for (std::size_t at = 0; at < full.size(); ++at) {
        full.unflat(at, node.data());
        const std::size_t ref = out.S.at(node[0], node[1]);
        for (int c = 0; c < SC.S.ncomp; ++c)
            dev.feed(SC.S.at(at, c) - out.S.pos.at(ref, c), at);
    }
    out.leaf_dependence = dev.value;
    require(out.leaf_dependence <= tol,
            "congruence is not two-parameter (leaf dependence " +
                std::to_string(out.leaf_dependence) + " at node " + std::to_string(dev.where) +
                ")");
    return out;
}

OneFormProjectability projectability_oneform(const HypersurfaceChart& H, const Field& omega) {
    const int n = H.n();
    require(omega.ncomp == n, "one-form must have one component per coordinate axis");
    const std::size_t total = H.chart.size();
    MaxAbs vertical, curl;
    std::mutex join;
    parallel_blocks(total, [&](std::size_t b, std::size_t e) {
        MaxAbs my_vertical, my_curl;
        std::vector<int> idx(n);
        for (std::size_t at = b; at < e; ++at) {
            H.chart.unflat(at, idx.data());
            for (int t = 2; t < n; ++t) {
                my_vertical.feed(omega.at(at, t), at);
                for (int a = 0; a < n; ++a) {
                    if (a == t) continue;
                    const double c =
                        d1(omega, idx.data(), t, a) - d1(omega, idx.data(), a, t);
                    my_curl.feed(c, at);
                }
            }
        }
        std::scoped_lock lock(join);
        vertical.merge(my_vertical);
        curl.merge(my_curl);
    });
    return OneFormProjectability{vertical.value, curl.value};
}

HypersurfaceChart envelope_reconstruct(const SurfaceChart& S,
                                       const std::vector<GridAxis>& fiber_axes) {
    const int nfib = static_cast<int>(fiber_axes.size());
    require(nfib >= 1, "envelope reconstruction needs at least one fiber axis");
    const int n = 2 + nfib;
    const int dim = S.model.ambient_dim();
    require(dim == n + 3, "fiber axes must complement the surface to dimension ambient - 3");

    const int nu = S.nu(), nv = S.nv();

    // Reference frame of the orthogonal complement at the center sample. The
    // complement basis itself is not continuous in (u, v), so it is computed
    // once and re-projected onto the moving complement at every sample.
    Mat ref(dim, n);
    {
        const SurfaceJet j = S.jet(nu / 2, nv / 2);
        Mat W(dim, 3);
        W.col(0) = j.s;
        W.col(1) = j.su;
        W.col(2) = j.sv;
        const Mat B = lorentz_complement(W);
        require(B.cols() == n, "surface frame does not span a three-dimensional subspace");
        const Mat G = mgram(B);
        Eigen::SelfAdjointEigenSolver<Mat> es(G);
        require(es.info() == Eigen::Success, "eigen-decomposition of the complement failed");
        const Vec ev = es.eigenvalues();
        const double scale = std::max(std::abs(ev(0)), std::abs(ev(n - 1)));
        require(ev(0) < -1e-10 * scale && ev(1) > 1e-10 * scale,
                "orthogonal complement is not Lorentzian");
        ref.col(0) = B * es.eigenvectors().col(0) / std::sqrt(-ev(0));
        for (int k = 1; k < n; ++k)
            ref.col(k) = B * es.eigenvectors().col(k) / std::sqrt(ev(k));
        const double dw = mdot(ref.col(0), S.model.w);
        if (std::abs(dw) > 1e-12) {
            if (dw < 0) ref.col(0) = -ref.col(0);
        } else {
            int top = 0;
            ref.col(0).cwiseAbs().maxCoeff(&top);
            if (ref(top, 0) < 0) ref.col(0) = -ref.col(0);
        }
    }

    // Per-sample Lorentz frames of the moving complement, smooth in (u, v)
    // because the projection and the ordered Gram-Schmidt have no branches.
    std::vector<Mat> frames(static_cast<std::size_t>(nu) * nv);
    for (int iu = 0; iu < nu; ++iu)
        for (int iv = 0; iv < nv; ++iv) {
            const SurfaceJet j = S.jet(iu, iv);
            require(induced_metric(S.model, j).det() > 1e-12, "surface chart is not immersed");
            Mat W(dim, 3);
            W.col(0) = j.s;
            W.col(1) = j.su;
            W.col(2) = j.sv;
            const Mat Gw = mgram(W);
            const Eigen::PartialPivLU<Mat> lu(Gw);
            Mat F(dim, n);
            for (int k = 0; k < n; ++k) {
                Vec rhs(3);
                for (int a = 0; a < 3; ++a) rhs(a) = mdot(W.col(a), ref.col(k));
                F.col(k) = ref.col(k) - W * lu.solve(rhs);
            }
            lorentz_orthonormalize(F);
            frames[static_cast<std::size_t>(iu) * nv + iv] = std::move(F);
        }

    std::vector<GridAxis> axes = {S.chart.axes[0], S.chart.axes[1]};
    axes.insert(axes.end(), fiber_axes.begin(), fiber_axes.end());
    HypersurfaceChart H;
    H.chart = GridChart::make(axes);
    H.pos = Field::zeros(H.chart, n + 1);

    MinVal den_floor;
    std::mutex join;
    parallel_blocks(H.chart.size(), [&](std::size_t b, std::size_t e) {
        MinVal my_floor;
        std::vector<int> idx(n);
        std::vector<double> d(nfib + 1);
        Vec p(dim);
        for (std::size_t at = b; at < e; ++at) {
            H.chart.unflat(at, idx.data());
            // Spherical direction from the fiber angles; all angles at pi/2
            // give the last basis direction.
            double prod = 1.0;
            for (int k = 0; k < nfib; ++k) {
                d[k] = prod * std::cos(H.chart.coord(2 + k, idx[2 + k]));
                prod *= std::sin(H.chart.coord(2 + k, idx[2 + k]));
            }
            d[nfib] = prod;
            const Mat& Q = frames[static_cast<std::size_t>(idx[0]) * nv + idx[1]];
            p = Q.col(0);
            for (int k = 0; k <= nfib; ++k) p += d[k] * Q.col(1 + k);
            const double den = mdot(p, S.model.w);
            my_floor.feed(den, at);
            if (den > 1e-12) H.pos.sample(at) = (S.model.C.transpose() * mlower(p)) / den;
        }
        std::scoped_lock lock(join);
        den_floor.merge(my_floor);
    });
    require(den_floor.value > 1e-8,
            "leaf reaches the point at infinity near node " + std::to_string(den_floor.where) +
                "; the envelope is not compact there");
    return H;
}

} // namespace conedef
