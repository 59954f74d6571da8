#include "conedef/hypersurface.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "conedef/util.hpp"

namespace conedef {

namespace {

CurvatureCluster find_cluster(const Mat& II, const Mat& g) {
    const int n = static_cast<int>(g.rows());
    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> es(II, g, Eigen::EigenvaluesOnly);
    require(es.info() == Eigen::Success, "principal curvature solve failed");
    Vec kappa = es.eigenvalues();  // ascending
    // Best contiguous window of n-2 curvatures (sorted reals cluster contiguously).
    int best = 0;
    double best_width = kappa[n - 3] - kappa[0];
    for (int i = 1; i + n - 3 < n; ++i) {
        double width = kappa[i + n - 3] - kappa[i];
        if (width < best_width) {
            best_width = width;
            best = i;
        }
    }
    CurvatureCluster c;
    double sum = 0;
    for (int i = best; i <= best + n - 3; ++i) sum += kappa[i];
    c.lambda = sum / (n - 2);
    c.spread = 0;
    for (int i = best; i <= best + n - 3; ++i)
        c.spread = std::max(c.spread, std::abs(kappa[i] - c.lambda));
    std::vector<double> outside;
    for (int i = 0; i < n; ++i)
        if (i < best || i > best + n - 3) outside.push_back(kappa[i]);
    c.mu1 = std::min(outside[0], outside[1]);
    c.mu2 = std::max(outside[0], outside[1]);
    c.gap = std::min(std::abs(c.mu1 - c.lambda), std::abs(c.mu2 - c.lambda));
    return c;
}

} // namespace

PointGeometry HypersurfaceChart::geometry(const int* idx, bool full, bool need_cluster) const {
    const int dim = n();
    const int amb = ambient();
    PointGeometry P;
    P.n = dim;
    P.f = pos.sample(chart.flat(idx));
    P.J.resize(amb, dim);
    for (int a = 0; a < dim; ++a) P.J.col(a) = d1_vec(pos, idx, a);
    P.fab.resize(static_cast<std::size_t>(dim) * dim);
    for (int a = 0; a < dim; ++a) {
        for (int b = a; b < dim; ++b) {
            Vec d = dd_vec(pos, idx, a, b);
            P.fab[static_cast<std::size_t>(a) * dim + b] = d;
            if (b != a) P.fab[static_cast<std::size_t>(b) * dim + a] = d;
        }
    }
    P.g = P.J.transpose() * P.J;

    // Unit normal: last Householder direction of J, oriented positively.
    Eigen::HouseholderQR<Mat> qr(P.J);
    Mat Q = qr.householderQ() * Mat::Identity(amb, amb);
    P.N = Q.col(amb - 1);
    Mat framed(amb, amb);
    framed.leftCols(dim) = P.J;
    framed.col(amb - 1) = P.N;
    if (framed.determinant() < 0) P.N = -P.N;

    P.II.resize(dim, dim);
    for (int a = 0; a < dim; ++a)
        for (int b = 0; b < dim; ++b) P.II(a, b) = P.f2(a, b).dot(P.N);

    Eigen::LLT<Mat> llt(P.g);
    require(llt.info() == Eigen::Success, "induced metric not positive definite");
    P.ginv = llt.solve(Mat::Identity(dim, dim));
    P.A = llt.solve(P.II);

    if (!full) return P;

    // Christoffels from dg_c(a,b) = <f_ca, f_b> + <f_a, f_cb>.
    std::vector<Mat> dg(dim);
    for (int c = 0; c < dim; ++c) {
        dg[c].resize(dim, dim);
        for (int a = 0; a < dim; ++a)
            for (int b = 0; b < dim; ++b)
                dg[c](a, b) = P.f2(c, a).dot(P.J.col(b)) + P.J.col(a).dot(P.f2(c, b));
    }
    P.gamma.assign(dim, Mat(dim, dim));
    std::vector<Mat> lowered(dim, Mat(dim, dim));
    for (int c = 0; c < dim; ++c)
        for (int a = 0; a < dim; ++a)
            for (int b = 0; b < dim; ++b)
                lowered[c](a, b) = 0.5 * (dg[a](c, b) + dg[b](c, a) - dg[c](a, b));
    for (int d = 0; d < dim; ++d) {
        Mat acc = Mat::Zero(dim, dim);
        for (int c = 0; c < dim; ++c) acc += P.ginv(d, c) * lowered[c];
        P.gamma[d] = acc;
    }

    if (need_cluster) P.cluster = find_cluster(P.II, P.g);
    return P;
}

HypersurfaceChart::Analysis HypersurfaceChart::analyze() {
    chart.validate();
    require(pos.ncomp == ambient(), "position samples have wrong ambient dimension");
    require(n() >= 4, "adapted chart needs at least four axes");
    lambda = Field::zeros(chart, 1);
    Analysis out;
    out.min_gap = std::numeric_limits<double>::max();
    std::vector<int> idx(n());
    for (std::size_t at = 0; at < pos.size(); ++at) {
        chart.unflat(at, idx.data());
        PointGeometry P = geometry(idx.data());
        const CurvatureCluster& c = P.cluster;
        require(c.ok(rel_gap), "no principal curvature of the required multiplicity");
        lambda.at(at, 0) = c.lambda;
        out.max_spread_ratio = std::max(out.max_spread_ratio, c.spread / c.gap);
        out.min_gap = std::min(out.min_gap, c.gap);
        // Trailing coordinate axes must lie in the lambda eigenspace.
        double scale = std::max(std::abs(c.mu1 - c.lambda), std::abs(c.mu2 - c.lambda));
        Mat B = P.A - c.lambda * Mat::Identity(n(), n());
        for (int k = 2; k < n(); ++k) {
            Vec w = B.col(k);
            double defect = std::sqrt(w.dot(P.g * w)) / (scale * std::sqrt(P.g(k, k)));
            out.fiber_kernel_defect = std::max(out.fiber_kernel_defect, defect);
        }
    }
    return out;
}

AdaptedPoint adapt(const PointGeometry& P) {
    const int n = P.n;
    const int nt = n - 2;
    AdaptedPoint ap;
    ap.n = n;
    Mat gTT = P.g.block(2, 2, nt, nt);
    Mat gTa = P.g.block(2, 0, nt, 2);
    Eigen::LLT<Mat> llt(gTT);
    require(llt.info() == Eigen::Success, "vertical metric not positive definite");
    ap.V = llt.solve(gTa);
    ap.lift = Mat::Zero(n, 2);
    for (int a = 0; a < 2; ++a) {
        ap.lift(a, a) = 1.0;
        for (int k = 0; k < nt; ++k) ap.lift(2 + k, a) = -ap.V(k, a);
    }
    ap.gh = ap.lift.transpose() * P.g * ap.lift;
    return ap;
}

Mat2 splitting_tensor(const PointGeometry& P, const AdaptedPoint& ap, int k) {
    const int n = P.n;
    require(k >= 0 && k < n - 2, "splitting tensor: bad trailing axis");
    Mat2 C;
    for (int a = 0; a < 2; ++a) {
        // nabla_{lift_a} d_{t_k} in coordinates.
        Vec w = Vec::Zero(n);
        for (int c = 0; c < n; ++c) {
            double x = ap.lift(c, a);
            if (x == 0.0) continue;
            for (int d = 0; d < n; ++d) w[d] += x * P.gamma[d](c, 2 + k);
        }
        // Horizontal projection in the lifted basis.
        Eigen::Vector2d rhs = ap.lift.transpose() * (P.g * w);
        Eigen::Vector2d p = ap.gh.inverse() * rhs;
        C(0, a) = -p[0];
        C(1, a) = -p[1];
    }
    return C;
}

Mat lift_endomorphism(const AdaptedPoint& ap, const Mat2& D) {
    Mat out = Mat::Zero(ap.n, ap.n);
    out.leftCols(2) = ap.lift * D;
    return out;
}

double span_identity_residual(const Mat2& C) {
    Mat2 R = C - 0.5 * C.trace() * Mat2::Identity();
    return R.norm();
}

double span_ij_residual(const Mat2& C, const Mat2& J) {
    Mat2 R = C - 0.5 * C.trace() * Mat2::Identity();
    double jj = (J.transpose() * J).trace();
    require(std::abs(J.trace()) < 1e-12 && jj > 0, "span residual needs a trace-free J");
    double cj = (J.transpose() * R).trace() / jj;
    return (R - cj * J).norm();
}

HypersurfaceChart cylinder_over_graph(const GridChart& chart) {
    HypersurfaceChart H;
    H.chart = chart;
    const int n = chart.dim();
    require(n >= 4, "cylinder chart needs at least four axes");
    H.pos = Field::zeros(chart, n + 1);
    std::vector<int> idx(n);
    for (std::size_t at = 0; at < H.pos.size(); ++at) {
        chart.unflat(at, idx.data());
        double u = chart.coord(0, idx[0]);
        double v = chart.coord(1, idx[1]);
        H.pos.at(at, 0) = u;
        H.pos.at(at, 1) = v;
        H.pos.at(at, 2) = 0.5 * (u * u + 2.0 * v * v);
        for (int k = 2; k < n; ++k) H.pos.at(at, 3 + k - 2) = chart.coord(k, idx[k]);
    }
    return H;
}

} // namespace conedef
