#include "conedef/lightcone.hpp"

#include <cmath>

#include "conedef/util.hpp"

namespace conedef {

double mdot(const Vec& a, const Vec& b) {
    require(a.size() == b.size(), "mdot: length mismatch");
    return a.dot(b) - 2.0 * a[0] * b[0];
}

Vec mlower(const Vec& a) {
    Vec out = a;
    out[0] = -out[0];
    return out;
}

Mat mgram(const Mat& B) {
    Mat eta_b = B;
    eta_b.row(0) *= -1.0;
    return B.transpose() * eta_b;
}

Mat lorentz_complement(const Mat& B) {
    // Kernel of B^T eta. fullPivLu keeps a reproducible column choice.
    Mat bte = B.transpose();
    bte.col(0) *= -1.0;
    Eigen::FullPivLU<Mat> lu(bte);
    Mat K = lu.kernel();
    require(K.cols() == B.rows() - B.cols(), "lorentz_complement: input columns dependent");
    return K;
}

void lorentz_orthonormalize(Mat& F, double tol) {
    const Eigen::Index k = F.cols();
    for (Eigen::Index j = 0; j < k; ++j) {
        Vec c = F.col(j);
        for (Eigen::Index i = 0; i < j; ++i) {
            // Subtract the projection; the first basis vector has square -1.
            double sign = (i == 0) ? -1.0 : 1.0;
            c -= sign * mdot(F.col(i), c) * F.col(i);
        }
        double q = mdot(c, c);
        if (j == 0) {
            require(q < -tol, "lorentz_orthonormalize: leading column not time-like");
            F.col(j) = c / std::sqrt(-q);
        } else {
            require(q > tol, "lorentz_orthonormalize: trailing column not space-like");
            F.col(j) = c / std::sqrt(q);
        }
    }
}

LightConeModel LightConeModel::canonical(int m) {
    require(m >= 1, "LightConeModel: m must be positive");
    LightConeModel model;
    model.m = m;
    const int d = m + 2;
    const double s = 1.0 / std::sqrt(2.0);
    model.p0 = Vec::Zero(d);
    model.p0[0] = s;
    model.p0[1] = s;
    model.w = Vec::Zero(d);
    model.w[0] = -s;
    model.w[1] = s;
    model.C = Mat::Zero(d, m);
    for (int i = 0; i < m; ++i) model.C(i + 2, i) = 1.0;
    return model;
}

Vec LightConeModel::psi(const Vec& x) const {
    require(x.size() == m, "psi: wrong Euclidean dimension");
    return p0 + C * x - 0.5 * x.squaredNorm() * w;
}

Vec LightConeModel::psi_push(const Vec& x, const Vec& X) const {
    return C * X - x.dot(X) * w;
}

Vec LightConeModel::project(const Vec& u) const {
    double s = mdot(u, w);
    require(s > 0.0, "project: vector not in the upper cone component (<u,w> <= 0)");
    return u / s;
}

Vec LightConeModel::to_euclidean(const Vec& p) const {
    Vec pl = mlower(p);
    return C.transpose() * pl;
}

double LightConeModel::conformal_factor(const Vec& F) const {
    double s = mdot(F, w);
    require(s > 0.0, "conformal_factor: <F,w> <= 0");
    return 1.0 / s;
}

void LightConeModel::validate(double tol) const {
    require(p0.size() == m + 2 && w.size() == m + 2, "model: dimension mismatch");
    require(std::abs(mdot(p0, p0)) <= tol, "model: p0 not light-like");
    require(std::abs(mdot(w, w)) <= tol, "model: w not light-like");
    require(std::abs(mdot(p0, w) - 1.0) <= tol, "model: <p0,w> != 1");
    require(w[0] < 0.0, "model: w must have negative time component");
    require(C.rows() == m + 2 && C.cols() == m, "model: C has wrong shape");
    Mat G = mgram(C);
    require((G - Mat::Identity(m, m)).cwiseAbs().maxCoeff() <= tol,
            "model: C columns not Minkowski-orthonormal");
    for (int i = 0; i < m; ++i) {
        require(std::abs(mdot(C.col(i), p0)) <= tol, "model: C not orthogonal to p0");
        require(std::abs(mdot(C.col(i), w)) <= tol, "model: C not orthogonal to w");
    }
}

Mat inversion_lorentz_map(const LightConeModel& model) {
    const int d = model.ambient_dim();
    // Map fixing the C-columns and exchanging p0 <-> w. Assembled in the
    // (p0, w, C) basis and converted to ambient coordinates: for any ambient
    // vector u = a p0 + b w + C y one has a = <u,w>, b = <u,p0>, y = C^T eta u.
    Mat out(d, d);
    for (int j = 0; j < d; ++j) {
        Vec e = Vec::Zero(d);
        e[j] = 1.0;
        double a = mdot(e, model.w);
        double b = mdot(e, model.p0);
        Vec y = model.C.transpose() * mlower(e);
        out.col(j) = a * model.w + b * model.p0 + model.C * y;
    }
    return out;
}

Mat translation_lorentz_map(const LightConeModel& model, const Vec& a) {
    require(a.size() == model.m, "translation_lorentz_map: wrong dimension");
    const int d = model.ambient_dim();
    // Determined by p0 -> Psi(a), w -> w, C y -> C y - <y,a> w, which is the
    // unique Lorentz extension of x -> x + a on the section.
    Mat out(d, d);
    for (int j = 0; j < d; ++j) {
        Vec e = Vec::Zero(d);
        e[j] = 1.0;
        double ca = mdot(e, model.w);   // p0 coefficient
        double cb = mdot(e, model.p0);  // w coefficient
        Vec y = model.C.transpose() * mlower(e);
        out.col(j) = ca * model.psi(a) + cb * model.w + model.C * y - y.dot(a) * model.w;
    }
    return out;
}

} // namespace conedef
