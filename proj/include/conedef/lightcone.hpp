#pragma once
// Light-cone model of conformal geometry. Euclidean R^m is realized as the
// section {p : <p,p> = 0, <p,w> = 1} of the light cone of Minkowski space
// L^{m+2}, where w is a fixed light-like vector (the point at infinity). The
// bilinear form has signature (-,+,...,+) with the time-like coordinate first.

#include <Eigen/Dense>

namespace conedef {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

// Minkowski inner product -a0*b0 + a1*b1 + ... on vectors of equal length.
double mdot(const Vec& a, const Vec& b);

// The metric applied to a vector: flips the sign of the time-like component,
// so that mdot(a, b) == mlower(a).dot(b).
Vec mlower(const Vec& a);

// Gram matrix of the columns of B under the Minkowski form.
Mat mgram(const Mat& B);

// Columns spanning the Minkowski-orthogonal complement of the columns of B.
// Deterministic: built from the kernel of B^T * eta via column-pivoted QR.
Mat lorentz_complement(const Mat& B);

// In-place Gram-Schmidt under the Minkowski form, keeping column order. The
// first column must have negative square (time-like) and is normalized to
// square -1; the remaining columns come out space-like with square +1.
// Throws if the signature assumption fails (degenerate input).
void lorentz_orthonormalize(Mat& F, double tol = 1e-9);

struct LightConeModel {
    int m = 0; // Euclidean dimension
    Vec p0;    // image of the Euclidean origin; light-like, <p0,w> = 1
    Vec w;     // point at infinity; light-like, time component negative
    Mat C;     // (m+2) x m linear isometry R^m -> L^{m+2}, columns space-like,
               // orthonormal, orthogonal to p0 and w

    // Default model: p0 = (1,1,0,..)/sqrt2, w = (-1,1,0,..)/sqrt2, C maps onto
    // coordinates 2..m+1.
    static LightConeModel canonical(int m);

    int ambient_dim() const { return m + 2; }

    // Psi(x) = p0 + Cx - (|x|^2/2) w. Satisfies <Psi(x),Psi(y)> = -|x-y|^2/2.
    Vec psi(const Vec& x) const;

    // Differential of Psi at x applied to X: CX - <x,X> w. Isometric in X.
    Vec psi_push(const Vec& x, const Vec& X) const;

    // Radial projection onto the <.,w> = 1 section; requires <u,w> > 0.
    Vec project(const Vec& u) const;

    // Inverse of psi on the section: x_i = <p, C e_i>. p must satisfy
    // <p,w> = 1 up to round-off (use project() first otherwise).
    Vec to_euclidean(const Vec& p) const;

    // For a light-cone representative F = (1/phi) Psi(f), returns phi= 1/<F,w>.
    double conformal_factor(const Vec& F) const;

    // Checks the defining algebra of the model (light-likeness, pairing,
    // isometry of C and orthogonality to the p0/w plane).
    void validate(double tol = 1e-12) const;
};

// Lorentz transformations of the ambient space that realize conformal maps of
// R^m. Both return square (m+2) x (m+2) matrices preserving the Minkowski form.
//
// The inversion map exchanges p0 and w; on the Euclidean picture it acts as
// x -> -2x/|x|^2 composed with the identification of the two sections, which
// is a sphere inversion about the origin (composed with a rotation and scale).
Mat inversion_lorentz_map(const LightConeModel& model);

// Translation x -> x + a.
Mat translation_lorentz_map(const LightConeModel& model, const Vec& a);

} // namespace conedef
