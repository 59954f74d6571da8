#pragma once
// Space-like surface patches inside the unit pseudo-sphere of a Lorentz space:
// induced metric, Christoffel symbols, the second fundamental form relative to
// the pseudo-sphere, conjugate-coordinate classification, and the operator
//   Q(theta) = theta_uv - Gamma1 theta_u - Gamma2 theta_v + F theta
// (with a complex variant in z, zbar) that candidate radius functions must kill.

#include <complex>

#include "conedef/grid.hpp"
#include "conedef/lightcone.hpp"

namespace conedef {

using Cplx = std::complex<double>;

// Complex scalars live in 2-component fields, (re, im) per node.
inline Cplx cplx_at(const Field& f, std::size_t at) { return {f.at(at, 0), f.at(at, 1)}; }
inline void cplx_set(Field& f, std::size_t at, Cplx z) {
    f.at(at, 0) = z.real();
    f.at(at, 1) = z.imag();
}

// Second-order jet of the position field at one node.
struct SurfaceJet {
    Vec s, su, sv, suu, suv, svv;
};

struct Metric2 {
    double E = 0, F = 0, G = 0;
    double det() const { return E * G - F * F; }
};

// Coordinate Christoffel symbols Gamma^a_{bc} of the induced metric; first
// index is the output component (0 = u, 1 = v).
struct Christoffels2 {
    double uu[2] = {0, 0};
    double uv[2] = {0, 0};
    double vv[2] = {0, 0};
};

enum class ConjugateKind { hyperbolic, elliptic, parabolic, none };

const char* to_string(ConjugateKind k);

// Classification report. J is a coordinate-frame representative tensor with
// J^2 = I (hyperbolic), -I (elliptic) or 0 (parabolic). Residuals are maxima
// over the interior, normalized by `scale`, the largest sample norm among the
// second-fundamental-form components.
struct ConjugateStructure {
    ConjugateKind kind = ConjugateKind::none;
    Mat2 J = Mat2::Zero();
    double residual_real = 0;     // alpha(du, dv) defect
    double residual_complex = 0;  // alpha(dz, dzbar) defect
    double residual_parabolic = 0;
    double scale = 0;
};

struct SurfaceChart {
    GridChart chart;       // axes (u, v)
    LightConeModel model;  // ambient Lorentz structure
    Field pos;             // ambient components of s per node

    int nu() const { return chart.axes[0].count; }
    int nv() const { return chart.axes[1].count; }
    std::size_t at(int iu, int iv) const {
        const int idx[2] = {iu, iv};
        return chart.flat(idx);
    }
    double u(int iu) const { return chart.coord(0, iu); }
    double v(int iv) const { return chart.coord(1, iv); }

    SurfaceJet jet(int iu, int iv) const;
    // max |<s,s> - 1| over all nodes; throws above tol.
    double validate(double tol = 1e-10) const;
};

Metric2 induced_metric(const LightConeModel& model, const SurfaceJet& j);
Christoffels2 christoffels(const LightConeModel& model, const SurfaceJet& j);

// Component of s_ab orthogonal to span{s, s_u, s_v}, i.e. the second
// fundamental form of the surface as a submanifold of the pseudo-sphere.
struct SphereAlpha {
    Vec auu, auv, avv;
};
SphereAlpha sphere_alpha(const LightConeModel& model, const SurfaceJet& j);

// Decide whether the chart coordinates are real-conjugate (hyperbolic),
// complex-conjugate (elliptic) or adapted to a nilpotent structure
// (parabolic). rel_tol is the acceptance bar relative to the form's scale;
// callers pass C*h^2 to match the stencil error.
ConjugateStructure classify_conjugate(const SurfaceChart& S, double rel_tol);

// Per-node conjugate data tabulated once so transports and Q share values.
// gamma1/gamma2 hold the pair of the defining relation
// s_uv = Gamma1 s_u + Gamma2 s_v (mod normal directions); metricF = <s_u,s_v>.
// In the elliptic case gammaC holds the complex symbol of
// s_zzbar = Gamma s_z + conj(Gamma) s_zbar (mod normals) and metricFc the
// bilinear <dz, dzbar> = (E + G)/4.
struct ConjugateData {
    ConjugateKind kind = ConjugateKind::none;
    Field gamma1, gamma2, metricF;  // hyperbolic, 1 component each
    Field gammaC, metricFc;         // elliptic, 2 / 1 components
};
ConjugateData tabulate_conjugate(const SurfaceChart& S, ConjugateKind kind);

// Q applied to a scalar (1-component) field; boundary nodes use one-sided
// stencils, so consumers should reduce over the interior.
Field q_apply(const SurfaceChart& S, const ConjugateData& cd, const Field& theta);
// Complex variant for a 2-component field.
Field q_apply_complex(const SurfaceChart& S, const ConjugateData& cd, const Field& theta);

} // namespace conedef
