#pragma once
// Sphere congruences of hypersurfaces and their pseudo-sphere representatives:
// the two-parameter congruence attached to the repeated principal curvature,
// projection to the quotient surface, the envelope (tube) reconstruction of a
// hypersurface from a surface representative, and the product-curve factory
// producing the worked example surface with its isothermal form.

#include <vector>

#include "conedef/hypersurface.hpp"
#include "conedef/lightcone.hpp"
#include "conedef/surface.hpp"

namespace conedef {

// Product-curve surface: ambient L^{ambient} splits as R^{m1} x L^2 where L^2
// carries the time axis e0 and the axis e1. The v-curve is a circle of radius
// circle_r inside the unit sphere of R^{m1}; the u-curve
//   beta(u) = (beta_c, A cos(u/A), A sin(u/A)),  A = sqrt(1 + beta_c^2),
// is unit speed and space-like in the (e0, alpha(v), e1) coordinates. The
// resulting s(u, v) has induced metric du^2 + rho^2 dv^2, rho = A cos(u/A).
struct GallerySpec {
    double circle_r = 0.8;
    double beta_c = 0.0;
    int ambient = 9;
};

// Log conformal factor of the isothermal form and its derivative:
// e^{lambda} = A sech(ut), lambda' = -tanh(ut).
double gallery_lambda(const GallerySpec& spec, double ut);
double gallery_lambda_prime(double ut);

// Arc-length chart (u, v). u must stay inside (-pi A/2, pi A/2) so rho > 0.
SurfaceChart gallery_surface_arc(const GallerySpec& spec, const GridChart& uv);
// Isothermal chart (ut, v) built from the closed form directly.
SurfaceChart gallery_surface_isothermal(const GallerySpec& spec, const GridChart& uv);

// Numerical change to isothermal coordinates for a chart whose metric is
// du^2 + rho^2(u) dv^2: ut(u) = integral du / rho, positions resampled on a
// fresh uniform ut axis (the u range shrinks by one node on each side to keep
// cubic interpolation inside the data).
struct IsothermalResult {
    SurfaceChart S;
    Field lambda;                 // 1 component, log conformal factor
    std::vector<double> u_of_ut;  // inverse map sampled on the new u-axis
};
IsothermalResult isothermal_reparam(const SurfaceChart& S);

// Euclidean sphere represented by a unit space-like sigma: the points x with
// <Psi(x), sigma> = 0. radius is signed by the orientation of sigma.
struct EuclideanSphere {
    Vec center;
    double radius = 0;
};
EuclideanSphere sphere_from_sigma(const LightConeModel& model, const Vec& sigma);

// Congruence of curvature spheres S = Psi_*(f) N + lambda Psi(f) over an
// analyzed hypersurface chart. center/radius give the Euclidean picture.
struct SphereCongruence {
    GridChart chart;
    Field S;       // ambient components per node
    Field center;  // n+1 components
    Field radius;  // 1 component, signed 1/lambda
};
// Throws when |lambda| drops under min_lambda anywhere: the sphere of a
// vanishing curvature is a hyperplane and leaves this representation.
SphereCongruence build_congruence(const HypersurfaceChart& H, const LightConeModel& model,
                                  double min_lambda = 1e-6);

// Reference leaf for projecting fields from the adapted chart to (u, v).
struct QuotientMap {
    std::vector<int> fiber_center;  // node index per trailing axis
};
QuotientMap center_quotient(const GridChart& mchart);

struct QuotientResult {
    SurfaceChart S;
    double leaf_dependence = 0;  // max component deviation across leaves
};
// Extracts the (u, v) sheet through the reference leaf; throws when the
// congruence varies across leaves beyond tol.
QuotientResult quotient_surface(const SphereCongruence& SC, const LightConeModel& model,
                                const QuotientMap& q, double tol);

// Projectability of a one-form given by its n coordinate components on the
// adapted chart: both maxima must vanish to stencil accuracy for the form to
// descend to the quotient.
struct OneFormProjectability {
    double max_vertical = 0;  // |omega(T)| over trailing directions
    double max_curl = 0;      // |d omega(T, X)| over trailing x any
};
OneFormProjectability projectability_oneform(const HypersurfaceChart& H, const Field& omega);

// Rebuild a hypersurface chart from a surface representative: for each (u, v)
// the leaf is the set of light-cone points orthogonal to s, s_u, s_v with
// <p, w> = 1, an (n-2)-sphere parametrized by the supplied angle axes
// (n = 2 + fiber_axes.size()). A fixed reference frame taken at the center
// sample is projected onto the varying orthogonal complement and re-orthonormalized
// in fixed order, which keeps the fiber frame smooth in (u, v).
HypersurfaceChart envelope_reconstruct(const SurfaceChart& S,
                                       const std::vector<GridAxis>& fiber_axes);

} // namespace conedef
