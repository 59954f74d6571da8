#pragma once
// Membership test for candidate radius functions: transport the seed data
// along the conjugate directions, enforce the pointwise sign conditions, form
// rho and measure the Q(rho) residual. A candidate belongs to the admissible
// family exactly when one sign branch holds everywhere and the residual stays
// under the declared discretization bar.

#include <functional>
#include <vector>

#include "conedef/surface.hpp"

namespace conedef {

// When set, seed values are multiplied by the metric coefficient E sampled on
// their seeding line. On an isothermal chart this absorbs e^{2 lambda} into
// the seeds, the convention the revolution example uses.
struct TransportOptions {
    bool normalize_by_conformal_factor = false;
};

// The transport integrates away from a zero line of the opposite coordinate.
// When no node sits exactly at 0 the nearest line is used and the offset
// recorded here; a chart whose range excludes 0 is rejected.
struct SeedLine {
    int node = 0;
    double shift = 0;
};

struct HyperbolicTransport {
    Field phiU, phiV;  // 1 component each, on the (u, v) chart
    SeedLine seedU;    // v-line seeding phiU
    SeedLine seedV;    // u-line seeding phiV
    std::vector<double> U_samples, V_samples;  // effective seed values used
};

// phiU solves phi_v = 2 Gamma1 phi with phi(u, 0) = U(u) along v-lines;
// phiV solves phi_u = 2 Gamma2 phi with phi(0, v) = V(v) along u-lines.
// Classical one-step integration, coefficients read at half steps, so the
// transports are fourth order on smooth data.
HyperbolicTransport transport_hyperbolic(const GridChart& chart, const ConjugateData& cd,
                                         const std::function<double(double)>& U,
                                         const std::function<double(double)>& V);
HyperbolicTransport transport_hyperbolic(const SurfaceChart& S, const ConjugateData& cd,
                                         const std::function<double(double)>& U,
                                         const std::function<double(double)>& V,
                                         const TransportOptions& opt = {});

// The three sign alternatives, evaluated per node:
//   1:  phiU > 0 and phiV > 0
//   2:  0 < 2 phiU < -(2 phiV + 1)
//   3:  0 < 2 phiV < -(2 phiU + 1)
// margin[b-1] is the worst slack of branch b over the grid (positive iff the
// branch holds everywhere); at most one branch can hold at any sample, so
// `branch` is the unique global alternative, or 0 when none survives.
struct SignReport {
    int branch = 0;
    double margin[3] = {0, 0, 0};
    Field branch_grid;  // per-node branch tag, 0 when no alternative holds
};
SignReport sign_conditions(const HyperbolicTransport& t);

// rho = sqrt(|2 (phiU + phiV) + 1|). Throws "degenerate candidate" when the
// radicand comes within min_radicand of zero anywhere.
Field rho_hyperbolic(const HyperbolicTransport& t, double min_radicand = 1e-6);

struct EllipticTransport {
    Field phi;   // 2 components (re, im)
    Cplx gamma;  // the constant coefficient the closed form used
    std::vector<double> zeta_re, zeta_im;  // seed samples on the v = 0 line
};

// Solves phi_zbar = 2 Gamma phi with polarized seed phi(z, 0) = zeta(z) by
// the closed form zeta(z) e^{2 Gamma zbar}. Only charts with constant Gamma
// are supported; a varying coefficient is rejected rather than integrated,
// because the initial-value problem for this equation is ill-posed and a
// marching scheme would amplify round-off exponentially.
EllipticTransport transport_elliptic(const GridChart& chart, const ConjugateData& cd,
                                     const std::function<Cplx(Cplx)>& zeta);

// Sign conditions of the elliptic branch: phi != -1/2 and 4 Re phi + 1 < 0.
struct EllipticSignReport {
    double margin_pole = 0;  // min |phi + 1/2|
    double margin_neg = 0;   // min -(4 Re phi + 1)
    bool ok() const { return margin_pole > 0 && margin_neg > 0; }
};
EllipticSignReport sign_conditions_elliptic(const EllipticTransport& t);

// rho = sqrt(-(4 Re phi + 1)), same degeneracy rule as the hyperbolic form.
Field rho_elliptic(const EllipticTransport& t, double min_radicand = 1e-6);

// Q(rho) over the interior against the bar C * h^2 * sup|rho|, h the coarser
// of the two spacings. For an elliptic structure rho is promoted to a complex
// field and the residual takes the complex modulus.
struct MembershipReport {
    double residual = 0;
    std::size_t where = static_cast<std::size_t>(-1);
    double rho_sup = 0;
    double threshold = 0;
    bool member = false;
};
MembershipReport membership_residual(const SurfaceChart& S, const ConjugateData& cd,
                                     const Field& rho, double C = 10.0);

} // namespace conedef
