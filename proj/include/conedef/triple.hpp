#pragma once
// Reconstruction of the deformation data from an admissible candidate: the
// pair of determinant-1/2 endomorphisms and the one-form on the quotient
// surface, their verification, the horizontal lift to the hypersurface chart,
// and the verification of the lifted compatibility conditions that feed the
// frame integration.

#include <utility>

#include "conedef/congruence.hpp"
#include "conedef/cs.hpp"
#include "conedef/hypersurface.hpp"

namespace conedef {

// Data of the reconstructed pair on the (u, v) chart. In the hyperbolic case
// theta/tau/alpha/beta are real scalars (1 component); in the elliptic case
// theta/tau/alpha are complex (2 components) and beta is unused. psiu/psiv
// are the real one-form components in both cases; psizbar keeps the complex
// component the elliptic extraction solves for.
//
// The endomorphisms are sqrt(2) D_i = diag(theta_i, 1/theta_i) in the real
// conjugate frame, respectively sqrt(2) D_i = a I + b J with theta_i = a + ib
// and J the rotation by a quarter turn; det D_i = 1/2 holds by construction.
struct BarTriple {
    ConjugateKind kind = ConjugateKind::none;
    GridChart chart;
    Field theta1, theta2;
    Field tau1, tau2;
    Field alpha, beta;
    Field psiu, psiv;
    Field psizbar;

    std::size_t at(int iu, int iv) const {
        const int idx[2] = {iu, iv};
        return chart.flat(idx);
    }
};

// Coordinate-frame 2x2 matrix of D_i (i is 1 or 2) at a node.
Mat2 bar_D(const BarTriple& T, int i, std::size_t at);

// Hyperbolic reconstruction: alpha = 2 + 1/phiU and beta = 2 + 1/phiV, tau_i
// the roots of tau^2 - alpha tau + alpha/beta (tau1 < tau2), theta_i the
// continuity-tracked square roots anchored positive at the grid origin, and
// the one-form solved from the first-index transport identities; the second
// index is left to verify_bar_triple as a consistency residual. Throws
// "degenerate candidate" when the discriminant alpha*beta - 4 falls under
// tol_disc, and reports a branch flip with its location.
BarTriple reconstruct_bar_triple(const ConjugateData& cd, const HyperbolicTransport& t,
                                 double tol_disc = 1e-8);

// Elliptic reconstruction: alpha = 2 + 1/phi with 0 < |alpha| < 2 enforced,
// tau_j = (alpha/2)(1 -+ i sqrt(4 - |alpha|^2)/|alpha|) on the unit circle,
// and the complex one-form component from the first-index identity.
BarTriple reconstruct_bar_triple_elliptic(const ConjugateData& cd, const EllipticTransport& t,
                                          double tol_disc = 1e-8);

// Residual report of the surface-level conditions. Determinants and margins
// are evaluated on every node; derivative residuals on the interior.
struct BarConditionReport {
    MaxAbs det_residual;            // |det D_i - 1/2|
    MaxAbs derivative_exchange;     // (nabla'_X D_i)Y - (nabla'_Y D_i)X match
    MaxAbs oneform_curl;            // d psi(X, Y) against <D2 X, D1 Y>' - <D1 X, D2 Y>'
    MinVal margin_squares;          // min ||D2^2 -+ D1^2||, must stay positive
    MinVal margin_rank;             // smallest singular value of D1^2 + D2^2 - I
    MaxAbs consistency_u;           // unused second-index transport identity, u side
    MaxAbs consistency_v;           // v side (elliptic: |complex residual| in _u)
};
BarConditionReport verify_bar_triple(const SurfaceChart& S, const ConjugateData& cd,
                                     const BarTriple& T);

// Independent cross-checks: the connection symbols, one-form components, the
// metric pairing of the conjugate directions and the radius function all have
// closed forms in theta alone; each residual compares the tabulated quantity
// with its theta-expression. Samples whose denominators degenerate are
// skipped and counted.
struct ThetaIdentityReport {
    MaxAbs gamma1, gamma2;   // hyperbolic symbols (elliptic: complex symbol in gamma1)
    MaxAbs psiu, psiv;       // one-form components (elliptic: complex component in psiu)
    MaxAbs metricF;          // <d_u, d_v> from the curl of psi (hyperbolic only)
    MaxAbs rho_theta;        // rho against the theta expression
    MaxAbs rho_alpha;        // rho against sqrt(alpha beta - 4)/sqrt(|(alpha-2)(beta-2)|)
    MaxAbs seed_sum_u;       // beta_u + 2 (beta - 2) Gamma2 (elliptic: alpha transport)
    MaxAbs seed_sum_v;       // alpha_v + 2 (alpha - 2) Gamma1
    std::size_t skipped = 0;
};
ThetaIdentityReport theta_identity_residuals(const SurfaceChart& S, const ConjugateData& cd,
                                             const BarTriple& T, const Field* rho = nullptr);

// Scale-normalized maximum distance between the defining fields of two
// reconstructions on the same chart; used to tell distinct candidates apart.
double triple_distance(const BarTriple& a, const BarTriple& b);

// The two genuineness margins of a pair: distance of D2^2 from +-D1^2 and the
// smallest singular value of D1^2 + D2^2 - I. Both must be positive for the
// deformation to leave the codimension-one world.
struct GenuinenessMargins {
    double squares = 0;
    double rank = 0;
};
GenuinenessMargins genuineness_margins(const Mat2& D1, const Mat2& D2);

// Pair (D1, D2) with det D_i = 1/2 but D1^2 + D2^2 - I of rank one; the
// negative control for the rank margin. theta^2 > 1/2 required.
std::pair<Mat2, Mat2> make_rank_deficient_pair(double theta);

// Distribution structure of an adapted hypersurface chart. span_identity is
// the largest distance of any splitting tensor from multiples of I; when it
// stays near zero the chart is conformally surface-like and the construction
// refuses it. span_conjugate (when J is supplied) measures the distance from
// span{I, J}, which must be small for an admissible input.
struct SplittingReport {
    MaxAbs span_identity;
    MaxAbs span_conjugate;
};
SplittingReport analyze_splitting(const HypersurfaceChart& H, const Mat2* J = nullptr);

// Horizontal lift: the bar data is constant along the leaf coordinates, so
// the lift stores the (u, v) fields and realizes the coordinate-frame
// endomorphisms per node through the horizontal-lift basis. The one-form
// picks up exact zeros on the leaf components.
struct LiftedTriple {
    BarTriple bar;
    GridChart mchart;
};
LiftedTriple lift_to_M(const BarTriple& T, const QuotientMap& q, const HypersurfaceChart& H);

// One-form components (psi_u, psi_v, 0, ..., 0) at a full-chart node.
Vec lifted_psi(const LiftedTriple& L, const int* idx);
// n x n coordinate matrix of the lifted D_i at a node with its splitting data.
Mat lifted_D(const LiftedTriple& L, int i, const int* idx, const AdaptedPoint& ap);

// Residuals of the compatibility conditions on the hypersurface chart.
// psi_vertical and psi_leaf_curl vanish identically because the lift stores
// zero leaf components of a leaf-constant form; they are reported anyway so
// the table is complete. grad_exchange comes in two flavors because the
// statement mixes derivatives of D_i with the gradient of the repeated
// curvature: `raw` differentiates the coordinate extension of D_i, `proj`
// projects that derivative back to the horizontal distribution first.
struct LiftedConditionReport {
    MaxAbs psi_vertical;         // psi(T) over leaf directions
    MaxAbs det_residual;         // |det D_i - 1/2|
    MaxAbs leaf_derivative;      // horizontal part of nabla_T D_i
    MaxAbs splitting_commutator; // [D_i, C_T]
    MaxAbs shape_codazzi;        // exchange identity of nabla((A - lambda I) D_i)
    MaxAbs grad_exchange_raw;    // gradient/Hessian exchange identity
    MaxAbs grad_exchange_proj;
    MaxAbs psi_leaf_curl;        // d psi(Z, T)
    MaxAbs psi_curvature;        // d psi(X, Y) against <[(A-lI)D1, (A-lI)D2]X, Y>
    MinVal margin_squares;
    MinVal margin_rank;
};
LiftedConditionReport verify_lifted_triple(const LiftedTriple& L, const HypersurfaceChart& H);

// Determinant splitting identity of the shape operators: on the horizontal
// distribution det(A - lambda I) should split into the two factor
// determinants; the residual equals det(A - lambda I)(1 - det D1 - det D2).
// Samples where A - lambda I degenerates on the horizontal space are counted
// in `excluded` and skipped in the relative maximum.
struct FlatnessReport {
    Field grid;        // absolute residual per node
    MaxAbs relative;   // residual / |det(A - lambda I)| over included nodes
    std::size_t excluded = 0;
};
FlatnessReport flatness_check(const HypersurfaceChart& H, const LiftedTriple& L);

} // namespace conedef
