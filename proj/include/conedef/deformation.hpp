#pragma once
// Flat-bundle assembly over a verified reconstruction, structure-equation
// residuals, moving-frame integration of the light-cone immersion, and the
// projection to the conformal deformation in two extra codimensions.
//
// The bundle carries the abstract orthonormal frame (mu, xi1, xi2, zeta) with
// zeta time-like, the metric-compatible connection built from the one-forms
// omega_i, psi and dln(lambda), and the symmetric bilinear form whose
// components are the shape operators A, (A - lambda I)D_i and A - lambda I.

#include "conedef/triple.hpp"

namespace conedef {

// Lightweight handle: per-node tensors are recomputed on demand, so nothing
// grid-sized is stored here. The two residuals are filled by build_bundle.
struct FrameBundleData {
    const HypersurfaceChart* H = nullptr;
    const LiftedTriple* L = nullptr;
    Field loglam;            // log|lambda|, so connection entries are exact discrete gradients
    MaxAbs alpha_asymmetry;  // symmetry defect of (A - lambda I) D_i against the metric
    MaxAbs compatibility;    // antisymmetry defect of the connection coefficients
};
// Throws when the composite shape operators fail to be symmetric beyond tol,
// which signals a conformally surface-like or corrupted input.
FrameBundleData build_bundle(const HypersurfaceChart& H, const LiftedTriple& L,
                             double tol = 1e-3);

// Residuals of the Gauss, Codazzi and Ricci equations of the bundle data.
// The Gauss residual compares the bundle form with the Gauss equation the
// hypersurface itself satisfies, so the shared curvature tensor drops out and
// the check is algebraic per node. The (mu, zeta) Ricci pair cancels
// structurally and is reported separately as a round-off control.
struct StructureResiduals {
    MaxAbs gauss;
    MaxAbs codazzi_mu, codazzi_xi1, codazzi_xi2, codazzi_zeta;
    MaxAbs ricci;
    MaxAbs ricci_mu_zeta;
};
StructureResiduals structure_residuals(const FrameBundleData& B);

// Output of the moving-frame integration. Ftil holds the light-cone immersion
// samples (n + 4 ambient components). The position is emitted through the
// gauge identity Ftil = (zeta - mu)/lambda, whose null constraint degrades
// only with frame orthonormality; rho_gauge reports how far the directly
// integrated position drifts from that expression.
struct DeformationResult {
    Field Ftil;
    std::vector<int> anchor;   // node where the gauge was fixed
    MaxAbs null_residual;      // <Ftil, Ftil>
    MaxAbs null_derivative;    // d<Ftil, Ftil> along coordinate directions
    MaxAbs rho_gauge;          // integrated position against the gauge expression
    MaxAbs isometry;           // tangent Gram matrix against the metric of M
    MaxAbs frame_gram;         // frame orthonormality drift over the whole grid
    MaxAbs anchor_frame_gram;  // same drift restricted to the (u, v) face, the
                               // lines integrated directly from the anchor frame
    MaxAbs normal_orth;        // tangents against frame sections
    MaxAbs path_commutation;   // u-then-v versus v-then-u on the (u, v) face
    MinVal w_pairing;          // <Ftil, w>, must stay positive for projection
};
// Integrates position, tangents and frame from the central anchor node along
// axis-0 lines, then axis-1 lines, then leaf lines (one fourth-order stepper
// for all of them), and certifies integrability by re-running the (u, v) face
// in the opposite order. model must be the light-cone model with two extra
// codimensions (m = n + 2).
DeformationResult integrate_frame(const FrameBundleData& B, const LightConeModel& model);

struct ProjectionReport {
    Field f;       // Euclidean deformation samples, n + 2 components
    Field factor;  // conformal factor 1/<Ftil, w>
    MaxAbs conformality;  // <df e_i, df e_j> - factor^2 delta_ij over orthonormal pairs
};
ProjectionReport project_deformation(const DeformationResult& R, const HypersurfaceChart& H,
                                     const LightConeModel& model);

// Grid minima of the two genuineness margins of the reconstruction; positive
// margins are the working criterion that the deformation does not reduce to a
// codimension-one one. Margins only, not a decision procedure.
struct GenuinenessReport {
    MinVal squares;
    MinVal rank;
};
GenuinenessReport genuineness_diagnostics(const LiftedTriple& L);

} // namespace conedef
