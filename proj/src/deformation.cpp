#include "conedef/deformation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <mutex>
#include <vector>

#include <Eigen/Dense>

namespace conedef {

namespace {

using Mat4 = Eigen::Matrix4d;

// Minkowski pairing usable on Eigen block expressions.
template <class A, class B>
double md(const A& a, const B& b) {
    return a.dot(b) - 2.0 * a(0) * b(0);
}

Mat4 frame_metric() {
    Mat4 G = Mat4::Identity();
    G(3, 3) = -1.0;
    return G;
}

// Per-node tensors of the bundle: shape operators, lifted endomorphisms,
// the curvature differential and the one-form components. `full` adds the
// Christoffel symbols of the chart (needed wherever covariant derivatives
// or the frame transport coefficients are assembled).
struct BundleNode {
    PointGeometry P;
    AdaptedPoint ap;
    Mat DL[2];
    Mat B[2];
    Mat Alam;
    double lam = 0;
    Vec dlog;
    double psi[2] = {0, 0};
};

BundleNode bundle_node(const HypersurfaceChart& H, const LiftedTriple& L, const Field& loglam,
                       const int* idx, bool full) {
    BundleNode nb;
    nb.P = H.geometry(idx, full, false);
    nb.ap = adapt(nb.P);
    const int n = nb.P.n;
    const std::size_t at = H.chart.flat(idx);
    nb.lam = H.lambda.at(at, 0);
    nb.Alam = nb.P.A - nb.lam * Mat::Identity(n, n);
    for (int i = 0; i < 2; ++i) {
        nb.DL[i] = lifted_D(L, i + 1, idx, nb.ap);
        nb.B[i] = nb.Alam * nb.DL[i];
    }
    nb.dlog = Vec(n);
    for (int a = 0; a < n; ++a) nb.dlog(a) = d1(loglam, idx, a, 0);
    const Vec ps = lifted_psi(L, idx);
    nb.psi[0] = ps(0);
    nb.psi[1] = ps(1);
    return nb;
}

double omega_comp(const BundleNode& nb, int i, int a) {
    return -nb.DL[i].col(a).dot(nb.dlog);
}

double psi_comp(const BundleNode& nb, int a) {
    return a == 0 ? nb.psi[0] : (a == 1 ? nb.psi[1] : 0.0);
}

// Coefficient matrix of the bundle connection along coordinate axis a in the
// section order (mu, xi1, xi2, zeta): column j holds the expansion of the
// derivative of section j. Antisymmetric against diag(1,1,1,-1) by
// construction, which is exactly metric compatibility.
Mat4 connection_coef(const BundleNode& nb, int a) {
    const double w1 = omega_comp(nb, 0, a);
    const double w2 = omega_comp(nb, 1, a);
    const double ps = psi_comp(nb, a);
    const double dl = nb.dlog(a);
    Mat4 W;
    W << 0, w1, w2, -dl,
        -w1, 0, -ps, -w1,
        -w2, ps, 0, -w2,
        -dl, -w1, -w2, 0;
    return W;
}

} // namespace

FrameBundleData build_bundle(const HypersurfaceChart& H, const LiftedTriple& L, double tol) {
    require(H.lambda.data.size() == H.chart.size(),
            "repeated curvature missing: run analyze() before building the bundle");
    require(L.mchart.dim() == H.chart.dim(), "lifted reconstruction does not match the chart");
    FrameBundleData B;
    B.H = &H;
    B.L = &L;
    const std::size_t total = H.chart.size();
    const int n = H.n();
    const Mat4 G4 = frame_metric();

    // Serial gate before any worker divides by or takes the log of lambda.
    MinVal lmin;
    for (std::size_t at = 0; at < total; ++at) lmin.feed(std::abs(H.lambda.at(at, 0)), at);
    if (lmin.seen && lmin.value <= 1e-12)
        fail("repeated curvature vanishes at node " + node_label(H.chart, lmin.where) +
             "; the congruence construction needs lambda bounded away from zero");
    B.loglam = Field::zeros(H.chart, 1);
    for (std::size_t at = 0; at < total; ++at)
        B.loglam.at(at, 0) = std::log(std::abs(H.lambda.at(at, 0)));
    std::mutex guard;
    parallel_blocks(total, [&](std::size_t lo, std::size_t hi) {
        MaxAbs asym, compat;
        std::vector<int> idx(n);
        for (std::size_t at = lo; at < hi; ++at) {
            H.chart.unflat(at, idx.data());
            const BundleNode nb = bundle_node(H, L, B.loglam, idx.data(), false);
            for (int i = 0; i < 2; ++i) {
                const Mat gB = nb.P.g * nb.B[i];
                asym.feed((gB - gB.transpose()).cwiseAbs().maxCoeff(), at);
            }
            for (int a = 0; a < n; ++a) {
                const Mat4 W = connection_coef(nb, a);
                compat.feed((G4 * W + W.transpose() * G4).cwiseAbs().maxCoeff(), at);
            }
        }
        std::scoped_lock lk(guard);
        B.alpha_asymmetry.merge(asym);
        B.compatibility.merge(compat);
    });
    if (B.alpha_asymmetry.value > tol)
        fail("composite shape operator (A - lambda I) D_i is asymmetric (defect " +
             std::to_string(B.alpha_asymmetry.value) + " at node " +
             node_label(H.chart, B.alpha_asymmetry.where) +
             "); input is conformally surface-like or corrupted");
    return B;
}

StructureResiduals structure_residuals(const FrameBundleData& Bd) {
    require(Bd.H != nullptr && Bd.L != nullptr, "bundle handle is empty");
    const HypersurfaceChart& H = *Bd.H;
    const LiftedTriple& L = *Bd.L;
    const GridChart& chart = H.chart;
    const int n = chart.dim();
    const std::size_t total = chart.size();
    const Mat4 G4 = frame_metric();
    StructureResiduals R;
    std::mutex guard;
    parallel_blocks(total, [&](std::size_t lo, std::size_t hi) {
        StructureResiduals loc;
        std::vector<int> idx(n), jdx(n);
        for (std::size_t at = lo; at < hi; ++at) {
            chart.unflat(at, idx.data());
            if (!chart.interior(idx.data())) continue;
            const BundleNode c = bundle_node(H, L, Bd.loglam, idx.data(), true);
            const Mat* M[4] = {&c.P.A, &c.B[0], &c.B[1], &c.Alam};

            // Christoffel action per axis: Ga[a](c,d) = Gamma^c_{a d}.
            std::vector<Mat> Ga(n, Mat(n, n));
            for (int a = 0; a < n; ++a)
                for (int cc = 0; cc < n; ++cc)
                    for (int d = 0; d < n; ++d) Ga[a](cc, d) = c.P.gamma[cc](a, d);

            // Neighbor packs for the first derivatives of the shape operators
            // and of the connection coefficients.
            std::vector<BundleNode> np;
            np.reserve(2 * static_cast<std::size_t>(n));
            for (int a = 0; a < n; ++a) {
                jdx = idx;
                jdx[a] = idx[a] - 1;
                np.push_back(bundle_node(H, L, Bd.loglam, jdx.data(), false));
                jdx[a] = idx[a] + 1;
                np.push_back(bundle_node(H, L, Bd.loglam, jdx.data(), false));
            }
            auto neighbor_M = [&](int a, int side, int s) -> const Mat& {
                const BundleNode& nb = np[2 * a + side];
                switch (s) {
                    case 0: return nb.P.A;
                    case 1: return nb.B[0];
                    case 2: return nb.B[1];
                    default: return nb.Alam;
                }
            };

            // Codazzi residual per frame section: the covariant exchange of
            // the shape operator must close through the bundle connection.
            MaxAbs* cod[4] = {&loc.codazzi_mu, &loc.codazzi_xi1, &loc.codazzi_xi2,
                              &loc.codazzi_zeta};
            for (int s = 0; s < 4; ++s) {
                std::vector<Mat> cM(n);
                for (int a = 0; a < n; ++a) {
                    const double ha = chart.axes[a].spacing;
                    const Mat dM = (neighbor_M(a, 1, s) - neighbor_M(a, 0, s)) / (2.0 * ha);
                    cM[a] = dM + Ga[a] * (*M[s]) - (*M[s]) * Ga[a];
                }
                for (int a = 0; a < n; ++a) {
                    const Mat4 Wa = connection_coef(c, a);
                    for (int b = a + 1; b < n; ++b) {
                        const Mat4 Wb = connection_coef(c, b);
                        Vec vab = cM[a].col(b);
                        Vec vba = cM[b].col(a);
                        for (int t = 0; t < 4; ++t) {
                            vab -= Wa(t, s) * M[t]->col(b);
                            vba -= Wb(t, s) * M[t]->col(a);
                        }
                        const Vec r = vab - vba;
                        cod[s]->feed(std::sqrt(r.dot(c.P.g * r)), at);
                    }
                }
            }

            // Ricci residual: curvature of the connection coefficients against
            // the commutators of the shape operators. The (mu, zeta) pair
            // cancels structurally and doubles as a round-off control.
            for (int a = 0; a < n; ++a) {
                const double ha = chart.axes[a].spacing;
                const Mat4 Wa = connection_coef(c, a);
                for (int b = a + 1; b < n; ++b) {
                    const double hb = chart.axes[b].spacing;
                    const Mat4 Wb = connection_coef(c, b);
                    const Mat4 dWb =
                        (connection_coef(np[2 * a + 1], b) - connection_coef(np[2 * a], b)) /
                        (2.0 * ha);
                    const Mat4 dWa =
                        (connection_coef(np[2 * b + 1], a) - connection_coef(np[2 * b], a)) /
                        (2.0 * hb);
                    const Mat4 Rc = dWb - dWa + Wa * Wb - Wb * Wa;
                    for (int i = 0; i < 4; ++i)
                        for (int j = i + 1; j < 4; ++j) {
                            const double lhs = G4(i, i) * Rc(i, j);
                            const Mat comm = (*M[j]) * (*M[i]) - (*M[i]) * (*M[j]);
                            const double rhs = (c.P.g * comm)(b, a);
                            const double r = lhs - rhs;
                            if (i == 0 && j == 3)
                                loc.ricci_mu_zeta.feed(r, at);
                            else
                                loc.ricci.feed(r, at);
                        }
                }
            }

            // Gauss residual. Both the bundle form and the hypersurface itself
            // express the same curvature tensor through their second
            // fundamental forms, so the difference of the two Gauss right-hand
            // sides must vanish and no curvature tensor is ever assembled. The
            // A-part is common to both sides and drops out.
            Mat E = Mat::Zero(n, n);
            E.leftCols(2) = c.ap.lift;
            for (int k = 2; k < n; ++k) E(k, k) = 1.0;
            const Mat S1 = E.transpose() * (c.P.g * c.B[0]) * E;
            const Mat S2 = E.transpose() * (c.P.g * c.B[1]) * E;
            const Mat SZ = E.transpose() * (c.P.g * c.Alam) * E;
            for (int x = 0; x < n; ++x)
                for (int y = x + 1; y < n; ++y)
                    for (int z = 0; z < n; ++z)
                        for (int w = z; w < n; ++w) {
                            const double r = S1(x, w) * S1(y, z) - S1(x, z) * S1(y, w) +
                                             S2(x, w) * S2(y, z) - S2(x, z) * S2(y, w) -
                                             SZ(x, w) * SZ(y, z) + SZ(x, z) * SZ(y, w);
                            loc.gauss.feed(r, at);
                        }
        }
        std::scoped_lock lk(guard);
        R.gauss.merge(loc.gauss);
        R.codazzi_mu.merge(loc.codazzi_mu);
        R.codazzi_xi1.merge(loc.codazzi_xi1);
        R.codazzi_xi2.merge(loc.codazzi_xi2);
        R.codazzi_zeta.merge(loc.codazzi_zeta);
        R.ricci.merge(loc.ricci);
        R.ricci_mu_zeta.merge(loc.ricci_mu_zeta);
    });
    return R;
}

namespace {

// State of the moving frame at a node, column layout
// [ position | tangents d_0..d_{n-1} | mu xi1 xi2 zeta ], ambient rows n + 4.
using State = Mat;

// Coefficients the stepper needs at one node of an integration line along a
// fixed axis. gm holds the lowered, symmetrized second-fundamental blocks
// (II, g B1, g B2, II - lambda g); Sc and Ac are assembled from them at the
// evaluation points so their duality is exact there, not just at the nodes.
struct LineCoef {
    Mat Gam;    // (c,d) -> Gamma^c_{axis d}
    Mat gm[4];  // lowered section blocks in the order (mu, xi1, xi2, zeta)
    Mat Sc;     // 4 x n second-fundamental rows in the section order
    Mat Ac;     // n x 4 Weingarten columns
    Mat4 W;     // connection coefficients along the axis
    Mat g;
    double lam = 0;
};

struct Ctx {
    const HypersurfaceChart& H;
    const LiftedTriple& L;
    const Field& loglam;
    const GridChart& chart;
    int n;
    std::vector<int> anchor;
    Field* Ftil;
    Vec wext;
};

struct LineDiag {
    MaxAbs null_res, null_der, rho_gauge, isometry, frame_gram, face_gram, normal_orth;
    MinVal w_pair;

    void merge(const LineDiag& o) {
        null_res.merge(o.null_res);
        null_der.merge(o.null_der);
        rho_gauge.merge(o.rho_gauge);
        isometry.merge(o.isometry);
        frame_gram.merge(o.frame_gram);
        face_gram.merge(o.face_gram);
        normal_orth.merge(o.normal_orth);
        w_pair.merge(o.w_pair);
    }
};

LineCoef line_coef(const Ctx& C, const int* idx, int axis) {
    const BundleNode nb = bundle_node(C.H, C.L, C.loglam, idx, true);
    const int n = C.n;
    LineCoef lc;
    lc.Gam = Mat(n, n);
    for (int cc = 0; cc < n; ++cc)
        for (int d = 0; d < n; ++d) lc.Gam(cc, d) = nb.P.gamma[cc](axis, d);
    // The lowered second-fundamental-form blocks are symmetrized before they
    // enter the stepper: the symmetry defect of g B_i is part of the O(h^2)
    // data error (reported by build_bundle), and feeding the symmetric part
    // keeps the frame Gram an invariant of the continuous flow, so the drift
    // that remains is stepper truncation plus interpolation round-off.
    const Mat g1r = nb.P.g * nb.B[0];
    const Mat g2r = nb.P.g * nb.B[1];
    lc.gm[0] = 0.5 * (nb.P.II + nb.P.II.transpose());
    lc.gm[1] = 0.5 * (g1r + g1r.transpose());
    lc.gm[2] = 0.5 * (g2r + g2r.transpose());
    lc.gm[3] = lc.gm[0] - nb.lam * nb.P.g;
    lc.W = connection_coef(nb, axis);
    lc.g = nb.P.g;
    lc.lam = nb.lam;
    return lc;
}

// Cubic interpolation weights (and their derivative in index units) at line
// position t, with the same clamped stencil selection as lagrange4. Computed
// once per evaluation point and reused for every coefficient entry.
struct Weights4 {
    int base = 0;
    double w[4] = {0, 0, 0, 0};
    double dw[4] = {0, 0, 0, 0};

    void compute(int n, double t, int forced_base = -1) {
        base = forced_base >= 0 ? forced_base : static_cast<int>(std::floor(t)) - 1;
        if (base < 0) base = 0;
        if (base > n - 4) base = n - 4;
        const double s = t - base;
        for (int j = 0; j < 4; ++j) {
            double denom = 1.0;
            for (int i = 0; i < 4; ++i)
                if (i != j) denom *= (j - i);
            double p = 1.0, d = 0.0;
            for (int k = 0; k < 4; ++k) {
                if (k == j) continue;
                double q = 1.0;
                for (int i = 0; i < 4; ++i)
                    if (i != j && i != k) q *= (s - i);
                d += q;
                p *= (s - k);
            }
            w[j] = p / denom;
            dw[j] = d / denom;
        }
    }

    double value(const double* line) const {
        const double* p = line + base;
        return w[0] * p[0] + w[1] * p[1] + w[2] * p[2] + w[3] * p[3];
    }
    double deriv(const double* line) const {
        const double* p = line + base;
        return dw[0] * p[0] + dw[1] * p[1] + dw[2] * p[2] + dw[3] * p[3];
    }
};

// One integration line: nodal coefficients plus entry-major copies so every
// coefficient can be interpolated (cubically) at the substep points.
struct CoefLine {
    int len = 0, n = 0, axis = 0;
    double h = 0;
    std::vector<LineCoef> node;
    std::vector<double> ent;

    int entries() const { return 6 * n * n + 16; }

    void build(const Ctx& C, std::vector<int>& idx, int axis_) {
        n = C.n;
        axis = axis_;
        h = C.chart.axes[axis].spacing;
        len = C.chart.axes[axis].count;
        node.resize(len);
        for (int j = 0; j < len; ++j) {
            idx[axis] = j;
            node[j] = line_coef(C, idx.data(), axis);
        }
        idx[axis] = C.anchor[axis];
        if (std::getenv("CONEDEF_NODES") && axis_ == 1) {
            for (int j = 0; j < len; ++j) {
                const LineCoef& c = node[j];
                std::fprintf(stderr, "node %d W01=%.10e W03=%.10e G00=%.10e G01=%.10e gm000=%.10e lam=%.10e\n",
                             j, c.W(0, 1), c.W(0, 3), c.Gam(0, 0), c.Gam(0, 1), c.gm[0](0, 0), c.lam);
            }
        }
        ent.assign(static_cast<std::size_t>(entries()) * len, 0.0);
        for (int j = 0; j < len; ++j) {
            int e = 0;
            auto put = [&](double v) { ent[static_cast<std::size_t>(e++) * len + j] = v; };
            const LineCoef& c = node[j];
            for (int r = 0; r < n; ++r)
                for (int cc = 0; cc < n; ++cc) put(c.Gam(r, cc));
            for (int s = 0; s < 4; ++s)
                for (int r = 0; r < n; ++r)
                    for (int cc = 0; cc < n; ++cc) put(c.gm[s](r, cc));
            for (int r = 0; r < 4; ++r)
                for (int cc = 0; cc < 4; ++cc) put(c.W(r, cc));
            for (int r = 0; r < n; ++r)
                for (int cc = 0; cc < n; ++cc) put(c.g(r, cc));
        }
    }

    template <class Scratch>
    void eval(double t, LineCoef& c, Scratch& s, int forced_base = -1) const;
};

// Preallocated work space for one line integration: evaluated coefficient
// sets, metric factorization buffers and the RK4 stage states. Reused across
// every cell of the line so the stepper makes no heap allocations.
struct StepScratch {
    LineCoef c0, cm, c1;
    Mat g, gdot, defect;
    Eigen::LLT<Mat> llt;
    State k1, k2, k3, k4, tmp;

    StepScratch(int n, int rows, int cols)
        : g(n, n), gdot(n, n), defect(n, n), llt(n), k1(rows, cols), k2(rows, cols),
          k3(rows, cols), k4(rows, cols), tmp(rows, cols) {
        for (LineCoef* c : {&c0, &cm, &c1}) {
            c->Gam = Mat(n, n);
            for (auto& m : c->gm) m = Mat(n, n);
            c->Sc = Mat(4, n);
            c->Ac = Mat(n, 4);
        }
    }
};

// Coefficients at fractional line position t (node index units). Sc and Ac
// come from one interpolated lowered block, paired through the interpolated
// metric, and the symmetric part of Gam is corrected so the interpolated
// metric solves the tangent Gram flow exactly. Those two choices make the
// full state Gram an invariant of the evaluated field up to stepper
// truncation.
template <class Scratch>
void CoefLine::eval(double t, LineCoef& c, Scratch& s, int forced_base) const {
    Weights4 wt;
    wt.compute(len, t, forced_base);
    int e = 0;
    auto line = [&](int k) { return ent.data() + static_cast<std::size_t>(k) * len; };
    for (int r = 0; r < n; ++r)
        for (int cc = 0; cc < n; ++cc) c.Gam(r, cc) = wt.value(line(e++));
    for (int s4 = 0; s4 < 4; ++s4)
        for (int r = 0; r < n; ++r)
            for (int cc = 0; cc < n; ++cc) c.gm[s4](r, cc) = wt.value(line(e++));
    for (int r = 0; r < 4; ++r)
        for (int cc = 0; cc < 4; ++cc) c.W(r, cc) = wt.value(line(e++));
    for (int r = 0; r < n; ++r)
        for (int cc = 0; cc < n; ++cc) {
            s.g(r, cc) = wt.value(line(e));
            s.gdot(r, cc) = wt.deriv(line(e)) / h;
            ++e;
        }

    s.llt.compute(s.g);
    require(s.llt.info() == Eigen::Success, "interpolated metric lost positivity");
    for (int s4 = 0; s4 < 4; ++s4) {
        const double sign = s4 == 3 ? -1.0 : 1.0;
        c.Sc.row(s4) = sign * c.gm[s4].row(axis);
        c.Ac.col(s4) = c.gm[s4].col(axis);
    }
    s.llt.solveInPlace(c.Ac);
    s.defect = s.gdot;
    s.defect.noalias() -= c.Gam.transpose() * s.g;
    s.defect.noalias() -= s.g * c.Gam;
    s.llt.solveInPlace(s.defect);
    c.Gam += 0.5 * s.defect;
}

// Gauss formula for the tangents, Weingarten plus connection for the frame.
void frame_rhs(const State& y, const LineCoef& c, int axis, int n, State& out) {
    const auto Gm = y.middleCols(1, n);
    const auto Ph = y.middleCols(1 + n, 4);
    out.col(0) = Gm.col(axis);
    out.middleCols(1, n).noalias() = Gm * c.Gam;
    out.middleCols(1, n).noalias() += Ph * c.Sc;
    out.middleCols(1 + n, 4).noalias() = Ph * c.W;
    out.middleCols(1 + n, 4).noalias() -= Gm * c.Ac;
}

void rk4_step(State& y, const LineCoef& c0, const LineCoef& cm, const LineCoef& c1, double h,
              int axis, int n, StepScratch& s) {
    frame_rhs(y, c0, axis, n, s.k1);
    s.tmp = y + (0.5 * h) * s.k1;
    frame_rhs(s.tmp, cm, axis, n, s.k2);
    s.tmp = y + (0.5 * h) * s.k2;
    frame_rhs(s.tmp, cm, axis, n, s.k3);
    s.tmp = y + h * s.k3;
    frame_rhs(s.tmp, c1, axis, n, s.k4);
    y += (h / 6.0) * (s.k1 + 2.0 * s.k2 + 2.0 * s.k3 + s.k4);
}

// Substeps per grid cell. With the per-cell stencil pinning the remaining
// drift is plain RK4 truncation of a cubic coefficient path; eight substeps
// leave the frame Gram and the null residual near 1e-10 at desk-scale
// spacings, two orders under the tightest certification bound.
constexpr int kCellSubsteps = 8;

// Substepped RK4 across one grid cell. The coefficients are smooth fields
// sampled on the line, so intermediate values come from cubic interpolation;
// the end evaluation of one substep is reused as the start of the next.
void advance_cell(const CoefLine& cl, State& y, int from, int dir, double h, int axis, int n,
                  StepScratch& s) {
    const int m = kCellSubsteps;
    const double dt = static_cast<double>(dir) / m;
    const double hs = dir * h / m;
    // Pin the interpolation stencil of the whole cell, endpoints included.
    // Without this the final endpoint evaluation falls on the next stencil,
    // whose cubic has the same value but a different derivative, and the
    // derivative jump feeds the metric defect correction an inconsistent
    // sample (worst near the line ends, where the one-sided discretization
    // of the input fields makes neighboring cubics visibly different).
    const int cbase = (dir > 0 ? from : from - 1) - 1;
    double t = from;
    cl.eval(t, s.c0, s, cbase);
    for (int k = 0; k < m; ++k) {
        cl.eval(t + 0.5 * dt, s.cm, s, cbase);
        cl.eval(t + dt, s.c1, s, cbase);
        rk4_step(y, s.c0, s.cm, s.c1, hs, axis, n, s);
        std::swap(s.c0, s.c1);
        t += dt;
    }
}

void integrate_line(const Ctx& C, std::vector<int>& idx, int axis, int start, const State& seed,
                    CoefLine& cl, std::vector<State>& out) {
    cl.build(C, idx, axis);
    const double h = C.chart.axes[axis].spacing;
    StepScratch s(C.n, seed.rows(), seed.cols());
    out.assign(cl.len, State());
    out[start] = seed;
    for (int j = start; j + 1 < cl.len; ++j) {
        out[j + 1] = out[j];
        advance_cell(cl, out[j + 1], j, +1, h, axis, C.n, s);
    }
    for (int j = start; j > 0; --j) {
        out[j - 1] = out[j];
        advance_cell(cl, out[j - 1], j, -1, h, axis, C.n, s);
    }
}

Vec gauge_position(const State& y, const LineCoef& c, int n) {
    return (y.col(1 + n + 3) - y.col(1 + n + 0)) / c.lam;
}

void record_state(const Ctx& C, std::size_t at, const State& y, const LineCoef& c,
                  LineDiag& dg, bool face) {
    const int n = C.n;
    const auto Gm = y.middleCols(1, n);
    const auto Ph = y.middleCols(1 + n, 4);
    const Vec rho = gauge_position(y, c, n);
    if (C.Ftil) C.Ftil->sample(at) = rho;
    dg.rho_gauge.feed((y.col(0) - rho).cwiseAbs().maxCoeff(), at);
    dg.null_res.feed(md(rho, rho), at);
    for (int a = 0; a < n; ++a) dg.null_der.feed(2.0 * md(Gm.col(a), rho), at);
    for (int a = 0; a < n; ++a)
        for (int b = a; b < n; ++b)
            dg.isometry.feed(md(Gm.col(a), Gm.col(b)) - c.g(a, b), at);
    for (int i = 0; i < 4; ++i)
        for (int j = i; j < 4; ++j) {
            const double expect = i == j ? (i == 3 ? -1.0 : 1.0) : 0.0;
            const double drift = md(Ph.col(i), Ph.col(j)) - expect;
            dg.frame_gram.feed(drift, at);
            if (face) dg.face_gram.feed(drift, at);
            if (face && std::getenv("CONEDEF_PROBE"))
                std::fprintf(stderr, "probe %s ph(%d,%d) %.3e\n",
                             node_label(C.chart, at).c_str(), i, j, drift);
        }
    for (int a = 0; a < n; ++a)
        for (int i = 0; i < 4; ++i) dg.normal_orth.feed(md(Gm.col(a), Ph.col(i)), at);
    dg.w_pair.feed(md(rho, C.wext), at);
}

void record_line(const Ctx& C, std::vector<int>& idx, int axis, const CoefLine& cl,
                 const std::vector<State>& states, LineDiag& dg) {
    for (int j = 0; j < cl.len; ++j) {
        idx[axis] = j;
        record_state(C, C.chart.flat(idx.data()), states[j], cl.node[j], dg, axis < 2);
    }
    idx[axis] = C.anchor[axis];
}

// Depth-first fill of the leaf axes: integrate along axis k from the seed,
// record, then recurse into axis k + 1 from every node of the line.
void dfs_fill(const Ctx& C, int k, std::vector<int>& idx, const State& seed, LineDiag& dg) {
    CoefLine cl;
    std::vector<State> line;
    integrate_line(C, idx, k, C.anchor[k], seed, cl, line);
    record_line(C, idx, k, cl, line, dg);
    if (k + 1 < C.n) {
        for (int j = 0; j < cl.len; ++j) {
            idx[k] = j;
            dfs_fill(C, k + 1, idx, line[j], dg);
        }
        idx[k] = C.anchor[k];
    }
}

State initial_state(const HypersurfaceChart& H, const std::vector<int>& anc, int n) {
    const PointGeometry P = H.geometry(anc.data(), false);
    const double lam = H.lambda.at(H.chart.flat(anc.data()), 0);
    const int amb = n + 4;
    State y = State::Zero(amb, n + 5);
    Eigen::LLT<Mat> llt(P.g);
    require(llt.info() == Eigen::Success, "metric not positive definite at the anchor");
    y.block(3, 1, n, n) = Mat(llt.matrixL()).transpose();
    const double s = lam > 0 ? 1.0 : -1.0;
    y(2, 1 + n + 0) = s;        // mu
    y(1, 1 + n + 1) = 1.0;      // xi1
    y(amb - 1, 1 + n + 2) = 1.0;  // xi2
    y(0, 1 + n + 3) = s;        // zeta
    // Gauge: the position is the image of (zeta - mu)/lambda, so the immersion
    // starts on the light cone with positive pairing against w.
    y.col(0) = (y.col(1 + n + 3) - y.col(1 + n + 0)) / lam;
    return y;
}

} // namespace

DeformationResult integrate_frame(const FrameBundleData& B, const LightConeModel& model) {
    require(B.H != nullptr && B.L != nullptr, "bundle handle is empty");
    const HypersurfaceChart& H = *B.H;
    const LiftedTriple& L = *B.L;
    const GridChart& chart = H.chart;
    const int n = chart.dim();
    require(n >= 3, "adapted charts need at least three axes");
    require(model.m == n + 2, "deformation model must carry two extra codimensions");
    require(H.lambda.data.size() == chart.size(),
            "repeated curvature missing: run analyze() before integrating");

    // The connection divides by lambda at every node; gate once up front so
    // the parallel sweeps cannot hit the singular set.
    {
        MinVal lmin;
        for (std::size_t at = 0; at < chart.size(); ++at)
            lmin.feed(std::abs(H.lambda.at(at, 0)), at);
        require(lmin.seen && lmin.value > 1e-12,
                "repeated curvature vanishes at node " + node_label(chart, lmin.where));
    }

    DeformationResult R;
    R.Ftil = Field::zeros(chart, n + 4);
    R.anchor.resize(n);
    for (int a = 0; a < n; ++a) R.anchor[a] = chart.axes[a].count / 2;

    Ctx C{H, L, B.loglam, chart, n, R.anchor, &R.Ftil, model.w};
    const State y0 = initial_state(H, R.anchor, n);
    LineDiag root;

    // Axis-0 line through the anchor.
    std::vector<int> idx0 = R.anchor;
    CoefLine cl0;
    std::vector<State> line0;
    integrate_line(C, idx0, 0, R.anchor[0], y0, cl0, line0);
    record_line(C, idx0, 0, cl0, line0, root);

    // Axis-1 lines from every node of the axis-0 line; their states seed the
    // leaf fills, so keep the whole (u, v) face.
    const int nu = chart.axes[0].count;
    const int nv = chart.axes[1].count;
    std::vector<State> face(static_cast<std::size_t>(nu) * nv);
    std::mutex guard;
    parallel_blocks(static_cast<std::size_t>(nu), [&](std::size_t lo, std::size_t hi) {
        LineDiag dg;
        for (std::size_t iu = lo; iu < hi; ++iu) {
            std::vector<int> idx = R.anchor;
            idx[0] = static_cast<int>(iu);
            CoefLine cl;
            std::vector<State> line;
            integrate_line(C, idx, 1, R.anchor[1], line0[iu], cl, line);
            record_line(C, idx, 1, cl, line, dg);
            for (int iv = 0; iv < nv; ++iv) face[iu * nv + iv] = std::move(line[iv]);
        }
        std::scoped_lock lk(guard);
        root.merge(dg);
    });

    // Leaf axes, one depth-first fill per face node.
    if (n > 2) {
        parallel_blocks(face.size(), [&](std::size_t lo, std::size_t hi) {
            LineDiag dg;
            for (std::size_t fid = lo; fid < hi; ++fid) {
                std::vector<int> idx = R.anchor;
                idx[0] = static_cast<int>(fid / nv);
                idx[1] = static_cast<int>(fid % nv);
                dfs_fill(C, 2, idx, face[fid], dg);
            }
            std::scoped_lock lk(guard);
            root.merge(dg);
        });
    }

    // Integrability certificate: rebuild the (u, v) face in the opposite
    // order and compare the positions.
    MaxAbs path;
    {
        Ctx Cq{H, L, B.loglam, chart, n, R.anchor, nullptr, model.w};
        std::vector<int> idxv = R.anchor;
        CoefLine clv;
        std::vector<State> linev;
        integrate_line(Cq, idxv, 1, R.anchor[1], y0, clv, linev);
        parallel_blocks(static_cast<std::size_t>(nv), [&](std::size_t lo, std::size_t hi) {
            MaxAbs dpath;
            for (std::size_t iv = lo; iv < hi; ++iv) {
                std::vector<int> idx = R.anchor;
                idx[1] = static_cast<int>(iv);
                CoefLine cl;
                std::vector<State> line;
                integrate_line(Cq, idx, 0, R.anchor[0], linev[iv], cl, line);
                for (int iu = 0; iu < nu; ++iu) {
                    idx[0] = iu;
                    const std::size_t at = chart.flat(idx.data());
                    const Vec rho = gauge_position(line[iu], cl.node[iu], n);
                    dpath.feed((rho - Vec(R.Ftil.sample(at))).cwiseAbs().maxCoeff(), at);
                }
            }
            std::scoped_lock lk(guard);
            path.merge(dpath);
        });
    }

    R.null_residual = root.null_res;
    R.null_derivative = root.null_der;
    R.rho_gauge = root.rho_gauge;
    R.isometry = root.isometry;
    R.frame_gram = root.frame_gram;
    R.anchor_frame_gram = root.face_gram;
    R.normal_orth = root.normal_orth;
    R.path_commutation = path;
    R.w_pairing = root.w_pair;
    return R;
}

ProjectionReport project_deformation(const DeformationResult& R, const HypersurfaceChart& H,
                                     const LightConeModel& model) {
    const GridChart& chart = H.chart;
    const int n = chart.dim();
    require(R.Ftil.ncomp == n + 4 && R.Ftil.size() == chart.size(),
            "deformation grid does not match the chart");
    require(model.m == n + 2, "projection model must carry two extra codimensions");

    // Gate before dividing in parallel.
    for (std::size_t at = 0; at < chart.size(); ++at) {
        const double den = md(Vec(R.Ftil.sample(at)), model.w);
        if (!(den > 1e-12))
            fail("light-cone projection failure: <F,w> = " + std::to_string(den) + " at node " +
                 node_label(chart, at));
    }

    ProjectionReport out;
    out.f = Field::zeros(chart, n + 2);
    out.factor = Field::zeros(chart, 1);
    parallel_blocks(chart.size(), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t at = lo; at < hi; ++at) {
            const Vec F = R.Ftil.sample(at);
            const double den = md(F, model.w);
            out.f.sample(at) = model.to_euclidean(F / den);
            out.factor.at(at, 0) = 1.0 / den;
        }
    });

    // Fourth-order stencils keep the diagnostic's own truncation well below the
    // defect it is supposed to measure; the gallery's exponential growth along v
    // would otherwise dominate through a second-order stencil.
    const auto d1_vec4 = [&chart](const Field& F, const int* idx, int axis) {
        std::array<std::size_t, 4> at;
        int shifted[8];
        const int* base = idx;
        std::copy(base, base + F.chart.dim(), shifted);
        int k = 0;
        for (int off : {-2, -1, 1, 2}) {
            shifted[axis] = idx[axis] + off;
            at[k++] = F.chart.flat(shifted);
        }
        const double h12 = 12.0 * chart.axes[axis].spacing;
        return Vec((F.sample(at[0]) - 8.0 * F.sample(at[1]) + 8.0 * F.sample(at[2]) -
                    F.sample(at[3])) /
                   h12);
    };

    std::mutex guard;
    parallel_blocks(chart.size(), [&](std::size_t lo, std::size_t hi) {
        MaxAbs conf;
        std::vector<int> idx(n);
        for (std::size_t at = lo; at < hi; ++at) {
            chart.unflat(at, idx.data());
            if (!chart.interior(idx.data(), 2)) continue;
            Mat J(n + 1, n);
            for (int a = 0; a < n; ++a) J.col(a) = d1_vec4(H.pos, idx.data(), a);
            const Mat g = J.transpose() * J;
            Eigen::LLT<Mat> llt(g);
            if (llt.info() != Eigen::Success) continue;
            const Mat E =
                Mat(llt.matrixL()).transpose().triangularView<Eigen::Upper>().solve(
                    Mat::Identity(n, n));
            Mat df(n + 2, n);
            for (int a = 0; a < n; ++a) df.col(a) = d1_vec4(out.f, idx.data(), a);
            const Mat T = df * E;
            const double p2 = out.factor.at(at, 0) * out.factor.at(at, 0);
            const Mat G2 = T.transpose() * T - p2 * Mat::Identity(n, n);
            conf.feed(G2.cwiseAbs().maxCoeff(), at);
        }
        std::scoped_lock lk(guard);
        out.conformality.merge(conf);
    });
    return out;
}

GenuinenessReport genuineness_diagnostics(const LiftedTriple& L) {
    GenuinenessReport out;
    const std::size_t total = L.bar.chart.size();
    for (std::size_t at = 0; at < total; ++at) {
        const GenuinenessMargins m = genuineness_margins(bar_D(L.bar, 1, at), bar_D(L.bar, 2, at));
        out.squares.feed(m.squares, at);
        out.rank.feed(m.rank, at);
    }
    return out;
}

} // namespace conedef
