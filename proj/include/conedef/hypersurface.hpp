#pragma once
// Hypersurface charts f: M^n -> R^{n+1} over adapted grids (u, v, t_1...t_{n-2})
// whose trailing axes parametrize the leaves of the repeated principal
// curvature. Only the position samples and the repeated-curvature scalar are
// stored grid-wide; all other geometry is recomputed per node from the jets,
// which keeps memory flat on six-dimensional charts.

#include <vector>

#include "conedef/grid.hpp"

namespace conedef {

// Eigenvalue cluster of the shape operator: n-2 curvatures close together
// (their mean is lambda) plus two simple ones.
struct CurvatureCluster {
    double lambda = 0;  // mean of the clustered curvatures
    double spread = 0;  // max |member - lambda| inside the cluster
    double gap = 0;     // min |outside - lambda| over the two simple ones
    double mu1 = 0, mu2 = 0;  // the two simple principal curvatures, sorted
    bool ok(double rel_gap) const { return gap > 0 && spread <= rel_gap * gap; }
};

struct PointGeometry {
    int n = 0;
    Vec f;                   // position
    Mat J;                   // (n+1) x n first derivatives, column a = f_a
    std::vector<Vec> fab;    // second derivatives, row-major a*n+b
    Vec N;                   // unit normal oriented so det[J | N] > 0
    Mat g, ginv;             // induced metric and inverse
    Mat II;                  // <f_ab, N>
    Mat A;                   // shape operator g^{-1} II in the coordinate frame
    std::vector<Mat> gamma;  // gamma[c](a,b) = Gamma^c_{ab}
    CurvatureCluster cluster;

    const Vec& f2(int a, int b) const { return fab[static_cast<std::size_t>(a) * n + b]; }
};

struct HypersurfaceChart {
    GridChart chart;
    Field pos;     // n+1 components per node
    Field lambda;  // 1 component, filled by analyze()
    double rel_gap = 1e-2;

    int n() const { return chart.dim(); }
    int ambient() const { return n() + 1; }

    // full = with Christoffels; the cheap variant stops after the metric
    // data, which is all the vertical splitting needs. The curvature cluster
    // costs an eigensolve per node, so sweeps that read lambda from the
    // analyzed field can switch it off.
    PointGeometry geometry(const int* idx, bool full = true, bool need_cluster = true) const;

    struct Analysis {
        double max_spread_ratio = 0;  // worst cluster spread / gap
        double min_gap = 0;
        double fiber_kernel_defect = 0;  // max |(A - lambda I) d_t| over trailing axes
    };
    // Verifies the multiplicity-(n-2) contract node-wise and fills lambda.
    Analysis analyze();
};

// Orthogonal splitting at a node of an adapted chart: horizontal lifts of
// d_u, d_v against the trailing (vertical) axes, plus the induced 2x2 metric.
struct AdaptedPoint {
    int n = 0;
    Mat V;     // (n-2) x 2 vertical coefficients; lift_a = e_a - sum_k V(k,a) e_{2+k}
    Mat lift;  // n x 2 coordinate components of the lifted basis
    Mat2 gh;   // metric of the lifted basis
};
AdaptedPoint adapt(const PointGeometry& P);

// Splitting tensor of the vertical distribution along the trailing axis k,
// C_T X = -(nabla_X T)^horizontal, expressed in the lifted basis.
Mat2 splitting_tensor(const PointGeometry& P, const AdaptedPoint& ap, int k);

// Coordinate-frame n x n extension of a 2x2 horizontal endomorphism, zero on
// the vertical distribution.
Mat lift_endomorphism(const AdaptedPoint& ap, const Mat2& D);

// Frobenius distance from span{I} resp. span{I, J}; J must be trace-free.
double span_identity_residual(const Mat2& C);
double span_ij_residual(const Mat2& C, const Mat2& J);

// Product test input f(u,v,t) = (c(u,v), t) over the graph surface
// c(u,v) = (u, v, (u^2 + 2 v^2)/2). Its curvatures are (kappa1, kappa2,
// 0,...,0), the flat factor gives the repeated one, and every splitting
// tensor vanishes.
HypersurfaceChart cylinder_over_graph(const GridChart& chart);

} // namespace conedef
