#pragma once
// Uniform tensor-product grids with vector-valued sample fields, second-order
// finite-difference jets (one-sided at the boundary), cubic line interpolation
// and quadrature. All discrete calculus in the library goes through this file
// so that every consumer sees the same truncation behavior.

#include <cstddef>
#include <string>
#include <vector>

#include "conedef/lightcone.hpp"
#include "conedef/util.hpp"

namespace conedef {

struct GridAxis {
    std::string name;
    double origin = 0.0;
    double spacing = 0.0;
    int count = 0;
};

// Uniform axis with the value 0 on a node, which line transports use as the
// seeding line. offset_to_zero is the node index holding 0.
GridAxis axis_through_zero(const std::string& name, double spacing, int count, int offset_to_zero);

struct GridChart {
    std::vector<GridAxis> axes;

    int dim() const { return static_cast<int>(axes.size()); }
    std::size_t size() const;
    // Row-major flattening, last axis fastest.
    std::size_t stride(int axis) const;
    std::size_t flat(const int* idx) const;
    std::size_t flat(const std::vector<int>& idx) const { return flat(idx.data()); }
    void unflat(std::size_t at, int* idx) const;
    double coord(int axis, int i) const { return axes[axis].origin + axes[axis].spacing * i; }
    // True when idx is at least `margin` nodes away from every boundary.
    bool interior(const int* idx, int margin = 1) const;
    void validate() const; // counts >= 5 per axis, positive spacing

    static GridChart make(std::vector<GridAxis> axes);
};

// Flat sample storage with ncomp components per node, component fastest.
struct Field {
    GridChart chart;
    int ncomp = 0;
    std::vector<double> data;

    static Field zeros(const GridChart& chart, int ncomp);

    double& at(std::size_t flat, int c) { return data[flat * ncomp + c]; }
    double at(std::size_t flat, int c) const { return data[flat * ncomp + c]; }
    Eigen::Map<Vec> sample(std::size_t flat) { return {data.data() + flat * ncomp, ncomp}; }
    Eigen::Map<const Vec> sample(std::size_t flat) const {
        return {data.data() + flat * ncomp, ncomp};
    }
    std::size_t size() const { return chart.size(); }
};

// A finite-difference stencil: taps are offsets along one axis relative to the
// evaluation node, with weights already divided by the spacing powers.
struct Stencil {
    int n = 0;
    int off[4] = {0, 0, 0, 0};
    double wgt[4] = {0, 0, 0, 0};
};

// Second-order first/second derivative stencils at position i of an axis with
// `count` nodes and spacing h; central in the interior, one-sided at the ends.
Stencil d1_stencil(int i, int count, double h);
Stencil d2_stencil(int i, int count, double h);

// Derivatives of field components at a node. d1/d2 differentiate along a
// single axis; d11 is the mixed second derivative along two distinct axes
// (tensor product of first-derivative stencils, second order everywhere).
double d1(const Field& f, const int* idx, int axis, int comp);
double d2(const Field& f, const int* idx, int axis, int comp);
double d11(const Field& f, const int* idx, int ax1, int ax2, int comp);
Vec d1_vec(const Field& f, const int* idx, int axis);
Vec d2_vec(const Field& f, const int* idx, int axis);
Vec d11_vec(const Field& f, const int* idx, int ax1, int ax2);
// Convenience: any second derivative, dispatching on ax1 == ax2.
Vec dd_vec(const Field& f, const int* idx, int ax1, int ax2);

// Value of a sampled line at position k + 1/2 by 4-point Lagrange
// interpolation (shifted near the ends). line must hold >= 4 values.
double interp_half(const double* line, int n, int k);

// Cubic Lagrange interpolation of a uniform line at coordinate x; the 4-node
// stencil is clamped at the boundary, so x should stay inside the axis range.
double lagrange4(const double* line, int n, double origin, double h, double x);

// Cumulative integral of nodal samples from node 0, fourth order (composite
// Simpson with a cubic tail on odd prefixes).
std::vector<double> cumulative_integral(const std::vector<double>& f, double h);

// Solves y' = a(t) y along a uniformly sampled line with classical RK4,
// reading a at half-steps via interp_half. y0 sits at node `start`; the
// returned vector covers the whole line (integrated both directions).
std::vector<double> transport_linear_line(const std::vector<double>& a, double h, double y0,
                                          int start);

// "(i,j,...)" rendering of a flat node index, for messages and reports.
std::string node_label(const GridChart& chart, std::size_t at);

// Largest |value| of one component over nodes at least `margin` away from the
// boundary, with the node where it occurs. Deterministic under parallel runs.
MaxAbs max_abs_interior(const Field& f, int margin = 1, int comp = 0);
// Same reduction over the Euclidean norm of all components per node.
MaxAbs max_norm_interior(const Field& f, int margin = 1);

} // namespace conedef
