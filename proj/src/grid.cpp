#include "conedef/grid.hpp"

#include <cmath>

#include "conedef/util.hpp"

namespace conedef {

GridAxis axis_through_zero(const std::string& name, double spacing, int count,
                           int offset_to_zero) {
    require(offset_to_zero >= 0 && offset_to_zero < count, "axis_through_zero: offset outside axis");
    return GridAxis{name, -spacing * offset_to_zero, spacing, count};
}

std::size_t GridChart::size() const {
    std::size_t n = 1;
    for (const auto& a : axes) n *= static_cast<std::size_t>(a.count);
    return n;
}

std::size_t GridChart::stride(int axis) const {
    std::size_t s = 1;
    for (int a = dim() - 1; a > axis; --a) s *= static_cast<std::size_t>(axes[a].count);
    return s;
}

std::size_t GridChart::flat(const int* idx) const {
    std::size_t at = 0;
    for (int a = 0; a < dim(); ++a) at = at * static_cast<std::size_t>(axes[a].count) + idx[a];
    return at;
}

void GridChart::unflat(std::size_t at, int* idx) const {
    for (int a = dim() - 1; a >= 0; --a) {
        auto c = static_cast<std::size_t>(axes[a].count);
        idx[a] = static_cast<int>(at % c);
        at /= c;
    }
}

bool GridChart::interior(const int* idx, int margin) const {
    for (int a = 0; a < dim(); ++a) {
        if (idx[a] < margin || idx[a] >= axes[a].count - margin) return false;
    }
    return true;
}

void GridChart::validate() const {
    require(!axes.empty(), "chart: no axes");
    for (const auto& a : axes) {
        require(a.count >= 5, "chart: axis '" + a.name + "' needs at least 5 samples");
        require(a.spacing > 0.0, "chart: axis '" + a.name + "' needs positive spacing");
    }
}

GridChart GridChart::make(std::vector<GridAxis> axes) {
    GridChart chart{std::move(axes)};
    chart.validate();
    return chart;
}

Field Field::zeros(const GridChart& chart, int ncomp) {
    Field f;
    f.chart = chart;
    f.ncomp = ncomp;
    f.data.assign(chart.size() * static_cast<std::size_t>(ncomp), 0.0);
    return f;
}

Stencil d1_stencil(int i, int count, double h) {
    Stencil s;
    if (i == 0) {
        s.n = 3;
        s.off[0] = 0; s.off[1] = 1; s.off[2] = 2;
        s.wgt[0] = -1.5 / h; s.wgt[1] = 2.0 / h; s.wgt[2] = -0.5 / h;
    } else if (i == count - 1) {
        s.n = 3;
        s.off[0] = 0; s.off[1] = -1; s.off[2] = -2;
        s.wgt[0] = 1.5 / h; s.wgt[1] = -2.0 / h; s.wgt[2] = 0.5 / h;
    } else {
        s.n = 2;
        s.off[0] = -1; s.off[1] = 1;
        s.wgt[0] = -0.5 / h; s.wgt[1] = 0.5 / h;
    }
    return s;
}

Stencil d2_stencil(int i, int count, double h) {
    Stencil s;
    const double h2 = h * h;
    if (i == 0) {
        s.n = 4;
        s.off[0] = 0; s.off[1] = 1; s.off[2] = 2; s.off[3] = 3;
        s.wgt[0] = 2.0 / h2; s.wgt[1] = -5.0 / h2; s.wgt[2] = 4.0 / h2; s.wgt[3] = -1.0 / h2;
    } else if (i == count - 1) {
        s.n = 4;
        s.off[0] = 0; s.off[1] = -1; s.off[2] = -2; s.off[3] = -3;
        s.wgt[0] = 2.0 / h2; s.wgt[1] = -5.0 / h2; s.wgt[2] = 4.0 / h2; s.wgt[3] = -1.0 / h2;
    } else {
        s.n = 3;
        s.off[0] = -1; s.off[1] = 0; s.off[2] = 1;
        s.wgt[0] = 1.0 / h2; s.wgt[1] = -2.0 / h2; s.wgt[2] = 1.0 / h2;
    }
    return s;
}

namespace {

inline double apply_axis_stencil(const Field& f, std::size_t base, std::size_t stride,
                                 const Stencil& s, int comp) {
    double acc = 0.0;
    for (int t = 0; t < s.n; ++t) {
        std::size_t at = base + static_cast<std::size_t>(s.off[t]) * stride;
        acc += s.wgt[t] * f.data[at * static_cast<std::size_t>(f.ncomp) + comp];
    }
    return acc;
}

} // namespace

double d1(const Field& f, const int* idx, int axis, int comp) {
    const auto& ax = f.chart.axes[axis];
    Stencil s = d1_stencil(idx[axis], ax.count, ax.spacing);
    return apply_axis_stencil(f, f.chart.flat(idx), f.chart.stride(axis), s, comp);
}

double d2(const Field& f, const int* idx, int axis, int comp) {
    const auto& ax = f.chart.axes[axis];
    Stencil s = d2_stencil(idx[axis], ax.count, ax.spacing);
    return apply_axis_stencil(f, f.chart.flat(idx), f.chart.stride(axis), s, comp);
}

double d11(const Field& f, const int* idx, int ax1, int ax2, int comp) {
    const auto& a1 = f.chart.axes[ax1];
    const auto& a2 = f.chart.axes[ax2];
    Stencil s1 = d1_stencil(idx[ax1], a1.count, a1.spacing);
    Stencil s2 = d1_stencil(idx[ax2], a2.count, a2.spacing);
    std::size_t base = f.chart.flat(idx);
    std::size_t st1 = f.chart.stride(ax1);
    std::size_t st2 = f.chart.stride(ax2);
    double acc = 0.0;
    for (int t1 = 0; t1 < s1.n; ++t1) {
        std::size_t row = base + static_cast<std::size_t>(s1.off[t1]) * st1;
        double inner = 0.0;
        for (int t2 = 0; t2 < s2.n; ++t2) {
            std::size_t at = row + static_cast<std::size_t>(s2.off[t2]) * st2;
            inner += s2.wgt[t2] * f.data[at * static_cast<std::size_t>(f.ncomp) + comp];
        }
        acc += s1.wgt[t1] * inner;
    }
    return acc;
}

Vec d1_vec(const Field& f, const int* idx, int axis) {
    Vec out(f.ncomp);
    for (int c = 0; c < f.ncomp; ++c) out[c] = d1(f, idx, axis, c);
    return out;
}

Vec d2_vec(const Field& f, const int* idx, int axis) {
    Vec out(f.ncomp);
    for (int c = 0; c < f.ncomp; ++c) out[c] = d2(f, idx, axis, c);
    return out;
}

Vec d11_vec(const Field& f, const int* idx, int ax1, int ax2) {
    Vec out(f.ncomp);
    for (int c = 0; c < f.ncomp; ++c) out[c] = d11(f, idx, ax1, ax2, c);
    return out;
}

Vec dd_vec(const Field& f, const int* idx, int ax1, int ax2) {
    return (ax1 == ax2) ? d2_vec(f, idx, ax1) : d11_vec(f, idx, ax1, ax2);
}

double interp_half(const double* line, int n, int k) {
    require(n >= 4 && k >= 0 && k + 1 < n, "interp_half: bad position");
    if (k == 0) {
        // Cubic through nodes 0..3 evaluated at t = 0.5.
        return (5.0 * line[0] + 15.0 * line[1] - 5.0 * line[2] + line[3]) / 16.0;
    }
    if (k == n - 2) {
        return (5.0 * line[n - 1] + 15.0 * line[n - 2] - 5.0 * line[n - 3] + line[n - 4]) / 16.0;
    }
    return (-line[k - 1] + 9.0 * line[k] + 9.0 * line[k + 1] - line[k + 2]) / 16.0;
}

double lagrange4(const double* line, int n, double origin, double h, double x) {
    require(n >= 4, "lagrange4: need at least 4 samples");
    double t = (x - origin) / h;
    int base = static_cast<int>(std::floor(t)) - 1;
    if (base < 0) base = 0;
    if (base > n - 4) base = n - 4;
    double s = t - base;
    double out = 0.0;
    for (int j = 0; j < 4; ++j) {
        double w = 1.0;
        for (int i = 0; i < 4; ++i) {
            if (i == j) continue;
            w *= (s - i) / (j - i);
        }
        out += w * line[base + j];
    }
    return out;
}

std::vector<double> cumulative_integral(const std::vector<double>& f, double h) {
    const int n = static_cast<int>(f.size());
    require(n >= 4, "cumulative_integral: need at least 4 samples");
    std::vector<double> out(f.size(), 0.0);
    for (int i = 1; i < n; ++i) {
        if (i >= 2) {
            // Simpson over [i-2, i].
            double seg = h / 3.0 * (f[i - 2] + 4.0 * f[i - 1] + f[i]);
            out[i] = out[i - 2] + seg;
        } else {
            // Cubic through nodes 0..3 integrated over [0, 1] (in units of h).
            out[1] = h / 24.0 * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]);
        }
    }
    // Odd-index entries beyond the first need the cubic tail as well: redo them
    // from the previous even node for a uniform error constant.
    for (int i = 3; i < n; i += 2) {
        double tail = h / 24.0 * (f[i - 3] - 5.0 * f[i - 2] + 19.0 * f[i - 1] + 9.0 * f[i]);
        out[i] = out[i - 1] + tail;
    }
    return out;
}

std::string node_label(const GridChart& chart, std::size_t at) {
    std::vector<int> idx(chart.dim());
    chart.unflat(at, idx.data());
    std::string out = "(";
    for (int a = 0; a < chart.dim(); ++a) {
        if (a) out += ",";
        out += std::to_string(idx[a]);
    }
    out += ")";
    return out;
}

MaxAbs max_abs_interior(const Field& f, int margin, int comp) {
    MaxAbs best;
    std::vector<int> idx(f.chart.dim());
    for (std::size_t at = 0; at < f.size(); ++at) {
        f.chart.unflat(at, idx.data());
        if (!f.chart.interior(idx.data(), margin)) continue;
        best.feed(f.at(at, comp), at);
    }
    return best;
}

MaxAbs max_norm_interior(const Field& f, int margin) {
    MaxAbs best;
    std::vector<int> idx(f.chart.dim());
    for (std::size_t at = 0; at < f.size(); ++at) {
        f.chart.unflat(at, idx.data());
        if (!f.chart.interior(idx.data(), margin)) continue;
        best.feed(f.sample(at).norm(), at);
    }
    return best;
}

std::vector<double> transport_linear_line(const std::vector<double>& a, double h, double y0,
                                          int start) {
    const int n = static_cast<int>(a.size());
    require(start >= 0 && start < n, "transport_linear_line: start outside line");
    std::vector<double> y(a.size(), 0.0);
    y[start] = y0;
    auto step = [&](int k, int dir) {
        // One RK4 step from node k to node k + dir.
        double ak = a[k];
        double an = a[k + dir];
        double am = interp_half(a.data(), n, dir > 0 ? k : k - 1);
        double hh = h * dir;
        double yk = y[k];
        double k1 = ak * yk;
        double k2 = am * (yk + 0.5 * hh * k1);
        double k3 = am * (yk + 0.5 * hh * k2);
        double k4 = an * (yk + hh * k3);
        y[k + dir] = yk + hh / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    };
    for (int k = start; k + 1 < n; ++k) step(k, +1);
    for (int k = start; k - 1 >= 0; --k) step(k, -1);
    return y;
}

} // namespace conedef
