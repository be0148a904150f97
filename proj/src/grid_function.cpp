#include "driftlab/grid_function.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace driftlab {

namespace {
void check_increasing(const std::vector<double>& v, const char* what) {
    if (v.empty()) throw std::logic_error(std::string(what) + ": empty node list");
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] > v[i - 1]))
            throw std::logic_error(std::string(what) + ": nodes not strictly increasing");
}
}  // namespace

GridFunction::GridFunction(std::vector<double> t_nodes, std::vector<double> x_nodes,
                           std::vector<double> values, double lipschitz_x)
    : t_nodes_(std::move(t_nodes)),
      x_nodes_(std::move(x_nodes)),
      values_(std::move(values)),
      lipschitz_x_(lipschitz_x) {
    if (values_.size() != t_nodes_.size() * x_nodes_.size())
        throw std::logic_error("grid function: value matrix shape mismatch");
}

GridFunction GridFunction::from_samples(std::vector<double> t_nodes, std::vector<double> x_nodes,
                                        const std::function<double(double, double)>& fn,
                                        double lipschitz_x) {
    std::vector<double> vals(t_nodes.size() * x_nodes.size());
    for (std::size_t i = 0; i < t_nodes.size(); ++i)
        for (std::size_t j = 0; j < x_nodes.size(); ++j)
            vals[i * x_nodes.size() + j] = fn(t_nodes[i], x_nodes[j]);
    GridFunction g(std::move(t_nodes), std::move(x_nodes), std::move(vals), 0.0);
    if (lipschitz_x < 0.0) {
        // Infer the bound from the sampled slopes.
        double lip = 0.0;
        for (std::size_t i = 0; i < g.n_rows(); ++i)
            for (std::size_t s = 0; s + 1 < g.n_cols(); ++s)
                lip = std::max(lip, std::abs(g.slope(i, s)));
        g.lipschitz_x_ = lip;
    } else {
        g.lipschitz_x_ = lipschitz_x;
    }
    return g;
}

std::size_t GridFunction::row_at(double t) const {
    auto it = std::upper_bound(t_nodes_.begin(), t_nodes_.end(), t);
    if (it == t_nodes_.begin()) return 0;
    return static_cast<std::size_t>(it - t_nodes_.begin()) - 1;
}

std::size_t GridFunction::row_left(double t) const {
    auto it = std::lower_bound(t_nodes_.begin(), t_nodes_.end(), t);
    if (it == t_nodes_.begin()) return 0;
    return static_cast<std::size_t>(it - t_nodes_.begin()) - 1;
}

double GridFunction::eval_row(std::size_t row, double x) const {
    const std::size_t m = n_cols();
    if (x <= x_nodes_.front()) return at(row, 0);
    if (x >= x_nodes_.back()) return at(row, m - 1);
    auto it = std::upper_bound(x_nodes_.begin(), x_nodes_.end(), x);
    const std::size_t j = static_cast<std::size_t>(it - x_nodes_.begin()) - 1;
    const double w = (x - x_nodes_[j]) / (x_nodes_[j + 1] - x_nodes_[j]);
    return at(row, j) + w * (at(row, j + 1) - at(row, j));
}

double GridFunction::eval(double t, double x) const { return eval_row(row_at(t), x); }

double GridFunction::slope(std::size_t row, std::size_t seg) const {
    return (at(row, seg + 1) - at(row, seg)) / (x_nodes_[seg + 1] - x_nodes_[seg]);
}

double GridFunction::derivative_row(std::size_t row, double x, Side side) const {
    const std::size_t m = n_cols();
    if (x < x_nodes_.front() || x > x_nodes_.back()) return 0.0;
    if (x == x_nodes_.front()) return side == Side::left ? 0.0 : slope(row, 0);
    if (x == x_nodes_.back()) return side == Side::left ? slope(row, m - 2) : 0.0;
    auto it = std::lower_bound(x_nodes_.begin(), x_nodes_.end(), x);
    const std::size_t j = static_cast<std::size_t>(it - x_nodes_.begin());
    if (j < m && x_nodes_[j] == x) {
        // On a node: the two sides may differ.
        return side == Side::left ? slope(row, j - 1) : slope(row, j);
    }
    return slope(row, j - 1);
}

double GridFunction::one_sided_x_derivative(double t, double x, Side side) const {
    return derivative_row(row_at(t), x, side);
}

GridFunction GridFunction::left_limit() const {
    GridFunction g(*this);
    for (std::size_t i = n_rows(); i-- > 1;)
        for (std::size_t j = 0; j < n_cols(); ++j) g.at(i, j) = at(i - 1, j);
    return g;
}

double GridFunction::t_variation(std::size_t x_index, double t0, double t1) const {
    double v = 0.0;
    for (std::size_t i = 1; i < n_rows(); ++i) {
        const double s = t_nodes_[i];
        if (s > t0 && s <= t1) v += std::abs(at(i, x_index) - at(i - 1, x_index));
    }
    return v;
}

void GridFunction::validate() const {
    check_increasing(t_nodes_, "grid function t_nodes");
    check_increasing(x_nodes_, "grid function x_nodes");
    if (t_nodes_.front() != 0.0) throw std::logic_error("grid function must have first t-node 0");
    for (double v : values_)
        if (!std::isfinite(v)) throw std::logic_error("grid function has non-finite value");
    const double tol = 1e-9 * std::max(1.0, lipschitz_x_);
    for (std::size_t i = 0; i < n_rows(); ++i)
        for (std::size_t s = 0; s + 1 < n_cols(); ++s)
            if (std::abs(slope(i, s)) > lipschitz_x_ + tol) {
                std::ostringstream os;
                os << "x-slope " << slope(i, s) << " exceeds declared Lipschitz bound "
                   << lipschitz_x_;
                throw std::logic_error(os.str());
            }
}

double GridFunction::max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
}

CompactGridFunction::CompactGridFunction(GridFunction fn, SupportBox box)
    : fn_(std::move(fn)), box_(box) {}

CompactGridFunction CompactGridFunction::tensor(std::vector<double> t_nodes,
                                                std::vector<double> t_profile,
                                                std::vector<double> x_nodes,
                                                std::vector<double> x_profile) {
    if (t_nodes.size() != t_profile.size() || x_nodes.size() != x_profile.size())
        throw std::invalid_argument("tensor: profile sizes must match node counts");
    const std::size_t nt = t_nodes.size(), nx = x_nodes.size();
    std::vector<double> vals(nt * nx);
    for (std::size_t i = 0; i < nt; ++i)
        for (std::size_t j = 0; j < nx; ++j) vals[i * nx + j] = t_profile[i] * x_profile[j];

    double lip = 0.0;
    double pt_max = 0.0;
    for (double p : t_profile) pt_max = std::max(pt_max, std::abs(p));
    for (std::size_t s = 0; s + 1 < nx; ++s)
        lip = std::max(lip, std::abs((x_profile[s + 1] - x_profile[s]) /
                                     (x_nodes[s + 1] - x_nodes[s])));
    lip *= pt_max;

    SupportBox box;
    box.t_lo = t_nodes.back();
    box.t_hi = t_nodes.front();
    for (std::size_t i = 0; i < nt; ++i) {
        if (t_profile[i] != 0.0) {
            box.t_lo = std::min(box.t_lo, t_nodes[i]);
            box.t_hi = std::max(box.t_hi, i + 1 < nt ? t_nodes[i + 1] : t_nodes[i]);
        }
    }
    box.x_lo = x_nodes.back();
    box.x_hi = x_nodes.front();
    for (std::size_t j = 0; j < nx; ++j) {
        if (x_profile[j] != 0.0) {
            box.x_lo = std::min(box.x_lo, x_nodes[j > 0 ? j - 1 : j]);
            box.x_hi = std::max(box.x_hi, x_nodes[j + 1 < nx ? j + 1 : j]);
        }
    }
    CompactGridFunction c(GridFunction(std::move(t_nodes), std::move(x_nodes), std::move(vals),
                                       lip),
                          box);
    c.validate();
    return c;
}

void CompactGridFunction::validate() const {
    fn_.validate();
    if (!(box_.t_lo > 0.0))
        throw std::logic_error("compact support must stay inside (0, infinity) in time");
    const auto& tn = fn_.t_nodes();
    const auto& xn = fn_.x_nodes();
    for (std::size_t i = 0; i < fn_.n_rows(); ++i) {
        bool nonzero = false;
        for (std::size_t j = 0; j < fn_.n_cols(); ++j)
            if (fn_.at(i, j) != 0.0) {
                nonzero = true;
                // A nonzero node value spreads over the two adjacent segments.
                if (j == 0 || j + 1 == fn_.n_cols())
                    throw std::logic_error("compact support: boundary x-column must vanish");
                if (xn[j - 1] < box_.x_lo - 1e-12 || xn[j + 1] > box_.x_hi + 1e-12)
                    throw std::logic_error("compact support: x-support escapes the declared box");
            }
        if (nonzero) {
            if (tn[i] < box_.t_lo - 1e-12)
                throw std::logic_error("compact support: t-support escapes the declared box");
            if (i + 1 == fn_.n_rows())
                throw std::logic_error("compact support: last t-row must vanish");
            if (tn[i + 1] > box_.t_hi + 1e-12)
                throw std::logic_error("compact support: t-support escapes the declared box");
        }
    }
}

PathSeries eval_on_path(const GridFunction& f, std::span<const double> path_values,
                        const Partition& partition, std::span<const JumpRecord> jumps) {
    PathSeries out;
    const std::size_t n_nodes = partition.times.size();
    out.node_values.resize(n_nodes);
    for (std::size_t k = 0; k < n_nodes; ++k)
        out.node_values[k] = f.eval(partition.times[k], path_values[k]);

    auto path_value_at = [&](double t) {
        auto it = std::upper_bound(partition.times.begin(), partition.times.end(), t);
        std::size_t k = static_cast<std::size_t>(it - partition.times.begin());
        if (k == 0) return path_values[0];
        if (k >= n_nodes) return path_values[n_nodes - 1];
        const double w = (t - partition.times[k - 1]) / (partition.times[k] - partition.times[k - 1]);
        return path_values[k - 1] + w * (path_values[k] - path_values[k - 1]);
    };

    for (const auto& j : jumps) {
        PathSeries::Event e;
        e.time = j.time;
        e.from_path_jump = true;
        const std::size_t row = f.row_at(j.time);
        const std::size_t row_minus = f.row_left(j.time);
        e.y_pre = f.eval_row(row_minus, j.pre);
        e.y_post = f.eval_row(row, j.post);
        e.x_part = f.eval_row(row, j.post) - f.eval_row(row, j.pre);
        e.t_part = f.eval_row(row, j.pre) - f.eval_row(row_minus, j.pre);
        out.events.push_back(e);
    }

    // t-atoms of f contribute jumps of Y even along continuous paths.
    const double t_end = partition.t_max();
    for (std::size_t i = 1; i < f.n_rows(); ++i) {
        const double s = f.t_nodes()[i];
        if (s <= 0.0 || s > t_end) continue;
        const double x = path_value_at(s);
        const double before = f.eval_row(i - 1, x);
        const double after = f.eval_row(i, x);
        if (before == after) continue;
        PathSeries::Event e;
        e.time = s;
        e.from_path_jump = false;
        e.y_pre = before;
        e.y_post = after;
        e.x_part = 0.0;
        e.t_part = after - before;
        out.events.push_back(e);
    }
    std::sort(out.events.begin(), out.events.end(),
              [](const auto& a, const auto& b) { return a.time < b.time; });
    return out;
}

// --- Mollifiers ----------------------------------------------------------

double TimeKernel::density(double s) const {
    if (s <= 0.0 || s >= 1.0) return 0.0;
    const double u = s * (1.0 - s);
    return 140.0 * u * u * u;
}

double TimeKernel::cumulative(double s) const {
    if (s <= 0.0) return 0.0;
    if (s >= 1.0) return 1.0;
    const double s4 = s * s * s * s;
    return 140.0 * (s4 * 0.25 - 0.6 * s4 * s + 0.5 * s4 * s * s - s4 * s * s * s / 7.0);
}

double SpaceKernel::density(double y) const {
    if (y <= -1.0 || y >= 1.0) return 0.0;
    const double u = 1.0 - y * y;
    return (35.0 / 32.0) * u * u * u;
}

double SpaceKernel::cumulative(double y) const {
    if (y <= -1.0) return 0.0;
    if (y >= 1.0) return 1.0;
    const double y3 = y * y * y;
    return (35.0 / 32.0) * (y - y3 + 0.6 * y3 * y * y - y3 * y3 * y / 7.0) + 0.5;
}

double SpaceKernel::first_moment_cum(double y) const {
    if (y <= -1.0 || y >= 1.0) return 0.0;
    const double u = 1.0 - y * y;
    return -(35.0 / 256.0) * u * u * u * u;
}

TimeMollified::TimeMollified(CompactGridFunction theta, TimeKernel kernel, int n)
    : theta_(std::move(theta)), kernel_(kernel), n_(n) {}

double TimeMollified::eval(double t, double x) const {
    const auto& f = theta_.fn();
    // Breakpoints in s where t - s/n crosses a t-node of theta.
    std::vector<double> cuts{0.0, 1.0};
    for (double s_i : f.t_nodes()) {
        const double c = n_ * (t - s_i);
        if (c > 0.0 && c < 1.0) cuts.push_back(c);
    }
    std::sort(cuts.begin(), cuts.end());
    double acc = 0.0;
    for (std::size_t l = 0; l + 1 < cuts.size(); ++l) {
        const double mass = kernel_.cumulative(cuts[l + 1]) - kernel_.cumulative(cuts[l]);
        if (mass == 0.0) continue;
        const double u = t - 0.5 * (cuts[l] + cuts[l + 1]) / n_;
        acc += mass * f.eval(std::max(u, 0.0), x);
    }
    return acc;
}

SpaceMollified::SpaceMollified(CompactGridFunction theta, SpaceKernel kernel, int n)
    : theta_(std::move(theta)), kernel_(kernel), n_(n) {}

double SpaceMollified::eval(double t, double x) const {
    const auto& f = theta_.fn();
    const std::size_t row = f.row_at(t);
    std::vector<double> cuts{-1.0, 1.0};
    for (double x_j : f.x_nodes()) {
        const double c = n_ * (x_j - x);
        if (c > -1.0 && c < 1.0) cuts.push_back(c);
    }
    std::sort(cuts.begin(), cuts.end());
    double acc = 0.0;
    for (std::size_t l = 0; l + 1 < cuts.size(); ++l) {
        const double a = cuts[l], b = cuts[l + 1];
        const double dA = kernel_.cumulative(b) - kernel_.cumulative(a);
        const double dM = kernel_.first_moment_cum(b) - kernel_.first_moment_cum(a);
        if (dA == 0.0 && dM == 0.0) continue;
        // theta(t, x + y/n) = v0 + (m/n)(y - y_mid) linear on the piece.
        const double y_mid = 0.5 * (a + b);
        const double x_mid = x + y_mid / n_;
        const double v0 = f.eval_row(row, x_mid);
        const double m = f.derivative_row(row, x_mid, Side::right);
        acc += v0 * dA + (m / n_) * (dM - y_mid * dA);
    }
    return acc;
}

double SpaceMollified::d_dx(double t, double x) const {
    const auto& f = theta_.fn();
    const std::size_t row = f.row_at(t);
    std::vector<double> cuts{-1.0, 1.0};
    for (double x_j : f.x_nodes()) {
        const double c = n_ * (x_j - x);
        if (c > -1.0 && c < 1.0) cuts.push_back(c);
    }
    std::sort(cuts.begin(), cuts.end());
    double acc = 0.0;
    for (std::size_t l = 0; l + 1 < cuts.size(); ++l) {
        const double dA = kernel_.cumulative(cuts[l + 1]) - kernel_.cumulative(cuts[l]);
        if (dA == 0.0) continue;
        const double x_mid = x + 0.5 * (cuts[l] + cuts[l + 1]) / n_;
        acc += dA * f.derivative_row(row, x_mid, Side::right);
    }
    return acc;
}

double SpaceMollified::d2_dx2(double t, double x) const {
    const auto& f = theta_.fn();
    const std::size_t row = f.row_at(t);
    const auto& xn = f.x_nodes();
    double acc = 0.0;
    for (std::size_t j = 0; j < xn.size(); ++j) {
        const double y = n_ * (xn[j] - x);
        if (y <= -1.0 || y >= 1.0) continue;
        const double s_right = j + 1 < xn.size() ? f.slope(row, j) : 0.0;
        const double s_left = j > 0 ? f.slope(row, j - 1) : 0.0;
        acc += n_ * (s_right - s_left) * kernel_.density(y);
    }
    return acc;
}

TimeMollified mollify_time(const CompactGridFunction& theta, TimeKernel kernel, int n) {
    if (!(theta.box().t_lo * n > 1.0)) {
        const int n_min = static_cast<int>(std::floor(1.0 / theta.box().t_lo)) + 1;
        std::ostringstream os;
        os << "time mollifier window 1/n reaches t = 0; need n >= " << n_min;
        throw std::invalid_argument(os.str());
    }
    return TimeMollified(theta, kernel, n);
}

SpaceMollified mollify_space(const CompactGridFunction& theta, SpaceKernel kernel, int n) {
    if (n < 1) throw std::invalid_argument("space mollifier needs n >= 1");
    return SpaceMollified(theta, kernel, n);
}

// --- Alignment -----------------------------------------------------------

std::vector<double> merge_nodes(std::span<const double> a, std::span<const double> b) {
    std::vector<double> out;
    out.reserve(a.size() + b.size());
    std::size_t i = 0, j = 0;
    auto near = [](double u, double v) {
        return std::abs(u - v) <= 1e-12 * std::max({1.0, std::abs(u), std::abs(v)});
    };
    while (i < a.size() || j < b.size()) {
        double next;
        if (j >= b.size() || (i < a.size() && a[i] <= b[j]))
            next = a[i++];
        else
            next = b[j++];
        if (out.empty() || !near(out.back(), next)) out.push_back(next);
    }
    return out;
}

GridFunction resample(const GridFunction& f, const std::vector<double>& t_nodes,
                      const std::vector<double>& x_nodes) {
    std::vector<double> vals(t_nodes.size() * x_nodes.size());
    for (std::size_t i = 0; i < t_nodes.size(); ++i) {
        const std::size_t row = f.row_at(t_nodes[i]);
        for (std::size_t j = 0; j < x_nodes.size(); ++j)
            vals[i * x_nodes.size() + j] = f.eval_row(row, x_nodes[j]);
    }
    return GridFunction(t_nodes, x_nodes, std::move(vals), f.lipschitz_x());
}

}  // namespace driftlab
