#include "driftlab/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace driftlab {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string fnv1a_hex(const std::string& s) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(s)));
    return buf;
}

void atomic_write(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp + " for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("short write to " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("missing input file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace {

void put_u64(std::string& s, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::string& s, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    put_u64(s, v);
}

struct Reader {
    const std::string& s;
    std::size_t pos = 0;
    std::uint64_t u64() {
        if (pos + 8 > s.size()) throw std::runtime_error("truncated binary file");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        const std::uint64_t v = u64();
        double d;
        std::memcpy(&d, &v, 8);
        return d;
    }
};

constexpr char kEnsembleMagic[4] = {'D', 'L', 'E', 'N'};
constexpr char kGridMagic[4] = {'D', 'L', 'G', 'F'};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

void write_ensemble_binary(const PathEnsemble& e, const std::string& path) {
    std::string s;
    s.reserve(64 + e.values.size() * 8);
    s.append(kEnsembleMagic, 4);
    s.push_back(1);
    put_u64(s, e.partition.times.size());
    for (double t : e.partition.times) put_f64(s, t);
    put_u64(s, e.n_paths);
    put_u64(s, e.seed);
    put_u64(s, e.model_tag.size());
    s.append(e.model_tag);
    for (double v : e.values) put_f64(s, v);
    for (const auto& pj : e.jumps) {
        put_u64(s, pj.size());
        for (const auto& j : pj) {
            put_f64(s, j.time);
            put_f64(s, j.pre);
            put_f64(s, j.post);
        }
    }
    atomic_write(path, s);
}

PathEnsemble read_ensemble_binary(const std::string& path) {
    const std::string s = read_file(path);
    if (s.size() < 5 || std::memcmp(s.data(), kEnsembleMagic, 4) != 0)
        throw std::runtime_error(path + ": not an ensemble file");
    if (s[4] != 1) throw std::runtime_error(path + ": unsupported ensemble version");
    Reader r{s, 5};
    PathEnsemble e;
    const std::uint64_t n_nodes = r.u64();
    e.partition.times.resize(n_nodes);
    for (auto& t : e.partition.times) t = r.f64();
    e.n_paths = r.u64();
    e.seed = r.u64();
    const std::uint64_t tag_len = r.u64();
    e.model_tag = s.substr(r.pos, tag_len);
    r.pos += tag_len;
    e.values.resize(e.n_paths * n_nodes);
    for (auto& v : e.values) v = r.f64();
    e.jumps.resize(e.n_paths);
    for (auto& pj : e.jumps) {
        pj.resize(r.u64());
        for (auto& j : pj) {
            j.time = r.f64();
            j.pre = r.f64();
            j.post = r.f64();
        }
    }
    e.validate();
    return e;
}

void write_ensemble_csv(const PathEnsemble& e, const std::string& path) {
    std::string s = "path";
    for (double t : e.partition.times) s += "," + fmt(t);
    s += "\n";
    for (std::size_t p = 0; p < e.n_paths; ++p) {
        s += std::to_string(p);
        for (std::size_t k = 0; k < e.partition.times.size(); ++k) s += "," + fmt(e.value(p, k));
        s += "\n";
    }
    atomic_write(path, s);

    bool any = false;
    for (const auto& pj : e.jumps) any = any || !pj.empty();
    if (any) {
        std::string js = "path,time,pre,post\n";
        for (std::size_t p = 0; p < e.n_paths; ++p)
            for (const auto& j : e.jumps[p])
                js += std::to_string(p) + "," + fmt(j.time) + "," + fmt(j.pre) + "," +
                      fmt(j.post) + "\n";
        atomic_write(path + ".jumps.csv", js);
    }
}

void write_grid_binary(const GridFunction& g, const std::string& path) {
    std::string s;
    s.append(kGridMagic, 4);
    s.push_back(1);
    put_f64(s, g.lipschitz_x());
    put_u64(s, g.n_rows());
    for (double t : g.t_nodes()) put_f64(s, t);
    put_u64(s, g.n_cols());
    for (double x : g.x_nodes()) put_f64(s, x);
    for (std::size_t i = 0; i < g.n_rows(); ++i)
        for (std::size_t j = 0; j < g.n_cols(); ++j) put_f64(s, g.at(i, j));
    atomic_write(path, s);
}

GridFunction read_grid_binary(const std::string& path) {
    const std::string s = read_file(path);
    if (s.size() < 5 || std::memcmp(s.data(), kGridMagic, 4) != 0)
        throw std::runtime_error(path + ": not a grid-function file");
    if (s[4] != 1) throw std::runtime_error(path + ": unsupported grid version");
    Reader r{s, 5};
    const double lip = r.f64();
    std::vector<double> t(r.u64());
    for (auto& v : t) v = r.f64();
    std::vector<double> x(r.u64());
    for (auto& v : x) v = r.f64();
    std::vector<double> vals(t.size() * x.size());
    for (auto& v : vals) v = r.f64();
    return GridFunction(std::move(t), std::move(x), std::move(vals), lip);
}

void write_grid_csv(const GridFunction& g, const std::string& path) {
    std::string s = "t\\x";
    for (double x : g.x_nodes()) s += "," + fmt(x);
    s += "\n";
    for (std::size_t i = 0; i < g.n_rows(); ++i) {
        s += fmt(g.t_nodes()[i]);
        for (std::size_t j = 0; j < g.n_cols(); ++j) s += "," + fmt(g.at(i, j));
        s += "\n";
    }
    atomic_write(path, s);
}

GridFunction read_grid_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("missing input file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty csv");
    std::vector<double> x;
    {
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');  // corner
        while (std::getline(ss, cell, ',')) x.push_back(std::stod(cell));
    }
    std::vector<double> t, vals;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        t.push_back(std::stod(cell));
        std::size_t count = 0;
        while (std::getline(ss, cell, ',')) {
            vals.push_back(std::stod(cell));
            ++count;
        }
        if (count != x.size()) throw std::runtime_error(path + ": ragged csv row");
    }
    double lip = 0.0;
    const std::size_t nx = x.size();
    for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t s2 = 0; s2 + 1 < nx; ++s2)
            lip = std::max(lip, std::abs((vals[i * nx + s2 + 1] - vals[i * nx + s2]) /
                                         (x[s2 + 1] - x[s2])));
    return GridFunction(std::move(t), std::move(x), std::move(vals), lip);
}

void write_density_csv(const DensitySlice& d, const std::vector<double>& x_nodes,
                       const std::string& path) {
    std::string s = "x,density\n";
    for (std::size_t j = 0; j < x_nodes.size(); ++j)
        s += fmt(x_nodes[j]) + "," + fmt(d.values[j]) + "\n";
    atomic_write(path, s);
}

namespace {

std::string color_for(double v, double lo, double hi) {
    double u = hi > lo ? (v - lo) / (hi - lo) : 0.5;
    u = std::clamp(u, 0.0, 1.0);
    // blue -> white -> red
    int r, g, b;
    if (u < 0.5) {
        const double w = u / 0.5;
        r = static_cast<int>(255 * w);
        g = static_cast<int>(255 * w);
        b = 255;
    } else {
        const double w = (u - 0.5) / 0.5;
        r = 255;
        g = static_cast<int>(255 * (1.0 - w));
        b = static_cast<int>(255 * (1.0 - w));
    }
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
    return buf;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace

std::string svg_heatmap(const std::vector<double>& values, std::size_t n_rows,
                        std::size_t n_cols, double t_lo, double t_hi, double x_lo, double x_hi,
                        const std::string& title) {
    const int W = 640, H = 480, ml = 60, mb = 40, mt = 30, mr = 20;
    double lo = values.empty() ? 0.0 : values[0], hi = lo;
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\">\n";
    s << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << title
      << " [" << num(lo) << ", " << num(hi) << "]</text>\n";
    const double cw = static_cast<double>(W - ml - mr) / static_cast<double>(n_rows);
    const double ch = static_cast<double>(H - mt - mb) / static_cast<double>(n_cols);
    for (std::size_t i = 0; i < n_rows; ++i)
        for (std::size_t j = 0; j < n_cols; ++j) {
            const double v = values[i * n_cols + j];
            s << "<rect x=\"" << num(ml + cw * i) << "\" y=\""
              << num(H - mb - ch * (j + 1)) << "\" width=\"" << num(cw + 0.5) << "\" height=\""
              << num(ch + 0.5) << "\" fill=\"" << color_for(v, lo, hi) << "\"/>\n";
        }
    s << "<text x=\"" << ml << "\" y=\"" << H - 8 << "\" font-size=\"11\">t: " << num(t_lo)
      << " .. " << num(t_hi) << "</text>\n";
    s << "<text x=\"" << W - mr - 160 << "\" y=\"" << H - 8 << "\" font-size=\"11\">x: "
      << num(x_lo) << " .. " << num(x_hi) << "</text>\n";
    s << "</svg>\n";
    return s.str();
}

std::string svg_loglog(const std::vector<double>& xs, const std::vector<double>& ys,
                       const std::string& title) {
    const int W = 640, H = 480, ml = 70, mb = 50, mt = 30, mr = 20;
    std::vector<double> lx(xs.size()), ly(ys.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        lx[i] = std::log10(xs[i]);
        ly[i] = std::log10(std::max(ys[i], 1e-300));
    }
    double x0 = *std::min_element(lx.begin(), lx.end());
    double x1 = *std::max_element(lx.begin(), lx.end());
    double y0 = *std::min_element(ly.begin(), ly.end());
    double y1 = *std::max_element(ly.begin(), ly.end());
    if (x1 == x0) x1 = x0 + 1;
    if (y1 == y0) y1 = y0 + 1;

    // least-squares slope in log space
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(lx.size());
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sx += lx[i];
        sy += ly[i];
        sxx += lx[i] * lx[i];
        sxy += lx[i] * ly[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);

    auto px = [&](double v) { return ml + (v - x0) / (x1 - x0) * (W - ml - mr); };
    auto py = [&](double v) { return H - mb - (v - y0) / (y1 - y0) * (H - mt - mb); };

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\">\n";
    s << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << title
      << " (slope " << num(slope) << ")</text>\n";
    s << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr << "\" height=\""
      << H - mt - mb << "\" fill=\"none\" stroke=\"#888\"/>\n";
    for (std::size_t i = 1; i < lx.size(); ++i)
        s << "<line x1=\"" << num(px(lx[i - 1])) << "\" y1=\"" << num(py(ly[i - 1])) << "\" x2=\""
          << num(px(lx[i])) << "\" y2=\"" << num(py(ly[i])) << "\" stroke=\"#c33\"/>\n";
    for (std::size_t i = 0; i < lx.size(); ++i)
        s << "<circle cx=\"" << num(px(lx[i])) << "\" cy=\"" << num(py(ly[i]))
          << "\" r=\"3\" fill=\"#c33\"/>\n";
    s << "<text x=\"" << ml << "\" y=\"" << H - 10 << "\" font-size=\"11\">log10 mesh</text>\n";
    s << "</svg>\n";
    return s.str();
}

}  // namespace driftlab
