#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "driftlab/grid_function.hpp"
#include "driftlab/marginals.hpp"
#include "driftlab/models.hpp"

namespace driftlab {

// --- hashing / atomic files ------------------------------------------------

std::uint64_t fnv1a(const std::string& s);
std::string fnv1a_hex(const std::string& s);

// Write-temp-then-rename so partially written artifacts never appear.
void atomic_write(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

// --- ensemble persistence ----------------------------------------------------
//
// Columnar binary layout ("DLEN", version 1, little-endian):
//   magic[4] version u8
//   n_nodes u64, times f64[n_nodes]
//   n_paths u64, seed u64, tag_len u64, tag bytes
//   values f64[n_paths * n_nodes]  (path-major)
//   per path: jump count u64, then (time, pre, post) f64 triples

void write_ensemble_binary(const PathEnsemble& e, const std::string& path);
PathEnsemble read_ensemble_binary(const std::string& path);

// CSV inspection dump: one row per path (t-columns), jump records appended to
// a sibling "<path>.jumps.csv" when jumps exist.
void write_ensemble_csv(const PathEnsemble& e, const std::string& path);

// --- grid function persistence ----------------------------------------------
//
// Binary twin ("DLGF", version 1): magic, version, lipschitz f64, node counts
// and arrays, then row-major values.
// CSV: header "t\x"-corner cell then x-nodes; each further row starts with
// its t-node.

void write_grid_binary(const GridFunction& g, const std::string& path);
GridFunction read_grid_binary(const std::string& path);
void write_grid_csv(const GridFunction& g, const std::string& path);
GridFunction read_grid_csv(const std::string& path);

void write_density_csv(const DensitySlice& d, const std::vector<double>& x_nodes,
                       const std::string& path);

// --- plots -------------------------------------------------------------------

// Heatmap of a row-major matrix over (t,x) extents.
std::string svg_heatmap(const std::vector<double>& values, std::size_t n_rows,
                        std::size_t n_cols, double t_lo, double t_hi, double x_lo, double x_hi,
                        const std::string& title);

// log-log scatter of (x, y) pairs with the least-squares slope in the title.
std::string svg_loglog(const std::vector<double>& xs, const std::vector<double>& ys,
                       const std::string& title);

}  // namespace driftlab
