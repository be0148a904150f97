#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>

#include "driftlab/io.hpp"
#include "driftlab/reference_models.hpp"

using namespace driftlab;

namespace {
struct TempDir {
    std::filesystem::path path;
    TempDir() {
        std::random_device rd;
        path = std::filesystem::temp_directory_path() /
               ("driftlab_test_" + std::to_string(rd()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const char* name) const { return (path / name).string(); }
};
}  // namespace

TEST_CASE("fnv hashing is stable") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("driftlab") != fnv1a_hex("driftlab2"));
}

TEST_CASE("atomic writes land complete") {
    TempDir tmp;
    const std::string p = tmp.file("x.txt");
    atomic_write(p, "hello");
    CHECK(read_file(p) == "hello");
    atomic_write(p, "replaced");
    CHECK(read_file(p) == "replaced");
    CHECK(!std::filesystem::exists(p + ".tmp"));
}

TEST_CASE("ensemble binary round trip") {
    TempDir tmp;
    PathEnsemble e = simulate(models::bm_jump(), Partition::uniform(1.0, 32), 50, 77);
    const std::string p = tmp.file("e.ens");
    write_ensemble_binary(e, p);
    PathEnsemble r = read_ensemble_binary(p);
    CHECK(r.values == e.values);
    CHECK(r.partition.times == e.partition.times);
    CHECK(r.seed == e.seed);
    CHECK(r.model_tag == e.model_tag);
    REQUIRE(r.jumps.size() == e.jumps.size());
    for (std::size_t i = 0; i < r.jumps.size(); ++i) {
        REQUIRE(r.jumps[i].size() == e.jumps[i].size());
        for (std::size_t j = 0; j < r.jumps[i].size(); ++j) {
            CHECK(r.jumps[i][j].time == e.jumps[i][j].time);
            CHECK(r.jumps[i][j].pre == e.jumps[i][j].pre);
            CHECK(r.jumps[i][j].post == e.jumps[i][j].post);
        }
    }
    CHECK_THROWS(read_ensemble_binary(tmp.file("missing.ens")));
}

TEST_CASE("ensemble csv dump writes jump records") {
    TempDir tmp;
    PathEnsemble e = simulate(models::jump_counter(), Partition::uniform(1.0, 8), 20, 5);
    const std::string p = tmp.file("e.csv");
    write_ensemble_csv(e, p);
    CHECK(read_file(p).substr(0, 5) == "path,");
    CHECK(std::filesystem::exists(p + ".jumps.csv"));
}

TEST_CASE("grid function round trips") {
    TempDir tmp;
    GridFunction g({0.0, 0.25, 0.75}, {-1.0, 0.5, 2.0},
                   {0, 1, 2, 3, 4, 5, -1, -2, -3}, 4.0);
    write_grid_binary(g, tmp.file("g.grid"));
    GridFunction rb = read_grid_binary(tmp.file("g.grid"));
    CHECK(rb.t_nodes() == g.t_nodes());
    CHECK(rb.x_nodes() == g.x_nodes());
    CHECK(rb.lipschitz_x() == g.lipschitz_x());
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(rb.at(i, j) == g.at(i, j));

    write_grid_csv(g, tmp.file("g.csv"));
    GridFunction rc = read_grid_csv(tmp.file("g.csv"));
    CHECK(rc.t_nodes() == g.t_nodes());
    CHECK(rc.x_nodes() == g.x_nodes());
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(rc.at(i, j) == g.at(i, j));
}

TEST_CASE("svg emitters produce well-formed documents") {
    const std::string h = svg_heatmap({0, 1, 2, 3}, 2, 2, 0, 1, -1, 1, "grid");
    CHECK(h.find("<svg") == 0);
    CHECK(h.find("</svg>") != std::string::npos);
    const std::string l = svg_loglog({0.1, 0.05, 0.025}, {0.2, 0.11, 0.05}, "decay");
    CHECK(l.find("slope") != std::string::npos);
}
