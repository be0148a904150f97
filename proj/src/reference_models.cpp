#include "driftlab/reference_models.hpp"

#include <cmath>
#include <stdexcept>

namespace driftlab::models {

namespace {
CoeffFn constant(double c) {
    return [c](double, double) { return c; };
}
std::function<double(Rng&)> point_mass(double x0) {
    return [x0](Rng&) { return x0; };
}
}  // namespace

ModelSpec bm() {
    ModelSpec m;
    m.tag = "bm";
    m.drift = constant(0.0);
    m.vol = constant(1.0);
    m.initial_law = point_mass(0.0);
    return m;
}

ModelSpec drifted_bm() {
    ModelSpec m;
    m.tag = "drifted_bm";
    m.drift = constant(1.0);
    m.vol = constant(1.0);
    m.initial_law = point_mass(0.0);
    return m;
}

ModelSpec mean_revert() {
    ModelSpec m;
    m.tag = "mean_revert";
    m.drift = [](double, double x) { return -x; };
    m.vol = constant(1.0);
    m.initial_law = point_mass(0.0);
    return m;
}

ModelSpec pure_drift() {
    ModelSpec m;
    m.tag = "pure_drift";
    m.drift = constant(1.0);
    m.vol = constant(0.0);
    m.initial_law = point_mass(0.0);
    return m;
}

ModelSpec jump_counter() {
    // Raw unit-jump Poisson counter: generator drift equals the jump
    // compensator, so the continuous part is flat and A_t = t.
    ModelSpec m;
    m.tag = "jump_counter";
    m.drift = constant(1.0);
    m.vol = constant(0.0);
    m.jumps = std::vector<JumpAtom>{{1.0, 1.0}};
    m.initial_law = point_mass(0.0);
    return m;
}

ModelSpec bm_jump() { return bm_jump_from(0.0); }

ModelSpec bm_jump_from(double x0) {
    // Brownian motion plus a raw compound Poisson stream (rate 1, +0.5):
    // generator drift 0.5 cancels the compensation in the simulator.
    ModelSpec m;
    m.tag = x0 == 0.0 ? "bm_jump" : "bm_jump_x0";
    m.drift = constant(0.5);
    m.vol = constant(1.0);
    m.jumps = std::vector<JumpAtom>{{1.0, 0.5}};
    m.initial_law = point_mass(x0);
    return m;
}

ModelSpec tanh_vol() {
    ModelSpec m;
    m.tag = "tanh_vol";
    m.drift = constant(0.0);
    m.vol = [](double, double x) { return 0.2 + 0.1 * std::tanh(x); };
    m.initial_law = point_mass(0.0);
    return m;
}

ModelSpec by_name(const std::string& name) {
    if (name == "bm") return bm();
    if (name == "drifted_bm") return drifted_bm();
    if (name == "mean_revert") return mean_revert();
    if (name == "pure_drift") return pure_drift();
    if (name == "jump_counter") return jump_counter();
    if (name == "bm_jump") return bm_jump();
    if (name == "tanh_vol") return tanh_vol();
    throw std::invalid_argument("unknown model '" + name + "'");
}

std::vector<std::string> names() {
    return {"bm", "drifted_bm", "mean_revert", "pure_drift", "jump_counter", "bm_jump", "tanh_vol"};
}

}  // namespace driftlab::models
