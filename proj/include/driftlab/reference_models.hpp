#pragma once

#include <string>
#include <vector>

#include "driftlab/models.hpp"

namespace driftlab::models {

// Standard desk models used by the experiments and the CLI registry.

// Brownian motion from 0.
ModelSpec bm();
// dX = dt + dW from 0.
ModelSpec drifted_bm();
// dX = -X dt + dW from 0.
ModelSpec mean_revert();
// Deterministic unit drift, no noise.
ModelSpec pure_drift();
// Raw unit-jump Poisson counter (rate 1, jumps of +1), from 0.
ModelSpec jump_counter();
// Brownian motion plus compound Poisson (rate 1, jumps +0.5), from 0.
ModelSpec bm_jump();
// Same jump-diffusion started from x0 (used for support-crossing setups).
ModelSpec bm_jump_from(double x0);
// Driftless diffusion with sigma(x) = 0.2 + 0.1 tanh(x), from 0.
ModelSpec tanh_vol();

ModelSpec by_name(const std::string& name);
std::vector<std::string> names();

}  // namespace driftlab::models
