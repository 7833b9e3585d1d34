#pragma once

#include <string>
#include <vector>

#include "goalplan/common.hpp"
#include "goalplan/envsim.hpp"

namespace goalplan {
namespace encoder {

// Affine state encoder fitted on the offline dataset. Every learned network
// in the pipeline consumes encoded states, never raw ones.
struct NormalizerStats {
    Vec mean;
    Vec scale;  // per-dim std, floored
    int d_h = 0;
    bool fitted = false;

    void save(const std::string& path) const;
    static NormalizerStats load(const std::string& path);
};

NormalizerStats fit_normalizer(const std::vector<envsim::Trajectory>& dataset,
                               double scale_floor = 1e-3);

Vec encode(const NormalizerStats& stats, const envsim::EnvState& s);
Vec encode_flat(const NormalizerStats& stats, const Vec& flat);
// Affine inverse; recovers the raw flat state to machine precision.
Vec decode_flat(const NormalizerStats& stats, const Vec& h);

// Sparse goal-reaching reward: 0 inside the open eps-ball, -1 outside.
double reward(const Vec& h_next, const Vec& h_goal, double eps);

}  // namespace encoder
}  // namespace goalplan
