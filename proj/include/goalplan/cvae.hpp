#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "goalplan/common.hpp"
#include "goalplan/mlp.hpp"

namespace goalplan {
namespace cvae {

// Conditional subgoal generator for one hierarchy level: decoder g(h, z)
// models states delta_t steps ahead, encoder q(z | h, h') is the training
// posterior, p(z) = N(0, I).
struct CvaeModel {
    int level_index = 1;
    int delta_t = 5;
    int d_h = 8;
    int d_z = 8;
    double beta_kl = 1.0;
    double logvar_min = -10.0;
    double logvar_max = 4.0;
    Mlp encoder;  // concat(h, h') -> (mu, logvar)
    Mlp decoder;  // concat(h, z) -> h'

    static CvaeModel make(int level_index, int delta_t, const std::vector<int>& hidden, Rng& rng,
                          int d_h = 8, int d_z = 8, double beta_kl = 1.0);

    // approx binary checkpoints plus a JSON sidecar at <prefix>.json
    void save(const std::string& prefix) const;
    static CvaeModel load(const std::string& prefix);
};

struct TransitionPair {
    Vec h_t;
    Vec h_tau;
    int delta_t_actual = 0;
};

struct ElboParts {
    double loss = 0.0;
    double recon = 0.0;
    double kl = 0.0;
};

// Single-pair ELBO with one reparameterized sample. The explicit-noise
// overload makes tests deterministic.
ElboParts elbo_loss(const CvaeModel& model, const TransitionPair& pair, Rng& rng);
ElboParts elbo_loss(const CvaeModel& model, const TransitionPair& pair, const Vec& noise);

struct BatchGrads {
    Mlp::Grads enc;
    Mlp::Grads dec;
};

// Batched ELBO over rows of (context, target); every per-row term is scaled
// by row_weight (callers use 1/total_links so chained links average
// correctly). When grads is non-null, parameter gradients are accumulated
// into it; recon_out receives the decoded states for chaining.
ElboParts elbo_batch(const CvaeModel& model, const Mat& context, const Mat& target,
                     const Mat& noise, double row_weight, BatchGrads* grads = nullptr,
                     Mat* recon_out = nullptr);

struct TrainOptions {
    int epochs = 50;
    int batch_size = 256;
    int chain_length = 3;
    double lr = 3e-4;
    double holdout_fraction = 0.1;
};

struct TrainReport {
    // index 0 is the pre-training value, then one entry per epoch
    std::vector<double> holdout_elbo;
    std::vector<double> holdout_recon;
    int eligible_trajectories = 0;
};

// Trains one level on encoded trajectories (each matrix is (T+1) x d_h).
// Offsets are drawn per link from [round(0.75 dt), round(1.25 dt)]; chains
// reuse the previous reconstruction as context with gradients stopped and
// truncate at the trajectory end. Trajectories shorter than the largest
// drawable offset are excluded; an empty remainder raises ConfigError
// naming the level.
TrainReport train_level(CvaeModel& model, const std::vector<Mat>& traj_latents,
                        const TrainOptions& opts, std::uint64_t seed);

int offset_min(int delta_t);
int offset_max(int delta_t);

// s_1 = g(h_start, z_1); s_i = g(s_{i-1}, z_i). Pure fold, prefix-stable.
std::vector<Vec> generate_sequence(const CvaeModel& model, const Vec& h_start,
                                   const std::vector<Vec>& z_seq);

// Batched variant over N parallel chains; z_seq[k] is N x d_z.
std::vector<Mat> generate_sequence_batch(const CvaeModel& model, const Mat& h_start,
                                         const std::vector<Mat>& z_seq);

}  // namespace cvae
}  // namespace goalplan
