#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "goalplan/common.hpp"
#include "goalplan/encoder.hpp"
#include "goalplan/envsim.hpp"
#include "goalplan/mlp.hpp"

namespace goalplan {
namespace gcrl {

struct IqlConfig {
    double gamma = 0.99;
    double expectile_tau = 0.7;
    double awr_beta = 3.0;
    double weight_clip = 100.0;
    double polyak = 0.005;
    double lr = 3e-4;
    int batch_size = 256;
    double p_relabel = 0.7;
    double online_fraction = 0.5;
    double eps_reach = 0.5;
    std::vector<int> hidden{128, 128};
    double log_std_init = -1.0;
    double log_std_min = -5.0;
    double log_std_max = 2.0;
};

// One trajectory's worth of goal-conditioned experience. Raw states are kept
// alongside their encodings so buffers can persist in the trajectory format.
struct StoredTrajectory {
    Mat raw_states;       // (T+1) x 8
    Mat latents;          // (T+1) x d_h
    Mat actions;          // T x action_dim
    Mat commanded_goals;  // T x d_h, the goal the policy was conditioned on
    std::string tag = "policy";
    std::uint64_t seed = 0;

    long length() const { return actions.rows(); }
};

StoredTrajectory store_trajectory(const envsim::Trajectory& traj,
                                  const encoder::NormalizerStats& stats);

class ReplayBuffer {
  public:
    void add(StoredTrajectory t);
    long num_transitions() const { return total_; }
    bool empty() const { return total_ == 0; }
    int num_trajectories() const { return static_cast<int>(trajs_.size()); }
    const StoredTrajectory& traj(int id) const { return trajs_.at(static_cast<std::size_t>(id)); }

    // flat transition index -> (trajectory id, step)
    std::pair<int, int> locate(long flat) const;

    void save(const std::string& path) const;
    static ReplayBuffer load(const std::string& path, const encoder::NormalizerStats& stats);

  private:
    std::vector<StoredTrajectory> trajs_;
    std::vector<long> cum_{0};
    long total_ = 0;
};

// Rewards are never stored; they are recomputed against the effective goal
// at update time.
struct GcTransition {
    Vec h, a, h_next, h_goal;
    int traj_id = 0;
    int index = 0;
    bool done = false;
    bool from_online = false;
    bool relabeled = false;
};

// |tau - 1[u<0]| u^2
double expectile_loss(double u, double tau);

GcTransition get_transition(const ReplayBuffer& buffer, long flat_index);

std::vector<GcTransition> sample_batch(const ReplayBuffer& buffer, int n, Rng& rng,
                                       bool from_online = false);

// floor(online_fraction*batch_size) online transitions (offline-only while
// online is empty), remainder offline, uniform within each buffer.
std::vector<GcTransition> sample_mixed_batch(const ReplayBuffer& offline, const ReplayBuffer& online,
                                             int batch_size, double online_fraction, Rng& rng);

// Future-state hindsight relabeling against the transitions' source buffer.
void relabel_batch(std::vector<GcTransition>& batch, const ReplayBuffer& buffer, double p_relabel,
                   Rng& rng);

// Dispatches each transition to its own source buffer.
void relabel_mixed(std::vector<GcTransition>& batch, const ReplayBuffer& offline,
                   const ReplayBuffer& online, double p_relabel, Rng& rng);

struct Agent {
    Mlp policy;   // concat(h, g) -> pre-tanh action mean
    Vec log_std;  // state-independent, clamped to [log_std_min, log_std_max]
    Mlp q1, q2;   // concat(h, a, g) -> scalar
    Mlp v;        // concat(h, g) -> scalar
    Mlp tq1, tq2; // Polyak targets, never trained directly
    AdamState opt_policy, opt_q1, opt_q2, opt_v;
    AdamVecState opt_log_std;
    IqlConfig cfg;
    Vec action_bounds;  // per-component magnitude bound
    int d_h = 8;
    int action_dim = 3;

    static Agent make(const IqlConfig& cfg, Rng& rng, int d_h = 8, int action_dim = 3,
                      Vec action_bounds = Vec());

    void save(const std::string& prefix) const;
    static Agent load(const std::string& prefix);
};

struct UpdateMetrics {
    double value_loss = 0.0;
    double critic_loss = 0.0;
    double policy_loss = 0.0;
    double mean_advantage = 0.0;
};

// One IQL update: expectile value regression against the target critics,
// Bellman critic regression, advantage-weighted policy regression, then
// Polyak target tracking. All gradients are taken at the incoming
// parameters; nothing is mutated if any loss is non-finite.
UpdateMetrics update(Agent& agent, const std::vector<GcTransition>& batch);

// Deterministic mode squashes the mean; stochastic mode samples before
// squashing. Components always land strictly inside action_bounds.
Vec select_action(const Agent& agent, const Vec& h, const Vec& h_goal, bool stochastic, Rng& rng);

envsim::Action to_env_action(const Vec& a);

}  // namespace gcrl
}  // namespace goalplan
