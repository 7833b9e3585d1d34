#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "goalplan/common.hpp"
#include "goalplan/cvae.hpp"
#include "goalplan/encoder.hpp"
#include "goalplan/envsim.hpp"
#include "goalplan/gcrl.hpp"
#include "goalplan/planner.hpp"

namespace goalplan {
namespace orchestrator {

struct RunConfig {
    int pretrain_epochs = 30;
    int finetune_epochs = 30;
    int env_steps_per_epoch = 600;
    int train_iters_per_epoch = 600;
    int eval_episodes_per_epoch = 5;
    int episode_horizon = 120;  // T
    int subgoal_budget = 5;     // finest-level delta_t
    double eps_reach = 0.5;
    bool planning = true;
};

// One metrics CSV row. Pretraining epochs are negative, fine-tuning starts
// at 0 (offline + planning only, before any online update).
struct MetricsRow {
    int epoch = 0;
    std::string phase;  // "offline" or "online"
    double success_rate = 0.0;
    double mean_episode_return = 0.0;
    double subgoal_reach_rate = 0.0;
    double cvae_holdout_mse = 0.0;
    double value_loss = 0.0;
    double critic_loss = 0.0;
    double policy_loss = 0.0;
    double plan_cost_best = 0.0;
};

std::string metrics_header();
std::string metrics_to_csv(const MetricsRow& row);
MetricsRow metrics_from_csv(const std::string& line);

// Everything an episode needs besides the agent and the mutable buffers.
struct EpisodeContext {
    const encoder::NormalizerStats* stats = nullptr;
    const std::vector<cvae::CvaeModel>* models = nullptr;  // unused when planning is off
    planner::PlanConfig plan_cfg;
    envsim::EnvParams env_params;
    RunConfig run;
    envsim::TaskId task = envsim::TaskId::A;
    double cvae_holdout_mse = std::numeric_limits<double>::quiet_NaN();
};

// Alg. 1 line 12/13: advance past subgoal k when its time budget elapses or
// it is reached in latent space, clamped at the last subgoal.
int subgoal_switch(int k, int t, const Vec& h_next, const planner::SubgoalPlan& plan, int delta_t,
                   double eps, int K_total);

struct EpisodeLog {
    bool success = false;
    bool plan_failed = false;
    double episode_return = 0.0;
    double subgoal_reach_rate = 0.0;
    double plan_cost = 0.0;
    std::vector<int> subgoal_trace;  // active subgoal index per step
};

struct EpisodeResult {
    gcrl::StoredTrajectory transitions;
    planner::SubgoalPlan plan;
    EpisodeLog log;
};

// Plans once, then executes T steps switching subgoals. Pure with respect
// to buffers; callers decide whether to store transitions or commit plans.
EpisodeResult run_episode(const EpisodeContext& ctx, const gcrl::Agent& agent,
                          const planner::LatentPlanBuffer& buffers, std::uint64_t env_seed,
                          Rng& rng, bool stochastic);

// Collection wrapper: stores the episode into the online buffer and commits
// the winning plan. A planning failure aborts the episode (logged, nothing
// stored).
EpisodeLog finetune_episode(const EpisodeContext& ctx, const gcrl::Agent& agent,
                            gcrl::ReplayBuffer& online, planner::LatentPlanBuffer& buffers,
                            std::uint64_t env_seed, Rng& rng);

struct EvalStats {
    double success_rate = 0.0;
    double mean_return = 0.0;
    double mean_reach_rate = 0.0;
    double mean_plan_cost = 0.0;
};

// Deterministic-action evaluation with full planning; reads the plan buffer
// but never mutates anything. episodes == 0 yields 0.0 with a warning.
EvalStats evaluate(const EpisodeContext& ctx, const gcrl::Agent& agent,
                   const planner::LatentPlanBuffer& buffers, int episodes, std::uint64_t seed);

// Goal-reaching sanity eval on scripted single-primitive outcomes: the goal
// is a primitive's terminal state (demo no longer than `horizon`), success
// is entering the latent eps-ball within the horizon.
double eval_primitive_reaching(const gcrl::Agent& agent, const encoder::NormalizerStats& stats,
                               int episodes, int horizon, double eps, std::uint64_t seed,
                               const envsim::EnvParams& params,
                               const envsim::RandomizationConfig& rand_cfg);

using RowCallback = std::function<void(const MetricsRow&)>;

// Offline IQL pretraining on HER-relabeled batches; one metrics row per
// epoch (negative indices), on_row fired after each for checkpointing.
std::vector<MetricsRow> pretrain_agent(gcrl::Agent& agent, const gcrl::ReplayBuffer& offline,
                                       const RunConfig& run, const encoder::NormalizerStats& stats,
                                       const envsim::EnvParams& params,
                                       const envsim::RandomizationConfig& eval_rand_cfg,
                                       std::uint64_t seed, const RowCallback& on_row = {});

// The Alg. 1 fine-tuning loop: per epoch exactly env_steps_per_epoch
// environment steps interleaved with train_iters_per_epoch updates, then a
// deterministic evaluation. Emits the epoch-0 row first.
std::vector<MetricsRow> run_finetune(const EpisodeContext& ctx, gcrl::Agent& agent,
                                     const gcrl::ReplayBuffer& offline, gcrl::ReplayBuffer& online,
                                     planner::LatentPlanBuffer& buffers, std::uint64_t seed,
                                     const RowCallback& on_row = {});

}  // namespace orchestrator
}  // namespace goalplan
