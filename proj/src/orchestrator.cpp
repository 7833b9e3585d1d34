#include "goalplan/orchestrator.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <sstream>

namespace goalplan {
namespace orchestrator {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string metrics_header() {
    return "epoch,phase,success_rate,mean_episode_return,subgoal_reach_rate,cvae_holdout_mse,"
           "value_loss,critic_loss,policy_loss,plan_cost_best";
}

std::string metrics_to_csv(const MetricsRow& r) {
    std::ostringstream ss;
    ss << r.epoch << ',' << r.phase << ',' << fmt(r.success_rate) << ',' << fmt(r.mean_episode_return)
       << ',' << fmt(r.subgoal_reach_rate) << ',' << fmt(r.cvae_holdout_mse) << ','
       << fmt(r.value_loss) << ',' << fmt(r.critic_loss) << ',' << fmt(r.policy_loss) << ','
       << fmt(r.plan_cost_best);
    return ss.str();
}

MetricsRow metrics_from_csv(const std::string& line) {
    MetricsRow r;
    std::istringstream ss(line);
    std::string field;
    auto next = [&]() {
        if (!std::getline(ss, field, ',')) throw IoError("metrics row: too few fields");
        return field;
    };
    r.epoch = std::stoi(next());
    r.phase = next();
    r.success_rate = std::stod(next());
    r.mean_episode_return = std::stod(next());
    r.subgoal_reach_rate = std::stod(next());
    r.cvae_holdout_mse = std::stod(next());
    r.value_loss = std::stod(next());
    r.critic_loss = std::stod(next());
    r.policy_loss = std::stod(next());
    r.plan_cost_best = std::stod(next());
    return r;
}

int subgoal_switch(int k, int t, const Vec& h_next, const planner::SubgoalPlan& plan, int delta_t,
                   double eps, int K_total) {
    if (k < 1 || k > K_total) throw std::invalid_argument("subgoal_switch: k out of range");
    bool budget_elapsed = delta_t > 0 && t % delta_t == 0;
    bool reached = (h_next - plan.flattened.row(k - 1).transpose()).norm() < eps;
    return (budget_elapsed || reached) ? std::min(k + 1, K_total) : k;
}

EpisodeResult run_episode(const EpisodeContext& ctx, const gcrl::Agent& agent,
                          const planner::LatentPlanBuffer& buffers, std::uint64_t env_seed,
                          Rng& rng, bool stochastic) {
    const auto& run = ctx.run;
    EpisodeResult out;

    envsim::EnvState s = envsim::reset(env_seed, envsim::task_reset_config(ctx.task), ctx.env_params);
    envsim::TaskSpec task = envsim::make_task(ctx.task, s, ctx.env_params);
    task.episode_horizon = run.episode_horizon;

    Vec h = encoder::encode(*ctx.stats, s);
    Vec hg = encoder::encode(*ctx.stats, task.goal);

    Rng plan_rng = rng.stream("plan");
    Rng act_rng = rng.stream("act");

    if (run.planning) {
        if (!ctx.models) throw StateError("run_episode: planning enabled but no generator models");
        try {
            out.plan = planner::plan(h, hg, *ctx.models, agent, buffers, ctx.plan_cfg, plan_rng,
                                     run.subgoal_budget);
        } catch (const PlanningError&) {
            out.log.plan_failed = true;
            return out;
        }
    } else {
        out.plan = planner::trivial_plan(hg, run.subgoal_budget);
    }
    out.log.plan_cost = out.plan.top_cost;

    const int T = run.episode_horizon;
    const int K_total = static_cast<int>(out.plan.K_total());
    auto& st = out.transitions;
    st.raw_states.resize(T + 1, envsim::EnvState::kFlatDim);
    st.latents.resize(T + 1, ctx.stats->d_h);
    st.actions.resize(T, agent.action_dim);
    st.commanded_goals.resize(T, ctx.stats->d_h);
    st.tag = "policy";
    st.seed = env_seed;
    st.raw_states.row(0) = s.flatten().transpose();
    st.latents.row(0) = h.transpose();

    std::vector<bool> reached(static_cast<std::size_t>(K_total), false);
    int k = 1;
    for (int t = 1; t <= T; ++t) {
        Vec subgoal = out.plan.flattened.row(k - 1).transpose();
        Vec a = gcrl::select_action(agent, h, subgoal, stochastic, act_rng);
        envsim::EnvState s_next = envsim::step(s, gcrl::to_env_action(a), ctx.env_params);
        Vec h_next = encoder::encode(*ctx.stats, s_next);

        st.raw_states.row(t) = s_next.flatten().transpose();
        st.latents.row(t) = h_next.transpose();
        st.actions.row(t - 1) = a.transpose();
        st.commanded_goals.row(t - 1) = subgoal.transpose();
        out.log.subgoal_trace.push_back(k);
        out.log.episode_return += encoder::reward(h_next, hg, run.eps_reach);
        if ((h_next - subgoal).norm() < run.eps_reach) reached[static_cast<std::size_t>(k - 1)] = true;

        k = subgoal_switch(k, t, h_next, out.plan, run.subgoal_budget, run.eps_reach, K_total);
        s = s_next;
        h = h_next;
    }

    int n_reached = 0;
    for (bool b : reached) n_reached += b ? 1 : 0;
    out.log.subgoal_reach_rate = K_total > 0 ? static_cast<double>(n_reached) / K_total : 0.0;
    out.log.success = envsim::success(s, task);
    return out;
}

EpisodeLog finetune_episode(const EpisodeContext& ctx, const gcrl::Agent& agent,
                            gcrl::ReplayBuffer& online, planner::LatentPlanBuffer& buffers,
                            std::uint64_t env_seed, Rng& rng) {
    EpisodeResult res = run_episode(ctx, agent, buffers, env_seed, rng, /*stochastic=*/true);
    if (res.log.plan_failed) {
        std::cerr << "[finetune] planning failed for episode seed " << env_seed
                  << "; episode aborted\n";
        return res.log;
    }
    online.add(std::move(res.transitions));
    if (ctx.run.planning) planner::buffer_commit(buffers, res.plan);
    return res.log;
}

EvalStats evaluate(const EpisodeContext& ctx, const gcrl::Agent& agent,
                   const planner::LatentPlanBuffer& buffers, int episodes, std::uint64_t seed) {
    EvalStats stats;
    if (episodes <= 0) {
        std::cerr << "[evaluate] 0 episodes requested; success_rate defined as 0.0\n";
        return stats;
    }
    Rng root(seed);
    int successes = 0;
    for (int ep = 0; ep < episodes; ++ep) {
        Rng ep_rng = root.stream("eval").stream(static_cast<std::uint64_t>(ep));
        std::uint64_t env_seed = ep_rng.stream("env").seed();
        EpisodeResult res = run_episode(ctx, agent, buffers, env_seed, ep_rng, /*stochastic=*/false);
        successes += res.log.success ? 1 : 0;
        stats.mean_return += res.log.episode_return;
        stats.mean_reach_rate += res.log.subgoal_reach_rate;
        stats.mean_plan_cost += res.log.plan_cost;
    }
    stats.success_rate = static_cast<double>(successes) / episodes;
    stats.mean_return /= episodes;
    stats.mean_reach_rate /= episodes;
    stats.mean_plan_cost /= episodes;
    return stats;
}

double eval_primitive_reaching(const gcrl::Agent& agent, const encoder::NormalizerStats& stats,
                               int episodes, int horizon, double eps, std::uint64_t seed,
                               const envsim::EnvParams& params,
                               const envsim::RandomizationConfig& rand_cfg) {
    if (episodes <= 0) return 0.0;
    Rng root(seed);
    int successes = 0;
    for (int ep = 0; ep < episodes; ++ep) {
        Rng ep_rng = root.stream("prim_eval").stream(static_cast<std::uint64_t>(ep));
        envsim::Primitive prim = envsim::kAllPrimitives[static_cast<std::size_t>(ep) %
                                                        envsim::kAllPrimitives.size()];
        // find a (reset, demo) pair whose scripted solution fits the horizon
        envsim::EnvState s0;
        std::optional<envsim::Trajectory> demo;
        for (int attempt = 0; attempt < 50 && !demo; ++attempt) {
            std::uint64_t env_seed = ep_rng.stream("env").stream(static_cast<std::uint64_t>(attempt)).seed();
            s0 = envsim::reset(env_seed, rand_cfg, params);
            envsim::PrimitiveConfig pc;
            pc.max_len = static_cast<std::size_t>(horizon);
            demo = envsim::run_primitive(
                s0, prim, ep_rng.stream("script").stream(static_cast<std::uint64_t>(attempt)), params, pc);
        }
        if (!demo) continue;  // counts as failure

        Vec hg = encoder::encode(stats, demo->states.back());
        envsim::EnvState s = s0;
        Vec h = encoder::encode(stats, s);
        Rng act_rng = ep_rng.stream("act");
        bool reached = false;
        for (int t = 0; t < horizon && !reached; ++t) {
            Vec a = gcrl::select_action(agent, h, hg, /*stochastic=*/false, act_rng);
            s = envsim::step(s, gcrl::to_env_action(a), params);
            h = encoder::encode(stats, s);
            reached = (h - hg).norm() < eps;
        }
        successes += reached ? 1 : 0;
    }
    return static_cast<double>(successes) / episodes;
}

std::vector<MetricsRow> pretrain_agent(gcrl::Agent& agent, const gcrl::ReplayBuffer& offline,
                                       const RunConfig& run, const encoder::NormalizerStats& stats,
                                       const envsim::EnvParams& params,
                                       const envsim::RandomizationConfig& eval_rand_cfg,
                                       std::uint64_t seed, const RowCallback& on_row) {
    if (offline.empty()) throw ConfigError("pretrain_agent: offline dataset is empty");
    Rng root(seed);
    Rng train_rng = root.stream("rl");
    std::vector<MetricsRow> rows;

    for (int e = 1; e <= run.pretrain_epochs; ++e) {
        double value_loss = 0.0, critic_loss = 0.0, policy_loss = 0.0;
        for (int it = 0; it < run.train_iters_per_epoch; ++it) {
            auto batch = gcrl::sample_batch(offline, agent.cfg.batch_size, train_rng);
            gcrl::relabel_batch(batch, offline, agent.cfg.p_relabel, train_rng);
            auto m = gcrl::update(agent, batch);
            value_loss += m.value_loss;
            critic_loss += m.critic_loss;
            policy_loss += m.policy_loss;
        }
        MetricsRow row;
        row.epoch = e - run.pretrain_epochs - 1;  // -E .. -1
        row.phase = "offline";
        row.success_rate = eval_primitive_reaching(
            agent, stats, run.eval_episodes_per_epoch, 40, run.eps_reach,
            root.stream("eval_seed").stream(static_cast<std::uint64_t>(e)).seed(), params, eval_rand_cfg);
        row.mean_episode_return = std::numeric_limits<double>::quiet_NaN();
        row.subgoal_reach_rate = std::numeric_limits<double>::quiet_NaN();
        row.cvae_holdout_mse = std::numeric_limits<double>::quiet_NaN();
        row.value_loss = value_loss / run.train_iters_per_epoch;
        row.critic_loss = critic_loss / run.train_iters_per_epoch;
        row.policy_loss = policy_loss / run.train_iters_per_epoch;
        row.plan_cost_best = std::numeric_limits<double>::quiet_NaN();
        rows.push_back(row);
        if (on_row) on_row(row);
    }
    return rows;
}

std::vector<MetricsRow> run_finetune(const EpisodeContext& ctx, gcrl::Agent& agent,
                                     const gcrl::ReplayBuffer& offline, gcrl::ReplayBuffer& online,
                                     planner::LatentPlanBuffer& buffers, std::uint64_t seed,
                                     const RowCallback& on_row) {
    Rng root(seed);
    const auto& run = ctx.run;
    const int episodes_per_epoch = std::max(1, run.env_steps_per_epoch / run.episode_horizon);
    const int iters_per_episode = run.train_iters_per_epoch / episodes_per_epoch;

    std::vector<MetricsRow> rows;
    auto eval_row = [&](int epoch) {
        MetricsRow row;
        row.epoch = epoch;
        row.phase = "online";
        EvalStats ev = evaluate(ctx, agent, buffers, run.eval_episodes_per_epoch,
                                root.stream("eval_epoch").stream(static_cast<std::uint64_t>(epoch)).seed());
        row.success_rate = ev.success_rate;
        row.mean_episode_return = ev.mean_return;
        row.subgoal_reach_rate = ev.mean_reach_rate;
        row.plan_cost_best = ev.mean_plan_cost;
        row.cvae_holdout_mse = ctx.cvae_holdout_mse;
        return row;
    };

    {
        // offline + planning only, before any online experience
        MetricsRow row0 = eval_row(0);
        row0.value_loss = std::numeric_limits<double>::quiet_NaN();
        row0.critic_loss = std::numeric_limits<double>::quiet_NaN();
        row0.policy_loss = std::numeric_limits<double>::quiet_NaN();
        rows.push_back(row0);
        if (on_row) on_row(row0);
    }

    Rng collect_root = root.stream("collect");
    Rng train_rng = root.stream("rl");

    for (int e = 1; e <= run.finetune_epochs; ++e) {
        double value_loss = 0.0, critic_loss = 0.0, policy_loss = 0.0;
        int updates = 0;
        for (int ep = 0; ep < episodes_per_epoch; ++ep) {
            Rng ep_rng = collect_root.stream(static_cast<std::uint64_t>(e)).stream(static_cast<std::uint64_t>(ep));
            std::uint64_t env_seed = ep_rng.stream("env").seed();
            finetune_episode(ctx, agent, online, buffers, env_seed, ep_rng);

            int iters = (ep + 1 == episodes_per_epoch)
                            ? run.train_iters_per_epoch - iters_per_episode * (episodes_per_epoch - 1)
                            : iters_per_episode;
            for (int it = 0; it < iters; ++it) {
                auto batch = gcrl::sample_mixed_batch(offline, online, agent.cfg.batch_size,
                                                      agent.cfg.online_fraction, train_rng);
                gcrl::relabel_mixed(batch, offline, online, agent.cfg.p_relabel, train_rng);
                auto m = gcrl::update(agent, batch);
                value_loss += m.value_loss;
                critic_loss += m.critic_loss;
                policy_loss += m.policy_loss;
                ++updates;
            }
        }
        MetricsRow row = eval_row(e);
        row.value_loss = value_loss / std::max(1, updates);
        row.critic_loss = critic_loss / std::max(1, updates);
        row.policy_loss = policy_loss / std::max(1, updates);
        rows.push_back(row);
        if (on_row) on_row(row);
    }
    return rows;
}

}  // namespace orchestrator
}  // namespace goalplan
