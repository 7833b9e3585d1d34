#include "goalplan/config.hpp"

#include <set>

#include "goalplan/io.hpp"
#include "json.hpp"

namespace goalplan {
namespace config {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!known.count(it.key()))
            throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void get_if(const json& obj, const char* key, T& into) {
    if (obj.contains(key)) into = obj.at(key).get<T>();
}

}  // namespace

void Config::apply_paper_scale() {
    paper_scale = true;
    cvae.delta_ts = {15, 30, 60};
    plan.L = 3;
    plan.K = 8;
    plan.M = 2;
    plan.N = 1024;
    run.eps_reach = 2.0;
    run.episode_horizon = 400;
    run.env_steps_per_epoch = 2000;
    run.train_iters_per_epoch = 2000;
    run.pretrain_epochs = 100;
    run.finetune_epochs = 150;
    run.subgoal_budget = 15;
    dataset.primitive.max_len = 150;
    n_traj = 4000;
}

Config Config::defaults(bool paper_scale_flag) {
    Config c;
    if (paper_scale_flag) c.apply_paper_scale();
    return c;
}

Config Config::from_json_text(const std::string& text, bool force_paper_scale) {
    json j = json::parse(text);
    if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
    reject_unknown(j, {"paper_scale", "env", "encoder", "cvae", "rl", "planner", "run"}, "top level");

    Config c;
    bool paper = force_paper_scale;
    if (j.contains("paper_scale")) paper = paper || j.at("paper_scale").get<bool>();
    if (paper) c.apply_paper_scale();

    if (j.contains("env")) {
        const json& e = j.at("env");
        reject_unknown(e,
                       {"p_block", "p_object_in_drawer", "p_drawer_open", "p_drawer_half", "min_separation", "n_traj",
                        "min_len", "max_len", "step_budget", "retry_cap", "env_retry_cap", "block_size"},
                       "env");
        get_if(e, "p_block", c.dataset.randomization.p_block);
        get_if(e, "p_object_in_drawer", c.dataset.randomization.p_object_in_drawer);
        get_if(e, "p_drawer_open", c.dataset.randomization.p_drawer_open);
        get_if(e, "p_drawer_half", c.dataset.randomization.p_drawer_half);
        get_if(e, "min_separation", c.dataset.randomization.min_separation);
        get_if(e, "n_traj", c.n_traj);
        get_if(e, "min_len", c.dataset.primitive.min_len);
        get_if(e, "max_len", c.dataset.primitive.max_len);
        get_if(e, "step_budget", c.dataset.primitive.step_budget);
        get_if(e, "retry_cap", c.dataset.retry_cap);
        get_if(e, "env_retry_cap", c.dataset.env_retry_cap);
        get_if(e, "block_size", c.dataset.block_size);
    }
    if (j.contains("encoder")) {
        const json& e = j.at("encoder");
        reject_unknown(e, {"scale_floor"}, "encoder");
        get_if(e, "scale_floor", c.scale_floor);
    }
    if (j.contains("cvae")) {
        const json& e = j.at("cvae");
        reject_unknown(e,
                       {"delta_ts", "epochs", "batch_size", "chain_length", "beta_kl", "hidden",
                        "holdout_fraction", "lr", "d_z"},
                       "cvae");
        get_if(e, "delta_ts", c.cvae.delta_ts);
        get_if(e, "epochs", c.cvae.epochs);
        get_if(e, "batch_size", c.cvae.batch_size);
        get_if(e, "chain_length", c.cvae.chain_length);
        get_if(e, "beta_kl", c.cvae.beta_kl);
        get_if(e, "hidden", c.cvae.hidden);
        get_if(e, "holdout_fraction", c.cvae.holdout_fraction);
        get_if(e, "lr", c.cvae.lr);
        get_if(e, "d_z", c.cvae.d_z);
    }
    if (j.contains("rl")) {
        const json& e = j.at("rl");
        reject_unknown(e,
                       {"gamma", "expectile_tau", "awr_beta", "weight_clip", "polyak", "lr",
                        "batch_size", "p_relabel", "online_fraction", "hidden", "log_std_init"},
                       "rl");
        get_if(e, "gamma", c.rl.gamma);
        get_if(e, "expectile_tau", c.rl.expectile_tau);
        get_if(e, "awr_beta", c.rl.awr_beta);
        get_if(e, "weight_clip", c.rl.weight_clip);
        get_if(e, "polyak", c.rl.polyak);
        get_if(e, "lr", c.rl.lr);
        get_if(e, "batch_size", c.rl.batch_size);
        get_if(e, "p_relabel", c.rl.p_relabel);
        get_if(e, "online_fraction", c.rl.online_fraction);
        get_if(e, "hidden", c.rl.hidden);
        get_if(e, "log_std_init", c.rl.log_std_init);
    }
    if (j.contains("planner")) {
        const json& e = j.at("planner");
        reject_unknown(e,
                       {"L", "K", "M", "N", "mppi_iters", "eta1", "eta2", "mppi_lambda",
                        "mppi_sigma", "buffer_fraction", "buffer_capacity"},
                       "planner");
        get_if(e, "L", c.plan.L);
        get_if(e, "K", c.plan.K);
        get_if(e, "M", c.plan.M);
        get_if(e, "N", c.plan.N);
        get_if(e, "mppi_iters", c.plan.mppi_iters);
        get_if(e, "eta1", c.plan.eta1);
        get_if(e, "eta2", c.plan.eta2);
        get_if(e, "mppi_lambda", c.plan.mppi_lambda);
        get_if(e, "mppi_sigma", c.plan.mppi_sigma);
        get_if(e, "buffer_fraction", c.plan.buffer_fraction);
        get_if(e, "buffer_capacity", c.plan.buffer_capacity);
    }
    if (j.contains("run")) {
        const json& e = j.at("run");
        reject_unknown(e,
                       {"pretrain_epochs", "finetune_epochs", "env_steps_per_epoch",
                        "train_iters_per_epoch", "eval_episodes_per_epoch", "episode_horizon",
                        "subgoal_budget", "eps_reach", "planning", "source_dir"},
                       "run");
        get_if(e, "pretrain_epochs", c.run.pretrain_epochs);
        get_if(e, "finetune_epochs", c.run.finetune_epochs);
        get_if(e, "env_steps_per_epoch", c.run.env_steps_per_epoch);
        get_if(e, "train_iters_per_epoch", c.run.train_iters_per_epoch);
        get_if(e, "eval_episodes_per_epoch", c.run.eval_episodes_per_epoch);
        get_if(e, "episode_horizon", c.run.episode_horizon);
        get_if(e, "subgoal_budget", c.run.subgoal_budget);
        get_if(e, "eps_reach", c.run.eps_reach);
        get_if(e, "planning", c.run.planning);
        get_if(e, "source_dir", c.source_dir);
    }

    c.rl.eps_reach = c.run.eps_reach;
    c.plan.d_z = c.cvae.d_z;
    if (c.run.pretrain_epochs <= 0 || c.run.finetune_epochs < 0 || c.run.env_steps_per_epoch <= 0 ||
        c.run.train_iters_per_epoch <= 0 || c.run.episode_horizon <= 0 || c.run.subgoal_budget <= 0)
        throw ConfigError("config: run counts must be positive");
    if (static_cast<int>(c.cvae.delta_ts.size()) < c.plan.L)
        throw ConfigError("config: cvae.delta_ts must cover planner.L levels");
    return c;
}

Config Config::load(const std::string& path, bool force_paper_scale) {
    return from_json_text(io::read_text(path), force_paper_scale);
}

std::string Config::to_json_text() const {
    json j;
    j["paper_scale"] = paper_scale;
    j["env"] = {{"p_block", dataset.randomization.p_block},
                {"p_object_in_drawer", dataset.randomization.p_object_in_drawer},
                {"p_drawer_open", dataset.randomization.p_drawer_open},
                {"p_drawer_half", dataset.randomization.p_drawer_half},
                {"min_separation", dataset.randomization.min_separation},
                {"n_traj", n_traj},
                {"min_len", dataset.primitive.min_len},
                {"max_len", dataset.primitive.max_len},
                {"step_budget", dataset.primitive.step_budget},
                {"retry_cap", dataset.retry_cap},
                {"env_retry_cap", dataset.env_retry_cap},
                {"block_size", dataset.block_size}};
    j["encoder"] = {{"scale_floor", scale_floor}};
    j["cvae"] = {{"delta_ts", cvae.delta_ts},
                 {"epochs", cvae.epochs},
                 {"batch_size", cvae.batch_size},
                 {"chain_length", cvae.chain_length},
                 {"beta_kl", cvae.beta_kl},
                 {"hidden", cvae.hidden},
                 {"holdout_fraction", cvae.holdout_fraction},
                 {"lr", cvae.lr},
                 {"d_z", cvae.d_z}};
    j["rl"] = {{"gamma", rl.gamma},
               {"expectile_tau", rl.expectile_tau},
               {"awr_beta", rl.awr_beta},
               {"weight_clip", rl.weight_clip},
               {"polyak", rl.polyak},
               {"lr", rl.lr},
               {"batch_size", rl.batch_size},
               {"p_relabel", rl.p_relabel},
               {"online_fraction", rl.online_fraction},
               {"hidden", rl.hidden},
               {"log_std_init", rl.log_std_init}};
    j["planner"] = {{"L", plan.L},
                    {"K", plan.K},
                    {"M", plan.M},
                    {"N", plan.N},
                    {"mppi_iters", plan.mppi_iters},
                    {"eta1", plan.eta1},
                    {"eta2", plan.eta2},
                    {"mppi_lambda", plan.mppi_lambda},
                    {"mppi_sigma", plan.mppi_sigma},
                    {"buffer_fraction", plan.buffer_fraction},
                    {"buffer_capacity", plan.buffer_capacity}};
    j["run"] = {{"pretrain_epochs", run.pretrain_epochs},
                {"finetune_epochs", run.finetune_epochs},
                {"env_steps_per_epoch", run.env_steps_per_epoch},
                {"train_iters_per_epoch", run.train_iters_per_epoch},
                {"eval_episodes_per_epoch", run.eval_episodes_per_epoch},
                {"episode_horizon", run.episode_horizon},
                {"subgoal_budget", run.subgoal_budget},
                {"eps_reach", run.eps_reach},
                {"planning", run.planning},
                {"source_dir", source_dir}};
    return j.dump(2) + "\n";
}

}  // namespace config
}  // namespace goalplan
