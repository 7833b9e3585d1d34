#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "goalplan/config.hpp"
#include "goalplan/cvae.hpp"
#include "goalplan/encoder.hpp"
#include "goalplan/envsim.hpp"
#include "goalplan/gcrl.hpp"
#include "goalplan/io.hpp"
#include "goalplan/orchestrator.hpp"
#include "goalplan/planner.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace goalplan;

namespace {

struct Opts {
    std::string config_path;
    std::string out = ".";
    std::string task = "A";
    std::uint64_t seed = 0;
    bool resume = false;
    bool force = false;
    bool no_planning = false;
    bool paper_scale = false;
    int episodes = -1;                // eval only
    std::vector<std::string> run_dirs;  // report only
};

std::string join(const std::string& dir, const std::string& name) {
    return (fs::path(dir) / name).string();
}

config::Config resolve_config(const Opts& o) {
    config::Config cfg = o.config_path.empty() ? config::Config::defaults(o.paper_scale)
                                               : config::Config::load(o.config_path, o.paper_scale);
    if (o.no_planning) cfg.run.planning = false;
    return cfg;
}

// Returns false to skip (resume); throws when outputs exist without --force.
bool guard_outputs(const std::vector<std::string>& outputs, const Opts& o) {
    bool any = false, all = !outputs.empty();
    for (const auto& p : outputs) {
        bool e = io::file_exists(p);
        any = any || e;
        all = all && e;
    }
    if (all && o.resume) {
        std::cout << "outputs already present; --resume requested, skipping\n";
        return false;
    }
    if (any && !o.force) {
        throw ConfigError("output already exists (" + outputs.front() +
                          " ...); pass --force to overwrite or --resume to skip");
    }
    return true;
}

void require_artifact(const std::string& path, const std::string& producer) {
    if (!io::file_exists(path))
        throw StateError("missing " + path + "; run `goalplan " + producer + "` first");
}

void write_config_echo(const config::Config& cfg, const Opts& o, const std::string& command) {
    io::write_text(join(o.out, command + ".config.json"), cfg.to_json_text());
}

encoder::NormalizerStats load_or_fit_stats(const config::Config& cfg, const Opts& o) {
    std::string path = join(o.out, "encoder_stats.json");
    if (io::file_exists(path)) return encoder::NormalizerStats::load(path);
    require_artifact(join(o.out, "dataset.jsonl"), "gen-data");
    auto dataset = envsim::load_trajectories(join(o.out, "dataset.jsonl"));
    auto stats = encoder::fit_normalizer(dataset, cfg.scale_floor);
    stats.save(path);
    return stats;
}

std::vector<cvae::CvaeModel> load_models(const config::Config& cfg, const std::string& dir) {
    std::vector<cvae::CvaeModel> models;
    for (int l = 1; l <= cfg.plan.L; ++l) {
        std::string prefix = join(dir, "cvae_level" + std::to_string(l));
        require_artifact(prefix + ".json", "train-cvae");
        models.push_back(cvae::CvaeModel::load(prefix));
    }
    return models;
}

std::string agent_prefix(const std::string& dir, bool prefer_finetuned) {
    std::string ft = join(dir, "agent_finetuned");
    if (prefer_finetuned && io::file_exists(ft + "_manifest.json")) return ft;
    return join(dir, "agent");
}

gcrl::ReplayBuffer offline_buffer_from(const std::string& dataset_path,
                                       const encoder::NormalizerStats& stats) {
    gcrl::ReplayBuffer buf;
    for (const auto& traj : envsim::load_trajectories(dataset_path))
        buf.add(gcrl::store_trajectory(traj, stats));
    return buf;
}

double mean_final_holdout_mse(const std::string& dir) {
    std::string path = join(dir, "cvae_report.json");
    if (!io::file_exists(path)) return std::numeric_limits<double>::quiet_NaN();
    nlohmann::json j = nlohmann::json::parse(io::read_text(path));
    double sum = 0.0;
    int n = 0;
    for (const auto& lvl : j.at("levels")) {
        sum += lvl.at("holdout_recon").back().get<double>();
        ++n;
    }
    return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

int cmd_gen_data(const Opts& o) {
    config::Config cfg = resolve_config(o);
    fs::create_directories(o.out);
    std::string dataset_path = join(o.out, "dataset.jsonl");
    std::string stats_path = join(o.out, "encoder_stats.json");
    if (!guard_outputs({dataset_path, stats_path}, o)) return 0;

    std::vector<envsim::Primitive> prims(envsim::kAllPrimitives.begin(), envsim::kAllPrimitives.end());
    auto dataset = envsim::generate_offline_dataset(cfg.n_traj, o.seed, prims, cfg.dataset);
    envsim::save_trajectories(dataset, dataset_path);
    auto stats = encoder::fit_normalizer(dataset, cfg.scale_floor);
    stats.save(stats_path);
    write_config_echo(cfg, o, "gen-data");

    long transitions = 0;
    for (const auto& t : dataset) transitions += static_cast<long>(t.length());
    std::cout << "wrote " << dataset.size() << " trajectories (" << transitions << " transitions) to "
              << dataset_path << "\n";
    return 0;
}

int cmd_train_cvae(const Opts& o) {
    config::Config cfg = resolve_config(o);
    fs::create_directories(o.out);
    require_artifact(join(o.out, "dataset.jsonl"), "gen-data");

    std::vector<std::string> outs;
    for (int l = 1; l <= cfg.plan.L; ++l) outs.push_back(join(o.out, "cvae_level" + std::to_string(l) + ".json"));
    outs.push_back(join(o.out, "cvae_report.json"));
    if (!guard_outputs(outs, o)) return 0;

    auto stats = load_or_fit_stats(cfg, o);
    auto dataset = envsim::load_trajectories(join(o.out, "dataset.jsonl"));
    std::vector<Mat> latents;
    latents.reserve(dataset.size());
    for (const auto& traj : dataset) {
        Mat m(static_cast<long>(traj.states.size()), stats.d_h);
        for (long t = 0; t < m.rows(); ++t)
            m.row(t) = encoder::encode(stats, traj.states[static_cast<std::size_t>(t)]).transpose();
        latents.push_back(std::move(m));
    }

    Rng root(o.seed);
    nlohmann::json report;
    report["levels"] = nlohmann::json::array();
    cvae::TrainOptions topt;
    topt.epochs = cfg.cvae.epochs;
    topt.batch_size = cfg.cvae.batch_size;
    topt.chain_length = cfg.cvae.chain_length;
    topt.lr = cfg.cvae.lr;
    topt.holdout_fraction = cfg.cvae.holdout_fraction;

    for (int l = 1; l <= cfg.plan.L; ++l) {
        Rng init_rng = root.stream("cvae").stream(static_cast<std::uint64_t>(l));
        auto model = cvae::CvaeModel::make(l, cfg.cvae.delta_ts[static_cast<std::size_t>(l - 1)],
                                           cfg.cvae.hidden, init_rng, stats.d_h, cfg.cvae.d_z,
                                           cfg.cvae.beta_kl);
        auto rep = cvae::train_level(model, latents, topt,
                                     root.stream("cvae-train").stream(static_cast<std::uint64_t>(l)).seed());
        model.save(join(o.out, "cvae_level" + std::to_string(l)));
        nlohmann::json lvl;
        lvl["level"] = l;
        lvl["delta_t"] = model.delta_t;
        lvl["eligible_trajectories"] = rep.eligible_trajectories;
        lvl["holdout_elbo"] = rep.holdout_elbo;
        lvl["holdout_recon"] = rep.holdout_recon;
        report["levels"].push_back(lvl);
        std::cout << "level " << l << " (delta_t=" << model.delta_t
                  << "): holdout recon " << rep.holdout_recon.front() << " -> "
                  << rep.holdout_recon.back() << "\n";
    }
    io::write_text(join(o.out, "cvae_report.json"), report.dump(2) + "\n");
    write_config_echo(cfg, o, "train-cvae");
    return 0;
}

int cmd_pretrain(const Opts& o) {
    config::Config cfg = resolve_config(o);
    fs::create_directories(o.out);
    require_artifact(join(o.out, "dataset.jsonl"), "gen-data");
    std::string metrics_path = join(o.out, "metrics.csv");
    if (!guard_outputs({join(o.out, "agent_manifest.json"), metrics_path}, o)) return 0;

    auto stats = load_or_fit_stats(cfg, o);
    auto offline = offline_buffer_from(join(o.out, "dataset.jsonl"), stats);

    Rng root(o.seed);
    Rng init = root.stream("rl-init");
    auto agent = gcrl::Agent::make(cfg.rl, init);

    io::write_text(metrics_path, orchestrator::metrics_header() + "\n");
    auto on_row = [&](const orchestrator::MetricsRow& row) {
        std::string text = io::read_text(metrics_path);
        io::write_text(metrics_path, text + orchestrator::metrics_to_csv(row) + "\n");
        agent.save(join(o.out, "agent"));
        std::cout << "epoch " << row.epoch << "  primitive-reach " << row.success_rate
                  << "  losses v/q/pi " << row.value_loss << "/" << row.critic_loss << "/"
                  << row.policy_loss << "\n";
    };
    orchestrator::pretrain_agent(agent, offline, cfg.run, stats, envsim::EnvParams{},
                                 cfg.dataset.randomization, root.stream("rl").seed(), on_row);
    agent.save(join(o.out, "agent"));
    write_config_echo(cfg, o, "pretrain");
    return 0;
}

orchestrator::EpisodeContext make_context(const config::Config& cfg, const Opts& o,
                                          const encoder::NormalizerStats* stats,
                                          const std::vector<cvae::CvaeModel>* models,
                                          const std::string& artifact_dir) {
    orchestrator::EpisodeContext ctx;
    ctx.stats = stats;
    ctx.models = models;
    ctx.plan_cfg = cfg.plan;
    ctx.run = cfg.run;
    ctx.task = envsim::parse_task_id(o.task);
    ctx.cvae_holdout_mse = mean_final_holdout_mse(artifact_dir);
    return ctx;
}

int cmd_plan(const Opts& o) {
    config::Config cfg = resolve_config(o);
    fs::create_directories(o.out);
    std::string plan_path = join(o.out, "plan.json");
    if (!guard_outputs({plan_path}, o)) return 0;

    require_artifact(join(o.out, "encoder_stats.json"), "gen-data");
    auto stats = encoder::NormalizerStats::load(join(o.out, "encoder_stats.json"));
    auto models = load_models(cfg, o.out);
    std::string aprefix = agent_prefix(o.out, true);
    require_artifact(aprefix + "_manifest.json", "pretrain");
    auto agent = gcrl::Agent::load(aprefix);

    Rng root(o.seed);
    auto task_id = envsim::parse_task_id(o.task);
    std::uint64_t env_seed = root.stream("env").seed();
    auto s0 = envsim::reset(env_seed, envsim::task_reset_config(task_id));
    auto task = envsim::make_task(task_id, s0);
    Vec h0 = encoder::encode(stats, s0);
    Vec hg = encoder::encode(stats, task.goal);

    planner::LatentPlanBuffer buffers(cfg.plan.L, cfg.plan.buffer_capacity);
    Rng plan_rng = root.stream("planner");
    auto plan = planner::plan(h0, hg, models, agent, buffers, cfg.plan, plan_rng, cfg.run.subgoal_budget);
    io::write_text(plan_path, planner::plan_to_json(plan, cfg.plan));
    write_config_echo(cfg, o, "plan");
    std::cout << "plan with " << plan.K_total() << " subgoals, top-level cost " << plan.top_cost
              << " -> " << plan_path << "\n";
    return 0;
}

int cmd_finetune(const Opts& o) {
    config::Config cfg = resolve_config(o);
    fs::create_directories(o.out);
    std::string src = cfg.source_dir.empty() ? o.out : cfg.source_dir;

    require_artifact(join(src, "dataset.jsonl"), "gen-data");
    require_artifact(join(src, "encoder_stats.json"), "gen-data");
    require_artifact(join(src, "agent_manifest.json"), "pretrain");

    if (!guard_outputs({join(o.out, "agent_finetuned_manifest.json")}, o)) return 0;

    auto stats = encoder::NormalizerStats::load(join(src, "encoder_stats.json"));
    auto offline = offline_buffer_from(join(src, "dataset.jsonl"), stats);
    auto agent = gcrl::Agent::load(join(src, "agent"));
    agent.cfg.eps_reach = cfg.run.eps_reach;

    std::vector<cvae::CvaeModel> models;
    if (cfg.run.planning) models = load_models(cfg, src);

    orchestrator::EpisodeContext ctx = make_context(cfg, o, &stats, cfg.run.planning ? &models : nullptr, src);

    // metrics.csv carries the offline curve (negative epochs) followed by
    // this run's online rows
    std::string metrics_path = join(o.out, "metrics.csv");
    std::vector<std::string> preserved;
    std::string src_metrics = join(src, "metrics.csv");
    if (io::file_exists(src_metrics)) {
        for (const auto& line : io::read_lines(src_metrics)) {
            if (line.empty() || line == orchestrator::metrics_header()) continue;
            if (line.find(",offline,") != std::string::npos) preserved.push_back(line);
        }
    }
    {
        std::string text = orchestrator::metrics_header() + "\n";
        for (const auto& line : preserved) text += line + "\n";
        io::write_text(metrics_path, text);
    }

    gcrl::ReplayBuffer online;
    planner::LatentPlanBuffer buffers(cfg.plan.L, cfg.plan.buffer_capacity);
    auto on_row = [&](const orchestrator::MetricsRow& row) {
        std::string text = io::read_text(metrics_path);
        io::write_text(metrics_path, text + orchestrator::metrics_to_csv(row) + "\n");
        agent.save(join(o.out, "agent_finetuned"));
        std::cout << "epoch " << row.epoch << "  success " << row.success_rate << "  reach "
                  << row.subgoal_reach_rate << "  plan-cost " << row.plan_cost_best << "\n";
    };
    orchestrator::run_finetune(ctx, agent, offline, online, buffers, o.seed, on_row);

    agent.save(join(o.out, "agent_finetuned"));
    if (!online.empty()) online.save(join(o.out, "online_buffer.jsonl"));
    write_config_echo(cfg, o, "finetune");
    return 0;
}

int cmd_eval(const Opts& o) {
    config::Config cfg = resolve_config(o);
    fs::create_directories(o.out);
    std::string eval_path = join(o.out, "eval.json");
    if (!guard_outputs({eval_path}, o)) return 0;

    std::string src = cfg.source_dir.empty() ? o.out : cfg.source_dir;
    require_artifact(join(src, "encoder_stats.json"), "gen-data");
    auto stats = encoder::NormalizerStats::load(join(src, "encoder_stats.json"));
    std::string aprefix = agent_prefix(o.out, true);
    if (!io::file_exists(aprefix + "_manifest.json")) aprefix = agent_prefix(src, true);
    require_artifact(aprefix + "_manifest.json", "pretrain");
    auto agent = gcrl::Agent::load(aprefix);
    agent.cfg.eps_reach = cfg.run.eps_reach;

    std::vector<cvae::CvaeModel> models;
    if (cfg.run.planning) models = load_models(cfg, src);
    orchestrator::EpisodeContext ctx = make_context(cfg, o, &stats, cfg.run.planning ? &models : nullptr, src);

    int episodes = o.episodes > 0 ? o.episodes : cfg.run.eval_episodes_per_epoch;
    planner::LatentPlanBuffer buffers(cfg.plan.L, cfg.plan.buffer_capacity);
    auto ev = orchestrator::evaluate(ctx, agent, buffers, episodes, o.seed);

    std::cout << "success_rate " << ev.success_rate << "\n";
    nlohmann::json j;
    j["success_rate"] = ev.success_rate;
    j["episodes"] = episodes;
    j["mean_return"] = ev.mean_return;
    j["subgoal_reach_rate"] = ev.mean_reach_rate;
    j["task"] = o.task;
    j["seed"] = o.seed;
    j["config"] = nlohmann::json::parse(cfg.to_json_text());
    io::write_text(eval_path, j.dump(2) + "\n");
    return 0;
}

int cmd_report(const Opts& o) {
    if (o.run_dirs.empty()) throw ConfigError("report: pass at least one run directory");
    fs::create_directories(o.out);
    std::string report_path = join(o.out, "report.csv");
    if (!guard_outputs({report_path}, o)) return 0;

    struct Key {
        int epoch;
        std::string phase;
        bool operator<(const Key& k) const {
            return epoch != k.epoch ? epoch < k.epoch : phase < k.phase;
        }
    };
    std::map<Key, std::vector<orchestrator::MetricsRow>> grouped;
    for (const auto& dir : o.run_dirs) {
        std::string path = join(dir, "metrics.csv");
        require_artifact(path, "finetune");
        auto lines = io::read_lines(path);
        for (std::size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            auto row = orchestrator::metrics_from_csv(lines[i]);
            grouped[{row.epoch, row.phase}].push_back(row);
        }
    }

    auto mean_std = [](const std::vector<double>& xs) {
        double m = 0.0;
        for (double x : xs) m += x;
        m /= static_cast<double>(xs.size());
        double v = 0.0;
        for (double x : xs) v += (x - m) * (x - m);
        v = xs.size() > 1 ? v / static_cast<double>(xs.size() - 1) : 0.0;
        return std::make_pair(m, std::sqrt(v));
    };

    std::string out_text =
        "epoch,phase,n,success_mean,success_std,return_mean,return_std,reach_mean,reach_std\n";
    std::cout << "epoch  phase    n  success (mean +- std)\n";
    for (const auto& [key, rows] : grouped) {
        std::vector<double> succ, ret, reach;
        for (const auto& r : rows) {
            succ.push_back(r.success_rate);
            ret.push_back(r.mean_episode_return);
            reach.push_back(r.subgoal_reach_rate);
        }
        auto [sm, ss] = mean_std(succ);
        auto [rm, rs] = mean_std(ret);
        auto [em, es] = mean_std(reach);
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%d,%s,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", key.epoch,
                      key.phase.c_str(), rows.size(), sm, ss, rm, rs, em, es);
        out_text += buf;
        std::snprintf(buf, sizeof(buf), "%5d  %-7s %2zu  %.3f +- %.3f\n", key.epoch, key.phase.c_str(),
                      rows.size(), sm, ss);
        std::cout << buf;
    }
    io::write_text(report_path, out_text);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical latent-subgoal planning and goal-conditioned fine-tuning"};
    app.require_subcommand(1);

    Opts o;
    auto add_common = [&](CLI::App* sub, bool with_task = true) {
        sub->add_option("--config", o.config_path, "JSON config file");
        sub->add_option("--seed", o.seed, "root seed");
        sub->add_option("--out", o.out, "workspace directory");
        sub->add_flag("--resume", o.resume, "skip when outputs already exist");
        sub->add_flag("--force", o.force, "overwrite existing outputs");
        sub->add_flag("--no-planning", o.no_planning, "disable subgoal planning (flat baseline)");
        sub->add_flag("--paper-scale", o.paper_scale, "use published large-scale defaults");
        if (with_task) sub->add_option("--task", o.task, "target task: A, B or C");
    };

    auto* gen = app.add_subcommand("gen-data", "generate the scripted offline dataset");
    add_common(gen);
    auto* cv = app.add_subcommand("train-cvae", "train the subgoal generator per level");
    add_common(cv);
    auto* pre = app.add_subcommand("pretrain", "offline goal-conditioned pretraining");
    add_common(pre);
    auto* pl = app.add_subcommand("plan", "plan subgoals for one episode and write plan.json");
    add_common(pl);
    auto* ft = app.add_subcommand("finetune", "online fine-tuning against planned subgoals");
    add_common(ft);
    auto* ev = app.add_subcommand("eval", "evaluate success rate on the target task");
    add_common(ev);
    ev->add_option("--episodes", o.episodes, "number of evaluation episodes");
    auto* rep = app.add_subcommand("report", "aggregate metrics across run directories");
    add_common(rep, false);
    rep->add_option("runs", o.run_dirs, "run directories containing metrics.csv");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(o);
        if (cv->parsed()) return cmd_train_cvae(o);
        if (pre->parsed()) return cmd_pretrain(o);
        if (pl->parsed()) return cmd_plan(o);
        if (ft->parsed()) return cmd_finetune(o);
        if (ev->parsed()) return cmd_eval(o);
        if (rep->parsed()) return cmd_report(o);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
