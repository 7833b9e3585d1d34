#include "goalplan/gcrl.hpp"

#include <algorithm>
#include <cmath>

#include "goalplan/io.hpp"
#include "json.hpp"

namespace goalplan {
namespace gcrl {

StoredTrajectory store_trajectory(const envsim::Trajectory& traj,
                                  const encoder::NormalizerStats& stats) {
    const long T = static_cast<long>(traj.actions.size());
    StoredTrajectory st;
    st.raw_states.resize(T + 1, envsim::EnvState::kFlatDim);
    st.latents.resize(T + 1, stats.d_h);
    st.actions.resize(T, 3);
    for (long t = 0; t <= T; ++t) {
        Vec f = traj.states[static_cast<std::size_t>(t)].flatten();
        st.raw_states.row(t) = f.transpose();
        st.latents.row(t) = encoder::encode_flat(stats, f).transpose();
    }
    for (long t = 0; t < T; ++t) {
        const auto& a = traj.actions[static_cast<std::size_t>(t)];
        st.actions.row(t) << a.delta_xy[0], a.delta_xy[1], a.grip_cmd;
    }
    // offline demonstrations are commanded by their own outcome
    st.commanded_goals = st.latents.row(T).replicate(T, 1);
    st.tag = traj.primitive_tag;
    st.seed = traj.seed;
    return st;
}

void ReplayBuffer::add(StoredTrajectory t) {
    if (t.length() <= 0) throw std::invalid_argument("ReplayBuffer::add: empty trajectory");
    total_ += t.length();
    trajs_.push_back(std::move(t));
    cum_.push_back(total_);
}

std::pair<int, int> ReplayBuffer::locate(long flat) const {
    if (flat < 0 || flat >= total_) throw std::invalid_argument("ReplayBuffer::locate: out of range");
    auto it = std::upper_bound(cum_.begin(), cum_.end(), flat);
    int traj_id = static_cast<int>(it - cum_.begin()) - 1;
    return {traj_id, static_cast<int>(flat - cum_[static_cast<std::size_t>(traj_id)])};
}

void ReplayBuffer::save(const std::string& path) const {
    std::vector<std::string> lines;
    lines.reserve(trajs_.size());
    for (const auto& t : trajs_) {
        nlohmann::json j;
        auto& states = j["states"] = nlohmann::json::array();
        for (long r = 0; r < t.raw_states.rows(); ++r) {
            Vec row = t.raw_states.row(r).transpose();
            states.push_back(std::vector<double>(row.data(), row.data() + row.size()));
        }
        auto& actions = j["actions"] = nlohmann::json::array();
        for (long r = 0; r < t.actions.rows(); ++r) {
            Vec row = t.actions.row(r).transpose();
            actions.push_back(std::vector<double>(row.data(), row.data() + row.size()));
        }
        auto& goals = j["commanded_goals"] = nlohmann::json::array();
        for (long r = 0; r < t.commanded_goals.rows(); ++r) {
            Vec row = t.commanded_goals.row(r).transpose();
            goals.push_back(std::vector<double>(row.data(), row.data() + row.size()));
        }
        j["primitive_tag"] = t.tag;
        j["seed"] = t.seed;
        lines.push_back(j.dump());
    }
    io::write_lines(path, lines);
}

ReplayBuffer ReplayBuffer::load(const std::string& path, const encoder::NormalizerStats& stats) {
    ReplayBuffer buf;
    for (const auto& line : io::read_lines(path)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        const auto& states = j.at("states");
        const auto& actions = j.at("actions");
        StoredTrajectory t;
        long T1 = static_cast<long>(states.size());
        t.raw_states.resize(T1, envsim::EnvState::kFlatDim);
        t.latents.resize(T1, stats.d_h);
        for (long r = 0; r < T1; ++r) {
            for (int c = 0; c < envsim::EnvState::kFlatDim; ++c)
                t.raw_states(r, c) = states[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
            t.latents.row(r) = encoder::encode_flat(stats, t.raw_states.row(r).transpose()).transpose();
        }
        t.actions.resize(static_cast<long>(actions.size()), 3);
        for (long r = 0; r < t.actions.rows(); ++r)
            for (int c = 0; c < 3; ++c)
                t.actions(r, c) = actions[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        if (j.contains("commanded_goals")) {
            const auto& goals = j.at("commanded_goals");
            t.commanded_goals.resize(static_cast<long>(goals.size()), stats.d_h);
            for (long r = 0; r < t.commanded_goals.rows(); ++r)
                for (int c = 0; c < stats.d_h; ++c)
                    t.commanded_goals(r, c) =
                        goals[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        } else {
            t.commanded_goals = t.latents.row(T1 - 1).replicate(T1 - 1, 1);
        }
        t.tag = j.value("primitive_tag", "policy");
        t.seed = j.value("seed", std::uint64_t{0});
        buf.add(std::move(t));
    }
    return buf;
}

double expectile_loss(double u, double tau) {
    if (tau <= 0.0 || tau >= 1.0) throw std::invalid_argument("expectile_loss: tau must be in (0,1)");
    double w = u < 0.0 ? 1.0 - tau : tau;
    return w * u * u;
}

GcTransition get_transition(const ReplayBuffer& buffer, long flat_index) {
    auto [traj_id, t] = buffer.locate(flat_index);
    const auto& tr = buffer.traj(traj_id);
    GcTransition x;
    x.h = tr.latents.row(t).transpose();
    x.a = tr.actions.row(t).transpose();
    x.h_next = tr.latents.row(t + 1).transpose();
    x.h_goal = tr.commanded_goals.row(t).transpose();
    x.traj_id = traj_id;
    x.index = t;
    x.done = (t + 1 == tr.latents.rows() - 1);
    return x;
}

std::vector<GcTransition> sample_batch(const ReplayBuffer& buffer, int n, Rng& rng, bool from_online) {
    if (n > 0 && buffer.empty()) throw StateError("sample_batch: buffer is empty");
    std::vector<GcTransition> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        auto x = get_transition(buffer, rng.uniform_int(buffer.num_transitions()));
        x.from_online = from_online;
        out.push_back(std::move(x));
    }
    return out;
}

std::vector<GcTransition> sample_mixed_batch(const ReplayBuffer& offline, const ReplayBuffer& online,
                                             int batch_size, double online_fraction, Rng& rng) {
    if (offline.empty() && online.empty()) throw StateError("sample_mixed_batch: both buffers empty");
    int n_online = online.empty()
                       ? 0
                       : static_cast<int>(std::floor(online_fraction * batch_size));
    int n_offline = batch_size - n_online;
    if (offline.empty()) {
        n_online = batch_size;
        n_offline = 0;
    }
    std::vector<GcTransition> batch = sample_batch(offline, n_offline, rng, false);
    std::vector<GcTransition> on = sample_batch(online, n_online, rng, true);
    batch.insert(batch.end(), std::make_move_iterator(on.begin()), std::make_move_iterator(on.end()));
    return batch;
}

namespace {

void relabel_one(GcTransition& x, const ReplayBuffer& buffer, Rng& rng) {
    const auto& tr = buffer.traj(x.traj_id);
    long T = tr.latents.rows() - 1;
    // future state strictly after the transition's index; at the trajectory
    // end this is exactly h_next
    long j = x.index + 1 + rng.uniform_int(T - x.index);
    x.h_goal = tr.latents.row(j).transpose();
    x.relabeled = true;
}

}  // namespace

void relabel_batch(std::vector<GcTransition>& batch, const ReplayBuffer& buffer, double p_relabel,
                   Rng& rng) {
    if (p_relabel < 0.0 || p_relabel > 1.0)
        throw std::invalid_argument("relabel_batch: p_relabel must be in [0,1]");
    for (auto& x : batch)
        if (rng.uniform() < p_relabel) relabel_one(x, buffer, rng);
}

void relabel_mixed(std::vector<GcTransition>& batch, const ReplayBuffer& offline,
                   const ReplayBuffer& online, double p_relabel, Rng& rng) {
    if (p_relabel < 0.0 || p_relabel > 1.0)
        throw std::invalid_argument("relabel_mixed: p_relabel must be in [0,1]");
    for (auto& x : batch)
        if (rng.uniform() < p_relabel) relabel_one(x, x.from_online ? online : offline, rng);
}

Agent Agent::make(const IqlConfig& cfg, Rng& rng, int d_h, int action_dim, Vec action_bounds) {
    Agent a;
    a.cfg = cfg;
    a.d_h = d_h;
    a.action_dim = action_dim;
    if (action_bounds.size() == 0) {
        a.action_bounds = Vec::Ones(action_dim);
        if (action_dim == 3) a.action_bounds << 0.05, 0.05, 1.0;
    } else {
        a.action_bounds = std::move(action_bounds);
    }

    auto sizes = [&](int in, int out) {
        std::vector<int> s{in};
        s.insert(s.end(), cfg.hidden.begin(), cfg.hidden.end());
        s.push_back(out);
        return s;
    };
    Rng pr = rng.stream("policy"), q1r = rng.stream("q1"), q2r = rng.stream("q2"),
        vr = rng.stream("v");
    a.policy = Mlp(sizes(2 * d_h, action_dim), pr);
    a.q1 = Mlp(sizes(2 * d_h + action_dim, 1), q1r);
    a.q2 = Mlp(sizes(2 * d_h + action_dim, 1), q2r);
    a.v = Mlp(sizes(2 * d_h, 1), vr);
    a.tq1 = a.q1;
    a.tq2 = a.q2;
    a.log_std = Vec::Constant(action_dim, cfg.log_std_init);

    AdamConfig ac{cfg.lr};
    a.opt_policy = AdamState::init(a.policy, ac);
    a.opt_q1 = AdamState::init(a.q1, ac);
    a.opt_q2 = AdamState::init(a.q2, ac);
    a.opt_v = AdamState::init(a.v, ac);
    a.opt_log_std = AdamVecState::init(action_dim, ac);
    return a;
}

namespace {

Mat concat_cols(std::initializer_list<const Mat*> parts) {
    long rows = (*parts.begin())->rows();
    long cols = 0;
    for (const Mat* p : parts) cols += p->cols();
    Mat out(rows, cols);
    long at = 0;
    for (const Mat* p : parts) {
        out.middleCols(at, p->cols()) = *p;
        at += p->cols();
    }
    return out;
}

}  // namespace

UpdateMetrics update(Agent& agent, const std::vector<GcTransition>& batch) {
    if (batch.empty()) throw std::invalid_argument("update: empty batch");
    const long B = static_cast<long>(batch.size());
    const auto& cfg = agent.cfg;

    Mat H(B, agent.d_h), A(B, agent.action_dim), Hn(B, agent.d_h), G(B, agent.d_h);
    Vec done(B), r(B);
    for (long i = 0; i < B; ++i) {
        const auto& x = batch[static_cast<std::size_t>(i)];
        H.row(i) = x.h.transpose();
        A.row(i) = x.a.transpose();
        Hn.row(i) = x.h_next.transpose();
        G.row(i) = x.h_goal.transpose();
        done(i) = x.done ? 1.0 : 0.0;
        r(i) = encoder::reward(x.h_next, x.h_goal, cfg.eps_reach);
    }

    Mat X_v = concat_cols({&H, &G});
    Mat X_q = concat_cols({&H, &A, &G});
    Mat X_vn = concat_cols({&Hn, &G});

    // ---- value: expectile regression of V toward min of target critics
    Mlp::Cache v_cache;
    Vec V = agent.v.forward(X_v, &v_cache).col(0);
    Vec Qt = agent.tq1.forward(X_q).col(0).cwiseMin(agent.tq2.forward(X_q).col(0));
    Vec u = Qt - V;
    Vec asym = (u.array() < 0.0).select(Vec::Constant(B, 1.0 - cfg.expectile_tau),
                                        Vec::Constant(B, cfg.expectile_tau));
    double value_loss = (asym.array() * u.array().square()).mean();
    Mat dV = (-2.0 / static_cast<double>(B)) * (asym.array() * u.array()).matrix();

    // ---- critics: Bellman regression toward r + gamma (1-done) V(h', g)
    Vec Vn = agent.v.forward(X_vn).col(0);
    Vec y = r.array() + cfg.gamma * (1.0 - done.array()) * Vn.array();
    Mlp::Cache q1_cache, q2_cache;
    Vec Q1 = agent.q1.forward(X_q, &q1_cache).col(0);
    Vec Q2 = agent.q2.forward(X_q, &q2_cache).col(0);
    double critic_loss = 0.5 * ((Q1 - y).array().square().mean() + (Q2 - y).array().square().mean());
    Mat dQ1 = ((Q1 - y) / static_cast<double>(B)).matrix();
    Mat dQ2 = ((Q2 - y) / static_cast<double>(B)).matrix();

    // ---- policy: advantage-weighted regression under the tanh-Gaussian
    Vec adv = Q1.cwiseMin(Q2) - V;
    Vec w = (cfg.awr_beta * adv.array()).exp().min(cfg.weight_clip).matrix();
    Mlp::Cache pi_cache;
    Mat mean = agent.policy.forward(X_v, &pi_cache);
    Vec sigma = agent.log_std.array().exp().matrix();
    Mat ratio = A.array().rowwise() / agent.action_bounds.transpose().array();
    Mat zed = ratio.cwiseMax(-1.0 + 1e-6).cwiseMin(1.0 - 1e-6).array().atanh().matrix();
    Mat resid = zed - mean;

    double policy_loss = 0.0;
    {
        Eigen::ArrayXXd r2 = resid.array().square().rowwise() / sigma.transpose().array().square();
        Eigen::ArrayXd logp = -0.5 * r2.rowwise().sum();
        logp -= agent.log_std.sum() + 0.5 * agent.action_dim * std::log(2.0 * M_PI);
        // tanh change of variables plus the bound scaling
        Eigen::ArrayXXd one_m = 1.0 - zed.array().tanh().square();
        logp -= (one_m.max(1e-12).log()).rowwise().sum();
        logp -= agent.action_bounds.array().log().sum();
        policy_loss = -(w.array() * logp).mean();
    }
    Mat d_mean = ((resid.array().rowwise() / sigma.transpose().array().square()).colwise() *
                  (-w.array() / static_cast<double>(B)))
                     .matrix();
    // dL/dlog_std_i = mean_b[ w_b (1 - resid^2/sigma^2) ]
    Vec d_log_std;
    {
        Eigen::ArrayXXd r2 = resid.array().square().rowwise() / sigma.transpose().array().square();
        d_log_std =
            ((1.0 - r2).colwise() * (w.array() / static_cast<double>(B))).colwise().sum().transpose().matrix();
    }

    if (!std::isfinite(value_loss) || !std::isfinite(critic_loss) || !std::isfinite(policy_loss))
        throw NumericError("update: non-finite loss; parameters left unchanged");

    Mlp::Grads g_v = agent.v.backward(v_cache, dV);
    Mlp::Grads g_q1 = agent.q1.backward(q1_cache, dQ1);
    Mlp::Grads g_q2 = agent.q2.backward(q2_cache, dQ2);
    Mlp::Grads g_pi = agent.policy.backward(pi_cache, d_mean);

    adam_step(agent.v, g_v, agent.opt_v);
    adam_step(agent.q1, g_q1, agent.opt_q1);
    adam_step(agent.q2, g_q2, agent.opt_q2);
    adam_step(agent.policy, g_pi, agent.opt_policy);
    adam_step(agent.log_std, d_log_std, agent.opt_log_std);
    agent.log_std = agent.log_std.cwiseMax(cfg.log_std_min).cwiseMin(cfg.log_std_max);

    auto polyak = [&](Mlp& target, const Mlp& online) {
        for (std::size_t l = 0; l < target.weights().size(); ++l) {
            target.weights()[l] = (1.0 - cfg.polyak) * target.weights()[l] + cfg.polyak * online.weights()[l];
            target.biases()[l] = (1.0 - cfg.polyak) * target.biases()[l] + cfg.polyak * online.biases()[l];
        }
    };
    polyak(agent.tq1, agent.q1);
    polyak(agent.tq2, agent.q2);

    UpdateMetrics m;
    m.value_loss = value_loss;
    m.critic_loss = critic_loss;
    m.policy_loss = policy_loss;
    m.mean_advantage = adv.mean();
    return m;
}

Vec select_action(const Agent& agent, const Vec& h, const Vec& h_goal, bool stochastic, Rng& rng) {
    Vec in(2 * agent.d_h);
    in << h, h_goal;
    Vec pre = agent.policy.forward(in);
    if (stochastic) pre += agent.log_std.array().exp().matrix().cwiseProduct(rng.normal_vec(agent.action_dim));
    return agent.action_bounds.cwiseProduct(pre.array().tanh().matrix());
}

envsim::Action to_env_action(const Vec& a) {
    if (a.size() != 3) throw std::invalid_argument("to_env_action: need 3 components");
    return envsim::Action{{a(0), a(1)}, a(2)};
}

void Agent::save(const std::string& prefix) const {
    policy.save(prefix + "_policy.bin");
    q1.save(prefix + "_q1.bin");
    q2.save(prefix + "_q2.bin");
    v.save(prefix + "_v.bin");
    tq1.save(prefix + "_tq1.bin");
    tq2.save(prefix + "_tq2.bin");
    nlohmann::json j;
    j["log_std"] = std::vector<double>(log_std.data(), log_std.data() + log_std.size());
    j["action_bounds"] =
        std::vector<double>(action_bounds.data(), action_bounds.data() + action_bounds.size());
    j["d_h"] = d_h;
    j["action_dim"] = action_dim;
    nlohmann::json c;
    c["gamma"] = cfg.gamma;
    c["expectile_tau"] = cfg.expectile_tau;
    c["awr_beta"] = cfg.awr_beta;
    c["weight_clip"] = cfg.weight_clip;
    c["polyak"] = cfg.polyak;
    c["lr"] = cfg.lr;
    c["batch_size"] = cfg.batch_size;
    c["p_relabel"] = cfg.p_relabel;
    c["online_fraction"] = cfg.online_fraction;
    c["eps_reach"] = cfg.eps_reach;
    c["hidden"] = cfg.hidden;
    c["log_std_init"] = cfg.log_std_init;
    c["log_std_min"] = cfg.log_std_min;
    c["log_std_max"] = cfg.log_std_max;
    j["iql"] = c;
    io::write_text(prefix + "_manifest.json", j.dump(2) + "\n");
}

Agent Agent::load(const std::string& prefix) {
    nlohmann::json j = nlohmann::json::parse(io::read_text(prefix + "_manifest.json"));
    Agent a;
    const auto& c = j.at("iql");
    a.cfg.gamma = c.at("gamma").get<double>();
    a.cfg.expectile_tau = c.at("expectile_tau").get<double>();
    a.cfg.awr_beta = c.at("awr_beta").get<double>();
    a.cfg.weight_clip = c.at("weight_clip").get<double>();
    a.cfg.polyak = c.at("polyak").get<double>();
    a.cfg.lr = c.at("lr").get<double>();
    a.cfg.batch_size = c.at("batch_size").get<int>();
    a.cfg.p_relabel = c.at("p_relabel").get<double>();
    a.cfg.online_fraction = c.at("online_fraction").get<double>();
    a.cfg.eps_reach = c.at("eps_reach").get<double>();
    a.cfg.hidden = c.at("hidden").get<std::vector<int>>();
    a.cfg.log_std_init = c.at("log_std_init").get<double>();
    a.cfg.log_std_min = c.at("log_std_min").get<double>();
    a.cfg.log_std_max = c.at("log_std_max").get<double>();
    a.d_h = j.at("d_h").get<int>();
    a.action_dim = j.at("action_dim").get<int>();
    auto ls = j.at("log_std").get<std::vector<double>>();
    a.log_std = Eigen::Map<const Vec>(ls.data(), static_cast<long>(ls.size()));
    auto ab = j.at("action_bounds").get<std::vector<double>>();
    a.action_bounds = Eigen::Map<const Vec>(ab.data(), static_cast<long>(ab.size()));
    a.policy = Mlp::load(prefix + "_policy.bin");
    a.q1 = Mlp::load(prefix + "_q1.bin");
    a.q2 = Mlp::load(prefix + "_q2.bin");
    a.v = Mlp::load(prefix + "_v.bin");
    a.tq1 = Mlp::load(prefix + "_tq1.bin");
    a.tq2 = Mlp::load(prefix + "_tq2.bin");
    AdamConfig ac{a.cfg.lr};
    a.opt_policy = AdamState::init(a.policy, ac);
    a.opt_q1 = AdamState::init(a.q1, ac);
    a.opt_q2 = AdamState::init(a.q2, ac);
    a.opt_v = AdamState::init(a.v, ac);
    a.opt_log_std = AdamVecState::init(a.action_dim, ac);
    return a;
}

}  // namespace gcrl
}  // namespace goalplan
