#include "goalplan/planner.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"

namespace goalplan {
namespace planner {

namespace {
constexpr double kLog2Pi = 1.8378770664093453;  // ln(2*pi)
}

void PlanConfig::validate() const {
    if (L < 1) throw std::invalid_argument("PlanConfig: L must be >= 1");
    if (K < 1) throw std::invalid_argument("PlanConfig: K must be >= 1");
    if (M < 2) throw std::invalid_argument("PlanConfig: M must be >= 2");
    if (N < 2) throw std::invalid_argument("PlanConfig: N must be >= 2");
    if (eta1 < 0.0 || eta2 < 0.0) throw std::invalid_argument("PlanConfig: eta1/eta2 must be >= 0");
    if (mppi_iters < 0) throw std::invalid_argument("PlanConfig: mppi_iters must be >= 0");
}

long PlanConfig::level_positions(int level) const {
    long n = K;
    for (int l = L; l > level; --l) n *= M;
    return n;
}

void LatentPlanBuffer::append(int level, Mat z) {
    if (level < 1 || level > levels()) throw std::invalid_argument("LatentPlanBuffer: bad level");
    auto& dq = per_level_[static_cast<std::size_t>(level - 1)];
    dq.push_back(std::move(z));
    while (static_cast<int>(dq.size()) > capacity_) dq.pop_front();
}

const std::deque<Mat>& LatentPlanBuffer::at(int level) const {
    if (level < 1 || level > levels()) throw std::invalid_argument("LatentPlanBuffer: bad level");
    return per_level_[static_cast<std::size_t>(level - 1)];
}

double prior_logpdf(const Vec& z) {
    return -0.5 * static_cast<double>(z.size()) * kLog2Pi - 0.5 * z.squaredNorm();
}

Vec prior_logpdf_rows(const Mat& z) {
    return (-0.5 * static_cast<double>(z.cols()) * kLog2Pi -
            0.5 * z.array().square().rowwise().sum())
        .matrix();
}

double plan_cost(const Vec& h0, const Vec& hg, const std::vector<Vec>& z_seq,
                 const std::vector<Vec>& subgoal_seq, const gcrl::Agent& agent,
                 const PlanConfig& cfg) {
    if (z_seq.size() != subgoal_seq.size())
        throw std::invalid_argument("plan_cost: z/subgoal length mismatch");
    if (z_seq.empty()) throw std::invalid_argument("plan_cost: empty sequence");

    double cost = (hg - subgoal_seq.back()).norm();
    const Vec* prev = &h0;
    for (std::size_t i = 0; i < subgoal_seq.size(); ++i) {
        if (cfg.eta1 != 0.0) {
            Vec in(prev->size() + subgoal_seq[i].size());
            in << *prev, subgoal_seq[i];
            cost -= cfg.eta1 * agent.v.forward(in)(0);
        }
        if (cfg.eta2 != 0.0) cost -= cfg.eta2 * prior_logpdf(z_seq[i]);
        prev = &subgoal_seq[i];
    }
    return cost;
}

namespace {

// Batched version of plan_cost over a candidate set.
Vec batch_cost(const Vec& h0, const Vec& hg, const CandidateSet& c, const gcrl::Agent& agent,
               const PlanConfig& cfg) {
    const long N = c.count();
    const int K = c.steps();
    Vec cost = (c.subgoals[static_cast<std::size_t>(K - 1)].rowwise() - hg.transpose())
                   .rowwise()
                   .norm();
    if (cfg.eta1 != 0.0) {
        Mat prev = h0.transpose().replicate(N, 1);
        for (int i = 0; i < K; ++i) {
            const Mat& cur = c.subgoals[static_cast<std::size_t>(i)];
            Mat in(N, prev.cols() + cur.cols());
            in << prev, cur;
            cost -= cfg.eta1 * agent.v.forward(in).col(0);
            prev = cur;
        }
    }
    if (cfg.eta2 != 0.0)
        for (int i = 0; i < K; ++i) cost -= cfg.eta2 * prior_logpdf_rows(c.z[static_cast<std::size_t>(i)]);
    return cost;
}

}  // namespace

CandidateSet sample_candidates(const Vec& h0, const Vec& /*hg*/, const cvae::CvaeModel& model,
                               const LatentPlanBuffer& buffer, int level, long pos_begin,
                               int K_level, int N, const PlanConfig& cfg, Rng& rng) {
    if (N < 2) throw std::invalid_argument("sample_candidates: N must be >= 2");

    // buffer entries must match this level's full concatenated length
    std::vector<const Mat*> usable;
    if (level >= 1 && level <= buffer.levels()) {
        long expected = cfg.level_positions(level);
        for (const Mat& e : buffer.entries(level))
            if (e.rows() == expected && e.cols() == cfg.d_z && pos_begin + K_level <= e.rows())
                usable.push_back(&e);
    }
    long n_buf = usable.empty() ? 0 : std::lround(cfg.buffer_fraction * N);

    CandidateSet out;
    out.z.resize(static_cast<std::size_t>(K_level));
    for (int k = 0; k < K_level; ++k) out.z[static_cast<std::size_t>(k)].resize(N, cfg.d_z);

    for (long j = 0; j < n_buf; ++j) {
        const Mat& e = *usable[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(usable.size())))];
        for (int k = 0; k < K_level; ++k)
            out.z[static_cast<std::size_t>(k)].row(j) = e.row(pos_begin + k);
    }
    for (long j = n_buf; j < N; ++j)
        for (int k = 0; k < K_level; ++k)
            out.z[static_cast<std::size_t>(k)].row(j) = rng.normal_vec(cfg.d_z).transpose();

    out.subgoals = cvae::generate_sequence_batch(model, h0.transpose().replicate(N, 1), out.z);
    return out;
}

RefineResult mppi_refine(CandidateSet candidates, const GenerateFn& generate, const CostFn& cost_fn,
                         const PlanConfig& cfg, Rng& rng) {
    if (candidates.count() == 0) throw std::invalid_argument("mppi_refine: no candidates");
    const long N = candidates.count();
    const int K = candidates.steps();

    RefineResult best;
    best.cost = std::numeric_limits<double>::infinity();

    auto score_and_track = [&](const CandidateSet& set) -> Vec {
        Vec costs = cost_fn(set);
        Eigen::Index arg = -1;
        double cmin = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < costs.size(); ++j) {
            if (std::isfinite(costs(j)) && costs(j) < cmin) {
                cmin = costs(j);
                arg = j;
            }
        }
        if (arg < 0) throw PlanningError("mppi_refine: all candidate costs are non-finite");
        if (cmin < best.cost) {
            best.cost = cmin;
            best.z.clear();
            best.subgoals.clear();
            for (int k = 0; k < K; ++k) {
                best.z.push_back(set.z[static_cast<std::size_t>(k)].row(arg).transpose());
                best.subgoals.push_back(set.subgoals[static_cast<std::size_t>(k)].row(arg).transpose());
            }
        }
        best.best_cost_trace.push_back(best.cost);
        return costs;
    };

    Vec costs = score_and_track(candidates);

    for (int iter = 0; iter < cfg.mppi_iters; ++iter) {
        // exponentiated-cost weights on the last scored set
        double cmin = costs.minCoeff();
        Vec w = ((-(costs.array() - cmin) / cfg.mppi_lambda).exp()).matrix();
        double wsum = w.sum();

        std::vector<Mat> next_z(static_cast<std::size_t>(K));
        for (int k = 0; k < K; ++k) {
            const Mat& zk = candidates.z[static_cast<std::size_t>(k)];
            Vec nominal = (zk.transpose() * w) / wsum;
            Mat nz(N, cfg.d_z);
            nz.row(0) = nominal.transpose();
            for (long j = 1; j + 1 < N; ++j)
                nz.row(j) = nominal.transpose() + cfg.mppi_sigma * rng.normal_vec(cfg.d_z).transpose();
            nz.row(N - 1) = best.z[static_cast<std::size_t>(k)].transpose();  // elite
            next_z[static_cast<std::size_t>(k)] = std::move(nz);
        }
        candidates.z = std::move(next_z);
        candidates.subgoals = generate(candidates.z);
        costs = score_and_track(candidates);
    }
    return best;
}

namespace {

struct PlanDriver {
    const std::vector<cvae::CvaeModel>& models;
    const gcrl::Agent& agent;
    const LatentPlanBuffer& buffers;
    const PlanConfig& cfg;
    Rng& rng;
    SubgoalPlan& out;

    RefineResult run_level(const Vec& h0, const Vec& hg, int level, int K_here, long pos_begin) {
        const cvae::CvaeModel& model = models[static_cast<std::size_t>(level - 1)];
        CandidateSet cands =
            sample_candidates(h0, hg, model, buffers, level, pos_begin, K_here, cfg.N, cfg, rng);
        GenerateFn gen = [&](const std::vector<Mat>& z) {
            return cvae::generate_sequence_batch(model, h0.transpose().replicate(z[0].rows(), 1), z);
        };
        CostFn cost = [&](const CandidateSet& set) { return batch_cost(h0, hg, set, agent, cfg); };
        RefineResult refined = mppi_refine(std::move(cands), gen, cost, cfg, rng);

        LevelPlan& lp = out.per_level[static_cast<std::size_t>(level - 1)];
        for (int k = 0; k < K_here; ++k) {
            lp.z.row(pos_begin + k) = refined.z[static_cast<std::size_t>(k)].transpose();
            lp.subgoals.row(pos_begin + k) = refined.subgoals[static_cast<std::size_t>(k)].transpose();
        }
        lp.cost += refined.cost;

        if (level > 1) {
            const Vec* prev = &h0;
            for (int i = 0; i < K_here; ++i) {
                run_level(*prev, refined.subgoals[static_cast<std::size_t>(i)], level - 1, cfg.M,
                          (pos_begin + i) * cfg.M);
                prev = &refined.subgoals[static_cast<std::size_t>(i)];
            }
        }
        return refined;
    }
};

}  // namespace

SubgoalPlan plan(const Vec& h0, const Vec& hg, const std::vector<cvae::CvaeModel>& models,
                 const gcrl::Agent& agent, const LatentPlanBuffer& buffers, const PlanConfig& cfg,
                 Rng& rng, int delta_t_finest) {
    cfg.validate();
    if (static_cast<int>(models.size()) < cfg.L)
        throw std::invalid_argument("plan: need one generator model per level");
    for (int l = 2; l <= cfg.L; ++l) {
        if (models[static_cast<std::size_t>(l - 1)].delta_t !=
            models[static_cast<std::size_t>(l - 2)].delta_t * cfg.M)
            throw std::invalid_argument("plan: level delta_t values must ascend by factor M");
    }

    SubgoalPlan out;
    out.delta_t_finest = delta_t_finest;
    const int d_h = models[0].d_h;
    out.per_level.resize(static_cast<std::size_t>(cfg.L));
    for (int l = 1; l <= cfg.L; ++l) {
        long n = cfg.level_positions(l);
        out.per_level[static_cast<std::size_t>(l - 1)].z = Mat::Zero(n, cfg.d_z);
        out.per_level[static_cast<std::size_t>(l - 1)].subgoals = Mat::Zero(n, d_h);
    }

    PlanDriver driver{models, agent, buffers, cfg, rng, out};
    RefineResult top = driver.run_level(h0, hg, cfg.L, cfg.K, 0);
    out.top_cost = top.cost;
    out.flattened = out.per_level[0].subgoals;
    return out;
}

SubgoalPlan trivial_plan(const Vec& hg, int delta_t_finest) {
    SubgoalPlan out;
    out.delta_t_finest = delta_t_finest;
    out.flattened = hg.transpose();
    out.top_cost = 0.0;
    return out;
}

void buffer_commit(LatentPlanBuffer& buffers, const SubgoalPlan& plan) {
    for (int l = 1; l <= static_cast<int>(plan.per_level.size()); ++l)
        buffers.append(l, plan.per_level[static_cast<std::size_t>(l - 1)].z);
}

std::string plan_to_json(const SubgoalPlan& plan, const PlanConfig& cfg) {
    nlohmann::json j;
    j["delta_t_finest"] = plan.delta_t_finest;
    j["top_cost"] = plan.top_cost;
    auto mat_to_json = [](const Mat& m) {
        nlohmann::json rows = nlohmann::json::array();
        for (long r = 0; r < m.rows(); ++r) {
            Vec row = m.row(r).transpose();
            rows.push_back(std::vector<double>(row.data(), row.data() + row.size()));
        }
        return rows;
    };
    auto& levels = j["levels"] = nlohmann::json::array();
    for (std::size_t l = 0; l < plan.per_level.size(); ++l) {
        nlohmann::json lvl;
        lvl["level"] = l + 1;
        lvl["cost"] = plan.per_level[l].cost;
        lvl["z"] = mat_to_json(plan.per_level[l].z);
        lvl["subgoals"] = mat_to_json(plan.per_level[l].subgoals);
        levels.push_back(std::move(lvl));
    }
    j["flattened"] = mat_to_json(plan.flattened);
    nlohmann::json c;
    c["L"] = cfg.L;
    c["K"] = cfg.K;
    c["M"] = cfg.M;
    c["N"] = cfg.N;
    c["mppi_iters"] = cfg.mppi_iters;
    c["eta1"] = cfg.eta1;
    c["eta2"] = cfg.eta2;
    c["mppi_lambda"] = cfg.mppi_lambda;
    c["mppi_sigma"] = cfg.mppi_sigma;
    c["buffer_fraction"] = cfg.buffer_fraction;
    c["buffer_capacity"] = cfg.buffer_capacity;
    j["config"] = c;
    return j.dump(2) + "\n";
}

}  // namespace planner
}  // namespace goalplan
