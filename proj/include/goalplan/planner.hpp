#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "goalplan/common.hpp"
#include "goalplan/cvae.hpp"
#include "goalplan/gcrl.hpp"

namespace goalplan {
namespace planner {

struct PlanConfig {
    int L = 3;
    int K = 8;
    int M = 2;
    int N = 1024;
    int mppi_iters = 5;
    double eta1 = 0.001;
    double eta2 = 0.01;
    double mppi_lambda = 1.0;
    double mppi_sigma = 0.3;
    double buffer_fraction = 0.5;
    int buffer_capacity = 64;
    int d_z = 8;

    void validate() const;
    // number of subgoal positions a level holds under the full hierarchy
    long level_positions(int level) const;
};

struct LevelPlan {
    Mat z;         // positions x d_z, concatenated across this level's calls
    Mat subgoals;  // positions x d_h
    double cost = 0.0;
};

struct SubgoalPlan {
    std::vector<LevelPlan> per_level;  // [0] = finest ... [L-1] = top
    Mat flattened;                     // K * M^(L-1) x d_h, execution order
    int delta_t_finest = 5;
    double top_cost = 0.0;

    long K_total() const { return flattened.rows(); }
};

// Per-level ring buffers of previously selected latent sequences, reused as
// warm-start candidates across episodes.
class LatentPlanBuffer {
  public:
    LatentPlanBuffer() = default;
    LatentPlanBuffer(int levels, int capacity) : capacity_(capacity) {
        per_level_.resize(static_cast<std::size_t>(levels));
    }

    int levels() const { return static_cast<int>(per_level_.size()); }
    int size(int level) const { return static_cast<int>(at(level).size()); }
    const std::deque<Mat>& entries(int level) const { return at(level); }
    void append(int level, Mat z);

  private:
    const std::deque<Mat>& at(int level) const;
    std::vector<std::deque<Mat>> per_level_;
    int capacity_ = 64;
};

// Full standard-normal log-density.
double prior_logpdf(const Vec& z);
Vec prior_logpdf_rows(const Mat& z);

// Lagrangian plan cost: terminal distance minus eta1-weighted pairwise
// values and eta2-weighted prior log-densities.
double plan_cost(const Vec& h0, const Vec& hg, const std::vector<Vec>& z_seq,
                 const std::vector<Vec>& subgoal_seq, const gcrl::Agent& agent,
                 const PlanConfig& cfg);

struct CandidateSet {
    std::vector<Mat> z;         // per step: N x d_z
    std::vector<Mat> subgoals;  // per step: N x d_h
    long count() const { return z.empty() ? 0 : z[0].rows(); }
    int steps() const { return static_cast<int>(z.size()); }
};

// Candidate generator used by MPPI to rebuild subgoals after z changes.
using GenerateFn = std::function<std::vector<Mat>(const std::vector<Mat>& z)>;
// Batched cost over a candidate set.
using CostFn = std::function<Vec(const CandidateSet&)>;

// round(buffer_fraction*N) candidates sliced from matching buffer entries
// (all from the prior when the level buffer is empty), the rest sampled
// from p(z); subgoals decoded from h0 in all cases.
CandidateSet sample_candidates(const Vec& h0, const Vec& hg, const cvae::CvaeModel& model,
                               const LatentPlanBuffer& buffer, int level, long pos_begin,
                               int K_level, int N, const PlanConfig& cfg, Rng& rng);

struct RefineResult {
    std::vector<Vec> z;
    std::vector<Vec> subgoals;
    double cost = 0.0;
    std::vector<double> best_cost_trace;  // best-so-far after each scoring pass
};

// Importance-weighted nominal update with Gaussian perturbations and an
// elite kept verbatim, so the best cost never regresses.
RefineResult mppi_refine(CandidateSet candidates, const GenerateFn& generate, const CostFn& cost_fn,
                         const PlanConfig& cfg, Rng& rng);

// Coarse-to-fine recursion: the top level plans K subgoals, then each
// adjacent pair is refined by M subgoals one level down. Pure: buffers are
// read, never written.
SubgoalPlan plan(const Vec& h0, const Vec& hg, const std::vector<cvae::CvaeModel>& models,
                 const gcrl::Agent& agent, const LatentPlanBuffer& buffers, const PlanConfig& cfg,
                 Rng& rng, int delta_t_finest);

// The planning-disabled baseline: a single subgoal equal to the final goal.
SubgoalPlan trivial_plan(const Vec& hg, int delta_t_finest);

// Appends each level's winning z-sequence; FIFO eviction at capacity.
void buffer_commit(LatentPlanBuffer& buffers, const SubgoalPlan& plan);

std::string plan_to_json(const SubgoalPlan& plan, const PlanConfig& cfg);

}  // namespace planner
}  // namespace goalplan
