#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "goalplan/common.hpp"
#include "goalplan/rng.hpp"

namespace goalplan {
namespace envsim {

// Fixed world geometry and motion constants. The drawer is anchored at the
// top edge; its front slides down through the path rectangle as it opens,
// and the handle tracks the front. Only drawer_open is part of the state.
struct EnvParams {
    double a_max = 0.05;
    double r_grasp = 0.04;
    double r_push = 0.06;    // robot-obstacle contact distance; obstacle yields

    // drawer interior (the box itself)
    double drawer_x0 = 0.40, drawer_x1 = 0.60;
    double drawer_y0 = 0.82, drawer_y1 = 0.97;
    // opening path swept by the drawer front; an obstacle inside blocks opening
    double path_x0 = 0.38, path_x1 = 0.62;
    double path_y0 = 0.60, path_y1 = 0.80;

    double handle_x = 0.50;
    double handle_y_closed = 0.80;
    double pull_range = 0.20;  // handle travel from closed to fully open
    double r_handle = 0.05;
    double open_min_enter = 0.5;  // interior reachable only past this openness

    double handle_y(double open) const { return handle_y_closed - open * pull_range; }
    bool in_path(double x, double y) const {
        return x >= path_x0 && x <= path_x1 && y >= path_y0 && y <= path_y1;
    }
    bool in_interior(double x, double y) const {
        return x >= drawer_x0 && x <= drawer_x1 && y >= drawer_y0 && y <= drawer_y1;
    }
};

struct EnvState {
    std::array<double, 2> robot_xy{0.5, 0.2};
    double gripper = 0.0;      // 0 open, 1 closed
    double drawer_open = 0.0;  // 0 closed .. 1 open
    std::array<double, 2> obstacle_xy{0.2, 0.2};
    std::array<double, 2> object_xy{0.8, 0.2};
    bool object_held = false;

    // 8 dims: robot(2), gripper, drawer_open, obstacle(2), object(2).
    // object_held is recovered as gripper closed with the object exactly at
    // the robot position, which holds for every dynamics-reachable state.
    static constexpr int kFlatDim = 8;
    Vec flatten() const;
    static EnvState unflatten(const Vec& v);
};

bool operator==(const EnvState& a, const EnvState& b);

struct Action {
    std::array<double, 2> delta_xy{0.0, 0.0};
    double grip_cmd = -1.0;  // >= 0 closes, < 0 opens
};

struct Trajectory {
    std::vector<EnvState> states;  // length T+1
    std::vector<Action> actions;   // length T
    std::string primitive_tag;
    std::uint64_t seed = 0;

    std::size_t length() const { return actions.size(); }
};

struct RandomizationConfig {
    double p_block = 0.25;            // obstacle forced into the drawer path
    double p_object_in_drawer = 0.25; // object spawned inside the (open) drawer
    double p_drawer_open = 0.4;       // drawer starts open; a blocked path forces it closed
    double p_drawer_half = 0.2;       // drawer starts half-open (both drawer skills applicable)
    double min_separation = 0.08;     // obstacle/object placement clearance
    int max_place_attempts = 200;
};

// Returns an initial state; identical (seed, config, params) give identical
// states. Throws ConfigError if rejection sampling cannot place the pieces.
EnvState reset(std::uint64_t seed, const RandomizationConfig& cfg, const EnvParams& params = {});

// Deterministic single-step dynamics. Throws std::invalid_argument for
// out-of-bounds action components.
EnvState step(const EnvState& s, const Action& a, const EnvParams& params = {});

struct TaskSpec {
    std::string name;
    RandomizationConfig reset_config;
    EnvState goal;  // produced per-episode by goal_for
    double tol_drawer = 0.15;
    double tol_obstacle = 0.10;
    double tol_object = 0.10;
    int episode_horizon = 120;
};

enum class TaskId { A, B, C };

TaskId parse_task_id(const std::string& s);

// Builds the task's goal state for a concrete initial state. Robot pose in
// the goal is a plausible end pose; success never depends on it.
TaskSpec make_task(TaskId id, const EnvState& s0, const EnvParams& params = {});
RandomizationConfig task_reset_config(TaskId id);

// Whether s0 lies in the task's intended initial-state set (used by the
// dataset-purity check; tasks are only a contract over such states).
bool task_applicable(TaskId id, const EnvState& s0, const EnvParams& params = {});

// Object/drawer coordinates within tolerance of the goal; robot pose ignored.
bool success(const EnvState& s_final, const TaskSpec& task);

enum class Primitive { GoTo, GraspPlace, SlideObstacle, OpenDrawer, CloseDrawer };

constexpr std::array<Primitive, 5> kAllPrimitives{Primitive::GoTo, Primitive::GraspPlace,
                                                  Primitive::SlideObstacle, Primitive::OpenDrawer,
                                                  Primitive::CloseDrawer};

std::string primitive_tag(Primitive p);

struct PrimitiveConfig {
    int step_budget = 90;
    std::size_t min_len = 5;
    std::size_t max_len = 80;
    int settle_steps = 2;
};

// Scripted controller with privileged state access. Picks its own target
// from rng; returns nullopt when the primitive is inapplicable in s0 or
// fails to terminate within budget.
std::optional<Trajectory> run_primitive(const EnvState& s0, Primitive p, Rng rng,
                                        const EnvParams& params = {},
                                        const PrimitiveConfig& cfg = {});

struct DatasetConfig {
    RandomizationConfig randomization;
    PrimitiveConfig primitive;
    int retry_cap = 10;      // per-trajectory regeneration cap
    int env_retry_cap = 60;  // whole-block redraws; drawer primitives reject many environments
    int block_size = 4;      // trajectories sharing one initial randomization
};

// n_traj scripted demonstrations, primitives assigned round-robin. Each
// block of block_size trajectories starts from one shared initial state;
// a block whose environment defeats one of its primitives is redrawn whole,
// so the shared-initial-state structure is preserved exactly.
std::vector<Trajectory> generate_offline_dataset(int n_traj, std::uint64_t seed,
                                                 const std::vector<Primitive>& primitives,
                                                 const DatasetConfig& cfg = {},
                                                 const EnvParams& params = {});

// True when re-applying the action list from states[0] reproduces every
// recorded state exactly.
bool replays_exactly(const Trajectory& traj, const EnvParams& params = {});

// Line-delimited JSON, one trajectory per line; ".gz" suffix gzips.
void save_trajectories(const std::vector<Trajectory>& trajs, const std::string& path);
std::vector<Trajectory> load_trajectories(const std::string& path);

}  // namespace envsim
}  // namespace goalplan
