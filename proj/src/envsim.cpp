#include "goalplan/envsim.hpp"

#include <algorithm>
#include <cmath>

#include "goalplan/io.hpp"
#include "json.hpp"

namespace goalplan {
namespace envsim {

namespace {

using XY = std::array<double, 2>;

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double dist(const XY& a, const XY& b) { return std::hypot(a[0] - b[0], a[1] - b[1]); }

XY rotate(const XY& v, double angle) {
    double c = std::cos(angle), s = std::sin(angle);
    return {c * v[0] - s * v[1], s * v[0] + c * v[1]};
}

}  // namespace

Vec EnvState::flatten() const {
    Vec v(kFlatDim);
    v << robot_xy[0], robot_xy[1], gripper, drawer_open, obstacle_xy[0], obstacle_xy[1],
        object_xy[0], object_xy[1];
    return v;
}

EnvState EnvState::unflatten(const Vec& v) {
    if (v.size() != kFlatDim) throw std::invalid_argument("EnvState::unflatten: need 8 dims");
    EnvState s;
    s.robot_xy = {v(0), v(1)};
    s.gripper = v(2);
    s.drawer_open = v(3);
    s.obstacle_xy = {v(4), v(5)};
    s.object_xy = {v(6), v(7)};
    s.object_held = s.gripper == 1.0 && s.object_xy == s.robot_xy;
    return s;
}

bool operator==(const EnvState& a, const EnvState& b) {
    return a.robot_xy == b.robot_xy && a.gripper == b.gripper && a.drawer_open == b.drawer_open &&
           a.obstacle_xy == b.obstacle_xy && a.object_xy == b.object_xy &&
           a.object_held == b.object_held;
}

EnvState reset(std::uint64_t seed, const RandomizationConfig& cfg, const EnvParams& p) {
    Rng rng(Rng::mix(seed ^ 0x7e57a1e5u));
    EnvState s;

    bool blocked = rng.uniform() < cfg.p_block;
    double mode = rng.uniform();
    if (blocked || mode >= cfg.p_drawer_open + cfg.p_drawer_half)
        s.drawer_open = rng.uniform(0.0, 0.08);
    else if (mode < cfg.p_drawer_open)
        s.drawer_open = rng.uniform(0.85, 1.0);
    else
        s.drawer_open = rng.uniform(0.32, 0.60);

    // obstacle
    if (blocked) {
        const double m = 0.03;
        s.obstacle_xy = {rng.uniform(p.path_x0 + m, p.path_x1 - m),
                         rng.uniform(p.path_y0 + m, p.path_y1 - m)};
    } else {
        int attempts = 0;
        for (;;) {
            if (++attempts > cfg.max_place_attempts)
                throw ConfigError("reset: cannot place obstacle under the given exclusions");
            XY c{rng.uniform(0.04, 0.96), rng.uniform(0.04, 0.76)};
            if (p.in_path(c[0], c[1])) continue;
            s.obstacle_xy = c;
            break;
        }
    }

    // object
    bool want_in_drawer = rng.uniform() < cfg.p_object_in_drawer;
    if (want_in_drawer && s.drawer_open >= p.open_min_enter) {
        s.object_xy = {rng.uniform(p.drawer_x0 + 0.02, p.drawer_x1 - 0.02),
                       rng.uniform(p.drawer_y0 + 0.02, p.drawer_y1 - 0.02)};
    } else {
        int attempts = 0;
        for (;;) {
            if (++attempts > cfg.max_place_attempts)
                throw ConfigError("reset: cannot place object under the given exclusions");
            XY c{rng.uniform(0.04, 0.96), rng.uniform(0.04, 0.72)};
            if (dist(c, s.obstacle_xy) < cfg.min_separation) continue;
            s.object_xy = c;
            break;
        }
    }

    // robot, clear of the obstacle so the first step cannot shove it
    {
        int attempts = 0;
        for (;;) {
            if (++attempts > cfg.max_place_attempts)
                throw ConfigError("reset: cannot place robot under the given exclusions");
            XY c{rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.55)};
            if (dist(c, s.obstacle_xy) < p.r_push * 1.5) continue;
            s.robot_xy = c;
            break;
        }
    }

    s.gripper = 0.0;
    s.object_held = false;
    return s;
}

EnvState step(const EnvState& s, const Action& a, const EnvParams& p) {
    const double tol = 1e-12;
    if (std::abs(a.delta_xy[0]) > p.a_max + tol || std::abs(a.delta_xy[1]) > p.a_max + tol)
        throw std::invalid_argument("step: delta_xy exceeds a_max");
    if (std::abs(a.grip_cmd) > 1.0 + tol) throw std::invalid_argument("step: grip_cmd outside [-1,1]");

    EnvState n = s;
    n.gripper = a.grip_cmd >= 0.0 ? 1.0 : 0.0;
    bool held = s.object_held && a.grip_cmd >= 0.0;

    double px = clamp01(s.robot_xy[0] + a.delta_xy[0]);
    double py = clamp01(s.robot_xy[1] + a.delta_xy[1]);

    // closed drawer: interior is solid for the robot
    if (s.drawer_open < p.open_min_enter && p.in_interior(px, py) &&
        !p.in_interior(s.robot_xy[0], s.robot_xy[1])) {
        px = s.robot_xy[0];
        py = s.robot_xy[1];
    }

    // drawer handle, judged at the pre-move pose; the handle then follows the pull
    bool handle_engaged = false;
    if (n.gripper == 1.0 && !held) {
        XY handle{p.handle_x, p.handle_y(s.drawer_open)};
        if (dist(s.robot_xy, handle) < p.r_handle) {
            handle_engaged = true;
            double pulled = -(py - s.robot_xy[1]) / p.pull_range;
            double new_open = clamp01(s.drawer_open + pulled);
            bool blocked = p.in_path(s.obstacle_xy[0], s.obstacle_xy[1]);
            if (blocked && new_open > s.drawer_open) new_open = s.drawer_open;
            n.drawer_open = new_open;
        }
    }

    n.robot_xy = {px, py};

    if (held) {
        n.object_held = true;
        n.object_xy = n.robot_xy;
    } else {
        n.object_held = false;
        n.object_xy = s.object_xy;
        if (n.gripper == 1.0 && !handle_engaged && dist(n.robot_xy, s.object_xy) < p.r_grasp) {
            n.object_held = true;
            n.object_xy = n.robot_xy;
        }
    }

    // a moving robot shoves the obstacle out of its contact radius
    bool moved = n.robot_xy != s.robot_xy;
    n.obstacle_xy = s.obstacle_xy;
    if (moved) {
        double d = dist(n.robot_xy, s.obstacle_xy);
        if (d < p.r_push) {
            XY dir;
            if (d > 1e-12) {
                dir = {(s.obstacle_xy[0] - n.robot_xy[0]) / d, (s.obstacle_xy[1] - n.robot_xy[1]) / d};
            } else {
                double dn = std::hypot(a.delta_xy[0], a.delta_xy[1]);
                dir = dn > 1e-12 ? XY{a.delta_xy[0] / dn, a.delta_xy[1] / dn} : XY{1.0, 0.0};
            }
            n.obstacle_xy = {clamp01(s.obstacle_xy[0] + dir[0] * (p.r_push - d)),
                             clamp01(s.obstacle_xy[1] + dir[1] * (p.r_push - d))};
        }
    }

    return n;
}

TaskId parse_task_id(const std::string& s) {
    if (s == "A" || s == "a") return TaskId::A;
    if (s == "B" || s == "b") return TaskId::B;
    if (s == "C" || s == "c") return TaskId::C;
    throw std::invalid_argument("unknown task '" + s + "' (expected A, B or C)");
}

RandomizationConfig task_reset_config(TaskId id) {
    RandomizationConfig cfg;
    switch (id) {
        case TaskId::A:
            cfg.p_block = 1.0;
            cfg.p_drawer_open = 0.0;
            cfg.p_drawer_half = 0.0;
            cfg.p_object_in_drawer = 0.0;
            break;
        case TaskId::B:
            cfg.p_block = 0.0;
            cfg.p_drawer_open = 0.0;
            cfg.p_drawer_half = 0.0;
            cfg.p_object_in_drawer = 0.0;
            break;
        case TaskId::C:
            cfg.p_block = 0.0;
            cfg.p_drawer_open = 1.0;
            cfg.p_drawer_half = 0.0;
            cfg.p_object_in_drawer = 1.0;
            break;
    }
    return cfg;
}

bool task_applicable(TaskId id, const EnvState& s0, const EnvParams& p) {
    bool blocked = p.in_path(s0.obstacle_xy[0], s0.obstacle_xy[1]);
    bool object_in_drawer = p.in_interior(s0.object_xy[0], s0.object_xy[1]);
    switch (id) {
        case TaskId::A:
            return blocked && s0.drawer_open <= 0.1;
        case TaskId::B:
            return !blocked && s0.drawer_open <= 0.1 && !object_in_drawer;
        case TaskId::C:
            return object_in_drawer && s0.drawer_open >= p.open_min_enter;
    }
    return false;
}

TaskSpec make_task(TaskId id, const EnvState& s0, const EnvParams& p) {
    TaskSpec task;
    task.reset_config = task_reset_config(id);
    EnvState g = s0;
    g.object_held = false;
    switch (id) {
        case TaskId::A: {
            task.name = "A";
            // clear spot beside the path, on the side the obstacle already leans to
            double side = s0.obstacle_xy[0] <= 0.5 ? p.path_x0 - 0.14 : p.path_x1 + 0.14;
            g.obstacle_xy = {side, 0.70};
            g.drawer_open = 1.0;
            g.robot_xy = {p.handle_x, p.handle_y(1.0)};
            g.gripper = 1.0;
            break;
        }
        case TaskId::B: {
            task.name = "B";
            g.drawer_open = 1.0;
            g.object_xy = {0.5 * (p.drawer_x0 + p.drawer_x1), 0.5 * (p.drawer_y0 + p.drawer_y1)};
            g.robot_xy = g.object_xy;
            g.gripper = 0.0;
            break;
        }
        case TaskId::C: {
            task.name = "C";
            g.object_xy = {0.30, 0.35};
            g.drawer_open = 0.0;
            g.robot_xy = {p.handle_x, p.handle_y(0.0)};
            g.gripper = 1.0;
            break;
        }
    }
    task.goal = g;
    return task;
}

bool success(const EnvState& s_final, const TaskSpec& task) {
    if (std::abs(s_final.drawer_open - task.goal.drawer_open) > task.tol_drawer) return false;
    if (dist(s_final.obstacle_xy, task.goal.obstacle_xy) > task.tol_obstacle) return false;
    if (dist(s_final.object_xy, task.goal.object_xy) > task.tol_object) return false;
    return true;
}

std::string primitive_tag(Primitive p) {
    switch (p) {
        case Primitive::GoTo: return "go-to";
        case Primitive::GraspPlace: return "grasp-place";
        case Primitive::SlideObstacle: return "slide-obstacle";
        case Primitive::OpenDrawer: return "open-drawer";
        case Primitive::CloseDrawer: return "close-drawer";
    }
    return "?";
}

namespace {

// Scripted controllers share this little stepper. Primitives command at most
// kSpeed so recorded actions stay strictly inside the policy's tanh range.
struct Script {
    EnvState s;
    const EnvParams& p;
    Trajectory traj;
    int budget;
    double pace = 1.0;  // per-run speed scale, varies demonstration tempo

    static constexpr double kSpeedFrac = 0.98;
    static constexpr double kGrip = 0.9;

    Script(const EnvState& s0, const EnvParams& params, int step_budget)
        : s(s0), p(params), budget(step_budget) {
        traj.states.push_back(s0);
    }

    double speed() const { return p.a_max * kSpeedFrac * pace; }
    bool exhausted() const { return static_cast<int>(traj.actions.size()) >= budget; }

    void apply(Action a) {
        s = step(s, a, p);
        traj.actions.push_back(a);
        traj.states.push_back(s);
    }

    // One step toward target; magnitude-preserving wobble for data variety.
    void move_toward(const XY& target, double grip, Rng& rng, double wobble = 0.0,
                     double max_step = -1.0) {
        XY d{target[0] - s.robot_xy[0], target[1] - s.robot_xy[1]};
        double len = std::hypot(d[0], d[1]);
        double cap = max_step > 0 ? std::min(max_step, speed()) : speed();
        if (len > cap) {
            d = {d[0] * cap / len, d[1] * cap / len};
        }
        if (wobble > 0.0 && len > 1e-9) d = rotate(d, rng.normal() * wobble);
        double lim = p.a_max * kSpeedFrac;
        d[0] = std::clamp(d[0], -lim, lim);
        d[1] = std::clamp(d[1], -lim, lim);
        apply({{d[0], d[1]}, grip});
    }

    bool goto_xy(const XY& target, double grip, Rng& rng, double tol, double wobble) {
        while (!exhausted()) {
            if (dist(s.robot_xy, target) <= tol) return true;
            move_toward(target, grip, rng, wobble);
        }
        return false;
    }

    void settle(int steps, double grip) {
        for (int i = 0; i < steps && !exhausted(); ++i) apply({{0.0, 0.0}, grip});
    }
};

std::optional<XY> sample_goto_target(const EnvState& s0, Rng& rng, const EnvParams& p) {
    for (int i = 0; i < 100; ++i) {
        XY c{rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.75)};
        if (p.in_interior(c[0], c[1]) && s0.drawer_open < p.open_min_enter) continue;
        if (dist(c, s0.robot_xy) < 0.45) continue;
        return c;
    }
    return std::nullopt;
}

// Optional detour waypoint perpendicular to the straight path; gives the
// dataset longer, more varied routes.
std::optional<XY> detour_waypoint(const XY& from, const XY& to, Rng& rng) {
    if (rng.uniform() < 0.25) return std::nullopt;
    XY mid{0.5 * (from[0] + to[0]), 0.5 * (from[1] + to[1])};
    XY d{to[0] - from[0], to[1] - from[1]};
    double len = std::hypot(d[0], d[1]);
    if (len < 1e-9) return std::nullopt;
    double side = rng.uniform() < 0.5 ? 1.0 : -1.0;
    double amp = rng.uniform(0.10, 0.28) * side;
    XY w{mid[0] - d[1] / len * amp, mid[1] + d[0] / len * amp};
    w[0] = std::clamp(w[0], 0.04, 0.96);
    w[1] = std::clamp(w[1], 0.04, 0.78);
    return w;
}

bool script_go_to(Script& sc, Rng& rng) {
    auto target = sample_goto_target(sc.s, rng, sc.p);
    if (!target) return false;
    if (auto w = detour_waypoint(sc.s.robot_xy, *target, rng))
        if (!sc.goto_xy(*w, -Script::kGrip, rng, 0.03, 0.15)) return false;
    if (!sc.goto_xy(*target, -Script::kGrip, rng, 0.012, 0.15)) return false;
    sc.settle(2, -Script::kGrip);
    return true;
}

bool script_grasp_place(Script& sc, Rng& rng) {
    const EnvParams& p = sc.p;
    const EnvState s0 = sc.s;
    bool object_in_drawer = p.in_interior(s0.object_xy[0], s0.object_xy[1]);
    if (object_in_drawer && s0.drawer_open < p.open_min_enter) return false;
    if (s0.object_held) return false;

    XY place{};
    bool found = false;
    bool try_drawer = sc.s.drawer_open >= p.open_min_enter && rng.uniform() < 0.3;
    for (int i = 0; i < 100 && !found; ++i) {
        XY c = try_drawer ? XY{rng.uniform(p.drawer_x0 + 0.02, p.drawer_x1 - 0.02),
                               rng.uniform(p.drawer_y0 + 0.02, p.drawer_y1 - 0.02)}
                          : XY{rng.uniform(0.05, 0.95), rng.uniform(0.05, 0.72)};
        if (dist(c, s0.obstacle_xy) < 0.08) continue;
        if (dist(c, s0.object_xy) < (try_drawer ? 0.15 : 0.30)) continue;
        place = c;
        found = true;
    }
    if (!found) return false;

    if (auto w = detour_waypoint(sc.s.robot_xy, sc.s.object_xy, rng))
        if (!sc.goto_xy(*w, -Script::kGrip, rng, 0.03, 0.12)) return false;
    if (!sc.goto_xy(sc.s.object_xy, -Script::kGrip, rng, p.r_grasp * 0.6, 0.10)) return false;
    sc.apply({{0.0, 0.0}, Script::kGrip});
    if (!sc.s.object_held) return false;
    if (!sc.goto_xy(place, Script::kGrip, rng, 0.012, 0.08)) return false;
    sc.apply({{0.0, 0.0}, -Script::kGrip});
    sc.settle(2, -Script::kGrip);
    return !sc.s.object_held && dist(sc.s.object_xy, place) <= 0.02;
}

bool script_slide_obstacle(Script& sc, Rng& rng) {
    const EnvParams& p = sc.p;
    const EnvState s0 = sc.s;
    const double margin = p.r_push + 0.03;

    XY target{};
    bool found = false;
    for (int i = 0; i < 100 && !found; ++i) {
        XY c{rng.uniform(margin, 1.0 - margin), rng.uniform(margin, 0.72)};
        if (p.in_interior(c[0], c[1])) continue;
        if (dist(c, s0.obstacle_xy) < 0.25) continue;
        target = c;
        found = true;
    }
    if (!found) return false;

    while (!sc.exhausted()) {
        const XY& obs = sc.s.obstacle_xy;
        double remaining = dist(obs, target);
        if (remaining <= 0.02) {
            sc.settle(2, -Script::kGrip);
            return true;
        }
        XY dir{(target[0] - obs[0]) / remaining, (target[1] - obs[1]) / remaining};
        XY behind{obs[0] - dir[0] * p.r_push * 1.05, obs[1] - dir[1] * p.r_push * 1.05};
        if (dist(sc.s.robot_xy, behind) > sc.speed() * 0.6) {
            // reposition; orbit sideways when heading straight through the obstacle
            XY to_behind{behind[0] - sc.s.robot_xy[0], behind[1] - sc.s.robot_xy[1]};
            double tb = std::hypot(to_behind[0], to_behind[1]);
            XY to_obs{obs[0] - sc.s.robot_xy[0], obs[1] - sc.s.robot_xy[1]};
            double to_obs_d = std::hypot(to_obs[0], to_obs[1]);
            bool heading_in = tb > 1e-9 && to_obs_d > 1e-9 &&
                              (to_behind[0] * to_obs[0] + to_behind[1] * to_obs[1]) / (tb * to_obs_d) > 0.3 &&
                              to_obs_d < p.r_push * 2.0;
            if (heading_in) {
                XY perp{-to_obs[1] / to_obs_d, to_obs[0] / to_obs_d};
                double side = (perp[0] * to_behind[0] + perp[1] * to_behind[1]) >= 0 ? 1.0 : -1.0;
                XY orbit{obs[0] + perp[0] * side * p.r_push * 1.8, obs[1] + perp[1] * side * p.r_push * 1.8};
                sc.move_toward(orbit, -Script::kGrip, rng, 0.0);
            } else {
                sc.move_toward(behind, -Script::kGrip, rng, 0.08);
            }
        } else {
            // push through the contact point; ease off near the goal
            double push_step = std::min(sc.speed(), std::max(0.012, remaining * 0.9));
            sc.move_toward(obs, -Script::kGrip, rng, 0.0, push_step);
        }
    }
    return false;
}

bool script_drawer(Script& sc, Rng& rng, bool open) {
    const EnvParams& p = sc.p;
    const EnvState s0 = sc.s;
    if (s0.object_held) return false;
    bool blocked = p.in_path(s0.obstacle_xy[0], s0.obstacle_xy[1]);
    if (open && blocked) return false;

    double target_open = open ? rng.uniform(0.85, 1.0) : rng.uniform(0.0, 0.05);
    if (open && target_open - s0.drawer_open < 0.25) return false;
    if (!open && s0.drawer_open - target_open < 0.25) return false;

    XY handle{p.handle_x, p.handle_y(sc.s.drawer_open)};
    if (auto w = detour_waypoint(sc.s.robot_xy, handle, rng))
        if (!sc.goto_xy(*w, -Script::kGrip, rng, 0.03, 0.12)) return false;
    if (!sc.goto_xy(handle, -Script::kGrip, rng, p.r_handle * 0.5, 0.10)) return false;

    const double pull_speed = sc.speed() * rng.uniform(0.45, 0.75);
    while (!sc.exhausted()) {
        double err = target_open - sc.s.drawer_open;
        if (std::abs(err) <= 0.03) break;
        double hy = p.handle_y(sc.s.drawer_open);
        double dy_needed = -err * p.pull_range;  // negative pull opens
        double dy = std::clamp(dy_needed, -pull_speed, pull_speed);
        double dx = std::clamp(p.handle_x - sc.s.robot_xy[0], -0.01, 0.01);
        // stay on the handle while pulling
        double off = hy - sc.s.robot_xy[1];
        dy = std::clamp(dy + 0.25 * off, -sc.speed(), sc.speed());
        sc.apply({{dx, dy}, Script::kGrip});
    }
    if (std::abs(target_open - sc.s.drawer_open) > 0.03) return false;
    sc.apply({{0.0, 0.0}, -Script::kGrip});
    sc.settle(2, -Script::kGrip);
    return true;
}

}  // namespace

std::optional<Trajectory> run_primitive(const EnvState& s0, Primitive prim, Rng rng,
                                        const EnvParams& params, const PrimitiveConfig& cfg) {
    Script sc(s0, params, cfg.step_budget);
    sc.pace = rng.uniform(0.55, 1.0);
    bool ok = false;
    switch (prim) {
        case Primitive::GoTo: ok = script_go_to(sc, rng); break;
        case Primitive::GraspPlace: ok = script_grasp_place(sc, rng); break;
        case Primitive::SlideObstacle: ok = script_slide_obstacle(sc, rng); break;
        case Primitive::OpenDrawer: ok = script_drawer(sc, rng, true); break;
        case Primitive::CloseDrawer: ok = script_drawer(sc, rng, false); break;
    }
    if (!ok) return std::nullopt;
    if (sc.traj.length() < cfg.min_len || sc.traj.length() > cfg.max_len) return std::nullopt;
    sc.traj.primitive_tag = primitive_tag(prim);
    return sc.traj;
}

std::vector<Trajectory> generate_offline_dataset(int n_traj, std::uint64_t seed,
                                                 const std::vector<Primitive>& primitives,
                                                 const DatasetConfig& cfg, const EnvParams& params) {
    if (primitives.empty()) throw std::invalid_argument("generate_offline_dataset: no primitives");
    if (n_traj < 0) throw std::invalid_argument("generate_offline_dataset: n_traj must be >= 0");

    Rng root(seed);
    Rng env_root = root.stream("env");
    Rng prim_root = root.stream("prim");

    std::vector<Trajectory> dataset;
    dataset.reserve(static_cast<std::size_t>(n_traj));

    const int n_blocks = (n_traj + cfg.block_size - 1) / cfg.block_size;
    for (int b = 0; b < n_blocks; ++b) {
        int lo = b * cfg.block_size;
        int hi = std::min(n_traj, lo + cfg.block_size);

        bool block_done = false;
        for (int env_attempt = 0; env_attempt <= cfg.env_retry_cap && !block_done; ++env_attempt) {
            std::uint64_t env_seed =
                env_root.stream(static_cast<std::uint64_t>(b)).stream(static_cast<std::uint64_t>(env_attempt)).seed();
            EnvState s0;
            try {
                s0 = reset(env_seed, cfg.randomization, params);
            } catch (const ConfigError&) {
                throw;  // invalid randomization config: no retry will help
            }

            std::vector<Trajectory> block;
            bool block_ok = true;
            for (int g = lo; g < hi && block_ok; ++g) {
                Primitive prim = primitives[static_cast<std::size_t>(g) % primitives.size()];
                bool got = false;
                for (int attempt = 0; attempt <= cfg.retry_cap && !got; ++attempt) {
                    Rng prim_rng = prim_root.stream(static_cast<std::uint64_t>(g))
                                       .stream(static_cast<std::uint64_t>(env_attempt))
                                       .stream(static_cast<std::uint64_t>(attempt));
                    auto traj = run_primitive(s0, prim, prim_rng, params, cfg.primitive);
                    if (traj) {
                        traj->seed = env_seed;
                        block.push_back(std::move(*traj));
                        got = true;
                    }
                }
                block_ok = got;
            }
            if (block_ok) {
                for (auto& t : block) dataset.push_back(std::move(t));
                block_done = true;
            }
        }
        if (!block_done)
            throw ConfigError("generate_offline_dataset: block " + std::to_string(b) +
                              " failed after retries; randomization too hostile to the primitives");
    }
    return dataset;
}

bool replays_exactly(const Trajectory& traj, const EnvParams& params) {
    if (traj.states.size() != traj.actions.size() + 1) return false;
    EnvState s = traj.states[0];
    for (std::size_t t = 0; t < traj.actions.size(); ++t) {
        s = step(s, traj.actions[t], params);
        if (!(s == traj.states[t + 1])) return false;
    }
    return true;
}

void save_trajectories(const std::vector<Trajectory>& trajs, const std::string& path) {
    std::vector<std::string> lines;
    lines.reserve(trajs.size());
    for (const auto& t : trajs) {
        nlohmann::json j;
        auto& states = j["states"] = nlohmann::json::array();
        for (const auto& s : t.states) {
            Vec f = s.flatten();
            states.push_back(std::vector<double>(f.data(), f.data() + f.size()));
        }
        auto& actions = j["actions"] = nlohmann::json::array();
        for (const auto& a : t.actions)
            actions.push_back(std::vector<double>{a.delta_xy[0], a.delta_xy[1], a.grip_cmd});
        j["primitive_tag"] = t.primitive_tag;
        j["seed"] = t.seed;
        lines.push_back(j.dump());
    }
    io::write_lines(path, lines);
}

std::vector<Trajectory> load_trajectories(const std::string& path) {
    std::vector<Trajectory> trajs;
    for (const auto& line : io::read_lines(path)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        Trajectory t;
        for (const auto& sv : j.at("states")) {
            Vec f(EnvState::kFlatDim);
            if (sv.size() != EnvState::kFlatDim) throw IoError("trajectory state is not 8-dim");
            for (int i = 0; i < EnvState::kFlatDim; ++i) f(i) = sv[static_cast<std::size_t>(i)];
            t.states.push_back(EnvState::unflatten(f));
        }
        for (const auto& av : j.at("actions")) {
            if (av.size() != 3) throw IoError("trajectory action is not 3-dim");
            t.actions.push_back(Action{{av[0], av[1]}, av[2]});
        }
        t.primitive_tag = j.at("primitive_tag").get<std::string>();
        t.seed = j.at("seed").get<std::uint64_t>();
        if (t.states.size() != t.actions.size() + 1) throw IoError("trajectory length mismatch");
        trajs.push_back(std::move(t));
    }
    return trajs;
}

}  // namespace envsim
}  // namespace goalplan
