#include <cmath>
#include <filesystem>
#include <map>

#include "doctest.h"
#include "goalplan/envsim.hpp"

using namespace goalplan;
using namespace goalplan::envsim;

namespace {

double dist2(const std::array<double, 2>& a, const std::array<double, 2>& b) {
    return std::hypot(a[0] - b[0], a[1] - b[1]);
}

std::vector<Primitive> all_prims() {
    return {kAllPrimitives.begin(), kAllPrimitives.end()};
}

}  // namespace

TEST_CASE("flatten is 8-dim and unflatten inverts it on reachable states") {
    EnvState s = reset(77, {});
    CHECK(s.flatten().size() == 8);
    // push a rollout through grasping to cover held states
    Rng rng(1);
    auto traj = run_primitive(s, Primitive::GraspPlace, rng);
    REQUIRE(traj.has_value());
    for (const auto& state : traj->states) {
        EnvState back = EnvState::unflatten(state.flatten());
        CHECK(back == state);
    }
}

TEST_CASE("reset is deterministic in (seed, config)") {
    RandomizationConfig cfg;
    CHECK(reset(0, cfg) == reset(0, cfg));
    CHECK_FALSE(reset(0, cfg) == reset(1, cfg));
}

TEST_CASE("p_block=1 forces the obstacle into the drawer path") {
    RandomizationConfig cfg;
    cfg.p_block = 1.0;
    EnvParams p;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        EnvState s = reset(seed, cfg, p);
        CHECK(p.in_path(s.obstacle_xy[0], s.obstacle_xy[1]));
        CHECK(s.drawer_open < 0.1);
    }
}

TEST_CASE("empirical block fraction tracks p_block over 1000 resets") {
    RandomizationConfig cfg;
    cfg.p_block = 0.25;
    EnvParams p;
    int blocked = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        EnvState s = reset(seed, cfg, p);
        blocked += p.in_path(s.obstacle_xy[0], s.obstacle_xy[1]) ? 1 : 0;
    }
    double frac = blocked / 1000.0;
    CHECK(frac >= 0.20);
    CHECK(frac <= 0.30);
}

TEST_CASE("hostile randomization raises a configuration error") {
    RandomizationConfig cfg;
    cfg.min_separation = 3.0;  // no placement can satisfy this
    cfg.max_place_attempts = 50;
    CHECK_THROWS_AS(reset(0, cfg), ConfigError);
}

TEST_CASE("zero displacement with open grip only opens the gripper") {
    EnvState s = reset(5, {});
    s.gripper = 1.0;
    EnvState n = step(s, {{0.0, 0.0}, -1.0});
    EnvState expect = s;
    expect.gripper = 0.0;
    CHECK(n == expect);
}

TEST_CASE("a blocked drawer cannot open") {
    EnvParams p;
    EnvState s;
    s.drawer_open = 0.0;
    s.obstacle_xy = {0.5, 0.7};  // inside the path
    s.robot_xy = {p.handle_x, p.handle_y(0.0)};
    s.object_xy = {0.9, 0.1};
    EnvState n = step(s, {{0.0, -0.05}, 1.0}, p);
    CHECK(n.drawer_open == 0.0);

    // same pull with the path clear opens it
    s.obstacle_xy = {0.1, 0.1};
    n = step(s, {{0.0, -0.05}, 1.0}, p);
    CHECK(n.drawer_open > 0.0);
}

TEST_CASE("blocking property: no single action increases drawer_open") {
    EnvParams p;
    Rng rng(42);
    for (int i = 0; i < 500; ++i) {
        EnvState s;
        s.robot_xy = {rng.uniform(0, 1), rng.uniform(0, 1)};
        s.drawer_open = rng.uniform(0, 1);
        s.obstacle_xy = {rng.uniform(p.path_x0, p.path_x1), rng.uniform(p.path_y0, p.path_y1)};
        s.object_xy = {rng.uniform(0, 1), rng.uniform(0, 0.7)};
        Action a{{rng.uniform(-p.a_max, p.a_max), rng.uniform(-p.a_max, p.a_max)},
                 rng.uniform(-1, 1)};
        EnvState n = step(s, a, p);
        CHECK(n.drawer_open <= s.drawer_open + 1e-15);
    }
}

TEST_CASE("grasp then move carries the object with the robot") {
    EnvState s = reset(9, {});
    s.robot_xy = s.object_xy;  // place the robot on the object
    EnvState g = step(s, {{0.0, 0.0}, 1.0});
    CHECK(g.object_held);
    CHECK(g.object_xy == g.robot_xy);
    EnvState m = step(g, {{0.04, 0.0}, 1.0});
    CHECK(m.object_held);
    CHECK(m.object_xy[0] == doctest::Approx(g.object_xy[0] + 0.04));
    CHECK(m.object_xy == m.robot_xy);
    // replay the two steps to confirm the displacement is pure dynamics
    EnvState r = step(step(s, {{0.0, 0.0}, 1.0}), {{0.04, 0.0}, 1.0});
    CHECK(r == m);
}

TEST_CASE("grasp conservation: release only on open command") {
    Rng rng(2);
    EnvState s = reset(21, {});
    s.robot_xy = s.object_xy;
    s = step(s, {{0.0, 0.0}, 0.5});
    REQUIRE(s.object_held);
    for (int i = 0; i < 30; ++i) {
        Action a{{rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)}, rng.uniform(0.0, 1.0)};
        s = step(s, a);
        CHECK(s.object_held);
        CHECK(dist2(s.object_xy, s.robot_xy) == 0.0);
    }
    s = step(s, {{0.0, 0.0}, -0.2});
    CHECK_FALSE(s.object_held);
}

TEST_CASE("out-of-bounds actions are rejected, not clipped") {
    EnvState s = reset(1, {});
    CHECK_THROWS_AS(step(s, {{0.06, 0.0}, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(step(s, {{0.0, -0.06}, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(step(s, {{0.0, 0.0}, 1.5}), std::invalid_argument);
}

TEST_CASE("success ignores the robot pose") {
    EnvState s0 = reset(33, task_reset_config(TaskId::A));
    TaskSpec task = make_task(TaskId::A, s0);
    EnvState done = task.goal;
    CHECK(success(done, task));
    done.robot_xy = {0.1, 0.1};
    done.gripper = 0.0;
    CHECK(success(done, task));
    EnvState off = task.goal;
    off.obstacle_xy[0] += 2.0 * task.tol_obstacle;
    CHECK_FALSE(success(off, task));
}

TEST_CASE("closed drawer interior is solid for the robot") {
    EnvParams p;
    EnvState s;
    s.drawer_open = 0.0;
    s.robot_xy = {0.5, 0.81};
    s.obstacle_xy = {0.1, 0.1};
    s.object_xy = {0.9, 0.1};
    EnvState n = step(s, {{0.0, 0.03}, -1.0}, p);
    CHECK(n.robot_xy == s.robot_xy);  // entry blocked
    s.drawer_open = 1.0;
    n = step(s, {{0.0, 0.03}, -1.0}, p);
    CHECK(n.robot_xy[1] == doctest::Approx(0.84));
}

TEST_CASE("pushing translates the obstacle out of the contact radius") {
    EnvParams p;
    EnvState s;
    s.robot_xy = {0.30, 0.30};
    s.obstacle_xy = {0.36, 0.30};
    s.object_xy = {0.9, 0.1};
    EnvState n = step(s, {{0.04, 0.0}, -1.0}, p);
    CHECK(dist2(n.robot_xy, n.obstacle_xy) >= p.r_push - 1e-12);
    CHECK(n.obstacle_xy[0] > s.obstacle_xy[0]);
}

TEST_CASE("blocks of 4 share one initial randomization") {
    auto ds = generate_offline_dataset(8, 0, all_prims());
    REQUIRE(ds.size() == 8);
    for (int b = 0; b < 2; ++b)
        for (int i = 1; i < 4; ++i) CHECK(ds[4 * b + i].states[0] == ds[4 * b].states[0]);
}

TEST_CASE("every generated trajectory replays exactly") {
    auto ds = generate_offline_dataset(40, 7, all_prims());
    for (const auto& t : ds) {
        CHECK(t.states.size() == t.actions.size() + 1);
        CHECK(replays_exactly(t));
    }
}

TEST_CASE("primitive tags are uniform under round-robin assignment") {
    auto ds = generate_offline_dataset(100, 3, all_prims());
    std::map<std::string, int> counts;
    for (const auto& t : ds) counts[t.primitive_tag]++;
    for (const auto& [tag, n] : counts) CHECK(n == 20);
}

TEST_CASE("trajectory lengths stay inside the configured window") {
    DatasetConfig cfg;
    auto ds = generate_offline_dataset(60, 11, all_prims(), cfg);
    for (const auto& t : ds) {
        CHECK(t.length() >= cfg.primitive.min_len);
        CHECK(t.length() <= cfg.primitive.max_len);
    }
}

TEST_CASE("dataset purity: no demonstration solves an applicable target task") {
    auto ds = generate_offline_dataset(200, 19, all_prims());
    for (const auto& t : ds) {
        for (TaskId id : {TaskId::A, TaskId::B, TaskId::C}) {
            if (!task_applicable(id, t.states.front())) continue;
            TaskSpec task = make_task(id, t.states.front());
            CHECK_FALSE(success(t.states.back(), task));
        }
    }
}

TEST_CASE("jsonl roundtrip preserves exact replay, gz included") {
    auto ds = generate_offline_dataset(12, 5, all_prims());
    for (const char* name : {"gp_env_test.jsonl", "gp_env_test.jsonl.gz"}) {
        std::string path = (std::filesystem::temp_directory_path() / name).string();
        save_trajectories(ds, path);
        auto back = load_trajectories(path);
        REQUIRE(back.size() == ds.size());
        for (std::size_t i = 0; i < ds.size(); ++i) {
            CHECK(back[i].primitive_tag == ds[i].primitive_tag);
            CHECK(back[i].seed == ds[i].seed);
            CHECK(back[i].states.size() == ds[i].states.size());
            CHECK(replays_exactly(back[i]));
            CHECK(back[i].states.back() == ds[i].states.back());
        }
        std::filesystem::remove(path);
    }
}

TEST_CASE("task resets match their applicability predicates") {
    for (TaskId id : {TaskId::A, TaskId::B, TaskId::C}) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            EnvState s0 = reset(seed, task_reset_config(id));
            CHECK(task_applicable(id, s0));
        }
    }
}
