#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "goalplan/config.hpp"
#include "goalplan/cvae.hpp"
#include "goalplan/encoder.hpp"
#include "goalplan/envsim.hpp"
#include "goalplan/gcrl.hpp"
#include "goalplan/orchestrator.hpp"
#include "goalplan/planner.hpp"

namespace py = pybind11;
using namespace goalplan;

PYBIND11_MODULE(_core, m) {
    m.doc() = "goal-conditioned subgoal planning core";

    // ---- envsim
    py::class_<envsim::EnvParams>(m, "EnvParams").def(py::init<>());

    py::class_<envsim::EnvState>(m, "EnvState")
        .def(py::init<>())
        .def_readwrite("robot_xy", &envsim::EnvState::robot_xy)
        .def_readwrite("gripper", &envsim::EnvState::gripper)
        .def_readwrite("drawer_open", &envsim::EnvState::drawer_open)
        .def_readwrite("obstacle_xy", &envsim::EnvState::obstacle_xy)
        .def_readwrite("object_xy", &envsim::EnvState::object_xy)
        .def_readwrite("object_held", &envsim::EnvState::object_held)
        .def("flatten", &envsim::EnvState::flatten)
        .def_static("unflatten", &envsim::EnvState::unflatten)
        .def("__eq__", [](const envsim::EnvState& a, const envsim::EnvState& b) { return a == b; });

    py::class_<envsim::Action>(m, "Action")
        .def(py::init<>())
        .def(py::init([](double dx, double dy, double grip) {
                 return envsim::Action{{dx, dy}, grip};
             }),
             py::arg("dx"), py::arg("dy"), py::arg("grip"))
        .def_readwrite("delta_xy", &envsim::Action::delta_xy)
        .def_readwrite("grip_cmd", &envsim::Action::grip_cmd);

    py::class_<envsim::RandomizationConfig>(m, "RandomizationConfig")
        .def(py::init<>())
        .def_readwrite("p_block", &envsim::RandomizationConfig::p_block)
        .def_readwrite("p_object_in_drawer", &envsim::RandomizationConfig::p_object_in_drawer)
        .def_readwrite("p_drawer_open", &envsim::RandomizationConfig::p_drawer_open)
        .def_readwrite("p_drawer_half", &envsim::RandomizationConfig::p_drawer_half);

    py::class_<envsim::Trajectory>(m, "Trajectory")
        .def_readonly("states", &envsim::Trajectory::states)
        .def_readonly("actions", &envsim::Trajectory::actions)
        .def_readonly("primitive_tag", &envsim::Trajectory::primitive_tag)
        .def_readonly("seed", &envsim::Trajectory::seed)
        .def("__len__", [](const envsim::Trajectory& t) { return t.length(); });

    m.def("reset", &envsim::reset, py::arg("seed"), py::arg("config") = envsim::RandomizationConfig{},
          py::arg("params") = envsim::EnvParams{});
    m.def("step", &envsim::step, py::arg("state"), py::arg("action"),
          py::arg("params") = envsim::EnvParams{});
    m.def(
        "generate_offline_dataset",
        [](int n_traj, std::uint64_t seed) {
            std::vector<envsim::Primitive> prims(envsim::kAllPrimitives.begin(),
                                                 envsim::kAllPrimitives.end());
            return envsim::generate_offline_dataset(n_traj, seed, prims);
        },
        py::arg("n_traj"), py::arg("seed"));
    m.def("replays_exactly", &envsim::replays_exactly, py::arg("trajectory"),
          py::arg("params") = envsim::EnvParams{});
    m.def("save_trajectories", &envsim::save_trajectories);
    m.def("load_trajectories", &envsim::load_trajectories);

    // ---- encoder
    py::class_<encoder::NormalizerStats>(m, "NormalizerStats")
        .def_readonly("mean", &encoder::NormalizerStats::mean)
        .def_readonly("scale", &encoder::NormalizerStats::scale)
        .def_readonly("d_h", &encoder::NormalizerStats::d_h)
        .def("save", &encoder::NormalizerStats::save)
        .def_static("load", &encoder::NormalizerStats::load);
    m.def("fit_normalizer", &encoder::fit_normalizer, py::arg("dataset"),
          py::arg("scale_floor") = 1e-3);
    m.def("encode", &encoder::encode);
    m.def("encode_flat", &encoder::encode_flat);
    m.def("decode_flat", &encoder::decode_flat);
    m.def("reward", &encoder::reward, py::arg("h_next"), py::arg("h_goal"), py::arg("eps"));

    // ---- gcrl
    py::class_<gcrl::IqlConfig>(m, "IqlConfig").def(py::init<>());
    py::class_<gcrl::Agent>(m, "Agent")
        .def_static(
            "make",
            [](std::uint64_t seed) {
                Rng rng(seed);
                return gcrl::Agent::make(gcrl::IqlConfig{}, rng);
            },
            py::arg("seed"))
        .def("save", &gcrl::Agent::save)
        .def_static("load", &gcrl::Agent::load)
        .def("select_action",
             [](const gcrl::Agent& a, const Vec& h, const Vec& g, bool stochastic, std::uint64_t seed) {
                 Rng rng(seed);
                 return gcrl::select_action(a, h, g, stochastic, rng);
             },
             py::arg("h"), py::arg("h_goal"), py::arg("stochastic"), py::arg("seed"));
    m.def("expectile_loss", &gcrl::expectile_loss, py::arg("u"), py::arg("tau"));

    // ---- cvae
    py::class_<cvae::CvaeModel>(m, "CvaeModel")
        .def_static(
            "make",
            [](int level, int delta_t, std::uint64_t seed) {
                Rng rng(seed);
                return cvae::CvaeModel::make(level, delta_t, {128, 128}, rng);
            },
            py::arg("level"), py::arg("delta_t"), py::arg("seed"))
        .def_readonly("level_index", &cvae::CvaeModel::level_index)
        .def_readonly("delta_t", &cvae::CvaeModel::delta_t)
        .def("save", &cvae::CvaeModel::save)
        .def_static("load", &cvae::CvaeModel::load);
    m.def("generate_sequence", &cvae::generate_sequence, py::arg("model"), py::arg("h_start"),
          py::arg("z_seq"));
    m.def(
        "elbo_loss",
        [](const cvae::CvaeModel& model, const Vec& h_t, const Vec& h_tau, const Vec& noise) {
            auto parts = cvae::elbo_loss(model, cvae::TransitionPair{h_t, h_tau, model.delta_t}, noise);
            return py::make_tuple(parts.loss, parts.recon, parts.kl);
        },
        py::arg("model"), py::arg("h_t"), py::arg("h_tau"), py::arg("noise"));

    // ---- planner
    py::class_<planner::PlanConfig>(m, "PlanConfig")
        .def(py::init<>())
        .def_readwrite("L", &planner::PlanConfig::L)
        .def_readwrite("K", &planner::PlanConfig::K)
        .def_readwrite("M", &planner::PlanConfig::M)
        .def_readwrite("N", &planner::PlanConfig::N)
        .def_readwrite("mppi_iters", &planner::PlanConfig::mppi_iters)
        .def_readwrite("eta1", &planner::PlanConfig::eta1)
        .def_readwrite("eta2", &planner::PlanConfig::eta2);
    py::class_<planner::SubgoalPlan>(m, "SubgoalPlan")
        .def_readonly("flattened", &planner::SubgoalPlan::flattened)
        .def_readonly("top_cost", &planner::SubgoalPlan::top_cost)
        .def_property_readonly("K_total", &planner::SubgoalPlan::K_total);
    m.def("prior_logpdf", &planner::prior_logpdf, py::arg("z"));
    m.def(
        "plan",
        [](const Vec& h0, const Vec& hg, const std::vector<cvae::CvaeModel>& models,
           const gcrl::Agent& agent, const planner::PlanConfig& cfg, std::uint64_t seed,
           int delta_t_finest) {
            planner::LatentPlanBuffer buffers(cfg.L, cfg.buffer_capacity);
            Rng rng(seed);
            return planner::plan(h0, hg, models, agent, buffers, cfg, rng, delta_t_finest);
        },
        py::arg("h0"), py::arg("hg"), py::arg("models"), py::arg("agent"), py::arg("config"),
        py::arg("seed"), py::arg("delta_t_finest") = 5);
    m.def("plan_to_json", &planner::plan_to_json);

    // ---- errors
    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<StateError>(m, "StateError");
    py::register_exception<NumericError>(m, "NumericError");
    py::register_exception<PlanningError>(m, "PlanningError");
}
