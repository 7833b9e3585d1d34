#pragma once

#include <string>
#include <vector>

#include "goalplan/envsim.hpp"
#include "goalplan/gcrl.hpp"
#include "goalplan/orchestrator.hpp"
#include "goalplan/planner.hpp"

namespace goalplan {
namespace config {

struct CvaeSection {
    std::vector<int> delta_ts{5, 10, 20};
    int epochs = 50;
    int batch_size = 256;
    int chain_length = 3;
    double beta_kl = 1.0;
    std::vector<int> hidden{128, 128};
    double holdout_fraction = 0.1;
    double lr = 3e-4;
    int d_z = 8;
};

// Fully resolved run configuration. Defaults are desk scale; the
// paper_scale toggle swaps in the published large-scale values before
// explicit fields are applied on top.
struct Config {
    bool paper_scale = false;

    envsim::DatasetConfig dataset;
    int n_traj = 1000;
    double scale_floor = 1e-3;
    CvaeSection cvae;
    gcrl::IqlConfig rl;
    planner::PlanConfig plan;
    orchestrator::RunConfig run;
    std::string source_dir;

    void apply_paper_scale();

    // Strict parse: unknown keys anywhere are rejected.
    static Config from_json_text(const std::string& text, bool force_paper_scale = false);
    static Config load(const std::string& path, bool force_paper_scale = false);
    static Config defaults(bool paper_scale = false);

    std::string to_json_text() const;
};

}  // namespace config
}  // namespace goalplan
