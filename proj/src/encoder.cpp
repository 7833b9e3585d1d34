#include "goalplan/encoder.hpp"

#include <cmath>

#include "goalplan/io.hpp"
#include "json.hpp"

namespace goalplan {
namespace encoder {

void NormalizerStats::save(const std::string& path) const {
    nlohmann::json j;
    j["d_h"] = d_h;
    j["mean"] = std::vector<double>(mean.data(), mean.data() + mean.size());
    j["scale"] = std::vector<double>(scale.data(), scale.data() + scale.size());
    io::write_text(path, j.dump(2) + "\n");
}

NormalizerStats NormalizerStats::load(const std::string& path) {
    nlohmann::json j = nlohmann::json::parse(io::read_text(path));
    NormalizerStats st;
    st.d_h = j.at("d_h").get<int>();
    auto mean = j.at("mean").get<std::vector<double>>();
    auto scale = j.at("scale").get<std::vector<double>>();
    if (static_cast<int>(mean.size()) != st.d_h || static_cast<int>(scale.size()) != st.d_h)
        throw IoError("normalizer stats: inconsistent dimensions in " + path);
    st.mean = Eigen::Map<const Vec>(mean.data(), st.d_h);
    st.scale = Eigen::Map<const Vec>(scale.data(), st.d_h);
    st.fitted = true;
    return st;
}

NormalizerStats fit_normalizer(const std::vector<envsim::Trajectory>& dataset, double scale_floor) {
    constexpr int d = envsim::EnvState::kFlatDim;
    long count = 0;
    Vec sum = Vec::Zero(d);
    Vec sum_sq = Vec::Zero(d);
    for (const auto& traj : dataset) {
        for (const auto& s : traj.states) {
            Vec f = s.flatten();
            sum += f;
            sum_sq += f.cwiseProduct(f);
            ++count;
        }
    }
    if (count == 0) throw ConfigError("fit_normalizer: empty dataset");

    NormalizerStats st;
    st.d_h = d;
    st.mean = sum / static_cast<double>(count);
    Vec var = sum_sq / static_cast<double>(count) - st.mean.cwiseProduct(st.mean);
    st.scale = var.cwiseMax(0.0).cwiseSqrt().cwiseMax(scale_floor);
    st.fitted = true;
    return st;
}

Vec encode_flat(const NormalizerStats& stats, const Vec& flat) {
    if (!stats.fitted) throw StateError("encoder: stats not fitted");
    if (flat.size() != stats.d_h) throw std::invalid_argument("encoder: dimension mismatch");
    return (flat - stats.mean).cwiseQuotient(stats.scale);
}

Vec encode(const NormalizerStats& stats, const envsim::EnvState& s) {
    return encode_flat(stats, s.flatten());
}

Vec decode_flat(const NormalizerStats& stats, const Vec& h) {
    if (!stats.fitted) throw StateError("encoder: stats not fitted");
    if (h.size() != stats.d_h) throw std::invalid_argument("encoder: dimension mismatch");
    return h.cwiseProduct(stats.scale) + stats.mean;
}

double reward(const Vec& h_next, const Vec& h_goal, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("reward: eps must be positive");
    return (h_next - h_goal).norm() < eps ? 0.0 : -1.0;
}

}  // namespace encoder
}  // namespace goalplan
