#pragma once

#include <string>
#include <vector>

#include "goalplan/common.hpp"
#include "goalplan/rng.hpp"

namespace goalplan {

// Fully connected network: tanh on hidden layers, identity output.
// Forward/backward operate on row-major batches (one sample per row), so a
// single sample is a 1xN matrix. Weights are (in x out); y = x * W + b.
class Mlp {
  public:
    struct Cache {
        Mat input;                    // batch x in
        std::vector<Mat> hidden;      // post-tanh activations per hidden layer
        Mat output;                   // batch x out
    };

    struct Grads {
        std::vector<Mat> weights;
        std::vector<Vec> biases;
        Mat input;  // dL/dx, batch x in

        double squared_norm() const;
        bool all_finite() const;
        void scale(double s);
    };

    Mlp() = default;
    // Glorot-uniform initialization in +-sqrt(6/(fan_in+fan_out)).
    Mlp(std::vector<int> layer_sizes, Rng& rng);

    int input_dim() const { return layer_sizes_.empty() ? 0 : layer_sizes_.front(); }
    int output_dim() const { return layer_sizes_.empty() ? 0 : layer_sizes_.back(); }
    const std::vector<int>& layer_sizes() const { return layer_sizes_; }
    std::size_t num_layers() const { return weights_.size(); }
    long num_params() const;

    Mat forward(const Mat& x, Cache* cache = nullptr) const;
    Vec forward(const Vec& x) const;

    // Chain rule for a scalar loss: dy holds dL/d(output) row per sample;
    // returned gradients are exact sums over the batch.
    Grads backward(const Cache& cache, const Mat& dy) const;

    Grads zero_grads() const;

    std::vector<Mat>& weights() { return weights_; }
    const std::vector<Mat>& weights() const { return weights_; }
    std::vector<Vec>& biases() { return biases_; }
    const std::vector<Vec>& biases() const { return biases_; }

    // Flat parameter access in serialization order (per layer: weights
    // row-major, then biases). Used by finite-difference checks.
    Vec flatten_params() const;
    void set_params(const Vec& flat);

    // Checkpoint format: "GPNN" magic, u32 version, u32 layer count,
    // i32 layer sizes, then little-endian f32 data per layer, weights
    // (row-major) before biases.
    void save(const std::string& path) const;
    static Mlp load(const std::string& path);

  private:
    std::vector<int> layer_sizes_;
    std::vector<Mat> weights_;  // [l]: (sizes[l] x sizes[l+1])
    std::vector<Vec> biases_;   // [l]: sizes[l+1]
};

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Moment estimates mirroring an Mlp's parameter shapes.
struct AdamState {
    std::vector<Mat> m_w, v_w;
    std::vector<Vec> m_b, v_b;
    long step_count = 0;
    AdamConfig cfg;

    static AdamState init(const Mlp& params, AdamConfig cfg = {});
};

// Bias-corrected Adam update. Throws NumericError on non-finite gradient
// entries, leaving params and state untouched.
void adam_step(Mlp& params, const Mlp::Grads& grads, AdamState& state);

// Same update rule for a bare vector parameter (e.g. a policy log-std).
struct AdamVecState {
    Vec m, v;
    long step_count = 0;
    AdamConfig cfg;

    static AdamVecState init(Eigen::Index n, AdamConfig cfg = {});
};

void adam_step(Vec& params, const Vec& grad, AdamVecState& state);

}  // namespace goalplan
