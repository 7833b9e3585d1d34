#include "goalplan/mlp.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace goalplan {

namespace {

void check_finite_or_throw(bool finite, const char* what) {
    if (!finite) throw NumericError(std::string("non-finite values in ") + what);
}

}  // namespace

double Mlp::Grads::squared_norm() const {
    double s = 0.0;
    for (const auto& w : weights) s += w.squaredNorm();
    for (const auto& b : biases) s += b.squaredNorm();
    return s;
}

bool Mlp::Grads::all_finite() const {
    for (const auto& w : weights)
        if (!w.allFinite()) return false;
    for (const auto& b : biases)
        if (!b.allFinite()) return false;
    return true;
}

void Mlp::Grads::scale(double s) {
    for (auto& w : weights) w *= s;
    for (auto& b : biases) b *= s;
    input *= s;
}

Mlp::Mlp(std::vector<int> layer_sizes, Rng& rng) : layer_sizes_(std::move(layer_sizes)) {
    if (layer_sizes_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output sizes");
    for (int s : layer_sizes_)
        if (s <= 0) throw std::invalid_argument("Mlp: layer sizes must be positive");
    for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
        int fan_in = layer_sizes_[l];
        int fan_out = layer_sizes_[l + 1];
        double bound = std::sqrt(6.0 / (fan_in + fan_out));
        Mat w(fan_in, fan_out);
        for (int r = 0; r < fan_in; ++r)
            for (int c = 0; c < fan_out; ++c) w(r, c) = rng.uniform(-bound, bound);
        weights_.push_back(std::move(w));
        biases_.push_back(Vec::Zero(fan_out));
    }
}

long Mlp::num_params() const {
    long n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
    return n;
}

Mat Mlp::forward(const Mat& x, Cache* cache) const {
    if (x.cols() != input_dim())
        throw std::invalid_argument("Mlp::forward: input has " + std::to_string(x.cols()) +
                                    " columns, expected " + std::to_string(input_dim()));
    if (cache) {
        cache->input = x;
        cache->hidden.clear();
    }
    Mat a = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        Mat z = (a * weights_[l]).rowwise() + biases_[l].transpose();
        if (l + 1 < weights_.size()) {
            a = z.array().tanh().matrix();
            if (cache) cache->hidden.push_back(a);
        } else {
            a = std::move(z);
        }
    }
    if (cache) cache->output = a;
    return a;
}

Vec Mlp::forward(const Vec& x) const {
    Mat y = forward(Mat(x.transpose()));
    return y.row(0).transpose();
}

Mlp::Grads Mlp::backward(const Cache& cache, const Mat& dy) const {
    const std::size_t L = weights_.size();
    if (cache.input.cols() != input_dim() || cache.hidden.size() != L - 1)
        throw std::invalid_argument("Mlp::backward: cache does not match network topology");
    if (dy.rows() != cache.input.rows() || dy.cols() != output_dim())
        throw std::invalid_argument("Mlp::backward: dy shape does not match cached forward pass");

    Grads g;
    g.weights.resize(L);
    g.biases.resize(L);

    Mat delta = dy;
    for (std::size_t l = L; l-- > 0;) {
        const Mat& a_prev = (l == 0) ? cache.input : cache.hidden[l - 1];
        g.weights[l].noalias() = a_prev.transpose() * delta;
        g.biases[l] = delta.colwise().sum().transpose();
        Mat da_prev = delta * weights_[l].transpose();
        if (l > 0) {
            // tanh'(z) = 1 - tanh(z)^2, from the cached activation
            delta = (da_prev.array() * (1.0 - cache.hidden[l - 1].array().square())).matrix();
        } else {
            g.input = std::move(da_prev);
        }
    }
    return g;
}

Mlp::Grads Mlp::zero_grads() const {
    Grads g;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        g.weights.push_back(Mat::Zero(weights_[l].rows(), weights_[l].cols()));
        g.biases.push_back(Vec::Zero(biases_[l].size()));
    }
    g.input = Mat();
    return g;
}

Vec Mlp::flatten_params() const {
    Vec flat(num_params());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        const Mat& w = weights_[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) flat(k++) = w(r, c);
        for (Eigen::Index i = 0; i < biases_[l].size(); ++i) flat(k++) = biases_[l](i);
    }
    return flat;
}

void Mlp::set_params(const Vec& flat) {
    if (flat.size() != num_params()) throw std::invalid_argument("Mlp::set_params: size mismatch");
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        Mat& w = weights_[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = flat(k++);
        for (Eigen::Index i = 0; i < biases_[l].size(); ++i) biases_[l](i) = flat(k++);
    }
}

namespace {

constexpr char kMagic[4] = {'G', 'P', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw IoError("checkpoint truncated");
    return v;
}

}  // namespace

void Mlp::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(kMagic, 4);
    write_pod<std::uint32_t>(os, kVersion);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(layer_sizes_.size()));
    for (int s : layer_sizes_) write_pod<std::int32_t>(os, s);
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        const Mat& w = weights_[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) write_pod<float>(os, static_cast<float>(w(r, c)));
        for (Eigen::Index i = 0; i < biases_[l].size(); ++i)
            write_pod<float>(os, static_cast<float>(biases_[l](i)));
    }
    if (!os) throw IoError("write failed: " + path);
}

Mlp Mlp::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw IoError("bad checkpoint magic: " + path);
    if (read_pod<std::uint32_t>(is) != kVersion) throw IoError("unsupported checkpoint version: " + path);
    auto n_sizes = read_pod<std::uint32_t>(is);
    if (n_sizes < 2 || n_sizes > 64) throw IoError("corrupt layer count: " + path);
    Mlp net;
    net.layer_sizes_.resize(n_sizes);
    for (auto& s : net.layer_sizes_) {
        s = read_pod<std::int32_t>(is);
        if (s <= 0) throw IoError("corrupt layer size: " + path);
    }
    for (std::size_t l = 0; l + 1 < net.layer_sizes_.size(); ++l) {
        Mat w(net.layer_sizes_[l], net.layer_sizes_[l + 1]);
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = read_pod<float>(is);
        Vec b(net.layer_sizes_[l + 1]);
        for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = read_pod<float>(is);
        net.weights_.push_back(std::move(w));
        net.biases_.push_back(std::move(b));
    }
    return net;
}

AdamState AdamState::init(const Mlp& params, AdamConfig cfg) {
    AdamState st;
    st.cfg = cfg;
    for (std::size_t l = 0; l < params.weights().size(); ++l) {
        st.m_w.push_back(Mat::Zero(params.weights()[l].rows(), params.weights()[l].cols()));
        st.v_w.push_back(Mat::Zero(params.weights()[l].rows(), params.weights()[l].cols()));
        st.m_b.push_back(Vec::Zero(params.biases()[l].size()));
        st.v_b.push_back(Vec::Zero(params.biases()[l].size()));
    }
    return st;
}

void adam_step(Mlp& params, const Mlp::Grads& grads, AdamState& state) {
    if (grads.weights.size() != params.weights().size())
        throw std::invalid_argument("adam_step: gradient/parameter layer count mismatch");
    check_finite_or_throw(grads.all_finite(), "gradients");

    state.step_count += 1;
    const auto& c = state.cfg;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step_count));

    for (std::size_t l = 0; l < params.weights().size(); ++l) {
        state.m_w[l] = c.beta1 * state.m_w[l] + (1.0 - c.beta1) * grads.weights[l];
        state.v_w[l] = (c.beta2 * state.v_w[l].array() +
                        (1.0 - c.beta2) * grads.weights[l].array().square())
                           .matrix();
        params.weights()[l].array() -=
            c.lr * (state.m_w[l].array() / bc1) / ((state.v_w[l].array() / bc2).sqrt() + c.eps);

        state.m_b[l] = c.beta1 * state.m_b[l] + (1.0 - c.beta1) * grads.biases[l];
        state.v_b[l] =
            (c.beta2 * state.v_b[l].array() + (1.0 - c.beta2) * grads.biases[l].array().square())
                .matrix();
        params.biases()[l].array() -=
            c.lr * (state.m_b[l].array() / bc1) / ((state.v_b[l].array() / bc2).sqrt() + c.eps);
    }
}

AdamVecState AdamVecState::init(Eigen::Index n, AdamConfig cfg) {
    AdamVecState st;
    st.cfg = cfg;
    st.m = Vec::Zero(n);
    st.v = Vec::Zero(n);
    return st;
}

void adam_step(Vec& params, const Vec& grad, AdamVecState& state) {
    if (grad.size() != params.size()) throw std::invalid_argument("adam_step: vector size mismatch");
    check_finite_or_throw(grad.allFinite(), "gradients");

    state.step_count += 1;
    const auto& c = state.cfg;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step_count));
    state.m = c.beta1 * state.m + (1.0 - c.beta1) * grad;
    state.v = (c.beta2 * state.v.array() + (1.0 - c.beta2) * grad.array().square()).matrix();
    params.array() -= c.lr * (state.m.array() / bc1) / ((state.v.array() / bc2).sqrt() + c.eps);
}

}  // namespace goalplan
