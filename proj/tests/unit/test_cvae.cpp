#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "goalplan/cvae.hpp"
#include "goalplan/encoder.hpp"
#include "goalplan/envsim.hpp"
#include "helpers.hpp"

using namespace goalplan;
using namespace goalplan::cvae;

namespace {

CvaeModel tiny_model(std::uint64_t seed, int delta_t = 5) {
    Rng rng(seed);
    return CvaeModel::make(1, delta_t, {16, 16}, rng);
}

std::vector<Mat> synthetic_trajs(int n, int len, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Mat> out;
    for (int i = 0; i < n; ++i) {
        Mat m(len + 1, 8);
        m.row(0) = rng.normal_vec(8).transpose();
        for (int t = 1; t <= len; ++t)
            m.row(t) = m.row(t - 1) + 0.1 * rng.normal_vec(8).transpose();
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<Mat> encoded_env_dataset(int n, std::uint64_t seed) {
    std::vector<envsim::Primitive> prims(envsim::kAllPrimitives.begin(), envsim::kAllPrimitives.end());
    auto ds = envsim::generate_offline_dataset(n, seed, prims);
    auto stats = encoder::fit_normalizer(ds);
    std::vector<Mat> out;
    for (const auto& t : ds) {
        Mat m(static_cast<long>(t.states.size()), 8);
        for (long r = 0; r < m.rows(); ++r)
            m.row(r) = encoder::encode(stats, t.states[static_cast<std::size_t>(r)]).transpose();
        out.push_back(std::move(m));
    }
    return out;
}

}  // namespace

TEST_CASE("kl is zero when the posterior equals the prior") {
    CvaeModel m = tiny_model(1);
    for (auto& w : m.encoder.weights()) w.setZero();
    for (auto& b : m.encoder.biases()) b.setZero();
    TransitionPair pair{Vec::Ones(8), Vec::Ones(8), 5};
    auto parts = elbo_loss(m, pair, Vec::Zero(8));
    CHECK(parts.kl == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("kl closed form: unit mean shift in one dim gives 1/2") {
    CvaeModel m = tiny_model(2);
    for (auto& w : m.encoder.weights()) w.setZero();
    for (auto& b : m.encoder.biases()) b.setZero();
    m.encoder.biases().back()(0) = 1.0;  // mu = e1, logvar = 0
    TransitionPair pair{Vec::Zero(8), Vec::Zero(8), 5};
    auto parts = elbo_loss(m, pair, Vec::Zero(8));
    CHECK(parts.kl == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("perfect reconstruction leaves only the kl term") {
    CvaeModel m = tiny_model(3);
    Vec target = Vec::Constant(8, 0.37);
    for (auto& w : m.decoder.weights()) w.setZero();
    for (auto& b : m.decoder.biases()) b.setZero();
    m.decoder.biases().back() = target;
    TransitionPair pair{Vec::Zero(8), target, 5};
    Rng rng(4);
    auto parts = elbo_loss(m, pair, rng);
    CHECK(parts.recon == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(parts.loss == doctest::Approx(m.beta_kl * parts.kl).epsilon(1e-12));
}

TEST_CASE("kl part is never negative") {
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        CvaeModel m = tiny_model(100 + i);
        TransitionPair pair{rng.normal_vec(8), rng.normal_vec(8), 5};
        auto parts = elbo_loss(m, pair, rng);
        CHECK(parts.kl >= 0.0);
    }
}

TEST_CASE("elbo gradients match finite differences for encoder and decoder") {
    for (std::uint64_t seed : {0ull, 1ull}) {
        CvaeModel m = tiny_model(50 + seed);
        Rng rng(seed);
        Mat ctx = rng.normal_mat(3, 8), tgt = rng.normal_mat(3, 8), noise = rng.normal_mat(3, 8);

        auto loss = [&]() { return elbo_batch(m, ctx, tgt, noise, 1.0 / 3.0).loss; };
        BatchGrads grads;
        elbo_batch(m, ctx, tgt, noise, 1.0 / 3.0, &grads);

        auto fd_enc = testutil::fd_gradient(m.encoder, loss);
        CHECK(testutil::max_rel_error(testutil::flatten_grads(grads.enc), fd_enc) <= 1e-4);
        auto fd_dec = testutil::fd_gradient(m.decoder, loss);
        CHECK(testutil::max_rel_error(testutil::flatten_grads(grads.dec), fd_dec) <= 1e-4);
    }
}

TEST_CASE("non-finite intermediates are reported by tensor name") {
    CvaeModel m = tiny_model(6);
    m.encoder.biases().back()(0) = std::numeric_limits<double>::infinity();
    TransitionPair pair{Vec::Zero(8), Vec::Zero(8), 5};
    try {
        Rng rng(1);
        elbo_loss(m, pair, rng);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("mu") != std::string::npos);
    }
}

TEST_CASE("generate_sequence: empty input, prefix property, determinism") {
    CvaeModel m = tiny_model(7);
    Vec h0 = Vec::Constant(8, 0.2);
    CHECK(generate_sequence(m, h0, {}).empty());

    Rng rng(8);
    std::vector<Vec> zs;
    for (int i = 0; i < 5; ++i) zs.push_back(rng.normal_vec(8));
    auto full = generate_sequence(m, h0, zs);
    CHECK(full.size() == 5);
    auto prefix = generate_sequence(m, h0, {zs.begin(), zs.begin() + 3});
    for (int i = 0; i < 3; ++i) CHECK((full[i] - prefix[i]).norm() == 0.0);
    auto again = generate_sequence(m, h0, zs);
    for (int i = 0; i < 5; ++i) CHECK((full[i] - again[i]).norm() == 0.0);
}

TEST_CASE("batched generation matches the single-chain fold") {
    CvaeModel m = tiny_model(9);
    Rng rng(10);
    Mat h0 = rng.normal_mat(4, 8);
    std::vector<Mat> zs{rng.normal_mat(4, 8), rng.normal_mat(4, 8)};
    auto batched = generate_sequence_batch(m, h0, zs);
    for (int j = 0; j < 4; ++j) {
        auto single = generate_sequence(m, h0.row(j).transpose(),
                                        {zs[0].row(j).transpose(), zs[1].row(j).transpose()});
        CHECK((batched[0].row(j).transpose() - single[0]).norm() < 1e-14);
        CHECK((batched[1].row(j).transpose() - single[1]).norm() < 1e-14);
    }
}

TEST_CASE("zero epochs returns the model unchanged") {
    CvaeModel m = tiny_model(11);
    Vec before_enc = m.encoder.flatten_params(), before_dec = m.decoder.flatten_params();
    TrainOptions opts;
    opts.epochs = 0;
    auto report = train_level(m, synthetic_trajs(10, 20, 1), opts, 99);
    CHECK((m.encoder.flatten_params() - before_enc).norm() == 0.0);
    CHECK((m.decoder.flatten_params() - before_dec).norm() == 0.0);
    CHECK(report.holdout_recon.size() == 1);
}

TEST_CASE("chain_length=1 training equals an independent-pair trainer") {
    auto data = synthetic_trajs(12, 18, 2);
    TrainOptions opts;
    opts.epochs = 2;
    opts.batch_size = 16;
    opts.chain_length = 1;
    opts.holdout_fraction = 0.25;

    CvaeModel trained = tiny_model(12);
    CvaeModel reference = trained;  // identical init
    train_level(trained, data, opts, 1234);

    // independent-pair reimplementation with the same draw order
    {
        CvaeModel& m = reference;
        const int lo = offset_min(m.delta_t), hi = offset_max(m.delta_t);
        Rng root(1234);
        Rng sample_rng = root.stream("samples");
        Rng noise_rng = root.stream("noise");
        int stride = 4;  // round(1/0.25)
        std::vector<int> train_idx;
        for (int i = 0; i < static_cast<int>(data.size()); ++i) {
            if (static_cast<int>(data[i].rows()) - 1 < m.delta_t + 1) continue;
            if (i % stride != stride - 1) train_idx.push_back(i);
        }
        long anchors = 0;
        for (int ti : train_idx) anchors += std::max<long>(1, data[ti].rows() - 1 - m.delta_t + 1);
        int batches = static_cast<int>((anchors + opts.batch_size - 1) / opts.batch_size);
        AdamState eo = AdamState::init(m.encoder, {opts.lr});
        AdamState do_ = AdamState::init(m.decoder, {opts.lr});
        for (int e = 0; e < opts.epochs * batches; ++e) {
            Mat ctx(opts.batch_size, 8), tgt(opts.batch_size, 8);
            for (int i = 0; i < opts.batch_size; ++i) {
                int ti = train_idx[sample_rng.uniform_int((long)train_idx.size())];
                int T = static_cast<int>(data[ti].rows()) - 1;
                int d = lo + static_cast<int>(sample_rng.uniform_int(hi - lo + 1));
                if (d > T) d = lo + static_cast<int>(sample_rng.uniform_int(T - lo + 1));
                int t = static_cast<int>(sample_rng.uniform_int(T - d + 1));
                ctx.row(i) = data[ti].row(t);
                tgt.row(i) = data[ti].row(t + d);
            }
            Mat noise = noise_rng.normal_mat(opts.batch_size, m.d_z);
            BatchGrads grads;
            elbo_batch(m, ctx, tgt, noise, 1.0 / opts.batch_size, &grads);
            adam_step(m.encoder, grads.enc, eo);
            adam_step(m.decoder, grads.dec, do_);
        }
    }
    CHECK((trained.encoder.flatten_params() - reference.encoder.flatten_params()).norm() == 0.0);
    CHECK((trained.decoder.flatten_params() - reference.decoder.flatten_params()).norm() == 0.0);
}

TEST_CASE("training reduces held-out reconstruction error") {
    auto data = encoded_env_dataset(80, 21);
    Rng rng(13);
    CvaeModel m = CvaeModel::make(1, 5, {64, 64}, rng);
    TrainOptions opts;
    opts.epochs = 8;
    auto report = train_level(m, data, opts, 77);
    CHECK(report.holdout_recon.back() < 0.5 * report.holdout_recon.front());
}

TEST_CASE("posterior sampling reconstructs better than prior sampling") {
    auto data = encoded_env_dataset(80, 22);
    Rng rng(14);
    CvaeModel m = CvaeModel::make(1, 5, {64, 64}, rng);
    TrainOptions opts;
    opts.epochs = 8;
    train_level(m, data, opts, 78);

    Rng eval_rng(15);
    double post = 0.0, prior = 0.0;
    int n = 0;
    for (std::size_t i = 9; i < data.size(); i += 10) {
        const Mat& traj = data[i];
        for (int rep = 0; rep < 5; ++rep) {
            int T = static_cast<int>(traj.rows()) - 1;
            if (T < 6) continue;
            int t = static_cast<int>(eval_rng.uniform_int(T - 5));
            Vec h = traj.row(t).transpose(), hp = traj.row(t + 5).transpose();
            auto parts = elbo_loss(m, {h, hp, 5}, eval_rng);
            post += parts.recon;
            Vec z = eval_rng.normal_vec(8);
            Vec in(16);
            in << h, z;
            prior += (m.decoder.forward(in) - hp).squaredNorm();
            ++n;
        }
    }
    CHECK(post / n <= prior / n);
}

TEST_CASE("level with no long-enough trajectory raises ConfigError naming it") {
    CvaeModel m = tiny_model(16, 50);
    m.level_index = 3;
    try {
        train_level(m, synthetic_trajs(5, 10, 3), {}, 5);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("3") != std::string::npos);
    }
}

TEST_CASE("checkpoint roundtrip with sidecar") {
    CvaeModel m = tiny_model(17, 10);
    m.level_index = 2;
    m.beta_kl = 0.7;
    auto prefix = (std::filesystem::temp_directory_path() / "gp_cvae_test").string();
    m.save(prefix);
    auto back = CvaeModel::load(prefix);
    CHECK(back.level_index == 2);
    CHECK(back.delta_t == 10);
    CHECK(back.beta_kl == 0.7);
    CHECK(back.d_z == 8);
    Vec h0 = Vec::Constant(8, 0.1);
    Rng rng(18);
    Vec z = rng.normal_vec(8);
    Vec a = generate_sequence(m, h0, {z})[0];
    Vec b = generate_sequence(back, h0, {z})[0];
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-6);  // float32 checkpoint
    for (const char* suffix : {".json", "_enc.bin", "_dec.bin"})
        std::filesystem::remove(prefix + suffix);
}

TEST_CASE("offset window is +-25 percent, rounded") {
    CHECK(offset_min(5) == 4);
    CHECK(offset_max(5) == 6);
    CHECK(offset_min(20) == 15);
    CHECK(offset_max(20) == 25);
}
