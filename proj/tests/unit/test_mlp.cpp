#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "goalplan/mlp.hpp"
#include "helpers.hpp"

using namespace goalplan;

TEST_CASE("zero network maps everything to zero") {
    Rng rng(1);
    Mlp net({4, 8, 3}, rng);
    for (auto& w : net.weights()) w.setZero();
    for (auto& b : net.biases()) b.setZero();
    Vec y = net.forward(Vec::Constant(4, 1.7));
    CHECK(y.norm() == 0.0);
}

TEST_CASE("single identity layer passes input through") {
    Rng rng(1);
    Mlp net({3, 3}, rng);
    net.weights()[0].setIdentity();
    net.biases()[0].setZero();
    Vec x(3);
    x << 0.3, -1.2, 2.5;
    CHECK((net.forward(x) - x).norm() == 0.0);
}

TEST_CASE("seeded init and forward are reproducible bit-exactly") {
    Rng r1(42), r2(42);
    Mlp a({3, 8, 2}, r1), b({3, 8, 2}, r2);
    Vec x(3);
    x << 0.1, -0.2, 0.3;
    Vec ya = a.forward(x), yb = b.forward(x);
    CHECK(ya(0) == yb(0));
    CHECK(ya(1) == yb(1));
    // golden regression pin, recorded from this implementation's seeded init
    CHECK(ya(0) == doctest::Approx(-0.25395496309583138).epsilon(1e-15));
    CHECK(ya(1) == doctest::Approx(-0.26310189487133084).epsilon(1e-15));
}

TEST_CASE("zero upstream gradient yields zero parameter gradients") {
    Rng rng(3);
    Mlp net({4, 16, 2}, rng);
    Mlp::Cache cache;
    Mat x = rng.normal_mat(5, 4);
    net.forward(x, &cache);
    auto g = net.backward(cache, Mat::Zero(5, 2));
    CHECK(g.squared_norm() == 0.0);
    CHECK(g.input.norm() == 0.0);
}

TEST_CASE("one-layer linear chain rule matches the closed form") {
    Rng rng(4);
    Mlp net({3, 2}, rng);
    Vec x(3);
    x << 0.5, -1.0, 2.0;
    Mlp::Cache cache;
    Mat y = net.forward(Mat(x.transpose()), &cache);
    // L = y y^T / 2  =>  dL/dW = x^T y, dL/db = y
    auto g = net.backward(cache, y);
    Mat expected = x * y;
    CHECK((g.weights[0] - expected).norm() < 1e-14);
    CHECK((g.biases[0] - y.row(0).transpose()).norm() < 1e-14);
}

TEST_CASE("analytic gradients match central finite differences") {
    for (std::uint64_t seed : {0ull, 1ull, 2ull}) {
        Rng rng(seed);
        Mlp net({5, 16, 16, 3}, rng);
        Mat x = rng.normal_mat(4, 5);
        Mat target = rng.normal_mat(4, 3);

        auto loss = [&]() {
            Mat y = net.forward(x);
            return 0.5 * (y - target).squaredNorm();
        };
        Mlp::Cache cache;
        Mat y = net.forward(x, &cache);
        auto analytic = testutil::flatten_grads(net.backward(cache, y - target));
        auto numeric = testutil::fd_gradient(net, loss);
        CHECK(testutil::max_rel_error(analytic, numeric) <= 1e-4);
    }
}

TEST_CASE("input gradient matches finite differences") {
    Rng rng(9);
    Mlp net({4, 12, 2}, rng);
    Vec x0 = rng.normal_vec(4);
    Mlp::Cache cache;
    Mat y = net.forward(Mat(x0.transpose()), &cache);
    auto g = net.backward(cache, y);  // L = ||y||^2/2
    double h = 1e-6;
    for (int i = 0; i < 4; ++i) {
        Vec xp = x0, xm = x0;
        xp(i) += h;
        xm(i) -= h;
        double up = 0.5 * net.forward(xp).squaredNorm();
        double down = 0.5 * net.forward(xm).squaredNorm();
        CHECK(g.input(0, i) == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5));
    }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged, moments decay") {
    Rng rng(5);
    Mlp net({2, 4, 1}, rng);
    auto st = AdamState::init(net, {0.1});
    st.m_w[0].setConstant(1.0);
    Vec before = net.flatten_params();
    auto g = net.zero_grads();
    adam_step(net, g, st);
    CHECK((net.flatten_params() - before).norm() == 0.0);
    CHECK(st.m_w[0](0, 0) == doctest::Approx(0.9));
    CHECK(st.step_count == 1);
}

TEST_CASE("adam: first bias-corrected step moves by lr against the gradient sign") {
    // scalar parameter theta=1, g=2, lr=0.1 -> theta' ~ 0.9
    Rng rng(6);
    Mlp net({1, 1}, rng);
    net.weights()[0](0, 0) = 1.0;
    net.biases()[0](0) = 0.0;
    auto st = AdamState::init(net, {0.1});
    auto g = net.zero_grads();
    g.weights[0](0, 0) = 2.0;
    adam_step(net, g, st);
    CHECK(net.weights()[0](0, 0) == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("adam converges monotonically on a quadratic after warm-up") {
    Rng rng(7);
    Mlp net({1, 1}, rng);
    net.weights()[0](0, 0) = 3.0;
    net.biases()[0](0) = 0.0;
    const double target = -1.0;
    auto st = AdamState::init(net, {0.01});
    double prev = std::abs(net.weights()[0](0, 0) - target);
    bool monotone = true;
    for (int i = 0; i < 1000; ++i) {
        auto g = net.zero_grads();
        g.weights[0](0, 0) = net.weights()[0](0, 0) - target;
        adam_step(net, g, st);
        double err = std::abs(net.weights()[0](0, 0) - target);
        if (i > 50 && err > prev + 1e-12) monotone = false;
        prev = err;
    }
    CHECK(monotone);
    CHECK(prev < 0.5);
}

TEST_CASE("adam rejects non-finite gradients without touching parameters") {
    Rng rng(8);
    Mlp net({2, 3, 1}, rng);
    auto st = AdamState::init(net);
    Vec before = net.flatten_params();
    auto g = net.zero_grads();
    g.weights[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(adam_step(net, g, st), NumericError);
    CHECK((net.flatten_params() - before).norm() == 0.0);
    CHECK(st.step_count == 0);
}

TEST_CASE("checkpoint roundtrip is exact at float32 precision") {
    Rng rng(10);
    Mlp net({4, 8, 2}, rng);
    std::string path = (std::filesystem::temp_directory_path() / "gp_mlp_test.bin").string();
    net.save(path);
    Mlp loaded = Mlp::load(path);
    CHECK(loaded.layer_sizes() == net.layer_sizes());
    Vec a = net.flatten_params(), b = loaded.flatten_params();
    for (Eigen::Index i = 0; i < a.size(); ++i) CHECK(b(i) == static_cast<double>(static_cast<float>(a(i))));
    std::filesystem::remove(path);
}

TEST_CASE("dimension mismatches are rejected") {
    Rng rng(11);
    Mlp net({3, 4, 2}, rng);
    CHECK_THROWS_AS(net.forward(Vec::Zero(5)), std::invalid_argument);
    Mlp::Cache cache;
    net.forward(Mat::Zero(2, 3), &cache);
    CHECK_THROWS_AS(net.backward(cache, Mat::Zero(2, 3)), std::invalid_argument);
    Mlp other({3, 5, 2}, rng);
    CHECK_THROWS_AS(other.backward(cache, Mat::Zero(2, 2)), std::invalid_argument);
}
