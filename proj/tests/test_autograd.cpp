#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gradcheck_cases.hpp"
#include "oracles.hpp"
#include "rl4seg/tensor.hpp"

using namespace rl4seg;

TEST_CASE("sum of squares has the textbook gradient") {
    ag::Tape tape;
    auto w = ag::make_param(ag::Tensor({2}));
    w->value.data = {1.f, 2.f};
    auto loss = ag::sum(&tape, ag::mul(&tape, w, w));
    tape.backward(loss);
    CHECK(w->grad[0] == doctest::Approx(2.f));
    CHECK(w->grad[1] == doctest::Approx(4.f));
}

TEST_CASE("every op matches central finite differences in 64-bit mode") {
    for (const auto& name : gradcases::op_names()) {
        CAPTURE(name);
        double worst = 0;
        for (uint64_t seed = 0; seed < 20; ++seed)
            worst = std::max(worst,
                             gradcases::run_op_case<double>(name, 1000 + seed, 1e-5, 1e-4));
        CHECK_MESSAGE(worst < 1e-6, name, " worst rel err ", worst);
    }
}

TEST_CASE("every op passes the 32-bit gradient check") {
    for (const auto& name : gradcases::op_names()) {
        double worst = 0;
        for (uint64_t seed = 0; seed < 5; ++seed)
            worst = std::max(worst,
                             gradcases::run_op_case_f32(name, 2000 + seed, 1e-5, 1e-4));
        CHECK_MESSAGE(worst < 1e-3, name, " float worst rel err ", worst);
    }
}

TEST_CASE("full 8x8 nets match finite differences through each loss head") {
    for (const auto& which : gradcases::net_loss_names()) {
        CAPTURE(which);
        double worst_d = 0;
        for (uint64_t seed = 0; seed < 3; ++seed)
            worst_d = std::max(
                worst_d, gradcases::run_net_case<double>(which, 3000 + seed, 1e-5, 1e-3));
        CHECK_MESSAGE(worst_d < 1e-5, which, " double worst rel err ", worst_d);

        double worst_f = 0;
        for (uint64_t seed = 0; seed < 5; ++seed)
            worst_f = std::max(
                worst_f, gradcases::run_net_case_f32(which, 4000 + seed, 1e-5, 1e-4));
        CHECK_MESSAGE(worst_f < 1e-3, which, " float worst rel err ", worst_f);
    }
}

TEST_CASE("gradient of an unused parameter stays zero") {
    ag::Tape tape;
    auto used = ag::make_param(ag::Tensor({3}, 1.f));
    auto unused = ag::make_param(ag::Tensor({3}, 1.f));
    auto loss = ag::mean(&tape, ag::mul(&tape, used, used));
    tape.backward(loss);
    unused->ensure_grad();
    for (float g : unused->grad) CHECK(g == 0.f);
}

TEST_CASE("repeated backward accumulates parameter gradients") {
    ag::Tape tape;
    auto w = ag::make_param(ag::Tensor({2}));
    w->value.data = {1.f, 2.f};
    auto loss = ag::sum(&tape, ag::mul(&tape, w, w));
    tape.backward(loss);
    tape.backward(loss);
    CHECK(w->grad[0] == doctest::Approx(4.f));
    CHECK(w->grad[1] == doctest::Approx(8.f));
}

TEST_CASE("non-scalar loss is rejected") {
    ag::Tape tape;
    auto w = ag::make_param(ag::Tensor({2}, 1.f));
    auto y = ag::mul(&tape, w, w);
    CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
}

TEST_CASE("shape mismatches are rejected with diagnostics") {
    ag::Tape tape;
    auto a = ag::make_param(ag::Tensor({2, 3}, 1.f));
    auto b = ag::make_param(ag::Tensor({3, 3}, 1.f));
    CHECK_THROWS_AS(ag::add(&tape, a, b), std::invalid_argument);
    CHECK_THROWS_AS(ag::matmul(&tape, a, a), std::invalid_argument);
    CHECK_THROWS_AS(ag::maxpool2(&tape, a), std::invalid_argument);
}

TEST_CASE("finite check flag catches non-finite op outputs") {
    ag::set_check_finite(true);
    ag::Tape tape;
    auto a = ag::make_param(ag::Tensor({2}, 50.f));
    // exp(2500) overflows to inf
    CHECK_THROWS_AS((void)ag::exp(&tape, ag::mul(&tape, a, a)), ag::numeric_error);
    ag::set_check_finite(false);
    CHECK_NOTHROW((void)ag::exp(&tape, ag::mul(&tape, a, a)));
}

TEST_CASE("forward evaluation is deterministic") {
    Rng rng(5);
    auto x = gradcases::random_param<float>(rng, {3, 16, 16}, -1, 1);
    auto w = gradcases::random_param<float>(rng, {4, 3, 3, 3}, -1, 1);
    auto b = gradcases::random_param<float>(rng, {4}, -1, 1);
    auto y1 = ag::conv2d<float>(nullptr, x, w, b, 1);
    auto y2 = ag::conv2d<float>(nullptr, x, w, b, 1);
    CHECK(y1->value.data == y2->value.data);
}

TEST_CASE("adam: rejects bad lr, is inert on zero gradients, descends") {
    CHECK_THROWS_AS(ag::Adam{0.f}, std::invalid_argument);
    CHECK_THROWS_AS(ag::Adam{-1.f}, std::invalid_argument);

    auto w = ag::make_param(ag::Tensor({1}, 1.f));
    ag::Adam opt{0.1f};
    w->ensure_grad();
    opt.step({w});  // zero gradient
    CHECK(w->value.data[0] == 1.f);

    // one step on f(w) = w^2 decreases w
    {
        ag::Tape tape;
        auto loss = ag::sum(&tape, ag::mul(&tape, w, w));
        ag::Adam::zero_grad({w});
        tape.backward(loss);
        opt.step({w});
        CHECK(w->value.data[0] < 1.f);
    }

    // 200 steps reach the optimum of the convex quadratic
    auto v = ag::make_param(ag::Tensor({1}, 1.f));
    ag::Adam opt2{0.05f};
    for (int i = 0; i < 200; ++i) {
        ag::Tape tape;
        auto loss = ag::sum(&tape, ag::mul(&tape, v, v));
        ag::Adam::zero_grad({v});
        tape.backward(loss);
        opt2.step({v});
    }
    CHECK(std::abs(v->value.data[0]) < 1e-2f);
}
