#include <doctest.h>

#include <cmath>

#include "vidtune/rng.hpp"
#include "vidtune/schedule.hpp"

using namespace vidtune;

namespace {

LatentFrame scalar(double v) { return LatentFrame(1, 1, 1, {v}); }

}  // namespace

TEST_SUITE("schedule") {

TEST_CASE("build_schedule hits the configured endpoints") {
    NoiseSchedule s = build_schedule(1000, 8.5e-4, 1.2e-2);
    CHECK(s.beta(1) == 8.5e-4);
    CHECK(s.beta(1000) == 1.2e-2);

    NoiseSchedule two = build_schedule(2, 8.5e-4, 1.2e-2);
    CHECK(two.beta(1) == 8.5e-4);
    CHECK(two.beta(2) == 1.2e-2);

    NoiseSchedule one = build_schedule(1, 8.5e-4, 1.2e-2);
    CHECK(one.beta(1) == 8.5e-4);
}

TEST_CASE("build_schedule interior matches an independent evaluation") {
    // separate evaluation of the sqrt-interpolation rule, element picked at t=500
    int T = 1000;
    double bs = 8.5e-4, be = 1.2e-2;
    double frac = (500.0 - 1.0) / (T - 1.0);
    double s = std::sqrt(bs) + frac * (std::sqrt(be) - std::sqrt(bs));
    double expected = s * s;
    NoiseSchedule sched = build_schedule(T, bs, be);
    CHECK(sched.beta(500) == doctest::Approx(expected).epsilon(1e-15));
    // same value computed once offline with numpy
    CHECK(sched.beta(500) == doctest::Approx(0.00480379298055072).epsilon(1e-12));
}

TEST_CASE("build_schedule rejects bad arguments") {
    CHECK_THROWS_AS(build_schedule(0, 1e-4, 1e-2), std::invalid_argument);
    CHECK_THROWS_AS(build_schedule(10, 0.0, 1e-2), std::invalid_argument);
    CHECK_THROWS_AS(build_schedule(10, -1e-4, 1e-2), std::invalid_argument);
    CHECK_THROWS_AS(build_schedule(10, 1e-4, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(build_schedule(10, 1e-2, 1e-4), std::invalid_argument);
}

TEST_CASE("schedule identities") {
    NoiseSchedule s = build_schedule(1000, 8.5e-4, 1.2e-2);
    double bar_prev = 1.0;
    for (int t = 1; t <= s.steps(); ++t) {
        CHECK(s.alpha(t) + s.beta(t) == 1.0);
        CHECK(s.alpha_bar(t) == doctest::Approx(bar_prev * s.alpha(t)).epsilon(1e-15));
        CHECK(s.alpha_bar(t) < bar_prev);
        if (t > 1) {
            CHECK(s.beta(t) > s.beta(t - 1));
            double closed = (1.0 - s.alpha_bar(t - 1)) / (1.0 - s.alpha_bar(t)) * s.beta(t);
            CHECK(s.beta_tilde(t) == doctest::Approx(closed).epsilon(1e-15));
            CHECK(s.beta_tilde(t) > 0.0);
            CHECK(s.beta_tilde(t) <= s.beta(t));
        }
        bar_prev = s.alpha_bar(t);
    }
    // alpha_bar_0 == 1 makes the first posterior variance collapse
    CHECK(s.alpha_bar(0) == 1.0);
    CHECK(s.beta_tilde(1) == 0.0);
}

TEST_CASE("forward_step zero cases and scalar arithmetic") {
    NoiseSchedule s = build_schedule(4, 8.5e-4, 1.2e-2);
    LatentFrame x(2, 3, 2, 0.7);
    LatentFrame zeros(2, 3, 2, 0.0);

    LatentFrame no_noise = forward_step(x, TimeIndex(2, 4), zeros, s);
    for (std::size_t i = 0; i < no_noise.size(); ++i)
        CHECK(no_noise[i] == doctest::Approx(std::sqrt(s.alpha(2)) * 0.7).epsilon(1e-15));

    Rng rng(3);
    LatentFrame noise = gaussian_frame(rng, 2, 3, 2);
    LatentFrame no_signal = forward_step(zeros, TimeIndex(2, 4), noise, s);
    for (std::size_t i = 0; i < no_signal.size(); ++i)
        CHECK(no_signal[i] == doctest::Approx(std::sqrt(s.beta(2)) * noise[i]).epsilon(1e-15));

    // scalar hand computation at t=1 with beta_1 = 8.5e-4
    double eps = -0.4;
    LatentFrame out = forward_step(scalar(1.0), TimeIndex(1, 4), scalar(eps), s);
    double expected = std::sqrt(1.0 - 8.5e-4) * 1.0 + std::sqrt(8.5e-4) * eps;
    CHECK(out[0] == doctest::Approx(expected).epsilon(1e-15));

    CHECK_THROWS_AS(forward_step(x, TimeIndex(2, 4), scalar(0.0), s), std::invalid_argument);
}

TEST_CASE("forward_jump zero noise and tail coefficient") {
    NoiseSchedule s = build_schedule(1000, 8.5e-4, 1.2e-2);
    LatentFrame x(2, 2, 1, -1.3);
    LatentFrame zeros(2, 2, 1, 0.0);
    for (int t : {1, 500, 1000}) {
        LatentFrame out = forward_jump(x, TimeIndex(t, 1000), zeros, s);
        for (std::size_t i = 0; i < out.size(); ++i)
            CHECK(out[i] == doctest::Approx(std::sqrt(s.alpha_bar(t)) * -1.3).epsilon(1e-14));
    }
    // t = 0 returns the input
    LatentFrame same = forward_jump(x, TimeIndex(0, 1000), zeros, s);
    for (std::size_t i = 0; i < same.size(); ++i) CHECK(same[i] == x[i]);

    // signal coefficient at t = T: small but positive
    double coeff = std::sqrt(s.alpha_bar(1000));
    CHECK(coeff > 0.0);
    CHECK(coeff < 0.1);
}

TEST_CASE("composed forward_step matches forward_jump statistics") {
    // Monte-Carlo: stepping t = 1..k accumulates the same mean/variance the
    // jump formula states
    int T = 8, k = 8;
    NoiseSchedule s = build_schedule(T, 8.5e-4, 2e-1);
    double x0 = 0.7;
    const int trials = 100000;
    Rng rng(12345);
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < trials; ++i) {
        double x = x0;
        for (int t = 1; t <= k; ++t)
            x = std::sqrt(s.alpha(t)) * x + std::sqrt(s.beta(t)) * rng.gaussian();
        sum += x;
        sum_sq += x * x;
    }
    double mean = sum / trials;
    double var = sum_sq / trials - mean * mean;
    double want_mean = std::sqrt(s.alpha_bar(k)) * x0;
    double want_var = 1.0 - s.alpha_bar(k);
    double se_mean = std::sqrt(want_var / trials);
    double se_var = want_var * std::sqrt(2.0 / (trials - 1.0));
    CHECK(std::abs(mean - want_mean) < 3.0 * se_mean);
    CHECK(std::abs(var - want_var) < 3.0 * se_var);
}

TEST_CASE("forward_jump empirical variance matches 1 - alpha_bar") {
    NoiseSchedule s = build_schedule(50, 8.5e-4, 1.2e-2);
    Rng rng(7);
    for (int t : {1, 25, 50}) {
        const int draws = 20000;
        double sum = 0.0, sum_sq = 0.0;
        LatentFrame zero = scalar(0.0);
        for (int i = 0; i < draws; ++i) {
            LatentFrame out = forward_jump(zero, TimeIndex(t, 50), scalar(rng.gaussian()), s);
            sum += out[0];
            sum_sq += out[0] * out[0];
        }
        double mean = sum / draws;
        double var = sum_sq / draws - mean * mean;
        CHECK(var == doctest::Approx(1.0 - s.alpha_bar(t)).epsilon(0.05));
    }
}

TEST_CASE("posterior_mean degenerates to x0 at t = 1") {
    NoiseSchedule s = build_schedule(10, 1e-3, 1e-2);
    Rng rng(11);
    LatentFrame x0 = gaussian_frame(rng, 3, 3, 1);
    LatentFrame xt = gaussian_frame(rng, 3, 3, 1);
    LatentFrame mean = posterior_mean(x0, xt, TimeIndex(1, 10), s);
    for (std::size_t i = 0; i < mean.size(); ++i)
        CHECK(mean[i] == doctest::Approx(x0[i]).epsilon(1e-15));
}

TEST_CASE("posterior_mean matches a direct Bayes computation") {
    // product of the two step densities, both Gaussian in x_1
    NoiseSchedule s = build_schedule(2, 8.5e-4, 1.2e-2);
    double x0 = 0.3, x2 = -0.7;
    double a1 = s.alpha(1), a2 = s.alpha(2), b1 = s.beta(1), b2 = s.beta(2);
    double precision = a2 / b2 + 1.0 / b1;
    double expected = (std::sqrt(a2) * x2 / b2 + std::sqrt(a1) * x0 / b1) / precision;
    LatentFrame mean = posterior_mean(scalar(x0), scalar(x2), TimeIndex(2, 2), s);
    CHECK(mean[0] == doctest::Approx(expected).epsilon(1e-13));
    // paired variance equals the closed form of the same product
    CHECK(s.beta_tilde(2) == doctest::Approx(1.0 / precision).epsilon(1e-13));

    LatentFrame zero_mean = posterior_mean(scalar(0.0), scalar(0.0), TimeIndex(2, 2), s);
    CHECK(zero_mean[0] == 0.0);
}

TEST_CASE("predict_x0 inverts forward_jump") {
    NoiseSchedule s = build_schedule(100, 8.5e-4, 1.2e-2);
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        int t = rng.uniform_int(1, 100);
        LatentFrame x0 = gaussian_frame(rng, 4, 4, 1);
        LatentFrame eps = gaussian_frame(rng, 4, 4, 1);
        LatentFrame xt = forward_jump(x0, TimeIndex(t, 100), eps, s);
        LatentFrame rec = predict_x0(xt, eps, TimeIndex(t, 100), s);
        for (std::size_t i = 0; i < rec.size(); ++i)
            CHECK(std::abs(rec[i] - x0[i]) < 1e-12);
    }
    // zero prediction leaves xt / sqrt(alpha_bar)
    LatentFrame xt = scalar(0.42);
    LatentFrame rec = predict_x0(xt, scalar(0.0), TimeIndex(3, 100), s);
    CHECK(rec[0] == doctest::Approx(0.42 / std::sqrt(s.alpha_bar(3))).epsilon(1e-15));
}

TEST_CASE("predict_x0 agrees with the jump rearrangement on a random scalar") {
    NoiseSchedule s = build_schedule(20, 1e-3, 5e-2);
    Rng rng(5);
    double x0 = rng.gaussian(), eps = rng.gaussian();
    int t = 13;
    double xt = std::sqrt(s.alpha_bar(t)) * x0 + std::sqrt(1.0 - s.alpha_bar(t)) * eps;
    double rearranged = (xt - std::sqrt(1.0 - s.alpha_bar(t)) * eps) / std::sqrt(s.alpha_bar(t));
    LatentFrame got = predict_x0(scalar(xt), scalar(eps), TimeIndex(t, 20), s);
    CHECK(got[0] == doctest::Approx(rearranged).epsilon(1e-15));
}

TEST_CASE("ddim_step with perfect prediction walks the jump trajectory") {
    NoiseSchedule s = build_schedule(30, 1e-3, 3e-2);
    Rng rng(17);
    LatentFrame x0 = gaussian_frame(rng, 3, 2, 1);
    LatentFrame eps = gaussian_frame(rng, 3, 2, 1);
    for (int t : {1, 2, 15, 30}) {
        LatentFrame xt = forward_jump(x0, TimeIndex(t, 30), eps, s);
        LatentFrame stepped = ddim_step(xt, TimeIndex(t, 30), eps, 0.0, nullptr, s);
        LatentFrame want = forward_jump(x0, TimeIndex(t - 1, 30), eps, s);
        for (std::size_t i = 0; i < stepped.size(); ++i)
            CHECK(std::abs(stepped[i] - want[i]) < 1e-12);
    }
}

TEST_CASE("ddim_step determinism and scalar oracle") {
    NoiseSchedule s = build_schedule(10, 1e-3, 1e-2);
    Rng rng(23);
    LatentFrame xt = gaussian_frame(rng, 2, 2, 1);
    LatentFrame eps = gaussian_frame(rng, 2, 2, 1);
    LatentFrame a = ddim_step(xt, TimeIndex(5, 10), eps, 0.0, nullptr, s);
    LatentFrame b = ddim_step(xt, TimeIndex(5, 10), eps, 0.0, nullptr, s);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

    // spelled-out scalar step
    double xtv = 0.9, epsv = -0.2;
    int t = 5;
    double bar = s.alpha_bar(t), bar_prev = s.alpha_bar(t - 1);
    double x0_hat = (xtv - std::sqrt(1.0 - bar) * epsv) / std::sqrt(bar);
    double want = std::sqrt(bar_prev) * x0_hat + std::sqrt(1.0 - bar_prev) * epsv;
    LatentFrame got = ddim_step(scalar(xtv), TimeIndex(t, 10), scalar(epsv), 0.0, nullptr, s);
    CHECK(got[0] == doctest::Approx(want).epsilon(1e-15));
}

TEST_CASE("ddim_step rejects oversized sigma and missing noise") {
    NoiseSchedule s = build_schedule(10, 1e-3, 1e-2);
    LatentFrame xt = scalar(0.5), eps = scalar(0.1);
    double cap = std::sqrt(1.0 - s.alpha_bar(4));
    CHECK_THROWS_AS(ddim_step(xt, TimeIndex(5, 10), eps, cap * 1.01, &xt, s),
                    std::invalid_argument);
    CHECK_THROWS_AS(ddim_step(xt, TimeIndex(5, 10), eps, 0.01, nullptr, s),
                    std::invalid_argument);
    // sigma at t = 1 must be zero since alpha_bar_0 == 1
    CHECK_THROWS_AS(ddim_step(xt, TimeIndex(1, 10), eps, 0.01, &xt, s), std::invalid_argument);
    LatentFrame noise = scalar(0.3);
    LatentFrame ok = ddim_step(xt, TimeIndex(5, 10), eps, cap * 0.5, &noise, s);
    CHECK(std::isfinite(ok[0]));
}

TEST_CASE("TimeIndex bounds") {
    CHECK_THROWS_AS(TimeIndex(-1, 10), std::invalid_argument);
    CHECK_THROWS_AS(TimeIndex(11, 10), std::invalid_argument);
    CHECK_NOTHROW(TimeIndex(0, 10));
    CHECK_NOTHROW(TimeIndex(10, 10));
    NoiseSchedule s = build_schedule(10, 1e-3, 1e-2);
    // horizon mismatch is rejected
    CHECK_THROWS_AS(forward_step(LatentFrame(1, 1, 1, 0.0), TimeIndex(1, 5),
                                 LatentFrame(1, 1, 1, 0.0), s),
                    std::invalid_argument);
}

}  // TEST_SUITE
