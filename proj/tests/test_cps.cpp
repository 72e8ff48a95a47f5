#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "vidfill/cps.hpp"
#include "vidfill/flow.hpp"

using namespace vidfill;

namespace {

LatentGrid random_latent(std::size_t t, std::size_t h, std::size_t w, std::size_t c,
                         std::uint64_t seed) {
    LatentGrid z(t, h, w, c);
    Rng rng(seed);
    for (double& x : z.data) x = rng.normal();
    return z;
}

LatentMask random_latent_mask(std::size_t t, std::size_t h, std::size_t w, std::uint64_t seed) {
    LatentMask m(t, h, w, 1);
    Rng rng(seed);
    for (auto& v : m.data) v = rng.uniform() < 0.8 ? 1 : 0;
    return m;
}

// Element-local linear test model: depends on the state, both conditioning
// inputs, the timestep, and the relative frame position within the window, so
// wrong gathering, coverage or rotation all change the result.
cps::WindowVelocityModel linear_model() {
    return [](const LatentGrid& z, const LatentGrid& cmv, const LatentMask& cm, double t) {
        LatentGrid v = z;
        const std::size_t row = z.h * z.w * z.c;
        for (std::size_t i = 0; i < z.data.size(); ++i) {
            const std::size_t j_rel = i / row;
            const std::size_t cell = i / z.c;
            v.data[i] = (0.3 + 0.02 * static_cast<double>(j_rel)) * z.data[i] +
                        0.2 * cmv.data[i] - 0.1 * static_cast<double>(cm.data[cell]) +
                        0.05 * std::sin(3.0 * t);
        }
        return v;
    };
}

cps::WindowVelocityModel zero_model() {
    return [](const LatentGrid& z, const LatentGrid&, const LatentMask&, double) {
        return LatentGrid(z.t, z.h, z.w, z.c, 0.0);
    };
}

// Literal transliteration of the circular position-shift loop, materializing
// the wrap-padded index array instead of rotating arcs. Shares the noise draw
// order with cps_denoise (one gaussian_latent over L positions up front).
LatentGrid cps_oracle(const cps::WindowVelocityModel& model, const LatentGrid& cmv,
                      const LatentMask& cm, std::size_t steps, std::size_t f, std::size_t alpha,
                      Rng& rng) {
    const std::size_t l = cmv.t;
    const std::size_t L = 2 * l - 2;
    std::vector<std::size_t> indices;
    for (std::size_t i = 0; i < l; ++i) indices.push_back(i);
    for (std::size_t i = l - 2; i >= 1; --i) indices.push_back(i);

    LatentGrid z = flow::gaussian_latent(L, cmv.h, cmv.w, cmv.c, rng);
    const std::size_t row = cmv.h * cmv.w * cmv.c;
    const std::size_t mrow = cm.h * cm.w;

    std::size_t alpha_sigma = 0;
    for (std::size_t j = steps; j >= 1; --j) {
        const double t_hi = static_cast<double>(j) / static_cast<double>(steps);
        const double dt = t_hi - static_cast<double>(j - 1) / static_cast<double>(steps);
        const std::size_t a = alpha_sigma % L;

        // right_pad(positions, a) with wrap
        std::vector<std::size_t> padded;
        for (std::size_t p = 0; p < L; ++p) padded.push_back(p);
        for (std::size_t p = 0; p < a; ++p) padded.push_back(p);

        std::size_t s = a, e = a + f, pl = 0;
        while (pl < L) {
            LatentGrid zw(f, cmv.h, cmv.w, cmv.c);
            LatentGrid cw(f, cmv.h, cmv.w, cmv.c);
            LatentMask mw(f, cm.h, cm.w);
            for (std::size_t i = 0; i < f; ++i) {
                const std::size_t pos = padded[s + i];
                const std::size_t frame = indices[pos];
                std::copy_n(z.data.begin() + static_cast<std::ptrdiff_t>(pos * row), row,
                            zw.data.begin() + static_cast<std::ptrdiff_t>(i * row));
                std::copy_n(cmv.data.begin() + static_cast<std::ptrdiff_t>(frame * row), row,
                            cw.data.begin() + static_cast<std::ptrdiff_t>(i * row));
                std::copy_n(cm.data.begin() + static_cast<std::ptrdiff_t>(frame * mrow), mrow,
                            mw.data.begin() + static_cast<std::ptrdiff_t>(i * mrow));
            }
            const LatentGrid v = model(zw, cw, mw, t_hi);
            for (std::size_t i = 0; i < f; ++i) {
                const std::size_t pos = padded[s + i];
                for (std::size_t k = 0; k < row; ++k)
                    z.data[pos * row + k] -= dt * v.data[i * row + k];
            }
            s += f;
            e += f;
            pl += f;
        }
        alpha_sigma += alpha;
    }

    LatentGrid out(l, cmv.h, cmv.w, cmv.c);
    std::copy_n(z.data.begin(), out.data.size(), out.data.begin());
    return out;
}

std::vector<std::size_t> divisors_of(std::size_t n) {
    std::vector<std::size_t> d;
    for (std::size_t f = 1; f <= n; ++f)
        if (n % f == 0) d.push_back(f);
    return d;
}

}  // namespace

TEST_CASE("build_circular reflects the sequence") {
    SUBCASE("l=5") {
        const auto s = cps::build_circular(5);
        CHECK(s.L == 8);
        CHECK(s.indices == std::vector<std::size_t>{0, 1, 2, 3, 4, 3, 2, 1});
    }
    SUBCASE("l=2 has an empty reflection tail") {
        const auto s = cps::build_circular(2);
        CHECK(s.L == 2);
        CHECK(s.indices == std::vector<std::size_t>{0, 1});
    }
    SUBCASE("l=121 gives L=240") { CHECK(cps::build_circular(121).L == 240); }
    SUBCASE("interior frames appear twice, endpoints once") {
        const auto s = cps::build_circular(9);
        std::vector<std::size_t> counts(9, 0);
        for (std::size_t fr : s.indices) ++counts[fr];
        CHECK(counts[0] == 1);
        CHECK(counts[8] == 1);
        for (std::size_t i = 1; i < 8; ++i) CHECK(counts[i] == 2);
    }
    SUBCASE("l < 2 is rejected") { CHECK_THROWS_AS(cps::build_circular(1), std::invalid_argument); }
}

TEST_CASE("plan_windows tiles the rotated circle") {
    cps::CircularSchedule s = cps::build_circular(5);
    s.f = 4;

    SUBCASE("unshifted tiling") {
        s.alpha_sigma = 0;
        const auto plan = cps::plan_windows(s);
        REQUIRE(plan.windows.size() == 2);
        CHECK(plan.windows[0].positions == std::vector<std::size_t>{0, 1, 2, 3});
        CHECK(plan.windows[1].positions == std::vector<std::size_t>{4, 5, 6, 7});
    }
    SUBCASE("shift 3 reproduces the hand-executed plan") {
        s.alpha_sigma = 3;
        const auto plan = cps::plan_windows(s);
        REQUIRE(plan.windows.size() == 2);
        CHECK(plan.windows[0].positions == std::vector<std::size_t>{3, 4, 5, 6});
        CHECK(plan.windows[0].frames == std::vector<std::size_t>{3, 4, 3, 2});
        CHECK(plan.windows[1].positions == std::vector<std::size_t>{7, 0, 1, 2});
        CHECK(plan.windows[1].frames == std::vector<std::size_t>{1, 0, 1, 2});
        std::set<std::size_t> covered;
        for (const auto& w : plan.windows)
            covered.insert(w.positions.begin(), w.positions.end());
        CHECK(covered.size() == 8);
    }
    SUBCASE("shift L is the identity rotation") {
        s.alpha_sigma = 8;
        const auto plan8 = cps::plan_windows(s);
        s.alpha_sigma = 0;
        const auto plan0 = cps::plan_windows(s);
        REQUIRE(plan8.windows.size() == plan0.windows.size());
        for (std::size_t w = 0; w < plan0.windows.size(); ++w)
            CHECK(plan8.windows[w].positions == plan0.windows[w].positions);
    }
    SUBCASE("window not dividing the circle asks for padding") {
        s.f = 3;
        s.alpha_sigma = 0;
        CHECK_THROWS_WITH_AS(cps::plan_windows(s), doctest::Contains("pad"),
                             std::runtime_error);
    }
}

TEST_CASE("plan invariants over randomized l, f, alpha") {
    for (std::size_t l : {2, 5, 9, 17}) {
        cps::CircularSchedule s = cps::build_circular(l);
        const std::size_t L = s.L;
        for (std::size_t f : divisors_of(L)) {
            s.f = f;
            for (std::size_t alpha : {std::size_t{0}, std::size_t{1}, std::size_t{3},
                                      std::size_t{7}, L}) {
                for (std::size_t k = 0; k < 4; ++k) {
                    s.alpha_sigma = k * alpha;
                    const auto plan = cps::plan_windows(s);

                    // exactly-once coverage
                    std::vector<int> seen(L, 0);
                    for (const auto& w : plan.windows)
                        for (std::size_t p : w.positions) ++seen[p];
                    for (int c : seen) CHECK(c == 1);

                    // rotation property vs the unshifted plan
                    cps::CircularSchedule s0 = s;
                    s0.alpha_sigma = 0;
                    const auto base = cps::plan_windows(s0);
                    for (std::size_t w = 0; w < plan.windows.size(); ++w)
                        for (std::size_t i = 0; i < f; ++i)
                            CHECK(plan.windows[w].positions[i] ==
                                  (base.windows[w].positions[i] + k * alpha) % L);

                    // mirror walk: consecutive frames differ by exactly 1
                    for (const auto& w : plan.windows)
                        for (std::size_t i = 0; i + 1 < w.frames.size(); ++i) {
                            const long d = static_cast<long>(w.frames[i + 1]) -
                                           static_cast<long>(w.frames[i]);
                            CHECK(std::abs(d) == 1);
                        }
                }
            }
        }
    }
}

TEST_CASE("cps_denoise delegates when the window covers the sequence") {
    const LatentGrid cmv = random_latent(4, 2, 2, 3, 1);
    const LatentMask cm = random_latent_mask(4, 2, 2, 2);
    const auto model = linear_model();

    Rng r1(77), r2(77);
    cps::CpsTrace trace;
    const LatentGrid via_cps = cps::cps_denoise(model, cmv, cm, 3, 8, 3, r1, &trace);
    const LatentGrid via_single = cps::single_pass_denoise(model, cmv, cm, 3, r2);
    CHECK_FALSE(trace.used_cps);
    CHECK(via_cps.data == via_single.data);
}

TEST_CASE("zero-velocity model leaves the initial noise untouched") {
    const LatentGrid cmv = random_latent(5, 2, 2, 2, 3);
    const LatentMask cm = random_latent_mask(5, 2, 2, 4);

    Rng r1(55);
    const LatentGrid out = cps::cps_denoise(zero_model(), cmv, cm, 2, 4, 3, r1);

    Rng r2(55);
    const LatentGrid noise = flow::gaussian_latent(8, 2, 2, 2, r2);  // L = 2*5-2
    for (std::size_t i = 0; i < out.data.size(); ++i) CHECK(out.data[i] == noise.data[i]);
}

TEST_CASE("cps_denoise matches the brute-force circular simulation") {
    const LatentGrid cmv = random_latent(5, 2, 2, 2, 5);
    const LatentMask cm = random_latent_mask(5, 2, 2, 6);
    const auto model = linear_model();

    Rng r1(88), r2(88);
    const LatentGrid ours = cps::cps_denoise(model, cmv, cm, 3, 4, 3, r1);
    const LatentGrid ref = cps_oracle(model, cmv, cm, 3, 4, 3, r2);
    REQUIRE(ours.data.size() == ref.data.size());
    for (std::size_t i = 0; i < ours.data.size(); ++i)
        CHECK(ours.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-12));
}

TEST_CASE("oracle equivalence across the parameter grid") {
    const auto model = linear_model();
    for (std::size_t l : {3, 5, 9}) {
        const std::size_t L = 2 * l - 2;
        const LatentGrid cmv = random_latent(l, 2, 2, 2, 100 + l);
        const LatentMask cm = random_latent_mask(l, 2, 2, 200 + l);
        for (std::size_t f : divisors_of(L)) {
            if (f >= l) continue;  // delegation path covered elsewhere
            for (std::size_t alpha : {std::size_t{0}, std::size_t{1}, std::size_t{3}, L}) {
                for (std::size_t steps : {1, 3, 5}) {
                    const std::uint64_t seed = derive_seed(7, "cps-grid", l * 1000 + f * 100 +
                                                                              alpha * 10 + steps);
                    Rng r1(seed), r2(seed);
                    const LatentGrid ours = cps::cps_denoise(model, cmv, cm, steps, f, alpha, r1);
                    const LatentGrid ref = cps_oracle(model, cmv, cm, steps, f, alpha, r2);
                    double worst = 0;
                    for (std::size_t i = 0; i < ours.data.size(); ++i)
                        worst = std::max(worst, std::abs(ours.data[i] - ref.data[i]));
                    CHECK(worst < 1e-6);
                }
            }
        }
    }
}

TEST_CASE("accumulated shift grows linearly with the timestep") {
    const LatentGrid cmv = random_latent(5, 2, 2, 2, 7);
    const LatentMask cm = random_latent_mask(5, 2, 2, 8);
    Rng rng(9);
    cps::CpsTrace trace;
    cps::cps_denoise(linear_model(), cmv, cm, 5, 4, 3, rng, &trace);
    REQUIRE(trace.alpha_sigma_log.size() == 5);
    for (std::size_t k = 0; k < 5; ++k) CHECK(trace.alpha_sigma_log[k] == k * 3);
    for (std::size_t k = 0; k < 5; ++k) CHECK(trace.plans[k].alpha_sigma == (k * 3) % 8);
}

TEST_CASE("single_pass_denoise reaches the delta target with the analytic field") {
    LatentGrid c(4, 2, 2, 2);
    Rng rc(10);
    for (double& x : c.data) x = rc.normal();
    cps::WindowVelocityModel model = [&](const LatentGrid& z, const LatentGrid&,
                                         const LatentMask&, double t) {
        LatentGrid v = z;
        for (std::size_t i = 0; i < z.data.size(); ++i)
            v.data[i] = (z.data[i] - c.data[i]) / t;
        return v;
    };
    const LatentGrid cmv(4, 2, 2, 2, 0.0);
    const LatentMask cm(4, 2, 2, 1);
    Rng rng(11);
    const LatentGrid out = cps::single_pass_denoise(model, cmv, cm, 40, rng);
    CHECK(out.t == 4);
    double norm_c = 0, err = 0;
    for (std::size_t i = 0; i < c.data.size(); ++i) {
        norm_c += c.data[i] * c.data[i];
        err = std::max(err, std::abs(out.data[i] - c.data[i]));
    }
    CHECK(err < 0.05 * std::sqrt(norm_c));
}
