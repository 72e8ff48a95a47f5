#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "vidfill/mask_ops.hpp"
#include "vidfill/rng.hpp"

using namespace vidfill;
using codec::CodecConfig;

namespace {

CodecConfig toy_cfg() {
    CodecConfig cfg;
    cfg.s_t = 8;
    cfg.s_h = 4;
    cfg.s_w = 4;
    return cfg;
}

MaskVideo random_mask(std::size_t T, std::size_t H, std::size_t W, double keep_prob,
                      std::uint64_t seed) {
    MaskVideo m(T, H, W);
    Rng rng(seed);
    for (auto& v : m.data) v = rng.uniform() < keep_prob ? 1 : 0;
    return m;
}

}  // namespace

TEST_CASE("apply_mask zeroes hole pixels exactly") {
    Rng rng(1);
    VideoTensor v(3, 4, 4, 3);
    for (double& x : v.data) x = rng.uniform();

    SUBCASE("all ones is identity") {
        const MaskVideo ones(3, 4, 4, 1);
        CHECK(maskops::apply_mask(v, ones).data == v.data);
    }
    SUBCASE("all zeros blanks the video") {
        const MaskVideo zeros(3, 4, 4, 0);
        for (double x : maskops::apply_mask(v, zeros).data) CHECK(x == 0.0);
    }
    SUBCASE("random mask matches the elementwise product oracle") {
        const MaskVideo m = random_mask(3, 4, 4, 0.6, 2);
        const VideoTensor out = maskops::apply_mask(v, m);
        for (std::size_t t = 0; t < 3; ++t)
            for (std::size_t y = 0; y < 4; ++y)
                for (std::size_t x = 0; x < 4; ++x)
                    for (std::size_t c = 0; c < 3; ++c)
                        CHECK(out.at(t, y, x, c) == v.at(t, y, x, c) * m.at(t, y, x));
    }
    SUBCASE("extent mismatch throws") {
        CHECK_THROWS_AS(maskops::apply_mask(v, MaskVideo(2, 4, 4)), std::invalid_argument);
    }
}

TEST_CASE("downsample_temporal keeps the first frame alone and min-reduces groups") {
    SUBCASE("all ones stays all ones with the causal frame count") {
        const MaskVideo m(9, 4, 4, 1);
        const MaskVideo out = maskops::downsample_temporal(m, 8);
        CHECK(out.frames == 2);
        for (auto v : out.data) CHECK(v == 1);
    }
    SUBCASE("hole only in frame 3 lands in output frame 1, frame 0 stays clean") {
        MaskVideo m(9, 4, 4, 1);
        m.at(3, 2, 1) = 0;
        const MaskVideo out = maskops::downsample_temporal(m, 8);
        CHECK(out.at(0, 2, 1) == 1);
        CHECK(out.at(1, 2, 1) == 0);
        CHECK(out.at(1, 0, 0) == 1);
    }
    SUBCASE("hole only in frame 0 stays only in output frame 0") {
        MaskVideo m(9, 4, 4, 1);
        m.at(0, 1, 1) = 0;
        const MaskVideo out = maskops::downsample_temporal(m, 8);
        CHECK(out.at(0, 1, 1) == 0);
        CHECK(out.at(1, 1, 1) == 1);
    }
    SUBCASE("matches the min-over-group oracle on random masks") {
        for (int trial = 0; trial < 20; ++trial) {
            const MaskVideo m = random_mask(17, 6, 5, 0.7, 100 + trial);
            const MaskVideo out = maskops::downsample_temporal(m, 8);
            REQUIRE(out.frames == 3);
            for (std::size_t g = 0; g < 3; ++g)
                for (std::size_t y = 0; y < 6; ++y)
                    for (std::size_t x = 0; x < 5; ++x) {
                        std::uint8_t expect = 1;
                        const std::size_t f0 = g == 0 ? 0 : (g - 1) * 8 + 1;
                        const std::size_t f1 = g == 0 ? 1 : g * 8 + 1;
                        for (std::size_t f = f0; f < f1; ++f)
                            expect = std::min(expect, m.at(f, y, x));
                        CHECK(out.at(g, y, x) == expect);
                    }
        }
    }
    SUBCASE("divisibility violation throws") {
        CHECK_THROWS_AS(maskops::downsample_temporal(MaskVideo(10, 4, 4), 8),
                        std::invalid_argument);
    }
}

TEST_CASE("downsample_spatial is a per-cell minimum") {
    SUBCASE("all known stays all known") {
        const LatentMask out = maskops::downsample_spatial(MaskVideo(2, 8, 8, 1), 4, 4);
        for (auto v : out.data) CHECK(v == 1);
    }
    SUBCASE("one hole pixel claims exactly its cell") {
        MaskVideo m(1, 8, 8, 1);
        m.at(0, 1, 5) = 0;  // cell (0,1)
        const LatentMask out = maskops::downsample_spatial(m, 4, 4);
        CHECK(out.at(0, 0, 1) == 0);
        CHECK(out.at(0, 0, 0) == 1);
        CHECK(out.at(0, 1, 0) == 1);
        CHECK(out.at(0, 1, 1) == 1);
    }
    SUBCASE("matches the min-pool oracle on random masks") {
        for (int trial = 0; trial < 20; ++trial) {
            const MaskVideo m = random_mask(2, 12, 8, 0.8, 200 + trial);
            const LatentMask out = maskops::downsample_spatial(m, 4, 4);
            for (std::size_t g = 0; g < 2; ++g)
                for (std::size_t cy = 0; cy < 3; ++cy)
                    for (std::size_t cx = 0; cx < 2; ++cx) {
                        std::uint8_t expect = 1;
                        for (std::size_t y = cy * 4; y < cy * 4 + 4; ++y)
                            for (std::size_t x = cx * 4; x < cx * 4 + 4; ++x)
                                expect = std::min(expect, m.at(g, y, x));
                        CHECK(out.at(g, cy, cx) == expect);
                    }
        }
    }
    SUBCASE("divisibility violation throws") {
        CHECK_THROWS_AS(maskops::downsample_spatial(MaskVideo(1, 7, 8), 4, 4),
                        std::invalid_argument);
    }
}

TEST_CASE("to_latent_mask equals the sequential composition") {
    const CodecConfig cfg = toy_cfg();
    for (int trial = 0; trial < 50; ++trial) {
        const MaskVideo m = random_mask(9, 8, 8, 0.75, 300 + trial);
        const LatentMask composed = maskops::to_latent_mask(m, cfg);
        const LatentMask manual =
            maskops::downsample_spatial(maskops::downsample_temporal(m, cfg.s_t), cfg.s_h,
                                        cfg.s_w);
        CHECK(composed.data == manual.data);
    }
    const MaskVideo ones(9, 8, 8, 1);
    for (auto v : maskops::to_latent_mask(ones, cfg).data) CHECK(v == 1);
}

TEST_CASE("dilate_holes grows holes with a box element") {
    SUBCASE("no holes stays empty") {
        const HoleMap h = maskops::dilate_holes(LatentMask(3, 5, 5, 1), 1);
        for (auto v : h.data) CHECK(v == 0);
    }
    SUBCASE("radius 0 is pure inversion") {
        LatentMask m(2, 4, 4, 1);
        m.at(1, 2, 3) = 0;
        const HoleMap h = maskops::dilate_holes(m, 0);
        for (std::size_t i = 0; i < m.data.size(); ++i)
            CHECK(h.data[i] == (m.data[i] ? 0 : 1));
    }
    SUBCASE("single hole cell becomes a 3x3x3 block clipped at borders") {
        LatentMask m(3, 5, 5, 1);
        m.at(1, 2, 2) = 0;
        const HoleMap h = maskops::dilate_holes(m, 1);
        std::size_t count = 0;
        for (std::size_t t = 0; t < 3; ++t)
            for (std::size_t y = 0; y < 5; ++y)
                for (std::size_t x = 0; x < 5; ++x) {
                    const bool inside = t >= 0 && t <= 2 && y >= 1 && y <= 3 && x >= 1 && x <= 3;
                    CHECK(h.at(t, y, x) == (inside ? 1 : 0));
                    count += h.at(t, y, x);
                }
        CHECK(count == 27);

        LatentMask corner(2, 3, 3, 1);
        corner.at(0, 0, 0) = 0;
        const HoleMap hc = maskops::dilate_holes(corner, 1);
        std::size_t cc = 0;
        for (auto v : hc.data) cc += v;
        CHECK(cc == 8);  // 2x2x2 clipped block
    }
    SUBCASE("matches the brute-force neighborhood-max oracle at r=2") {
        for (int trial = 0; trial < 10; ++trial) {
            LatentMask m(4, 6, 7, 1);
            Rng rng(400 + trial);
            for (auto& v : m.data) v = rng.uniform() < 0.85 ? 1 : 0;
            const HoleMap h = maskops::dilate_holes(m, 2);
            for (std::size_t t = 0; t < 4; ++t)
                for (std::size_t y = 0; y < 6; ++y)
                    for (std::size_t x = 0; x < 7; ++x) {
                        std::uint8_t expect = 0;
                        for (long dt = -2; dt <= 2; ++dt)
                            for (long dy = -2; dy <= 2; ++dy)
                                for (long dx = -2; dx <= 2; ++dx) {
                                    const long tt = static_cast<long>(t) + dt;
                                    const long yy = static_cast<long>(y) + dy;
                                    const long xx = static_cast<long>(x) + dx;
                                    if (tt < 0 || yy < 0 || xx < 0 || tt >= 4 || yy >= 6 ||
                                        xx >= 7)
                                        continue;
                                    if (m.at(static_cast<std::size_t>(tt),
                                             static_cast<std::size_t>(yy),
                                             static_cast<std::size_t>(xx)) == 0)
                                        expect = 1;
                                }
                        CHECK(h.at(t, y, x) == expect);
                    }
        }
    }
}

TEST_CASE("monotonicity: extra holes never shrink downstream hole sets") {
    const CodecConfig cfg = toy_cfg();
    for (int trial = 0; trial < 30; ++trial) {
        MaskVideo a = random_mask(9, 8, 8, 0.8, 500 + trial);
        MaskVideo b = a;  // b adds holes on top of a
        Rng rng(600 + trial);
        for (auto& v : b.data)
            if (v == 1 && rng.uniform() < 0.1) v = 0;

        const LatentMask la = maskops::to_latent_mask(a, cfg);
        const LatentMask lb = maskops::to_latent_mask(b, cfg);
        for (std::size_t i = 0; i < la.data.size(); ++i) CHECK(lb.data[i] <= la.data[i]);

        const HoleMap ha = maskops::dilate_holes(la, 1);
        const HoleMap hb = maskops::dilate_holes(lb, 1);
        for (std::size_t i = 0; i < ha.data.size(); ++i) CHECK(hb.data[i] >= ha.data[i]);
    }
}

TEST_CASE("conservativeness: a keep cell covers only keep pixels") {
    const CodecConfig cfg = toy_cfg();
    for (int trial = 0; trial < 10; ++trial) {
        const MaskVideo m = random_mask(9, 8, 8, 0.9, 700 + trial);
        const LatentMask lm = maskops::to_latent_mask(m, cfg);
        for (std::size_t g = 0; g < lm.t; ++g)
            for (std::size_t cy = 0; cy < lm.h; ++cy)
                for (std::size_t cx = 0; cx < lm.w; ++cx) {
                    if (lm.at(g, cy, cx) != 1) continue;
                    const std::size_t f0 = g == 0 ? 0 : (g - 1) * cfg.s_t + 1;
                    const std::size_t f1 = g == 0 ? 1 : g * cfg.s_t + 1;
                    for (std::size_t f = f0; f < f1; ++f)
                        for (std::size_t y = cy * cfg.s_h; y < (cy + 1) * cfg.s_h; ++y)
                            for (std::size_t x = cx * cfg.s_w; x < (cx + 1) * cfg.s_w; ++x)
                                CHECK(m.at(f, y, x) == 1);
                }
    }
}

TEST_CASE("dilation is monotone in the radius") {
    Rng rng(8);
    LatentMask m(3, 6, 6, 1);
    for (auto& v : m.data) v = rng.uniform() < 0.9 ? 1 : 0;
    const HoleMap h0 = maskops::dilate_holes(m, 0);
    const HoleMap h1 = maskops::dilate_holes(m, 1);
    const HoleMap h2 = maskops::dilate_holes(m, 2);
    for (std::size_t i = 0; i < m.data.size(); ++i) {
        CHECK(h0.data[i] <= h1.data[i]);
        CHECK(h1.data[i] <= h2.data[i]);
    }
}

TEST_CASE("mask pad_to_grid mirrors the video padding") {
    const CodecConfig cfg = toy_cfg();
    MaskVideo m = random_mask(10, 6, 7, 0.5, 9);
    const MaskVideo p = maskops::pad_to_grid(m, cfg);
    CHECK(p.frames == 17);
    CHECK(p.height == 8);
    CHECK(p.width == 8);
    CHECK(p.at(16, 7, 7) == m.at(9, 5, 6));
    CHECK(p.at(0, 0, 0) == m.at(0, 0, 0));
}
