#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "vidtune/rng.hpp"
#include "vidtune/segmentation.hpp"

using namespace vidtune;

TEST_SUITE("segmentation") {

TEST_CASE("threshold segmentation on constructed frames") {
    LatentFrame flat(4, 4, 1, 0.0);
    MaskPair m = segment_threshold(flat, 0.5);
    for (std::size_t i = 0; i < m.fg.size(); ++i) {
        CHECK(m.fg[i] == 0.0);
        CHECK(m.bg[i] == 1.0);
    }

    // left half bright, right half dark
    LatentFrame split(4, 4, 1, 0.0);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 2; ++x) split.at(y, x, 0) = 1.0;
    m = segment_threshold(split, 0.5);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) CHECK(m.fg.at(y, x) == (x < 2 ? 1.0 : 0.0));

    LatentFrame bad(2, 2, 1, 0.0);
    bad[0] = std::nan("");
    CHECK_THROWS_AS(segment_threshold(bad, 0.0), std::invalid_argument);
}

TEST_CASE("two-blob foreground count matches a pixel scan") {
    // gaussian bumps at two centers over a dark background
    int H = 16, W = 16;
    LatentFrame frame(H, W, 2, 0.0);
    auto bump = [&](double cy, double cx, double amp) {
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                double v = amp * std::exp(-d2 / 6.0);
                frame.at(y, x, 0) += v;
                frame.at(y, x, 1) += 0.5 * v;
            }
    };
    bump(4, 4, 2.0);
    bump(11, 12, 1.5);

    double threshold = 0.4;
    MaskPair m = segment_threshold(frame, threshold);

    int expected = 0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double mean = (frame.at(y, x, 0) + frame.at(y, x, 1)) / 2.0;
            if (mean > threshold) ++expected;
        }
    int got = 0;
    for (std::size_t i = 0; i < m.fg.size(); ++i) got += m.fg[i] == 1.0 ? 1 : 0;
    CHECK(got == expected);
    CHECK(got > 0);
    CHECK(got < H * W);
}

TEST_CASE("apply_mask identity, annihilation and elementwise oracle") {
    Rng rng(1);
    LatentFrame f = gaussian_frame(rng, 3, 5, 2);

    LatentFrame same = apply_mask(f, PixelGrid(3, 5, 1.0));
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(same[i] == f[i]);

    LatentFrame zero = apply_mask(f, PixelGrid(3, 5, 0.0));
    for (std::size_t i = 0; i < zero.size(); ++i) CHECK(zero[i] == 0.0);

    PixelGrid m(3, 5, 0.0);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    LatentFrame out = apply_mask(f, m);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 5; ++x)
            for (int c = 0; c < 2; ++c)
                CHECK(out.at(y, x, c) == m.at(y, x) * f.at(y, x, c));

    CHECK_THROWS_AS(apply_mask(f, PixelGrid(5, 3, 1.0)), std::invalid_argument);
}

TEST_CASE("mask pairs partition every frame exactly") {
    Rng rng(2);
    LatentFrame f = gaussian_frame(rng, 6, 6, 3);
    MaskPair m = segment_threshold(f, 0.1);
    LatentFrame sum = combine(1.0, apply_mask(f, m.fg), 1.0, apply_mask(f, m.bg));
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(sum[i] == f[i]);

    // idempotence of binary masking
    LatentFrame once = apply_mask(f, m.fg);
    LatentFrame twice = apply_mask(once, m.fg);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(twice[i] == once[i]);
}

TEST_CASE("mask file round trip and fixtures") {
    auto dir = std::filesystem::temp_directory_path() / "vidtune_mask_test";
    std::filesystem::create_directories(dir);

    PixelGrid fg(3, 4, 0.0);
    Rng rng(3);
    for (std::size_t i = 0; i < fg.size(); ++i) fg[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
    MaskPair m = MaskPair::from_foreground(fg);
    std::string path = (dir / "m.vtm").string();
    save_mask(m, path);
    MaskPair back = load_mask(path);
    REQUIRE(back.fg.same_shape(m.fg));
    for (std::size_t i = 0; i < m.fg.size(); ++i) {
        CHECK(back.fg[i] == m.fg[i]);
        CHECK(back.bg[i] == m.bg[i]);
    }

    // all-ones foreground gives an all-zeros background
    MaskPair ones = MaskPair::from_foreground(PixelGrid(2, 2, 1.0));
    save_mask(ones, path);
    back = load_mask(path);
    for (std::size_t i = 0; i < back.bg.size(); ++i) CHECK(back.bg[i] == 0.0);

    // hand-written 2x2 file: fg = [[1,0],[0,1]]
    std::string hand = (dir / "hand.vtm").string();
    {
        std::ofstream os(hand, std::ios::binary);
        os << "VTMASK 2 2\n";
        const char bytes[4] = {1, 0, 0, 1};
        os.write(bytes, 4);
    }
    MaskPair loaded = load_mask(hand);
    CHECK(loaded.fg.at(0, 0) == 1.0);
    CHECK(loaded.fg.at(0, 1) == 0.0);
    CHECK(loaded.fg.at(1, 0) == 0.0);
    CHECK(loaded.fg.at(1, 1) == 1.0);

    // malformed inputs
    std::string bad = (dir / "bad.vtm").string();
    {
        std::ofstream os(bad, std::ios::binary);
        os << "WRONG 2 2\n";
        os.write("\0\0\0\0", 4);
    }
    CHECK_THROWS(load_mask(bad));
    {
        std::ofstream os(bad, std::ios::binary);
        os << "VTMASK 4 4\n";
        os.write("\1\0", 2);  // truncated
    }
    CHECK_THROWS(load_mask(bad));
    CHECK_THROWS(load_mask(hand, 8, 8));  // dimension mismatch
    std::filesystem::remove_all(dir);
}

}  // TEST_SUITE
