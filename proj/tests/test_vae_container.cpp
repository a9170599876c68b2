#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "avdt/container.hpp"
#include "avdt/rng.hpp"
#include "avdt/vae.hpp"
#include "avdt/wav.hpp"

using namespace avdt;

namespace {
PixelVideo random_video(std::size_t f, std::size_t h, std::size_t w, std::size_t c,
                        SeededRng& rng) {
    Tensor<float> t(Shape{f, h, w, c});
    rng.fill_uniform(t, 0.0, 1.0);
    return PixelVideo::from_tensor(std::move(t));
}
} // namespace

TEST_CASE("latent frame arithmetic") {
    // paper-anchored case: 129 pixel frames -> 33 latent frames
    REQUIRE(latent_frame_count(129) == 33);
    // all valid pixel frame counts in [1,200]
    for (std::size_t f = 1; f <= 197; f += 4) REQUIRE(latent_frame_count(f) == f / 4 + 1);
}

TEST_CASE("encode shapes") {
    SeededRng rng(1);
    SECTION("single frame 4x4x3 with s_p=4 -> 1x1x1x192") {
        VideoLatent z = encode_video(random_video(1, 4, 4, 3, rng), 4);
        REQUIRE(z.frames == 1);
        REQUIRE(z.w == 1);
        REQUIRE(z.h == 1);
        REQUIRE(z.c == 192);
    }
    SECTION("9 frames 8x8x1 with s_p=4 -> 3x2x2x64") {
        VideoLatent z = encode_video(random_video(9, 8, 8, 1, rng), 4);
        REQUIRE(z.frames == 3);
        REQUIRE(z.w == 2);
        REQUIRE(z.h == 2);
        REQUIRE(z.c == 64);
    }
    SECTION("invalid frame count rejected") {
        REQUIRE_THROWS_AS(encode_video(random_video(4, 4, 4, 1, rng), 4), ShapeError);
        REQUIRE_THROWS_AS(encode_video(random_video(5, 6, 4, 1, rng), 4), ShapeError);
    }
}

TEST_CASE("decode is the exact inverse of encode") {
    SeededRng rng(2);
    SECTION("bit-exact roundtrip over random shapes") {
        for (std::size_t f : {1u, 5u, 9u, 29u}) {
            PixelVideo v = random_video(f, 8, 12, 3, rng);
            VideoLatent z = encode_video(v, 4);
            PixelVideo back = decode_video(z, 4, 3);
            REQUIRE(back.frames == v.frames);
            REQUIRE(back.data.vec() == v.data.vec()); // bitwise
        }
    }
    SECTION("all-zero latent decodes to all-zero video") {
        VideoLatent z = VideoLatent::zeros(2, 2, 2, 48); // c = 3*4*2*2 with s_p=2
        PixelVideo v = decode_video(z, 2, 3);
        for (std::size_t i = 0; i < v.data.numel(); ++i) REQUIRE(v.data[i] == 0.0f);
    }
    SECTION("channel factorization mismatch rejected") {
        VideoLatent z = VideoLatent::zeros(2, 2, 2, 50);
        REQUIRE_THROWS_AS(decode_video(z, 4, 3), ShapeError);
    }
    SECTION("f'=5 roundtrip max abs error is zero") {
        PixelVideo v = random_video(5, 4, 4, 2, rng);
        PixelVideo back = decode_video(encode_video(v, 2), 2, 2);
        REQUIRE(max_abs_diff(back.data, v.data) == 0.0f);
    }
}

TEST_CASE("encode_image matches single-frame video encoding") {
    SeededRng rng(3);
    Tensor<float> img(Shape{8, 8, 1});
    rng.fill_uniform(img, 0.0, 1.0);
    ImageLatent lat = encode_image(img, 4);
    REQUIRE(lat.w == 2);
    REQUIRE(lat.h == 2);
    REQUIRE(lat.c == 64);
}

TEST_CASE("align_face_mask") {
    SECTION("full-frame boxes give an all-ones mask") {
        std::vector<std::vector<PixelBox>> boxes(9, {PixelBox{0, 0, 8, 8}});
        FaceMaskGrid m = align_face_mask(boxes, 9, 8, 8, 4);
        REQUIRE(m.frames == 4); // n=3 plus identity frame
        for (std::size_t i = 0; i < m.data.numel(); ++i) REQUIRE(m.data[i] == 1.0f);
    }
    SECTION("no boxes: zero everywhere except the identity frame") {
        std::vector<std::vector<PixelBox>> boxes(9);
        FaceMaskGrid m = align_face_mask(boxes, 9, 8, 8, 4);
        for (std::size_t i = 0; i < m.w; ++i)
            for (std::size_t j = 0; j < m.h; ++j) REQUIRE(m.at(0, i, j) == 1.0f);
        for (std::size_t l = 1; l < m.frames; ++l)
            for (std::size_t i = 0; i < m.w; ++i)
                for (std::size_t j = 0; j < m.h; ++j) REQUIRE(m.at(l, i, j) == 0.0f);
    }
    SECTION("rasterize-then-maxpool on a half-width box") {
        std::vector<std::vector<PixelBox>> boxes(1, {PixelBox{0, 0, 4, 8}});
        FaceMaskGrid m = align_face_mask(boxes, 1, 8, 8, 4);
        REQUIRE(m.at(1, 0, 0) == 1.0f);
        REQUIRE(m.at(1, 0, 1) == 1.0f);
        REQUIRE(m.at(1, 1, 0) == 0.0f);
        REQUIRE(m.at(1, 1, 1) == 0.0f);
    }
    SECTION("temporal reduction is a union over the group") {
        // f'=5: VAE groups are [f0 x4] and [f1..f4]; a box only in pixel
        // frame 2 must light mask frame 2 (identity frame is index 0).
        std::vector<std::vector<PixelBox>> boxes(5);
        boxes[2].push_back(PixelBox{0, 0, 4, 4});
        FaceMaskGrid m = align_face_mask(boxes, 5, 8, 8, 4);
        REQUIRE(m.frames == 3);
        REQUIRE(m.at(1, 0, 0) == 0.0f);
        REQUIRE(m.at(2, 0, 0) == 1.0f); // union over the group caught it
    }
    SECTION("mask stays binary and frame-0 saturated on random box sets") {
        SeededRng rng(4);
        for (int trial = 0; trial < 20; ++trial) {
            std::size_t f = 1 + 4 * rng.next_below(8);
            std::vector<std::vector<PixelBox>> boxes(f);
            for (std::size_t t = 0; t < f; ++t)
                if (rng.next_double() < 0.5) {
                    int x0 = int(rng.next_below(8)), y0 = int(rng.next_below(8));
                    boxes[t].push_back(PixelBox{x0, y0, x0 + int(rng.next_below(8 - x0)) + 0,
                                                y0 + int(rng.next_below(8 - y0))});
                }
            FaceMaskGrid m = align_face_mask(boxes, f, 8, 8, 2);
            for (std::size_t i = 0; i < m.w; ++i)
                for (std::size_t j = 0; j < m.h; ++j) REQUIRE(m.at(0, i, j) == 1.0f);
            for (std::size_t i = 0; i < m.data.numel(); ++i)
                REQUIRE((m.data[i] == 0.0f || m.data[i] == 1.0f));
        }
    }
    SECTION("out-of-bounds box rejected") {
        std::vector<std::vector<PixelBox>> boxes(1, {PixelBox{0, 0, 9, 8}});
        REQUIRE_THROWS_AS(align_face_mask(boxes, 1, 8, 8, 4), ShapeError);
    }
}

TEST_CASE("container roundtrip is bit-exact") {
    std::string path = (std::filesystem::temp_directory_path() / "avdt_test_container.avdt").string();
    SeededRng rng(5);
    Tensor<float> tf(Shape{3, 4});
    rng.fill_normal(tf);
    tf[0] = -0.0f; // signed zero must survive
    Tensor<double> td(Shape{2, 2, 2});
    rng.fill_normal(td);
    Container c;
    c.add_f32("a/f32", tf);
    c.add_f64("b/f64", td);
    c.add_bytes("__meta__", "{\"k\":1}");
    c.save(path);

    Container r = Container::load(path);
    REQUIRE(r.names() == std::vector<std::string>{"a/f32", "b/f64", "__meta__"});
    Tensor<float> tf2 = r.get_f32("a/f32");
    REQUIRE(tf2.shape() == tf.shape());
    for (std::size_t i = 0; i < tf.numel(); ++i)
        REQUIRE(std::bit_cast<std::uint32_t>(tf2[i]) == std::bit_cast<std::uint32_t>(tf[i]));
    Tensor<double> td2 = r.get_f64("b/f64");
    for (std::size_t i = 0; i < td.numel(); ++i)
        REQUIRE(std::bit_cast<std::uint64_t>(td2[i]) == std::bit_cast<std::uint64_t>(td[i]));
    REQUIRE(r.get_bytes("__meta__") == "{\"k\":1}");

    REQUIRE_THROWS_AS(r.entry("missing"), IoError);
    std::remove(path.c_str());
}

TEST_CASE("container magic check") {
    std::string path = (std::filesystem::temp_directory_path() / "avdt_bad.avdt").string();
    {
        std::ofstream f(path, std::ios::binary);
        f << "NOPExxxxxxxxxxxx";
    }
    REQUIRE_THROWS_AS(Container::load(path), IoError);
    std::remove(path.c_str());
}

TEST_CASE("wav roundtrip") {
    std::string path = (std::filesystem::temp_directory_path() / "avdt_test.wav").string();
    WavData w;
    w.sample_rate = 16000;
    SeededRng rng(6);
    w.samples.resize(1600);
    for (auto& s : w.samples) s = float(rng.next_uniform(-0.9, 0.9));
    write_wav(path, w);
    WavData r = read_wav(path);
    REQUIRE(r.sample_rate == 16000);
    REQUIRE(r.samples.size() == w.samples.size());
    for (std::size_t i = 0; i < w.samples.size(); ++i)
        REQUIRE(std::abs(r.samples[i] - w.samples[i]) < 1.0f / 32000.0f);
    std::remove(path.c_str());
}
