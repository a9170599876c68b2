#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "avdt/rng.hpp"
#include "avdt/rope.hpp"

using namespace avdt;

TEST_CASE("rotary table split") {
    RotaryTable t = RotaryTable::make(16);
    REQUIRE(t.d_t == 8);
    REQUIRE(t.d_w == 4);
    REQUIRE(t.d_h == 4);
    RotaryTable t8 = RotaryTable::make(8);
    REQUIRE(t8.d_t == 4);
    REQUIRE(t8.d_w == 2);
    RotaryTable bad;
    bad.d_head = 6;
    bad.d_t = 3;
    bad.d_w = 2;
    bad.d_h = 1;
    REQUIRE_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("angles") {
    RotaryTable t = RotaryTable::make(8); // (4,2,2)
    SECTION("origin gives identity rotation") {
        std::vector<double> a = rope_angles({0, 0, 0}, t);
        for (double v : a) REQUIRE(v == 0.0);
    }
    SECTION("time -1 angles are exact negatives of time +1") {
        std::vector<double> am = rope_angles({-1, 0, 0}, t);
        std::vector<double> ap = rope_angles({1, 0, 0}, t);
        for (std::size_t i = 0; i < am.size(); ++i) REQUIRE(am[i] == -ap[i]);
    }
    SECTION("frequency ladder matches the scalar oracle") {
        // p=(2,0,0), d_t=4: time pair angles are [2, 2*10000^(-1/2)] = [2, 0.02]
        std::vector<double> a = rope_angles({2, 0, 0}, t);
        REQUIRE(a[0] == Catch::Approx(2.0));
        REQUIRE(a[1] == Catch::Approx(0.02));
    }
}

TEST_CASE("apply_rope") {
    RotaryTable t = RotaryTable::make(8);
    SeededRng rng(10);
    SECTION("position (0,0,0) leaves tokens unchanged") {
        Tensor<double> x(Shape{3, 8});
        rng.fill_normal(x);
        Tensor<double> y = apply_rope(x, {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}}, t);
        REQUIRE(y.vec() == x.vec());
    }
    SECTION("isometry within 1e-6 per token") {
        Tensor<double> x(Shape{4, 8});
        rng.fill_normal(x);
        std::vector<PositionTriple> pos{{5, 2, 1}, {-1, 7, 9}, {0, 3, 3}, {12, 0, 6}};
        Tensor<double> y = apply_rope(x, pos, t);
        for (std::size_t r = 0; r < 4; ++r) {
            double n0 = 0, n1 = 0;
            for (std::size_t j = 0; j < 8; ++j) {
                n0 += x.at2(r, j) * x.at2(r, j);
                n1 += y.at2(r, j) * y.at2(r, j);
            }
            REQUIRE(std::abs(std::sqrt(n0) - std::sqrt(n1)) < 1e-6);
        }
    }
    SECTION("relative position: logits invariant under joint translation") {
        // dot(rope(q,p), rope(k,p')) == dot(rope(q,p+d), rope(k,p'+d))
        for (int trial = 0; trial < 100; ++trial) {
            Tensor<double> qk(Shape{2, 8});
            rng.fill_normal(qk);
            PositionTriple p{int(rng.next_below(6)), int(rng.next_below(6)),
                             int(rng.next_below(6))};
            PositionTriple p2{int(rng.next_below(6)), int(rng.next_below(6)),
                              int(rng.next_below(6))};
            PositionTriple d{int(rng.next_below(5)) - 2, int(rng.next_below(5)),
                             int(rng.next_below(5))};
            Tensor<double> a = apply_rope(qk, {p, p2}, t);
            Tensor<double> b =
                apply_rope(qk, {{p.l + d.l, p.i + d.i, p.j + d.j},
                                {p2.l + d.l, p2.i + d.i, p2.j + d.j}},
                           t);
            double dot_a = 0, dot_b = 0;
            for (std::size_t j = 0; j < 8; ++j) {
                dot_a += a.at2(0, j) * a.at2(1, j);
                dot_b += b.at2(0, j) * b.at2(1, j);
            }
            REQUIRE(std::abs(dot_a - dot_b) < 1e-5);
        }
    }
    SECTION("positions length mismatch rejected") {
        Tensor<double> x(Shape{2, 8});
        REQUIRE_THROWS_AS(apply_rope(x, {{0, 0, 0}}, t), ShapeError);
    }
}

TEST_CASE("image latent positions") {
    SECTION("Eq.-2 shift") {
        std::vector<PositionTriple> p = image_latent_positions(4, 3);
        REQUIRE(p[0].l == -1);
        REQUIRE(p[0].i == 4);
        REQUIRE(p[0].j == 3);
    }
    SECTION("1x1 grid") {
        std::vector<PositionTriple> p = image_latent_positions(1, 1);
        REQUIRE(p.size() == 1);
        REQUIRE(p[0].l == -1);
        REQUIRE(p[0].i == 1);
        REQUIRE(p[0].j == 1);
    }
    SECTION("disjoint from video positions, exhaustive up to 8x8") {
        for (std::size_t w = 1; w <= 8; ++w)
            for (std::size_t h = 1; h <= 8; ++h) {
                std::set<std::tuple<int, int, int>> video;
                for (const PositionTriple& p : video_positions(9, w, h))
                    video.insert({p.l, p.i, p.j});
                for (const PositionTriple& p : image_latent_positions(w, h))
                    REQUIRE(video.count({p.l, p.i, p.j}) == 0);
            }
    }
}

TEST_CASE("precomputed rope rows replicate the per-head ladder") {
    RotaryTable t = RotaryTable::make(8);
    std::vector<PositionTriple> pos{{3, 1, 2}};
    RopeRows<double> rows = precompute_rope_rows<double>(pos, t, 2); // d_model 16
    std::vector<double> ang = rope_angles(pos[0], t);
    for (std::size_t head = 0; head < 2; ++head)
        for (std::size_t p = 0; p < 4; ++p) {
            REQUIRE(rows.cos_t[head * 4 + p] == Catch::Approx(std::cos(ang[p])));
            REQUIRE(rows.sin_t[head * 4 + p] == Catch::Approx(std::sin(ang[p])));
        }
}
