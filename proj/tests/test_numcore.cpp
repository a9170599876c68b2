#include <catch2/catch_amalgamated.hpp>

#include "avdt/attention.hpp"
#include "avdt/autodiff.hpp"
#include "avdt/optim.hpp"
#include "avdt/rng.hpp"
#include "avdt/tensor.hpp"
#include "test_helpers.hpp"

using namespace avdt;
using avdt::testing::fd_check;

TEST_CASE("tensor shape bookkeeping and finiteness") {
    Tensor<float> t(Shape{2, 3}, 1.0f);
    REQUIRE(t.numel() == 6);
    REQUIRE(t.dtype() == Dtype::F32);
    t[0] = std::numeric_limits<float>::infinity();
    REQUIRE_FALSE(t.all_finite());
    REQUIRE_THROWS_AS(t.require_finite("test"), NumericError);
    REQUIRE_THROWS_AS(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
}

TEST_CASE("seeded rng is deterministic and counter-based") {
    SeededRng a(42), b(42);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
    // Resuming from (seed, counter) continues the same stream.
    SeededRng c(42);
    for (int i = 0; i < 50; ++i) c.next_u64();
    SeededRng d(42, c.counter());
    SeededRng e(42);
    for (int i = 0; i < 50; ++i) e.next_u64();
    for (int i = 0; i < 10; ++i) REQUIRE(d.next_u64() == e.next_u64());
    // Different seeds diverge.
    SeededRng f(43);
    REQUIRE(SeededRng(42).next_u64() != f.next_u64());
}

TEST_CASE("matmul examples") {
    Tape<float> g;
    // identity(2) x [[3,4],[5,6]]
    Var<float> id = g.constant(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 0, 0, 1}));
    Var<float> m = g.constant(Tensor<float>(Shape{2, 2}, std::vector<float>{3, 4, 5, 6}));
    Var<float> out = g.matmul(id, m);
    REQUIRE(out->value.vec() == std::vector<float>{3, 4, 5, 6});

    // [[1,2]] x [[0],[0]] -> [[0]]
    Var<float> a = g.constant(Tensor<float>(Shape{1, 2}, std::vector<float>{1, 2}));
    Var<float> z = g.constant(Tensor<float>(Shape{2, 1}, std::vector<float>{0, 0}));
    REQUIRE(g.matmul(a, z)->value.vec() == std::vector<float>{0});

    // [[1,2],[3,4]] x [[5],[6]] -> [[17],[39]]
    Var<float> p = g.constant(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 2, 3, 4}));
    Var<float> q = g.constant(Tensor<float>(Shape{2, 1}, std::vector<float>{5, 6}));
    REQUIRE(g.matmul(p, q)->value.vec() == std::vector<float>{17, 39});

    // shape mismatch surfaces as an error
    REQUIRE_THROWS_AS(g.matmul(q, q), ShapeError);
}

TEST_CASE("softmax examples and row normalization") {
    Tensor<double> x(Shape{2}, std::vector<double>{0, 0});
    Tensor<double> s = softmax_plain(x, 0);
    REQUIRE(s[0] == Catch::Approx(0.5).epsilon(1e-12));

    // shift invariance
    Tensor<double> c(Shape{3}, std::vector<double>{7.25, 7.25, 7.25});
    Tensor<double> sc = softmax_plain(c, 0);
    for (int i = 0; i < 3; ++i) REQUIRE(sc[i] == Catch::Approx(1.0 / 3.0).epsilon(1e-12));

    // scalar exp oracle: softmax([0.70711, 0]) = [0.6698, 0.3302]
    Tensor<double> v(Shape{2}, std::vector<double>{0.70711, 0.0});
    Tensor<double> sv = softmax_plain(v, 0);
    REQUIRE(sv[0] == Catch::Approx(0.6698).margin(1e-4));
    REQUIRE(sv[1] == Catch::Approx(0.3302).margin(1e-4));

    // rows sum to 1 within 1e-12 at 64-bit on random matrices
    SeededRng rng(7);
    Tensor<double> r(Shape{8, 13});
    rng.fill_normal(r, 0.0, 3.0);
    Tensor<double> sr = softmax_plain(r, 1);
    for (std::size_t i = 0; i < 8; ++i) {
        double sum = 0;
        for (std::size_t j = 0; j < 13; ++j) sum += sr.at2(i, j);
        REQUIRE(std::abs(sum - 1.0) < 1e-12);
    }
}

TEST_CASE("backward basics") {
    // loss = sum(p) -> grad all ones
    Tape<double> g;
    ParamStore<double> ps;
    Var<double> p = ps.create("p", Tensor<double>(Shape{3, 2}, std::vector<double>{1, -2, 3, 4, -5, 6}));
    ps.zero_grad();
    g.backward(g.sum_all(p));
    for (std::size_t i = 0; i < 6; ++i) REQUIRE(p->grad[i] == 1.0);

    // loss = ||p||^2 -> grad = 2p
    Tape<double> g2;
    ps.zero_grad();
    g2.backward(g2.sum_all(g2.square(p)));
    for (std::size_t i = 0; i < 6; ++i) REQUIRE(p->grad[i] == Catch::Approx(2 * p->value[i]));

    // non-scalar loss rejected
    Tape<double> g3;
    REQUIRE_THROWS_AS(g3.backward(p), ShapeError);

    // unreachable parameters keep zero gradient
    Var<double> q = ps.create("q", Tensor<double>(Shape{2}, std::vector<double>{1, 1}));
    Tape<double> g4;
    ps.zero_grad();
    g4.backward(g4.sum_all(p));
    REQUIRE(q->grad[0] == 0.0);
    REQUIRE(q->grad[1] == 0.0);
}

TEST_CASE("every primitive matches central differences") {
    SeededRng rng(1234);
    ParamStore<double> ps;
    auto mk = [&](const std::string& n, Shape s) {
        Tensor<double> t(s);
        rng.fill_normal(t, 0.0, 0.7);
        return ps.create(n, t);
    };
    Var<double> a = mk("a", Shape{3, 4});
    Var<double> b = mk("b", Shape{3, 4});
    Var<double> w = mk("w", Shape{4, 5});
    Var<double> bias = mk("bias", Shape{5});
    Var<double> bat_a = mk("bat_a", Shape{2, 3, 4});
    Var<double> bat_b = mk("bat_b", Shape{2, 4, 3});
    Var<double> gate = mk("gate", Shape{1});
    Var<double> table = mk("table", Shape{6, 4});
    Var<double> sc = mk("sc", Shape{4});
    Var<double> sh = mk("sh", Shape{4});

    SECTION("add/sub/mul/scale") {
        auto r = fd_check(
            [&](Tape<double>& g) {
                return g.mean_all(g.mul(g.add(a, b), g.scale(g.sub(a, b), 1.7)));
            },
            {a, b});
        REQUIRE(r.max_rel_err < 1e-6);
    }
    SECTION("matmul/linear") {
        auto r = fd_check(
            [&](Tape<double>& g) { return g.mean_all(g.square(g.linear(a, w, bias))); },
            {a, w, bias});
        REQUIRE(r.max_rel_err < 1e-6);
    }
    SECTION("bmm plain and transposed") {
        auto r = fd_check(
            [&](Tape<double>& g) { return g.mean_all(g.square(g.bmm(bat_a, bat_b))); },
            {bat_a, bat_b});
        REQUIRE(r.max_rel_err < 1e-6);
        auto r2 = fd_check(
            [&](Tape<double>& g) {
                return g.mean_all(g.square(g.bmm(bat_a, bat_a, /*trans_b=*/true)));
            },
            {bat_a});
        REQUIRE(r2.max_rel_err < 1e-6);
    }
    SECTION("softmax/layernorm/silu") {
        auto r = fd_check(
            [&](Tape<double>& g) {
                return g.mean_all(g.mul(g.softmax_last(a), g.silu(g.layernorm_last(b))));
            },
            {a, b});
        REQUIRE(r.max_rel_err < 1e-5);
    }
    SECTION("modulate/scale_by/scale_rows") {
        Tensor<double> weights(Shape{3});
        rng.fill_uniform(weights, 0.0, 1.5);
        auto r = fd_check(
            [&](Tape<double>& g) {
                return g.mean_all(
                    g.square(g.scale_rows(g.scale_by(g.modulate(a, sc, sh), gate), weights)));
            },
            {a, sc, sh, gate});
        REQUIRE(r.max_rel_err < 1e-6);
    }
    SECTION("embedding/concat/slice/repeat/heads") {
        std::vector<int> ids{0, 3, 5, 3};
        auto r = fd_check(
            [&](Tape<double>& g) {
                Var<double> e = g.embedding(table, ids);
                Var<double> cat = g.concat0({e, a});
                Var<double> sl = g.slice0(cat, 1, 4);
                Var<double> rep = g.repeat0(g.reshape(sl, Shape{1, 4, 4}), 3);
                Var<double> heads = g.merge_heads(g.split_heads(rep, 2), 2);
                return g.mean_all(g.square(heads));
            },
            {table, a});
        REQUIRE(r.max_rel_err < 1e-6);
    }
    SECTION("rotate_pairs is an isometry with exact backward") {
        Tensor<double> cs(Shape{3, 2}), sn(Shape{3, 2});
        for (std::size_t i = 0; i < 6; ++i) {
            double th = 0.3 * double(i + 1);
            cs[i] = std::cos(th);
            sn[i] = std::sin(th);
        }
        auto r = fd_check(
            [&](Tape<double>& g) { return g.mean_all(g.square(g.rotate_pairs(a, cs, sn))); },
            {a});
        REQUIRE(r.max_rel_err < 1e-6);
        Tape<double> g;
        Var<double> rot = g.rotate_pairs(a, cs, sn);
        for (std::size_t row = 0; row < 3; ++row) {
            double n0 = 0, n1 = 0;
            for (std::size_t j = 0; j < 4; ++j) {
                n0 += a->value.at2(row, j) * a->value.at2(row, j);
                n1 += rot->value.at2(row, j) * rot->value.at2(row, j);
            }
            REQUIRE(std::sqrt(n1) == Catch::Approx(std::sqrt(n0)).epsilon(1e-12));
        }
    }
}

TEST_CASE("cross attention matches the spec examples") {
    SECTION("single key equal to query copies Wout*v") {
        ParamStore<float> ps;
        SeededRng rng(5);
        AttnProj<float> p = make_attn_proj(ps, "x", 4, 4, 1, rng);
        // Identity q/k/v projections, random output projection.
        auto set_identity = [&](Var<float> w) {
            for (std::size_t i = 0; i < 4; ++i)
                for (std::size_t j = 0; j < 4; ++j) w->value.at2(i, j) = i == j ? 1.0f : 0.0f;
        };
        set_identity(p.wq);
        set_identity(p.wk);
        set_identity(p.wv);
        Tape<float> g;
        Tensor<float> q(Shape{1, 4}, std::vector<float>{0.3f, -0.2f, 0.9f, 0.1f});
        Tensor<float> v(Shape{1, 4}, std::vector<float>{1.0f, 2.0f, -1.0f, 0.5f});
        Var<float> out = cross_attention(g, g.constant(q), g.constant(v), p);
        // Single kv row: attention weight is 1, output = Wout*v + bo.
        Tensor<float> expect = matmul_plain(v, p.wo->value);
        for (std::size_t j = 0; j < 4; ++j)
            REQUIRE(out->value[j] == Catch::Approx(expect[j] + p.bo->value[j]).margin(1e-6));
    }

    SECTION("two-key scalar softmax oracle") {
        // Q=[1,0], K={[1,0],[0,1]}, V={[1,0],[0,2]}, identity projections,
        // scale 1/sqrt(2) -> [0.6698, 0.6604]
        ParamStore<float> ps;
        SeededRng rng(5);
        AttnProj<float> p = make_attn_proj(ps, "x", 2, 2, 1, rng);
        auto set_identity = [&](Var<float> w) {
            for (std::size_t i = 0; i < 2; ++i)
                for (std::size_t j = 0; j < 2; ++j) w->value.at2(i, j) = i == j ? 1.0f : 0.0f;
        };
        set_identity(p.wq);
        set_identity(p.wk);
        set_identity(p.wv);
        set_identity(p.wo);
        Tape<float> g;
        Var<float> q = g.constant(Tensor<float>(Shape{1, 2}, std::vector<float>{1, 0}));
        Var<float> kv = g.constant(Tensor<float>(Shape{2, 2}, std::vector<float>{1, 0, 0, 2}));
        // kv rows serve as both K and V here because projections are identity.
        Var<float> out = cross_attention(g, q, kv, p);
        REQUIRE(out->value[0] == Catch::Approx(0.6698).margin(2e-4));
        REQUIRE(out->value[1] == Catch::Approx(0.6604).margin(2e-4));
    }

    SECTION("identical value rows collapse to that row") {
        ParamStore<float> ps;
        SeededRng rng(11);
        AttnProj<float> p = make_attn_proj(ps, "x", 6, 6, 2, rng);
        Tape<float> g;
        SeededRng data(3);
        Tensor<float> q(Shape{4, 6});
        data.fill_normal(q);
        Tensor<float> row(Shape{1, 6});
        data.fill_normal(row);
        Tensor<float> kv(Shape{5, 6});
        for (int r = 0; r < 5; ++r)
            for (int j = 0; j < 6; ++j) kv.at2(r, j) = row[j];
        Var<float> out = cross_attention(g, g.constant(q), g.constant(kv), p);
        // All value rows equal -> convex combination equals the row, for any query.
        Tensor<float> vproj = matmul_plain(row, p.wv->value);
        for (std::size_t j = 0; j < 6; ++j) vproj[j] += p.bv->value[j];
        Tensor<float> expect = matmul_plain(vproj, p.wo->value);
        for (std::size_t r = 0; r < 4; ++r)
            for (std::size_t j = 0; j < 6; ++j)
                REQUIRE(out->value.at2(r, j) ==
                        Catch::Approx(expect[j] + p.bo->value[j]).margin(1e-5));
    }

    SECTION("gradients flow to tokens and weights") {
        ParamStore<double> ps;
        SeededRng rng(21);
        AttnProj<double> p = make_attn_proj(ps, "x", 4, 4, 2, rng);
        Var<double> q = ps.create("q", Tensor<double>(Shape{3, 4}));
        Var<double> kv = ps.create("kv", Tensor<double>(Shape{5, 4}));
        SeededRng data(8);
        data.fill_normal(q->value, 0.0, 0.5);
        data.fill_normal(kv->value, 0.0, 0.5);
        auto r = fd_check(
            [&](Tape<double>& g) {
                return g.mean_all(g.square(cross_attention(g, q, kv, p)));
            },
            {q, kv, p.wq, p.wk, p.wv, p.wo, p.bq, p.bo});
        REQUIRE(r.max_rel_err < 1e-4);
    }
}

TEST_CASE("optimizers") {
    SECTION("sgd basics") {
        ParamStore<float> ps;
        Var<float> p = ps.create("p", Tensor<float>::scalar(1.0f));
        SgdOptimizer<float> opt;
        opt.lr = 0.1f;
        // zero gradient -> unchanged
        ps.zero_grad();
        opt.step(ps);
        REQUIRE(p->value[0] == 1.0f);
        // lr=0.1, g=1 -> 0.9
        p->grad[0] = 1.0f;
        opt.step(ps);
        REQUIRE(p->value[0] == Catch::Approx(0.9f));
        // missing gradient is an error
        ParamStore<float> ps2;
        ps2.create("q", Tensor<float>::scalar(0.0f));
        REQUIRE_THROWS_AS(opt.step(ps2), NumericError);
    }

    SECTION("adam first step magnitude is about lr") {
        // Scalar recurrence oracle: m_hat = g, v_hat = g^2, step = lr*g/(|g|+eps).
        ParamStore<float> ps;
        Var<float> p = ps.create("p", Tensor<float>::scalar(2.0f));
        AdamOptimizer<float> opt;
        opt.lr = 0.05f;
        ps.zero_grad();
        p->grad[0] = 0.37f; // any constant gradient
        opt.step(ps);
        REQUIRE(std::abs((2.0f - p->value[0]) - 0.05f) < 1e-5f);
    }

    SECTION("adam is deterministic given fixed state") {
        auto run = [] {
            ParamStore<float> ps;
            Var<float> p = ps.create("p", Tensor<float>(Shape{4}, std::vector<float>{1, 2, 3, 4}));
            AdamOptimizer<float> opt;
            opt.lr = 0.01f;
            for (int i = 0; i < 5; ++i) {
                ps.zero_grad();
                for (int j = 0; j < 4; ++j) p->grad[j] = float(j) - 1.5f;
                opt.step(ps);
            }
            return p->value;
        };
        REQUIRE(run().vec() == run().vec());
    }
}

TEST_CASE("tape sweep visits nodes once in reverse topological order") {
    // A diamond: loss = sum((a+a) * (a+a)); each node's backward runs once,
    // so the gradient is exactly 8a.
    ParamStore<double> ps;
    Var<double> a = ps.create("a", Tensor<double>(Shape{3}, std::vector<double>{1, 2, 3}));
    Tape<double> g;
    Var<double> s = g.add(a, a);
    Var<double> loss = g.sum_all(g.mul(s, s));
    ps.zero_grad();
    g.backward(loss);
    for (int i = 0; i < 3; ++i) REQUIRE(a->grad[i] == Catch::Approx(8.0 * a->value[i]));
}
