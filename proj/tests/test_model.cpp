#include <doctest.h>

#include "selfpath/common.hpp"
#include "selfpath/model.hpp"

#include <cmath>
#include <cstdio>

using namespace selfpath;
using namespace selfpath::model;

namespace {

Tensor random_batch(int n, int c, int s, uint64_t seed) {
    Rng rng(seed);
    Tensor t(n, c, s, s);
    for (float& v : t.v) v = static_cast<float>(rng.uniform());
    return t;
}

EncoderConfig small_cfg(int input = 32, int fw = 16) {
    EncoderConfig cfg;
    cfg.arch = "small-conv";
    cfg.input_size = input;
    cfg.feature_width = fw;
    return cfg;
}

}  // namespace

TEST_CASE("encoder forward contract") {
    ModelGraph m(small_cfg(), 5);
    const Tensor x = random_batch(4, 3, 32, 1);

    SUBCASE("deterministic, duplicate inputs give identical rows") {
        Tensor x2 = x;
        for (int c = 0; c < 3; ++c)
            for (int p = 0; p < 32 * 32; ++p)
                x2.v[(3 * 3 + c) * 1024 + p] = x.v[(0 * 3 + c) * 1024 + p];  // row 3 := row 0
        const Tensor f1 = m.forward_shared(x2);
        const Tensor f2 = m.forward_shared(x2);
        CHECK(f1.v == f2.v);
        for (int j = 0; j < f1.c; ++j)
            CHECK(f1.v[static_cast<size_t>(3) * f1.c + j] == f1.v[static_cast<size_t>(0) * f1.c + j]);
    }
    SUBCASE("feature width matches the config") {
        const Tensor f = m.forward_shared(x);
        CHECK(f.n == 4);
        CHECK(f.c == 16);
        CHECK(f.h == 1);
        CHECK(f.w == 1);
    }
    SUBCASE("batch independence is exact (no batch-coupled layers)") {
        const Tensor fa = m.forward_shared(x);
        Tensor one(1, 3, 32, 32);
        for (int c = 0; c < 3; ++c)
            for (int p = 0; p < 1024; ++p) one.v[static_cast<size_t>(c) * 1024 + p] = x.v[(2 * 3 + c) * 1024 + p];
        const Tensor fb = m.forward_shared(one);
        for (int j = 0; j < fa.c; ++j)
            CHECK(fb.v[static_cast<size_t>(j)] ==
                  doctest::Approx(fa.v[static_cast<size_t>(2) * fa.c + j]).epsilon(1e-5));
    }
    SUBCASE("shape mismatch is a parameter error") {
        CHECK_THROWS_AS(m.forward_shared(random_batch(2, 3, 16, 2)), ConfigError);
    }
    SUBCASE("deep-residual preset works end to end") {
        EncoderConfig cfg;
        cfg.arch = "deep-residual";
        cfg.input_size = 32;
        cfg.feature_width = 16;
        ModelGraph dm(cfg, 6);
        dm.add_classifier_head("main", 2);
        const Tensor f = dm.forward_shared(x);
        CHECK(f.c == 16);
        Tensor logits = dm.head_forward("main", f);
        Tensor d;
        softmax_ce(logits, {0, 1, 0, 1}, &d);
        const Tensor gin = dm.backward_shared(dm.head_backward("main", d));
        CHECK(gin.c == 3);
        CHECK(gin.h == 32);
    }
}

TEST_CASE("softmax heads produce a probability simplex") {
    ModelGraph m(small_cfg(), 7);
    m.add_classifier_head("main", 5);
    const Tensor x = random_batch(6, 3, 32, 3);
    const Tensor p = m.predict_proba(x);
    for (int i = 0; i < p.n; ++i) {
        double sum = 0.0;
        for (int j = 0; j < p.c; ++j) {
            CHECK(p.v[static_cast<size_t>(i) * p.c + j] >= 0.f);
            sum += p.v[static_cast<size_t>(i) * p.c + j];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("gradient reversal layer") {
    SUBCASE("forward is the identity") {
        GradientReversal grl(0.7);
        Tensor x = random_batch(2, 4, 1, 4);
        CHECK(grl.forward(x).v == x.v);
    }
    SUBCASE("lambda=1 negates the upstream gradient exactly") {
        GradientReversal grl(1.0);
        Tensor g = random_batch(2, 4, 1, 4);
        const Tensor out = grl.backward(g);
        for (size_t i = 0; i < g.v.size(); ++i) CHECK(out.v[i] == -g.v[i]);
    }
    SUBCASE("lambda=0 zeroes the gradient") {
        GradientReversal grl(0.0);
        Tensor g = random_batch(2, 4, 1, 4);
        for (float v : grl.backward(g).v) CHECK(v == 0.f);
    }
    SUBCASE("negative lambda is rejected") {
        CHECK_THROWS_AS(GradientReversal(-0.5), ConfigError);
    }
}

// Toy 2-layer encoder + domain head in double precision. The analytic
// gradient treats the reversal exactly like model::GradientReversal does
// (multiply by -lambda on the way back); finite differences perturb the
// forward pass, which contains no reversal.
namespace toy {

struct Net {
    // encoder: dense(3->4) relu dense(4->4); domain head: dense(4->2) + CE
    double w1[4][3], b1[4], w2[4][4], b2[4], w3[2][4], b3[2];
    double lambda = 1.0;

    double forward(const double x[3], int label, double a1[4], double h1[4], double f[4],
                   double logits[2]) const {
        for (int i = 0; i < 4; ++i) {
            a1[i] = b1[i];
            for (int j = 0; j < 3; ++j) a1[i] += w1[i][j] * x[j];
            h1[i] = a1[i] > 0 ? a1[i] : 0;
        }
        for (int i = 0; i < 4; ++i) {
            f[i] = b2[i];
            for (int j = 0; j < 4; ++j) f[i] += w2[i][j] * h1[j];
        }
        for (int k = 0; k < 2; ++k) {
            logits[k] = b3[k];
            for (int j = 0; j < 4; ++j) logits[k] += w3[k][j] * f[j];
        }
        const double mx = std::max(logits[0], logits[1]);
        const double lse = mx + std::log(std::exp(logits[0] - mx) + std::exp(logits[1] - mx));
        return lse - logits[label];
    }

    double loss(const double x[3], int label) const {
        double a1[4], h1[4], f[4], logits[2];
        return forward(x, label, a1, h1, f, logits);
    }

    // encoder gradients; with_grl applies the -lambda flip at the
    // feature boundary, mirroring the production layer
    void encoder_grads(const double x[3], int label, bool with_grl, double gw1[4][3],
                       double gw2[4][4]) const {
        double a1[4], h1[4], f[4], logits[2];
        forward(x, label, a1, h1, f, logits);
        const double mx = std::max(logits[0], logits[1]);
        const double z0 = std::exp(logits[0] - mx), z1 = std::exp(logits[1] - mx);
        double dlogits[2] = {z0 / (z0 + z1), z1 / (z0 + z1)};
        dlogits[label] -= 1.0;
        double df[4] = {0, 0, 0, 0};
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 2; ++k) df[j] += dlogits[k] * w3[k][j];
        if (with_grl)
            for (int j = 0; j < 4; ++j) df[j] *= -lambda;
        double dh1[4] = {0, 0, 0, 0};
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                gw2[i][j] = df[i] * h1[j];
                dh1[j] += df[i] * w2[i][j];
            }
        for (int i = 0; i < 4; ++i) {
            const double da = a1[i] > 0 ? dh1[i] : 0.0;
            for (int j = 0; j < 3; ++j) gw1[i][j] = da * x[j];
        }
    }
};

}  // namespace toy

TEST_CASE("GRL gradients: analytic equals -lambda x identity and matches finite differences") {
    toy::Net net;
    Rng rng(123);
    for (auto& row : net.w1)
        for (double& v : row) v = rng.normal(0, 0.8);
    for (auto& row : net.w2)
        for (double& v : row) v = rng.normal(0, 0.8);
    for (auto& row : net.w3)
        for (double& v : row) v = rng.normal(0, 0.8);
    for (double& v : net.b1) v = rng.normal(0, 0.2);
    for (double& v : net.b2) v = rng.normal(0, 0.2);
    for (double& v : net.b3) v = rng.normal(0, 0.2);
    const double x[3] = {0.4, -0.7, 1.1};
    const int label = 1;

    for (double lambda : {1.0, 0.5, 2.0}) {
        net.lambda = lambda;
        double g_grl1[4][3], g_grl2[4][4], g_id1[4][3], g_id2[4][4];
        net.encoder_grads(x, label, true, g_grl1, g_grl2);
        net.encoder_grads(x, label, false, g_id1, g_id2);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 3; ++j)
                CHECK(g_grl1[i][j] == doctest::Approx(-lambda * g_id1[i][j]).epsilon(1e-12));
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j)
                CHECK(g_grl2[i][j] == doctest::Approx(-lambda * g_id2[i][j]).epsilon(1e-12));

        // central differences on the (reversal-free) forward loss, step 1e-3
        double max_rel = 0.0;
        const double h = 1e-3;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 3; ++j) {
                const double keep = net.w1[i][j];
                net.w1[i][j] = keep + h;
                const double lp = net.loss(x, label);
                net.w1[i][j] = keep - h;
                const double lm = net.loss(x, label);
                net.w1[i][j] = keep;
                const double fd = (lp - lm) / (2 * h);
                const double an = -g_grl1[i][j] / lambda;  // identity-direction gradient
                const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
                max_rel = std::max(max_rel, std::abs(fd - an) / denom);
            }
        CHECK(max_rel < 1e-4);
    }
}

TEST_CASE("GRL on the production graph flips encoder gradients") {
    // same seed twice: lambda 1 vs lambda 2; encoder grads must scale by -2/-1
    auto run = [&](double lambda) {
        ModelGraph m(small_cfg(16, 8), 40);
        m.add_domain_head("domain", lambda);
        const Tensor x = random_batch(4, 3, 16, 9);
        Tensor f = m.forward_shared(x);
        Tensor logits = m.head_forward("domain", f);
        Tensor d;
        softmax_ce(logits, {0, 1, 0, 1}, &d);
        m.backward_shared(m.head_backward("domain", d));
        std::vector<float> grads;
        for (const Param& p : m.encoder_params())
            grads.insert(grads.end(), p.grad->begin(), p.grad->end());
        return grads;
    };
    const auto g1 = run(1.0);
    const auto g2 = run(2.0);
    REQUIRE(g1.size() == g2.size());
    double max_abs = 0.0;
    for (float g : g1) max_abs = std::max(max_abs, std::abs(static_cast<double>(g)));
    CHECK(max_abs > 0.0);
    for (size_t i = 0; i < g1.size(); ++i)
        CHECK(static_cast<double>(g2[i]) == doctest::Approx(2.0 * g1[i]).epsilon(1e-4));
}

TEST_CASE("discriminator head") {
    ModelGraph m(small_cfg(), 11);
    m.add_discriminator_head("dis");
    const Tensor x = random_batch(8, 3, 32, 5);
    const Tensor f = m.forward_shared(x);
    const Tensor p = m.discriminate(f);

    SUBCASE("outputs live strictly inside (0,1)") {
        for (float v : p.v) {
            CHECK(v > 0.f);
            CHECK(v < 1.f);
        }
    }
    SUBCASE("discriminator loss at D=0.5 equals 2 ln 2") {
        Tensor logits(4, 1, 1, 1);  // sigmoid(0) = 0.5
        const double l = neg_log_one_minus_sigmoid_mean(logits, nullptr) +
                         neg_log_sigmoid_mean(logits, nullptr);
        CHECK(l == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-9));
        CHECK(l == doctest::Approx(1.3863).epsilon(1e-4));
    }
    SUBCASE("perfect discriminator drives the loss to zero") {
        Tensor real_logits(4, 1, 1, 1);
        Tensor gen_logits(4, 1, 1, 1);
        for (float& v : real_logits.v) v = -25.f;  // D(real) -> 0
        for (float& v : gen_logits.v) v = 25.f;    // D(gen) -> 1
        const double l = neg_log_one_minus_sigmoid_mean(real_logits, nullptr) +
                         neg_log_sigmoid_mean(gen_logits, nullptr);
        CHECK(l < 1e-6);
    }
}

TEST_CASE("generator") {
    EncoderConfig cfg = small_cfg(32, 16);
    ModelGraph m(cfg, 13);
    m.add_generator({10, 32, 3});

    Rng rng(55);
    Tensor z(6, 10, 1, 1);
    for (float& v : z.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));

    const Tensor img = m.generator_forward(z);
    SUBCASE("output shape and range") {
        CHECK(img.n == 6);
        CHECK(img.c == 3);
        CHECK(img.h == 32);
        CHECK(img.w == 32);
        for (float v : img.v) {
            CHECK(v >= 0.f);
            CHECK(v <= 1.f);
        }
    }
    SUBCASE("same z twice is identical; distinct z differ") {
        const Tensor img2 = m.generator_forward(z);
        CHECK(img.v == img2.v);
        int distinct_pairs = 0;
        for (int trial = 0; trial < 16; ++trial) {
            Tensor za(1, 10, 1, 1), zb(1, 10, 1, 1);
            for (float& v : za.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
            for (float& v : zb.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));
            const Tensor ia = m.generator_forward(za);
            const Tensor ib = m.generator_forward(zb);
            double diff = 0.0;
            for (size_t i = 0; i < ia.v.size(); ++i) diff += std::abs(static_cast<double>(ia.v[i]) - ib.v[i]);
            if (diff > 1e-6) ++distinct_pairs;
        }
        CHECK(distinct_pairs == 16);
    }
    SUBCASE("noise dimension mismatch is rejected") {
        CHECK_THROWS_AS(m.generator_forward(random_batch(2, 7, 1, 1)), ConfigError);
    }
}

TEST_CASE("decoder output matches the input spatial size") {
    for (int input : {32, 64}) {
        ModelGraph m(small_cfg(input, 16), 17);
        m.add_decoder_head("autoencoder", 3);
        m.add_decoder_head("hematoxylin", 1);
        const Tensor x = random_batch(2, 3, input, 19);
        const Tensor f = m.forward_shared(x);
        const Tensor rec = m.head_forward("autoencoder", f);
        CHECK(rec.c == 3);
        CHECK(rec.h == input);
        CHECK(rec.w == input);
        const Tensor hem = m.head_forward("hematoxylin", f);
        CHECK(hem.c == 1);
        CHECK(hem.h == input);
    }
}

TEST_CASE("checkpoint reload is bit-stable") {
    ModelGraph m(small_cfg(32, 16), 23);
    m.add_classifier_head("main", 3);
    m.add_domain_head("domain", 1.5);
    m.add_decoder_head("hematoxylin", 1);
    m.add_discriminator_head("dis");
    m.add_generator({8, 32, 3});

    const std::string path = "/tmp/selfpath_ckpt_test.spck";
    m.save(path);
    ModelGraph m2 = ModelGraph::load(path);

    auto p1 = m.params();
    auto p2 = m2.params();
    REQUIRE(p1.size() == p2.size());
    for (size_t i = 0; i < p1.size(); ++i) {
        CHECK(p1[i].name == p2[i].name);
        CHECK(*p1[i].value == *p2[i].value);
    }
    const Tensor x = random_batch(3, 3, 32, 29);
    CHECK(m.forward_shared(x).v == m2.forward_shared(x).v);
    CHECK(m.predict_proba(x).v == m2.predict_proba(x).v);
    CHECK(m2.head_config("domain").grl_lambda == 1.5);
    std::remove(path.c_str());
}

TEST_CASE("loss helpers") {
    SUBCASE("softmax_ce of a one-hot-perfect head is ~0, gradient is correct") {
        Tensor logits(2, 3, 1, 1);
        logits.v = {30.f, 0.f, 0.f, 0.f, 30.f, 0.f};
        Tensor d;
        const double l = softmax_ce(logits, {0, 1}, &d);
        CHECK(l < 1e-9);
    }
    SUBCASE("l1 loss and gradient") {
        Tensor a(1, 1, 2, 2), b(1, 1, 2, 2);
        a.v = {1.f, 2.f, 3.f, 4.f};
        b.v = {2.f, 2.f, 2.f, 2.f};
        Tensor d;
        const double l = l1_loss(a, b, &d);
        CHECK(l == doctest::Approx((1 + 0 + 1 + 2) / 4.0));
        CHECK(d.v[0] == doctest::Approx(-0.25f));
        CHECK(d.v[1] == doctest::Approx(0.f));
        CHECK(d.v[2] == doctest::Approx(0.25f));
    }
    SUBCASE("label out of range is rejected") {
        Tensor logits(1, 2, 1, 1);
        CHECK_THROWS_AS(softmax_ce(logits, {2}, nullptr), ConfigError);
    }
}

TEST_CASE("adam descends a simple quadratic") {
    std::vector<float> w{5.f, -3.f};
    std::vector<float> g(2, 0.f);
    Adam opt(0.05);
    std::vector<Param> params{{"w", &w, &g}};
    for (int it = 0; it < 400; ++it) {
        g[0] = 2.f * w[0];
        g[1] = 2.f * w[1];
        opt.step(params);
    }
    CHECK(std::abs(w[0]) < 0.05f);
    CHECK(std::abs(w[1]) < 0.05f);
}
