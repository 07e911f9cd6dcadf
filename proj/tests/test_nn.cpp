#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "con2/losses.hpp"
#include "con2/model.hpp"
#include "con2/nn.hpp"

using namespace con2;

namespace {

Batch random_batch(Rng& rng, int n, int c, int h, int w, double scale = 1.0) {
    Batch b(n, c, h, w);
    for (auto& v : b.v) v = static_cast<float>(rng.normal(0.0, scale));
    return b;
}

// Scalar objective L = sum(grad_out * forward(x)) whose input/parameter
// gradients the layers must reproduce.
template <class Forward>
double probe_loss(const Batch& grad_out, Forward&& fwd) {
    Batch y = fwd();
    double s = 0.0;
    for (std::size_t i = 0; i < y.v.size(); ++i) s += double(grad_out.v[i]) * y.v[i];
    return s;
}

template <class Forward>
void check_grad_entries(std::vector<float>& values, const std::vector<float>& analytic,
                        const Batch& grad_out, Forward&& fwd, double h, double tol,
                        int stride = 1) {
    for (std::size_t i = 0; i < values.size(); i += stride) {
        float orig = values[i];
        values[i] = orig + static_cast<float>(h);
        double up = probe_loss(grad_out, fwd);
        values[i] = orig - static_cast<float>(h);
        double down = probe_loss(grad_out, fwd);
        values[i] = orig;
        double numeric = (up - down) / (2.0 * h);
        double scale = std::max({std::abs(numeric), std::abs(double(analytic[i])), 1.0});
        INFO("entry " << i << " numeric " << numeric << " analytic " << analytic[i]);
        REQUIRE(std::abs(numeric - double(analytic[i])) / scale < tol);
    }
}

}  // namespace

TEST_CASE("conv2d gradients match finite differences", "[nn]") {
    Rng rng(41);
    Conv2d conv(2, 3, 3, 1, 1);
    conv.init(rng);
    Batch x = random_batch(rng, 2, 2, 5, 5);
    Batch y = conv.forward(x);
    Batch grad_out = random_batch(rng, y.n, y.c, y.h, y.w);

    for (Param* p : conv.params()) p->zero_grad();
    Batch grad_x = conv.backward(grad_out);

    auto fwd = [&] { return conv.forward(x); };
    check_grad_entries(conv.params()[0]->w, conv.params()[0]->g, grad_out, fwd, 1e-3, 1e-3, 7);
    check_grad_entries(conv.params()[1]->w, conv.params()[1]->g, grad_out, fwd, 1e-3, 1e-3);

    std::vector<float> gx(grad_x.v.begin(), grad_x.v.end());
    check_grad_entries(x.v, gx, grad_out, fwd, 1e-3, 1e-3, 11);
}

TEST_CASE("conv2d stride and padding shapes", "[nn]") {
    Rng rng(42);
    Conv2d conv(3, 8, 7, 2, 3);
    conv.init(rng);
    Batch x = random_batch(rng, 1, 3, 32, 32);
    Batch y = conv.forward(x);
    REQUIRE(y.c == 8);
    REQUIRE(y.h == 16);
    REQUIRE(y.w == 16);
}

TEST_CASE("batchnorm gradients match finite differences", "[nn]") {
    Rng rng(43);
    BatchNorm2d bn(3);
    Batch x = random_batch(rng, 4, 3, 3, 3);

    SECTION("train mode") {
        Batch y = bn.forward(x, true);
        Batch grad_out = random_batch(rng, y.n, y.c, y.h, y.w);
        for (Param* p : bn.params()) p->zero_grad();
        Batch grad_x = bn.backward(grad_out);
        auto fwd = [&] { return bn.forward(x, true); };
        check_grad_entries(bn.params()[0]->w, bn.params()[0]->g, grad_out, fwd, 1e-3, 2e-2);
        check_grad_entries(bn.params()[1]->w, bn.params()[1]->g, grad_out, fwd, 1e-3, 2e-2);
        std::vector<float> gx(grad_x.v.begin(), grad_x.v.end());
        check_grad_entries(x.v, gx, grad_out, fwd, 1e-3, 2e-2, 5);
    }
    SECTION("eval mode uses running stats and is deterministic") {
        bn.forward(x, true);  // populate running stats
        Batch y1 = bn.forward(x, false);
        Batch y2 = bn.forward(x, false);
        REQUIRE(y1.v == y2.v);
        Batch grad_out = random_batch(rng, y1.n, y1.c, y1.h, y1.w);
        for (Param* p : bn.params()) p->zero_grad();
        Batch grad_x = bn.backward(grad_out);
        auto fwd = [&] { return bn.forward(x, false); };
        std::vector<float> gx(grad_x.v.begin(), grad_x.v.end());
        check_grad_entries(x.v, gx, grad_out, fwd, 1e-3, 1e-2, 5);
    }
}

TEST_CASE("dense gradients match finite differences", "[nn]") {
    Rng rng(44);
    Dense fc(6, 4);
    fc.init(rng);
    Batch x = random_batch(rng, 3, 6, 1, 1);
    Batch y = fc.forward(x);
    Batch grad_out = random_batch(rng, y.n, y.c, y.h, y.w);
    for (Param* p : fc.params()) p->zero_grad();
    Batch grad_x = fc.backward(grad_out);
    auto fwd = [&] { return fc.forward(x); };
    check_grad_entries(fc.params()[0]->w, fc.params()[0]->g, grad_out, fwd, 1e-3, 1e-3);
    check_grad_entries(fc.params()[1]->w, fc.params()[1]->g, grad_out, fwd, 1e-3, 1e-3);
    std::vector<float> gx(grad_x.v.begin(), grad_x.v.end());
    check_grad_entries(x.v, gx, grad_out, fwd, 1e-3, 1e-3);
}

TEST_CASE("pooling and relu gradients", "[nn]") {
    Rng rng(45);
    SECTION("max pool routes gradient to the argmax") {
        MaxPool2d pool(2, 2);
        Batch x = random_batch(rng, 2, 2, 4, 4);
        Batch y = pool.forward(x);
        REQUIRE(y.h == 2);
        Batch grad_out = random_batch(rng, y.n, y.c, y.h, y.w);
        Batch grad_x = pool.backward(grad_out);
        auto fwd = [&] { return pool.forward(x); };
        std::vector<float> gx(grad_x.v.begin(), grad_x.v.end());
        check_grad_entries(x.v, gx, grad_out, fwd, 1e-4, 1e-3);
    }
    SECTION("global average pool") {
        GlobalAvgPool gap;
        Batch x = random_batch(rng, 2, 3, 4, 4);
        Batch y = gap.forward(x);
        REQUIRE(y.h == 1);
        REQUIRE(y.w == 1);
        Batch grad_out = random_batch(rng, 2, 3, 1, 1);
        Batch grad_x = gap.backward(grad_out);
        auto fwd = [&] { return gap.forward(x); };
        std::vector<float> gx(grad_x.v.begin(), grad_x.v.end());
        check_grad_entries(x.v, gx, grad_out, fwd, 1e-4, 1e-3);
    }
    SECTION("relu masks negatives") {
        ReLU relu;
        Batch x = random_batch(rng, 1, 4, 2, 2);
        Batch y = relu.forward(x);
        for (std::size_t i = 0; i < x.v.size(); ++i)
            REQUIRE(y.v[i] == (x.v[i] > 0.0f ? x.v[i] : 0.0f));
        Batch grad_out = random_batch(rng, 1, 4, 2, 2);
        Batch grad_x = relu.backward(grad_out);
        for (std::size_t i = 0; i < x.v.size(); ++i)
            REQUIRE(grad_x.v[i] == (x.v[i] > 0.0f ? grad_out.v[i] : 0.0f));
    }
}

TEST_CASE("adamw first step matches the closed form", "[nn]") {
    Param p(2);
    p.w = {1.0f, -2.0f};
    p.g = {0.5f, 0.25f};
    AdamW opt;
    opt.weight_decay = 0.01;
    opt.step({&p}, 0.1);
    // bias-corrected first step: mhat = g, vhat = g^2 -> update = lr*(g/(|g|+eps) + wd*w)
    double u0 = 0.1 * (0.5 / (0.5 + 1e-8) + 0.01 * 1.0);
    double u1 = 0.1 * (0.25 / (0.25 + 1e-8) + 0.01 * -2.0);
    REQUIRE_THAT(p.w[0], Catch::Matchers::WithinAbs(1.0 - u0, 1e-6));
    REQUIRE_THAT(p.w[1], Catch::Matchers::WithinAbs(-2.0 - u1, 1e-6));
}

TEST_CASE("adamw with zero learning rate never moves parameters", "[nn]") {
    Rng rng(46);
    Param p(8);
    for (auto& w : p.w) w = static_cast<float>(rng.normal());
    auto before = p.w;
    AdamW opt;
    for (int i = 0; i < 5; ++i) {
        for (auto& g : p.g) g = static_cast<float>(rng.normal());
        opt.step({&p}, 0.0);
    }
    REQUIRE(p.w == before);
}

TEST_CASE("tiny-cnn encoder", "[nn]") {
    Rng rng(47);
    TinyCnnEncoder enc;
    enc.init(rng);
    Batch x = random_batch(rng, 3, 3, 16, 16);
    Batch reps = enc.forward(x, false);
    REQUIRE(reps.n == 3);
    REQUIRE(reps.c == 64);
    REQUIRE(reps.h == 1);
    Batch again = enc.forward(x, false);
    REQUIRE(reps.v == again.v);
}

TEST_CASE("resnet18 encoder produces 512-d representations", "[nn]") {
    Rng rng(48);
    ResNet18Encoder enc;
    enc.init(rng);
    Batch x = random_batch(rng, 1, 3, 32, 32);
    Batch reps = enc.forward(x, false);
    REQUIRE(reps.n == 1);
    REQUIRE(reps.c == 512);
    for (float v : reps.v) REQUIRE(std::isfinite(v));
    // 20 convs (17 main + 3 projection shortcuts) and 20 batchnorms, 2 each
    REQUIRE(enc.params().size() == 80);
    REQUIRE(enc.buffers().size() == 40);
}

TEST_CASE("end-to-end model gradient spot check", "[nn][gradients]") {
    Rng rng(49);
    ModelConfig cfg;
    cfg.input_size = 8;
    Con2Model model(cfg);
    model.init(rng);

    Batch x = random_batch(rng, 4, 3, 8, 8, 0.5);
    std::vector<int> labels = {0, 0, 1, 1};
    std::vector<int> ids = {0, 0, 0, 0};

    auto loss_of = [&]() {
        Batch reps = model.encoder->forward(x, true);
        Batch zc = model.head_context.forward(reps);
        Batch zn = model.head_content.forward(reps);
        ProjectionSet ctx, cnt;
        ctx.tau = cnt.tau = 0.5;
        ctx.labels = cnt.labels = labels;
        ctx.ids = cnt.ids = ids;
        for (int i = 0; i < 4; ++i) {
            ctx.vectors.push_back({});
            cnt.vectors.push_back({});
            for (int j = 0; j < zc.c; ++j) ctx.vectors[i].push_back(zc.at(i, j, 0, 0));
            for (int j = 0; j < zn.c; ++j) cnt.vectors[i].push_back(zn.at(i, j, 0, 0));
        }
        return con2_loss(ctx, cnt, 0.7);
    };

    // analytic: backprop the loss gradients through heads and encoder
    model.zero_grad();
    Batch reps = model.encoder->forward(x, true);
    Batch zc = model.head_context.forward(reps);
    Batch zn = model.head_content.forward(reps);
    ProjectionSet ctx, cnt;
    ctx.tau = cnt.tau = 0.5;
    ctx.labels = cnt.labels = labels;
    ctx.ids = cnt.ids = ids;
    for (int i = 0; i < 4; ++i) {
        ctx.vectors.push_back({});
        cnt.vectors.push_back({});
        for (int j = 0; j < zc.c; ++j) ctx.vectors[i].push_back(zc.at(i, j, 0, 0));
        for (int j = 0; j < zn.c; ++j) cnt.vectors[i].push_back(zn.at(i, j, 0, 0));
    }
    auto grads = con2_loss_grad(ctx, cnt, 0.7);
    Batch gc(4, zc.c, 1, 1), gn(4, zn.c, 1, 1);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < zc.c; ++j)
            gc.at(i, j, 0, 0) = static_cast<float>(grads.context_grad[i][j]);
        for (int j = 0; j < zn.c; ++j)
            gn.at(i, j, 0, 0) = static_cast<float>(grads.content_grad[i][j]);
    }
    Batch grad_reps = model.head_context.backward(gc);
    Batch g2 = model.head_content.backward(gn);
    for (std::size_t i = 0; i < grad_reps.v.size(); ++i) grad_reps.v[i] += g2.v[i];
    model.encoder->backward(grad_reps);

    // finite differences on a few parameters from each component
    auto params = model.params();
    Rng pick(50);
    for (int trial = 0; trial < 8; ++trial) {
        Param* p = params[pick.below(params.size())];
        if (p->w.empty()) continue;
        std::size_t i = pick.below(p->w.size());
        const double h = 2e-3;
        float orig = p->w[i];
        p->w[i] = orig + static_cast<float>(h);
        double up = loss_of().total;
        p->w[i] = orig - static_cast<float>(h);
        double down = loss_of().total;
        p->w[i] = orig;
        double numeric = (up - down) / (2.0 * h);
        double analytic = p->g[i];
        double scale = std::max({std::abs(numeric), std::abs(analytic), 0.05});
        INFO("trial " << trial << " numeric " << numeric << " analytic " << analytic);
        REQUIRE(std::abs(numeric - analytic) / scale < 5e-2);
    }
}

TEST_CASE("projection heads are independent", "[nn]") {
    Rng rng(51);
    ModelConfig cfg;
    cfg.input_size = 8;
    Con2Model model(cfg);
    model.init(rng);

    Batch r = random_batch(rng, 1, 64, 1, 1);
    Batch ctx_before = model.head_context.forward(r);
    Batch cnt_before = model.head_content.forward(r);

    // perturbing h_phi changes the context projection but not the content one
    model.context_head_params()[0]->w[0] += 0.5f;
    Batch ctx_after = model.head_context.forward(r);
    Batch cnt_after = model.head_content.forward(r);
    REQUIRE(ctx_after.v != ctx_before.v);
    REQUIRE(cnt_after.v == cnt_before.v);
}
