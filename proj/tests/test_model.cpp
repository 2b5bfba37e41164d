#include "doctest_torch.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "derain/errors.hpp"
#include "derain/model.hpp"
#include "derain/training.hpp"
#include "grad_check.hpp"
#include "support.hpp"

using namespace derain;

namespace {

ArchConfig arch(int res, int base, int cap, int latent = 512) {
    ArchConfig c;
    c.resolution = res;
    c.base_channels = base;
    c.channel_cap = cap;
    c.latent_channels = latent;
    return c;
}

std::int64_t module_parameter_count(torch::nn::Module& m) {
    std::int64_t n = 0;
    for (const auto& p : m.parameters()) n += p.numel();
    return n;
}

torch::Tensor uniform_batch(std::int64_t b, int res, std::uint64_t seed) {
    torch::manual_seed(seed);
    return torch::rand({b, 3, res, res});
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("stage arithmetic") {
    CHECK(arch(256, 64, 512).stages() == 6);
    CHECK(arch(64, 64, 512).stages() == 4);
    CHECK(arch(16, 8, 8).stages() == 2);
    const auto c = arch(256, 64, 512);
    std::vector<int> channels;
    for (int i = 0; i < c.stages(); ++i) channels.push_back(c.stage_channels(i));
    CHECK(channels == std::vector<int>{64, 128, 256, 512, 512, 512});
}

TEST_CASE("invalid resolutions are configuration errors") {
    for (int r : {0, 8, 100, 255, 48}) CHECK_THROWS_AS(build_layer_table(arch(r, 64, 512)), ConfigError);
    CHECK_THROWS_AS(build_layer_table(arch(64, 0, 512)), ConfigError);
    CHECK_NOTHROW(build_layer_table(arch(16, 4, 8)));
}

TEST_CASE("encoder spatial chain at 256") {
    const auto t = build_layer_table(arch(256, 64, 512));
    std::vector<int> chain{t.encoder.front().spatial_in};
    for (const auto& l : t.encoder) chain.push_back(l.spatial_out);
    CHECK(chain == std::vector<int>{256, 128, 64, 32, 16, 8, 4, 1});
    for (std::size_t i = 0; i + 1 < t.encoder.size(); ++i) {
        CHECK(t.encoder[i].kernel == 4);
        CHECK(t.encoder[i].stride == 2);
        CHECK(t.encoder[i].padding == 1);
        CHECK(t.encoder[i].activation == Activation::relu);
        CHECK(t.encoder[i + 1].in_channels == t.encoder[i].out_channels);
    }
    const auto& latent = t.encoder.back();
    CHECK(latent.kernel == 4);
    CHECK(latent.stride == 1);
    CHECK(latent.padding == 0);
    CHECK(latent.out_channels == 512);
    CHECK(latent.activation == Activation::sigmoid);
}

TEST_CASE("encoder at 64 has the original DCGAN depth") {
    const auto t = build_layer_table(arch(64, 64, 512));
    std::vector<int> chain{t.encoder.front().spatial_in};
    for (const auto& l : t.encoder) chain.push_back(l.spatial_out);
    CHECK(chain == std::vector<int>{64, 32, 16, 8, 4, 1});
}

TEST_CASE("decoder mirrors the encoder") {
    for (int res : {16, 64, 256}) {
        const auto t = build_layer_table(arch(res, 64, 512));
        std::vector<int> enc{t.encoder.front().spatial_in}, dec;
        for (const auto& l : t.encoder) enc.push_back(l.spatial_out);
        dec.push_back(t.decoder.front().spatial_in);
        for (const auto& l : t.decoder)
            if (l.kind != LayerKind::fuse_1x1) dec.push_back(l.spatial_out);
        std::reverse(enc.begin(), enc.end());
        CHECK(dec == enc);
        // Every transposed conv but the last is followed by a 1x1 fuse taking twice its width.
        for (std::size_t i = 0; i + 1 < t.decoder.size(); i += 2) {
            CHECK(t.decoder[i].kind == LayerKind::conv_transpose);
            CHECK(t.decoder[i + 1].kind == LayerKind::fuse_1x1);
            CHECK(t.decoder[i + 1].kernel == 1);
            CHECK(t.decoder[i + 1].in_channels == 2 * t.decoder[i].out_channels);
            CHECK(t.decoder[i + 1].out_channels == t.decoder[i].out_channels);
        }
        const auto& out = t.decoder.back();
        CHECK(out.kind == LayerKind::conv_transpose);
        CHECK(out.out_channels == 3);
        CHECK(out.activation == Activation::tanh);
        CHECK(out.spatial_out == res);
    }
}

TEST_CASE("BatchNorm everywhere except the encoder input and decoder output layers") {
    for (int res : {16, 64, 256}) {
        const auto t = build_layer_table(arch(res, 64, 512));
        for (std::size_t i = 0; i < t.encoder.size(); ++i) CHECK(t.encoder[i].batch_norm == (i != 0));
        for (std::size_t i = 0; i < t.decoder.size(); ++i) CHECK(t.decoder[i].batch_norm == (i + 1 != t.decoder.size()));
        // The built module agrees with the table.
        DerainNet net(arch(res, 8, 16, 16));
        std::size_t bn = 0;
        for (const auto& m : net->modules(false)) bn += m->as<torch::nn::BatchNorm2d>() != nullptr;
        const auto small = build_layer_table(arch(res, 8, 16, 16));
        CHECK(bn == small.encoder.size() + small.decoder.size() - 2);
    }
}

TEST_CASE("parameter count matches a hand summation on the tiny config") {
    // cfg(16, base 8, cap 8, latent 512): two stages 16->8->4, latent 4->1.
    //   enc0 conv 3->8 k4 + bias             3*8*16 + 8        =   392
    //   enc1 conv 8->8 k4 + BN               8*8*16 + 16       =  1040
    //   latent conv 8->512 k4 + BN           8*512*16 + 1024   = 66560
    //   dec  deconv 512->8 k4 + BN           512*8*16 + 16     = 65552
    //   fuse 1x1 16->8 + BN                  16*8 + 16         =   144
    //   dec  deconv 8->8 k4 + BN             8*8*16 + 16       =  1040
    //   fuse 1x1 16->8 + BN                                    =   144
    //   out  deconv 8->3 k4 + bias           8*3*16 + 3        =   387
    const std::int64_t hand = 392 + 1040 + 66560 + 65552 + 144 + 1040 + 144 + 387;
    CHECK(hand == 135259);
    const auto c = arch(16, 8, 8);
    CHECK(parameter_count(c) == hand);
    DerainNet net(c);
    CHECK(module_parameter_count(*net) == hand);
}

TEST_CASE("parameter count tripwires") {
    CHECK(parameter_count(arch(64, 64, 512)) == parameter_count(arch(64, 64, 512)));
    CHECK(parameter_count(arch(64, 64, 512)) < parameter_count(arch(256, 64, 512)));
    // Independent count from a separate prototype of the same layer table.
    CHECK(parameter_count(arch(64, 64, 512)) == 14602819);
    DerainNet net(arch(64, 64, 512));
    CHECK(module_parameter_count(*net) == 14602819);
}

TEST_CASE("encode at 256 with a batch of 10") {
    DerainNet net(arch(256, 64, 512));
    init_weights(*net, 1);
    net->eval();
    torch::NoGradGuard g;
    const auto enc = net->encode(uniform_batch(10, 256, 2));
    CHECK(enc.latent.sizes() == torch::IntArrayRef{10, 512, 1, 1});
    std::vector<std::int64_t> sizes;
    for (const auto& s : enc.skips.features) sizes.push_back(s.size(2));
    CHECK(sizes == std::vector<std::int64_t>{128, 64, 32, 16, 8, 4});
    CHECK(enc.latent.min().item<float>() > 0.0f);
    CHECK(enc.latent.max().item<float>() < 1.0f);
    const auto out = net->decode(enc.latent, enc.skips);
    CHECK(out.sizes() == torch::IntArrayRef{10, 3, 256, 256});
}

TEST_CASE("codomains of latent and output") {
    DerainNet net(arch(32, 16, 32, 32));
    init_weights(*net, 4);
    torch::NoGradGuard g;
    for (bool training : {true, false}) {
        net->train(training);
        for (float scale : {1.0f, 100.0f, -100.0f}) {
            const auto x = uniform_batch(4, 32, 5) * scale;
            const auto enc = net->encode(x);
            CHECK(enc.latent.gt(0).all().item<bool>());
            CHECK(enc.latent.lt(1).all().item<bool>());
            const auto raw = net->decode(enc.latent, enc.skips);
            CHECK(raw.ge(-1).all().item<bool>());
            CHECK(raw.le(1).all().item<bool>());
            const auto y = net->forward(x);
            CHECK(y.ge(0).all().item<bool>());
            CHECK(y.le(1).all().item<bool>());
            CHECK(y.sizes() == x.sizes());
        }
    }
}

TEST_CASE("zero output layer yields exactly zero, displayed as mid grey") {
    DerainNet net(arch(32, 8, 16, 16));
    init_weights(*net, 1);
    {
        torch::NoGradGuard g;
        net->output_layer()->weight.zero_();
        net->output_layer()->bias.zero_();
    }
    net->eval();
    torch::NoGradGuard g;
    const auto enc = net->encode(uniform_batch(3, 32, 1));
    CHECK(net->decode(enc.latent, enc.skips).abs().max().item<float>() == 0.0f);
    CHECK(net->forward(uniform_batch(3, 32, 1)).eq(0.5).all().item<bool>());
}

TEST_CASE("shape errors name expected and actual shapes") {
    DerainNet net(arch(32, 8, 16, 16));
    net->eval();
    torch::NoGradGuard g;
    try {
        net->encode(torch::zeros({2, 3, 16, 16}));
        FAIL("expected a shape error");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[B,3,32,32]") != std::string::npos);
        CHECK(msg.find("[2,3,16,16]") != std::string::npos);
    }
    CHECK_THROWS_AS(net->forward(torch::zeros({2, 1, 32, 32})), ShapeError);
    auto enc = net->encode(torch::zeros({2, 3, 32, 32}));
    auto missing = enc.skips;
    missing.features.pop_back();
    CHECK_THROWS_AS(net->decode(enc.latent, missing), ShapeError);
    auto wrong = enc.skips;
    wrong.features[0] = torch::zeros({2, 8, 8, 8});
    CHECK_THROWS_AS(net->decode(enc.latent, wrong), ShapeError);
    auto undefined = enc.skips;
    undefined.features[1] = torch::Tensor();
    CHECK_THROWS_AS(net->decode(enc.latent, undefined), ShapeError);
    CHECK_THROWS_AS(net->decode(torch::zeros({2, 16, 2, 2}), enc.skips), ShapeError);
}

TEST_CASE("every skip connection affects the output") {
    DerainNet net(arch(32, 8, 16, 16));
    init_weights(*net, 2);
    net->eval();
    torch::NoGradGuard g;
    const auto enc = net->encode(uniform_batch(2, 32, 3));
    const auto base = net->decode(enc.latent, enc.skips);
    for (std::size_t k = 0; k < enc.skips.features.size(); ++k) {
        auto zeroed = enc.skips;
        zeroed.features[k] = torch::zeros_like(zeroed.features[k]);
        CHECK((net->decode(enc.latent, zeroed) - base).abs().max().item<float>() > 0.0f);
    }
}

TEST_CASE("inference is deterministic and batch-size agnostic") {
    DerainNet net(arch(32, 8, 16, 16));
    init_weights(*net, 3);
    // A few training-mode passes so the running statistics are not the defaults.
    {
        torch::NoGradGuard g;
        net->train();
        for (int i = 0; i < 3; ++i) net->forward(uniform_batch(6, 32, static_cast<std::uint64_t>(10 + i)));
    }
    const auto x = uniform_batch(10, 32, 4);
    const auto a = derain::derain(net, x, 10);
    const auto b = derain::derain(net, x, 10);
    CHECK(torch::equal(a, b));
    const auto c = derain::derain(net, x, 1);
    CHECK((a - c).abs().max().item<float>() < 1e-6f);
    CHECK(net->is_training());  // derain restores the mode
    CHECK(a.sizes() == x.sizes());
}

TEST_CASE("untrained output is close to the constant mid-grey predictor") {
    const auto store = testing::synthetic_store(32, {{"a", 12}, {"b", 12}});
    DerainNet net(arch(32, 16, 32, 32));
    init_weights(*net, 5);
    const double untrained = evaluate_mse(net, store);
    const double constant = constant_predictor_mse(store, 0.5);
    CHECK(std::abs(untrained - constant) < 0.1);
}

TEST_CASE("weight initialisation statistics") {
    DerainNet net(arch(64, 64, 512));
    init_weights(*net, 7);
    const auto w = net->named_parameters()["enc1.0.weight"];
    CHECK(w.mean().item<double>() == doctest::Approx(0.0).epsilon(0.002).scale(1));
    CHECK(w.std().item<double>() == doctest::Approx(0.02).epsilon(0.02));
    const auto gamma = net->named_parameters()["enc1.1.weight"];
    CHECK(gamma.mean().item<double>() == doctest::Approx(1.0).epsilon(0.01));
    CHECK(net->named_parameters()["enc1.1.bias"].abs().max().item<double>() == 0.0);
    CHECK(net->named_parameters()["enc0.0.bias"].abs().max().item<double>() == 0.0);
    // Same seed, same weights.
    DerainNet twin(arch(64, 64, 512));
    init_weights(*twin, 7);
    CHECK(torch::equal(twin->named_parameters()["dec3.0.weight"], net->named_parameters()["dec3.0.weight"]));
}

TEST_CASE("checkpoint round trip") {
    testing::TempDir dir;
    DerainCheckpoint ckpt{arch(32, 8, 16, 16), DerainNet(arch(32, 8, 16, 16)), 123, 987654321987654321ULL, "STSB"};
    init_weights(*ckpt.net, 9);
    {
        torch::NoGradGuard g;
        ckpt.net->train();
        ckpt.net->forward(uniform_batch(4, 32, 1));  // move the running statistics
    }
    save_checkpoint(dir / "c.pt", ckpt);
    const auto back = load_checkpoint(dir / "c.pt");
    CHECK(back.arch == ckpt.arch);
    CHECK(back.step == 123);
    CHECK(back.plan_seed == 987654321987654321ULL);
    CHECK(back.scheme == "STSB");
    const auto a = ckpt.net->named_parameters(), b = back.net->named_parameters();
    for (const auto& kv : a) CHECK(torch::equal(kv.value(), b[kv.key()]));
    const auto ba = ckpt.net->named_buffers(), bb = back.net->named_buffers();
    for (const auto& kv : ba) CHECK(torch::equal(kv.value(), bb[kv.key()]));
    const auto x = uniform_batch(3, 32, 2);
    CHECK(torch::equal(derain::derain(ckpt.net, x), derain::derain(const_cast<DerainNet&>(back.net), x)));

    std::ofstream(dir / "junk.pt") << "not a checkpoint";
    CHECK_THROWS(load_checkpoint(dir / "junk.pt"));
    CHECK_THROWS_AS(load_checkpoint(dir / "absent.pt"), ConfigError);
}

TEST_CASE("clone_net copies parameters and buffers") {
    DerainNet net(arch(16, 4, 8, 8));
    init_weights(*net, 1);
    auto copy = clone_net(net);
    const auto x = uniform_batch(2, 16, 3);
    CHECK(torch::equal(derain::derain(net, x), derain::derain(copy, x)));
    {
        torch::NoGradGuard g;
        copy->output_layer()->bias.fill_(0.3);
    }
    CHECK(!torch::equal(derain::derain(net, x), derain::derain(copy, x)));
}

TEST_CASE("analytic gradients agree with central differences") {
    const auto r = testing::gradient_check(arch(16, 4, 8, 8), 11);
    MESSAGE("worst relative gradient error " << r.worst_relative_error << " at " << r.worst_parameter << " over "
                                             << r.checked << " scalars");
    CHECK(r.checked == parameter_count(arch(16, 4, 8, 8)));
    CHECK(r.worst_relative_error < 1e-3);
}

TEST_CASE("a single batch can be memorised") {
    const auto store = testing::synthetic_store(32, {{"a", 4}});
    const auto [rainy, clear] = store.gather(store.all_refs());
    DerainNet net(arch(32, 32, 64, 64));
    init_weights(*net, 13);
    net->train();
    torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(1e-3).betas({0.5, 0.999}));
    double last = 1.0;
    int step = 0;
    for (; step < 500 && last >= 1e-3; ++step) {
        opt.zero_grad();
        auto l = torch::mse_loss(net->forward(rainy), clear);
        l.backward();
        opt.step();
        last = l.item<double>();
    }
    MESSAGE("memorised after " << step << " steps, loss " << last);
    CHECK(last < 1e-3);
}

}  // TEST_SUITE
