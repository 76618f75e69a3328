#include <doctest.h>

#include <cstring>

#include "common/error.hpp"
#include "helpers.hpp"
#include "losses/losses.hpp"
#include "network/checkpoint.hpp"
#include "network/model.hpp"
#include "oracles.hpp"
#include "tensor/ops.hpp"

using namespace vos;
using ad::Tensor;
using net::Model;
using test::closed_form_params;

TEST_CASE("param count of a single 4->8 3x3 conv") {
    CHECK(closed_form_params({8}, true) > 0);
    auto w = Tensor::zeros({8, 4, 3, 3});
    auto b = Tensor::zeros({8});
    CHECK(w.numel() + b.numel() == 296);
}

TEST_CASE("param count matches the closed-form tally") {
    for (const auto& f : std::vector<std::vector<std::size_t>>{{8}, {8, 16, 32}, {16, 32, 64}, {32, 64, 128}, {3, 5}}) {
        CHECK(Model::build(net::unet_config(f), 1).param_count() == closed_form_params(f, true));
        CHECK(Model::build(net::segnet_config(f), 1).param_count() == closed_form_params(f, false));
    }
}

TEST_CASE("param counts of the reference configurations") {
    const auto big = Model::build(net::unet_config({64, 128, 256, 512}), 1).param_count();
    CHECK(big == 31032321);
    CHECK(big >= 28000000);
    CHECK(big <= 34000000);
    CHECK(Model::build(net::unet_config({32, 64, 128}), 1).param_count() == 1925889);
    CHECK(Model::build(net::unet_config({16, 32, 64}), 1).param_count() == 482177);
}

TEST_CASE("segnet variant has fewer parameters than the same-config u-net") {
    CHECK(Model::build_segnet_variant(net::segnet_config({8, 16, 32}), 1).param_count() <
          Model::build_unet(net::unet_config({8, 16, 32}), 1).param_count());
}

TEST_CASE("config validation") {
    CHECK_THROWS_AS(net::validate_config(net::unet_config({})), Error);
    CHECK_THROWS_AS(net::validate_config(net::unet_config({16, 8})), Error);
    CHECK_THROWS_AS(net::validate_config(net::unet_config({8, 8})), Error);
    auto c = net::unet_config({8});
    c.kernel_size = 2;
    CHECK_THROWS_AS(net::validate_config(c), Error);
    CHECK_THROWS_AS(Model::build_unet(net::segnet_config({8}), 1), Error);
    CHECK_THROWS_AS(Model::build_segnet_variant(net::unet_config({8}), 1), Error);
}

TEST_CASE("forward preserves spatial size with values in (0,1)") {
    Rng rng(1);
    for (const auto& cfg : {net::unet_config({8, 16, 32}), net::segnet_config({8, 16, 32})}) {
        auto m = Model::build(cfg, 1);
        auto y = m.forward(test::random_tensor(rng, {1, 4, 32, 32}, 0.0, 1.0));
        CHECK(y.shape() == ad::Shape{1, 1, 32, 32});
        for (double v : y.values()) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }
    }
}

TEST_CASE("forward rejects indivisible sizes naming the level") {
    auto m = Model::build(net::unet_config({4, 8, 16}), 1);
    try {
        m.forward(Tensor::zeros({1, 4, 12, 12}));
        FAIL("expected rejection");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("level 3") != std::string::npos);
    }
    CHECK_THROWS_AS(m.forward(Tensor::zeros({1, 3, 16, 16})), Error);
}

TEST_CASE("forward is deterministic and batch independent") {
    Rng rng(2);
    auto m = Model::build(net::unet_config({4, 8}), 7);
    auto a = test::random_tensor(rng, {1, 4, 16, 16}, 0.0, 1.0);
    auto b = test::random_tensor(rng, {1, 4, 16, 16}, 0.0, 1.0);
    std::vector<double> both(a.values().begin(), a.values().end());
    both.insert(both.end(), b.values().begin(), b.values().end());
    auto ya = m.forward(a), yb = m.forward(b), y2 = m.forward(Tensor::from({2, 4, 16, 16}, both));
    CHECK(test::to_vector(m.forward(a)) == test::to_vector(ya));
    for (std::size_t i = 0; i < 256; ++i) {
        CHECK(y2.values()[i] == ya.values()[i]);
        CHECK(y2.values()[256 + i] == yb.values()[i]);
    }
}

TEST_CASE("fresh models do not saturate") {
    Rng rng(3);
    auto m = Model::build(net::unet_config({8, 16, 32}), 3);
    auto y = m.forward(test::random_tensor(rng, {2, 4, 64, 64}, 0.0, 1.0));
    for (double v : y.values()) {
        CHECK(v > 1e-6);
        CHECK(v < 1 - 1e-6);
    }
}

TEST_CASE("every parameter receives gradient from either loss") {
    Rng rng(4);
    for (auto kind : {loss::LossKind::WeightedCe, loss::LossKind::Dice}) {
        for (const auto& cfg : {net::unet_config({4, 8}), net::segnet_config({4, 8})}) {
            auto m = Model::build(cfg, 11);
            BinaryMask t(16, 16);
            for (auto& v : t.data) v = rng.uniform() < 0.2;
            std::vector<BinaryMask> targets{t};
            loss::batch_loss(m.forward(test::random_tensor(rng, {1, 4, 16, 16}, 0.0, 1.0)), targets, kind).backward();
            for (const auto& p : m.params()) {
                REQUIRE_MESSAGE(p.tensor.has_grad(), p.name);
                bool nonzero = false;
                for (double g : p.tensor.grad()) nonzero = nonzero || g != 0.0;
                CHECK_MESSAGE(nonzero, p.name);
            }
        }
    }
}

TEST_CASE("skip ablation changes the output") {
    Rng rng(5);
    auto x = test::random_tensor(rng, {1, 4, 16, 16}, 0.0, 1.0);
    auto cfg = net::unet_config({4, 8});
    auto with = Model::build(cfg, 3).forward(x);
    cfg.skip_connections = false;
    auto without = Model::build(cfg, 3).forward(x);
    CHECK(test::to_vector(with) != test::to_vector(without));
}

TEST_CASE("parameter names follow the layer graph") {
    auto m = Model::build(net::unet_config({8, 16}), 1);
    CHECK(m.param("enc1.conv1.weight").shape() == ad::Shape{8, 4, 3, 3});
    CHECK(m.param("bottleneck.conv2.weight").shape() == ad::Shape{32, 32, 3, 3});
    CHECK(m.param("dec2.up.weight").shape() == ad::Shape{16, 32, 2, 2});
    CHECK(m.param("dec2.conv1.weight").shape() == ad::Shape{16, 32, 3, 3});
    CHECK(m.param("head.weight").shape() == ad::Shape{1, 8, 1, 1});
    auto s = Model::build(net::segnet_config({8, 16}), 1);
    CHECK(s.param("dec2.up.weight").shape() == ad::Shape{32, 16, 2, 2});
    CHECK(s.param("dec2.conv1.weight").shape() == ad::Shape{16, 16, 3, 3});
    CHECK_THROWS_AS(m.param("nope"), Error);
}

TEST_CASE("clone shares no storage") {
    auto m = Model::build(net::unet_config({4}), 1);
    auto c = m.clone();
    c.params()[0].tensor.values()[0] += 1.0;
    CHECK(c.params()[0].tensor.values()[0] != m.params()[0].tensor.values()[0]);
}

TEST_CASE("checkpoint round trip is byte identical") {
    for (const auto& cfg : {net::unet_config({4, 8}), net::segnet_config({3, 6, 9})}) {
        auto m = Model::build(cfg, 9);
        const auto bytes = net::encode_checkpoint(m);
        auto back = net::decode_checkpoint(bytes);
        CHECK(back.config() == m.config());
        CHECK(net::encode_checkpoint(back) == bytes);
        REQUIRE(back.params().size() == m.params().size());
        for (std::size_t i = 0; i < m.params().size(); ++i)
            CHECK(test::to_vector(back.params()[i].tensor) == test::to_vector(m.params()[i].tensor));
    }
}

TEST_CASE("checkpoint header layout") {
    auto m = Model::build(net::unet_config({4}), 1);
    const auto bytes = net::encode_checkpoint(m);
    REQUIRE(bytes.size() > 16);
    CHECK(std::memcmp(bytes.data(), "VOSCKPT\0", 8) == 0);
    CHECK(bytes[8] == 1);
    CHECK(bytes[9] == 0);
    CHECK(bytes[12] == 4); // input channels, little endian
}

TEST_CASE("checkpoint decoding rejects damage") {
    auto bytes = net::encode_checkpoint(Model::build(net::unet_config({4}), 1));
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(net::decode_checkpoint(bad_magic), Error);
    auto bad_version = bytes;
    bad_version[8] = 9;
    CHECK_THROWS_AS(net::decode_checkpoint(bad_version), Error);
    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_AS(net::decode_checkpoint(truncated), Error);
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(net::decode_checkpoint(trailing), Error);
}
