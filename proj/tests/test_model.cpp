#include <doctest.h>

#include <chrono>
#include <set>

#include "attnconv/model.hpp"
#include "attnconv/synth.hpp"
#include "oracles.hpp"

using namespace attnconv;

namespace {

ModelConfig tiny(Variant v = Variant::Full) {
    ModelConfig c;
    c.backbone.input_height = c.backbone.input_width = 64;
    c.backbone.channels = {4, 4, 8, 8, 8};
    c.backbone.reduced_dim = 8;
    c.cab.d = 8;
    c.cab.h = 2;
    c.cab.n_blocks = 2;
    c.cab.ffn_hidden = 16;
    c.n_pred = 4;
    c.variant = v;
    c.encoder_layers = v == Variant::EncoderDecoder ? 1 : 0;
    return c;
}

ModelConfig desk(Variant v = Variant::Full) {
    ModelConfig c;
    c.variant = v;
    c.encoder_layers = v == Variant::EncoderDecoder ? 1 : 0;
    return c;
}

Tensor random_image(int size, std::mt19937_64& rng) {
    Tensor t({3, size, size}, 0.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : t.data()) v = u(rng);
    return t;
}

}  // namespace

TEST_CASE("variant names round trip") {
    for (Variant v : {Variant::Full, Variant::NoAttn, Variant::NoFfn, Variant::EncoderDecoder})
        CHECK(parse_variant(variant_name(v)) == v);
    CHECK(parse_variant("w/o-Attn") == Variant::NoAttn);
    CHECK(parse_variant("w/o-FFN") == Variant::NoFfn);
    CHECK_THROWS_AS(parse_variant("resnet"), ConfigError);
}

TEST_CASE("config validation") {
    ModelConfig c = desk();
    c.cab.d = 32;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = desk(Variant::EncoderDecoder);
    c.encoder_layers = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = tiny(Variant::NoFfn);
    c.num_classes = 4;  // 4 + 1 logits + 4 box channels exceed d = 8
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = desk();
    c.n_pred = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("forward shapes per variant at desk scale") {
    std::mt19937_64 rng(1);
    const Tensor img = random_image(128, rng);
    for (Variant v : {Variant::Full, Variant::NoAttn, Variant::NoFfn, Variant::EncoderDecoder}) {
        const AttnConvNet m(desk(v));
        const PredictionSet p = m.forward(img, Mode::Eval);
        const int n = v == Variant::NoAttn ? 16 : 50;
        CHECK(m.n_pred() == n);
        CHECK(p.class_logits.shape() == Shape{n, 4});
        CHECK(p.boxes.shape() == Shape{n, 4});
        for (double b : p.boxes.data()) CHECK((b > 0.0 && b < 1.0));
    }
}

TEST_CASE("parameter counts and names") {
    const AttnConvNet full(desk()), no_attn(desk(Variant::NoAttn)), no_ffn(desk(Variant::NoFfn)),
        ed(desk(Variant::EncoderDecoder));
    CHECK(no_attn.parameter_count() < full.parameter_count());
    CHECK(no_ffn.parameter_count() < full.parameter_count());
    CHECK(ed.parameter_count() > full.parameter_count());
    int64_t walked = 0;
    std::set<std::string> names;
    for (const auto& [name, t] : full.parameters()) {
        walked += t.size();
        CHECK(names.insert(name).second);
    }
    CHECK(walked == full.parameter_count());
    CHECK(names.count("pos_abs") == 1);
    CHECK(full.parameters().front().first.rfind("backbone.", 0) == 0);
}

TEST_CASE("construction and eval are deterministic") {
    std::mt19937_64 rng(2);
    const Tensor img = random_image(64, rng);
    const AttnConvNet a(tiny()), b(tiny());
    const auto pa = a.forward(img, Mode::Eval), pb = b.forward(img, Mode::Eval), pa2 = a.forward(img, Mode::Eval);
    for (int64_t i = 0; i < pa.class_logits.size(); ++i) {
        CHECK(pa.class_logits.data()[i] == pb.class_logits.data()[i]);
        CHECK(pa.class_logits.data()[i] == pa2.class_logits.data()[i]);
    }
    ModelConfig other = tiny();
    other.seed = 2;
    const auto pc = AttnConvNet(other).forward(img, Mode::Eval);
    CHECK(pc.class_logits.data()[0] != pa.class_logits.data()[0]);

    const AttnConvNet s = a.snapshot();
    const auto ps = s.forward(img, Mode::Eval);
    for (int64_t i = 0; i < pa.boxes.size(); ++i) CHECK(ps.boxes.data()[i] == pa.boxes.data()[i]);
    CHECK(s.parameters()[0].second.node() != a.parameters()[0].second.node());
}

TEST_CASE("train mode draws dropout from the rng") {
    std::mt19937_64 rng(3);
    const Tensor img = random_image(64, rng);
    ModelConfig c = tiny();
    c.cab.dropout = 0.3;
    const AttnConvNet m(c);
    std::mt19937_64 r1(5), r2(5), r3(6);
    const auto a = m.forward(img, Mode::Train, &r1), b = m.forward(img, Mode::Train, &r2),
               d = m.forward(img, Mode::Train, &r3);
    CHECK(a.boxes.data()[0] == b.boxes.data()[0]);
    bool differs = false;
    for (int64_t i = 0; i < a.boxes.size(); ++i) differs |= a.boxes.data()[i] != d.boxes.data()[i];
    CHECK(differs);
}

TEST_CASE("images of another size are resampled to the input size") {
    const SynthConfig sc;
    auto rng = scene_rng(1, 0, 0);
    const auto scene = generate_scene(sc, rng);
    const AttnConvNet m(tiny());
    const auto direct = m.forward(scene.image, Mode::Eval);
    const auto manual = m.forward(resize_bilinear(scene.image, 64, 64).to_tensor(), Mode::Eval);
    for (int64_t i = 0; i < direct.boxes.size(); ++i) CHECK(direct.boxes.data()[i] == manual.boxes.data()[i]);
}

TEST_CASE("full loss gradient w.r.t. every parameter of a d=8/h=2/n=2/N_pred=4 model") {
    const auto t0 = std::chrono::steady_clock::now();
    const LossWeights w;
    int models = 0;
    double worst = 0.0;
    int checked = 0;
    for (uint64_t seed = 1; seed <= 3; ++seed) {
        ModelConfig c = tiny();
        c.seed = seed;
        const AttnConvNet m(c);
        std::mt19937_64 rng(seed);
        Tensor img = random_image(64, rng);
        std::uniform_real_distribution<double> u(0.2, 0.8), s(0.1, 0.3);
        GroundTruthSet g;
        for (int i = 0; i < 3; ++i) g.push_back(Component{i, Box{u(rng), u(rng), s(rng), s(rng)}});
        const Assignment a = match_predictions(m.forward(img, Mode::Eval), g, w);
        std::vector<Tensor> wrt;
        for (const auto& [name, t] : m.parameters()) wrt.push_back(t);
        const auto r = oracle::check_gradients([&] { return total_loss(m.forward(img, Mode::Eval), g, a, w); }, wrt);
        MESSAGE("seed " << seed << ": " << r.checked << " coords, " << r.kinks << " kinks, max rel err " << r.max_rel_err);
        worst = std::max(worst, r.max_rel_err);
        checked += r.checked;
        ++models;
    }
    CHECK(checked > 3 * 1000);
    CHECK(worst < 1e-3);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(secs < 120.0);
}
