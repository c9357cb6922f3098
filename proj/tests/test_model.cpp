#include "doctest.h"
#include "eow/model.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

using namespace eow;

namespace {

EowClassifier small_model(std::uint64_t seed, int k = 3) {
    Rng rng(seed);
    return EowClassifier::init(MlpConfig{4, {8, 8}, k}, rng);
}

}  // namespace

TEST_CASE("zero parameters give uniform probabilities") {
    Rng rng(1);
    EowClassifier m = EowClassifier::init(MlpConfig{3, {4}, 2}, rng);
    for (Array* p : m.params())
        for (std::size_t i = 0; i < p->numel(); ++i) p->data()[i] = 0.0;
    const Array logits = m.forward_logits(Array({1, 3}, {0.5, -1.0, 2.0}));
    for (std::size_t i = 0; i < logits.numel(); ++i) CHECK(logits[i] == 0.0);
    const auto probs = m.probs(logits.data());
    for (double p : probs) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("probabilities sum to 1 for random models") {
    Rng data_rng(42);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const EowClassifier m = small_model(seed);
        const Array x = Array::randn({5, 4}, data_rng, 2.0);
        const Array logits = m.forward_logits(x);
        for (int r = 0; r < logits.rows(); ++r) {
            const auto p = m.probs(logits.data() + std::size_t(r) * logits.cols());
            double s = 0.0;
            for (double v : p) {
                CHECK(v > 0.0);
                CHECK(v < 1.0);
                s += v;
            }
            CHECK(std::abs(s - 1.0) < 1e-10);
        }
    }
}

TEST_CASE("stage split composition equals full forward at every stage") {
    Rng data_rng(7);
    const EowClassifier m = small_model(3);
    const Array x = Array::randn({6, 4}, data_rng);
    const Array full = m.forward_logits(x);
    for (int s = 0; s <= m.num_stages(); ++s) {
        const Array z = m.encode_to_stage(x, s);
        CHECK(z.cols() == m.stage_width(s));
        const Array via = m.head_from_stage(z, s);
        REQUIRE(via.numel() == full.numel());
        for (std::size_t i = 0; i < full.numel(); ++i)
            CHECK(std::abs(via[i] - full[i]) < 1e-12);
    }
    // s=0 returns the input unchanged
    const Array z0 = m.encode_to_stage(x, 0);
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(z0[i] == x[i]);

    CHECK_THROWS_AS(m.encode_to_stage(x, m.num_stages() + 1), ShapeError);
    CHECK_THROWS_AS(m.head_from_stage(Array::zeros({1, 3}), m.num_stages()), ShapeError);
}

TEST_CASE("bound tape forward equals tape-free forward") {
    Rng data_rng(19);
    const EowClassifier m = small_model(11);
    const Array x = Array::randn({4, 4}, data_rng);
    Tape t;
    const BoundModel bm = bind_model(t, m);
    const Var logits = bm.logits_from_input(t, t.leaf(x));
    const Array direct = m.forward_logits(x);
    for (std::size_t i = 0; i < direct.numel(); ++i)
        CHECK(t.value(logits)[i] == doctest::Approx(direct[i]).epsilon(1e-14));
}

TEST_CASE("predict: argmax, tie-break, confidence from K+1 softmax") {
    Rng rng(2);
    EowClassifier m = EowClassifier::init(MlpConfig{2, {2}, 2}, rng);
    // Zero everything, then fix the head bias so probs are [0.7-ish ordering].
    for (Array* p : m.params())
        for (std::size_t i = 0; i < p->numel(); ++i) p->data()[i] = 0.0;
    m.head().b = Array({3}, {std::log(0.7), std::log(0.1), std::log(0.2)});
    const Prediction pred = m.predict(Array({2}, {0.0, 0.0}));
    CHECK(pred.label == 0);
    CHECK(pred.confidence == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(pred.uncertainty == doctest::Approx(0.2).epsilon(1e-12));

    // uniform logits: tie resolved to the lowest index, confidence 1/(K+1)
    m.head().b = Array({3}, {0.0, 0.0, 0.0});
    const Prediction uniform = m.predict(Array({2}, {0.0, 0.0}));
    CHECK(uniform.label == 0);
    CHECK(uniform.confidence == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("predict is invariant under additive logit shift") {
    Rng rng(23);
    EowClassifier m = small_model(5, 4);
    const Array x = Array::randn({1, 4}, rng);
    const Prediction before = m.predict(x);
    // Shifting every head bias by a constant shifts all K+1 logits equally.
    for (std::size_t i = 0; i < m.head().b.numel(); ++i) m.head().b.data()[i] += 13.25;
    const Prediction after = m.predict(x);
    CHECK(before.label == after.label);
    CHECK(before.confidence == doctest::Approx(after.confidence).epsilon(1e-9));

    // confidence + uncertainty can never exceed 1
    CHECK(before.confidence + before.uncertainty <= 1.0 + 1e-12);
}

TEST_CASE("checkpoint round-trip is bit-exact and keeps the loss kind") {
    namespace fs = std::filesystem;
    const EowClassifier m = small_model(99);
    const fs::path path = fs::temp_directory_path() / "eow_test_ckpt.bin";
    save_checkpoint(path.string(), m, "eow");
    std::string kind;
    const EowClassifier loaded = load_checkpoint(path.string(), &kind);
    CHECK(kind == "eow");
    const auto a = m.params();
    const auto b = loaded.params();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i]->numel() == b[i]->numel());
        for (std::size_t j = 0; j < a[i]->numel(); ++j)
            CHECK(a[i]->data()[j] == b[i]->data()[j]);  // exact, not approximate
    }
    CHECK(m.param_checksum() == loaded.param_checksum());
    fs::remove(path);

    CHECK_THROWS(load_checkpoint("/nonexistent/never.bin"));
}

TEST_CASE("width mismatch is rejected") {
    const EowClassifier m = small_model(1);
    CHECK_THROWS_AS(m.forward_logits(Array::zeros({2, 5})), ShapeError);
}
