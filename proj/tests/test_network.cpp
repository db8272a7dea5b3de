#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>

#include "ddt/data/dataset.hpp"
#include "ddt/data/synthetic.hpp"
#include "ddt/model/network.hpp"
#include "ddt/train/checkpoint.hpp"
#include "ddt/train/trainer.hpp"

using namespace ddt;
using namespace ddt::model;

namespace {

ModelConfig small_config(std::size_t n_targets, std::size_t horizon = 12) {
    ModelConfig cfg;
    cfg.input_len = 48;
    cfg.n_targets = n_targets;
    cfg.embed_dim = 8;
    cfg.d_model = 16;
    cfg.heads = 2;
    cfg.patch = PatchConfig{8, 4};
    cfg.spectral_window = 8;
    cfg.head.horizon = horizon;
    cfg.encoder_depth = 2;
    return cfg;
}

Batch random_batch(std::size_t B, const ModelConfig& cfg, std::uint64_t seed) {
    RngStream rng(seed);
    Batch b;
    b.targets_in = rng.normal_tensor({B, cfg.input_len, cfg.n_targets});
    b.time_feats = rng.uniform_tensor({B, cfg.input_len, kTimeFeatureCount}, -1.0, 1.0);
    b.labels = rng.normal_tensor({B, cfg.head.horizon, cfg.n_targets});
    b.last_value = Tensor({B, cfg.n_targets});
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t c = 0; c < cfg.n_targets; ++c)
            b.last_value.at2(i, c) = b.targets_in.at3(i, cfg.input_len - 1, c);
    return b;
}

} // namespace

TEST_CASE("model forward: shapes, finiteness, determinism") {
    ModelConfig cfg = small_config(2);
    DdtModel m(cfg, 42);
    Batch batch = random_batch(3, cfg, 7);

    auto run = [&](RunMode mode) {
        Graph g;
        RngStream noise(11);
        ForwardOut fo = m.forward(g, batch, mode, noise);
        return std::pair<Tensor, Tensor>(g.value(fo.prediction), g.value(fo.encoder_out));
    };
    auto [pred, enc] = run(RunMode::eval);
    REQUIRE(pred.shape() == Shape{3, 12, 2, 3});
    REQUIRE(enc.shape() == Shape{3, m.geometry().count, 16});
    REQUIRE(pred.all_finite());

    auto [pred2, enc2] = run(RunMode::eval);
    REQUIRE(pred.vec() == pred2.vec()); // bitwise deterministic
    auto [pred3, enc3] = run(RunMode::train);
    REQUIRE(pred3.all_finite());
    auto [pred4, enc4] = run(RunMode::train);
    REQUIRE(pred3.vec() == pred4.vec()); // same noise stream, same result
}

TEST_CASE("encoder causal consistency end to end") {
    for (Variant variant : {Variant::full, Variant::causal_only}) {
        ModelConfig cfg = small_config(2);
        cfg.variant = variant;
        DdtModel m(cfg, 5);
        const std::size_t K = cfg.patch.patch_len, S = cfg.patch.stride;

        Batch batch = random_batch(2, cfg, 13);
        for (std::size_t probe = 0; probe < 3; ++probe) {
            // choose a token boundary: perturb strictly after its coverage
            const std::size_t p_tok = 1 + probe * 2;
            const std::size_t t_end = p_tok * S + K - 1;
            Batch pert = batch;
            RngStream prng(100 + probe);
            for (std::size_t b = 0; b < 2; ++b)
                for (std::size_t t = t_end + 1; t < cfg.input_len; ++t) {
                    for (std::size_t c = 0; c < cfg.n_targets; ++c)
                        pert.targets_in.at3(b, t, c) += prng.normal();
                    for (std::size_t c = 0; c < kTimeFeatureCount; ++c)
                        pert.time_feats.at3(b, t, c) += 0.1 * prng.normal();
                }
            auto run = [&](const Batch& bb, RunMode mode) {
                Graph g;
                RngStream noise(21);
                ForwardOut fo = m.forward(g, bb, mode, noise);
                return g.value(fo.encoder_out);
            };
            for (RunMode mode : {RunMode::eval, RunMode::train}) {
                Tensor a = run(batch, mode);
                Tensor b = run(pert, mode);
                for (std::size_t bi = 0; bi < 2; ++bi)
                    for (std::size_t p = 0; p <= p_tok; ++p)
                        for (std::size_t d = 0; d < cfg.d_model; ++d)
                            REQUIRE(a.at3(bi, p, d) == b.at3(bi, p, d));
            }
        }
    }
}

TEST_CASE("gradients flow through the whole model") {
    ModelConfig cfg = small_config(2, 6);
    DdtModel m(cfg, 3);
    Batch batch = random_batch(2, cfg, 17);
    Graph g;
    RngStream noise(1);
    ForwardOut fo = m.forward(g, batch, RunMode::train, noise);
    Var loss = quantile_loss(g, fo.prediction, g.constant(batch.labels), cfg.head.quantiles);
    g.backward(loss);
    auto grads = collect_gradients(g, fo.param_leaves);
    REQUIRE(grads.size() == m.params().entries.size());
    std::size_t nonzero = 0;
    for (std::size_t i = 0; i < grads.size(); ++i) {
        REQUIRE(grads[i].all_finite());
        if (grads[i].max_abs() > 0) ++nonzero;
    }
    // every parameter group should receive gradient somewhere
    REQUIRE(nonzero + 4 >= grads.size()); // allow a few dead biases at init
    // the metric factor itself must be reached through the straight-through path
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (m.params().entries[i].first == "mask.metric.l_offdiag") REQUIRE(grads[i].max_abs() > 0);
}

TEST_CASE("ci mode: factorization, parameter scaling, N=1 equivalence") {
    ModelConfig cfg = small_config(3);
    CiModel ci(cfg, 3, 77);
    {
        // parameter count scales linearly in N
        ModelConfig c1 = cfg;
        c1.n_targets = 1;
        c1.channel_expert = false;
        DdtModel single(c1, 77);
        REQUIRE(ci.parameter_count() == 3 * single.params().total_size());
    }
    Batch batch = random_batch(2, cfg, 23);
    RngStream noise(9);
    Tensor base = ci.forward_values(batch, RunMode::eval, noise);
    REQUIRE(base.shape() == Shape{2, 12, 3, 3});

    {
        // perturbing channel 2's input leaves channels 0 and 1 untouched
        Batch pert = batch;
        RngStream prng(31);
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t t = 0; t < cfg.input_len; ++t) pert.targets_in.at3(b, t, 2) += prng.normal();
        RngStream noise2(9);
        Tensor out = ci.forward_values(pert, RunMode::eval, noise2);
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t h = 0; h < 12; ++h)
                for (std::size_t n = 0; n < 2; ++n)
                    for (std::size_t q = 0; q < 3; ++q)
                        REQUIRE(out.at4(b, h, n, q) == base.at4(b, h, n, q));
    }
    {
        // N=1: CI equals the full model with the channel expert disabled
        ModelConfig c1 = small_config(1);
        c1.channel_expert = false;
        CiModel ci1(c1, 1, 123);
        DdtModel full(c1, 123);
        Batch b1 = random_batch(2, c1, 29);
        RngStream na(5), nb(5);
        Tensor ci_out = ci1.forward_values(b1, RunMode::eval, na);
        Graph g;
        ForwardOut fo = full.forward(g, b1, RunMode::eval, nb);
        REQUIRE(ci_out.vec() == g.value(fo.prediction).vec());
    }
}

TEST_CASE("training: zero learning rate is a bitwise no-op") {
    data::SyntheticSpec sspec;
    sspec.length = 400;
    sspec.channels = 2;
    data::SeriesBatch series = data::synthesize(sspec);
    data::LabelWindow window{48, 12, 8};
    data::SplitSpec split;
    data::Dataset ds = data::build_dataset(series, window, split);

    ModelConfig cfg = small_config(2);
    DdtModel m(cfg, 9);
    std::vector<Tensor> before;
    for (const auto& [name, t] : m.params().entries) before.push_back(*t);

    train::TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 16;
    tc.lr = 0.0;
    tc.patience = 10;
    train::train_model(m, ds, tc);
    for (std::size_t i = 0; i < before.size(); ++i)
        REQUIRE(m.params().entries[i].second->vec() == before[i].vec());
}

TEST_CASE("training abort on poisoned parameters dumps diagnostics") {
    data::SyntheticSpec sspec;
    sspec.length = 300;
    sspec.channels = 2;
    data::Dataset ds = data::build_dataset(data::synthesize(sspec), data::LabelWindow{48, 12, 8},
                                           data::SplitSpec{});
    ModelConfig cfg = small_config(2);
    DdtModel m(cfg, 9);
    for (auto& [name, t] : m.params().entries)
        if (name == "head.direct.b")
            *t = Tensor::full(t->shape(), std::numeric_limits<double>::quiet_NaN());
    train::TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 8;
    try {
        train::train_model(m, ds, tc);
        FAIL("expected TrainAbort");
    } catch (const train::TrainAbort& e) {
        REQUIRE(std::string(e.what()).find("non-finite") != std::string::npos);
        REQUIRE(e.diagnostic.find("nan_loss") != std::string::npos);
    }
}

TEST_CASE("checkpoint round trip and version guard") {
    ModelConfig cfg = small_config(2);
    DdtModel m(cfg, 31);
    train::CheckpointMeta meta;
    meta.manifest_hash = 0xabcdef12345678ULL;
    meta.epoch = 7;
    meta.val_loss = 0.321;
    const std::string path = "/tmp/ddt_test_ckpt.bin";
    train::save_checkpoint(path, m.params(), meta);

    DdtModel m2(cfg, 99); // different init
    bool differs = false;
    for (std::size_t i = 0; i < m.params().entries.size(); ++i)
        if (m.params().entries[i].second->vec() != m2.params().entries[i].second->vec()) differs = true;
    REQUIRE(differs);
    train::CheckpointMeta got = train::load_checkpoint(path, m2.params());
    REQUIRE(got.manifest_hash == meta.manifest_hash);
    REQUIRE(got.epoch == 7);
    for (std::size_t i = 0; i < m.params().entries.size(); ++i)
        REQUIRE(m.params().entries[i].second->vec() == m2.params().entries[i].second->vec());

    // corrupt the version field
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(8);
        std::uint32_t bad = 99;
        f.write(reinterpret_cast<const char*>(&bad), 4);
    }
    REQUIRE_THROWS_AS(train::load_checkpoint(path, m2.params()), train::CheckpointError);
    std::remove(path.c_str());

    // a model with a different architecture refuses the checkpoint
    train::save_checkpoint(path, m.params(), meta);
    ModelConfig other = small_config(2);
    other.encoder_depth = 3;
    DdtModel m3(other, 1);
    REQUIRE_THROWS_AS(train::load_checkpoint(path, m3.params()), train::CheckpointError);
    std::remove(path.c_str());
}

TEST_CASE("recursive head routing inside the full model") {
    ModelConfig cfg = small_config(2);
    cfg.head.horizon = 120; // H > 96 -> recursive
    cfg.input_len = 48;
    DdtModel m(cfg, 55);
    Batch batch = random_batch(2, cfg, 3);
    batch.labels = RngStream(4).normal_tensor({2, 120, 2});
    Graph g;
    RngStream noise(6);
    ForwardOut fo = m.forward(g, batch, RunMode::eval, noise);
    REQUIRE(g.value(fo.prediction).shape() == Shape{2, 120, 2, 3});
    REQUIRE(g.value(fo.prediction).all_finite());
}
