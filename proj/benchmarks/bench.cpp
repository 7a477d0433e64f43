// Microbenchmarks for the hot paths: dense products, a transformer block,
// and an end-to-end utterance representation per topology.

#include <random>

#include <benchmark/benchmark.h>

#include "emodyn/encoder.hpp"
#include "emodyn/model.hpp"
#include "emodyn/synth.hpp"
#include "emodyn/tensor.hpp"
#include "emodyn/trainer.hpp"
#include "emodyn/vocab.hpp"

using namespace emodyn;

static void BM_Matmul(benchmark::State& state) {
    const auto n = (std::size_t)state.range(0);
    std::mt19937_64 rng(1);
    Tensor a = Tensor::randn({n, n}, 1.0, rng);
    Tensor b = Tensor::randn({n, n}, 1.0, rng);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
    state.SetItemsProcessed((std::int64_t)(state.iterations() * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

static void BM_TransformerBlock(benchmark::State& state) {
    const auto len = (std::size_t)state.range(0);
    EncoderConfig config;
    config.vocab_size = 100;
    config.max_len = len;
    std::mt19937_64 rng(1);
    EncoderParams params = EncoderParams::init(config, rng);
    Tensor x = Tensor::randn({len, config.d_model}, 1.0, rng);
    std::vector<bool> valid(len, true);
    for (auto _ : state) {
        benchmark::DoNotOptimize(transformer_block(x, params.layers[0], valid, config));
    }
}
BENCHMARK(BM_TransformerBlock)->Arg(32)->Arg(64)->Arg(128);

static void bench_topology(benchmark::State& state, Topology topology) {
    SynthSpec spec;
    spec.n_conversations = 1;
    spec.min_turns = spec.max_turns = 8;
    Corpus corpus = generate_corpus(spec, 7);
    Vocab vocab = Vocab::build(corpus, 512, true);

    ModelConfig config;
    config.topology = topology;
    config.encoder.vocab_size = vocab.size();
    config.encoder.max_len = 64;
    config.backbone = config.encoder;
    config.backbone.max_len = config.context_window + 1;
    std::mt19937_64 rng(1);
    Model model(config, 6, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(model.represent(corpus[0], 8, vocab));
    }
}
static void BM_FBertRepr(benchmark::State& state) { bench_topology(state, Topology::FBert); }
static void BM_HBertRepr(benchmark::State& state) { bench_topology(state, Topology::HBert); }
static void BM_StBertRepr(benchmark::State& state) { bench_topology(state, Topology::StBert); }
BENCHMARK(BM_FBertRepr);
BENCHMARK(BM_HBertRepr);
BENCHMARK(BM_StBertRepr);

static void BM_TrainStep(benchmark::State& state) {
    SynthSpec spec;
    spec.n_conversations = 1;
    spec.min_turns = spec.max_turns = 6;
    Corpus corpus = generate_corpus(spec, 7);
    Vocab vocab = Vocab::build(corpus, 512, true);
    LabelMap labels = LabelMap::from_corpus(corpus);

    ModelConfig config;
    config.encoder.vocab_size = vocab.size();
    config.encoder.max_len = 64;
    std::mt19937_64 rng(1);
    Model model(config, labels.size(), rng);
    AdamW optimizer = AdamW::for_model(model, {});
    for (auto _ : state) {
        Tape tape;
        Tensor loss = cross_entropy(model.logits(corpus[0], 6, vocab),
                                    labels.id(*corpus[0].utterances[5].label));
        optimizer.zero_grads();
        tape.backward(loss);
        optimizer.step();
    }
}
BENCHMARK(BM_TrainStep);

BENCHMARK_MAIN();
