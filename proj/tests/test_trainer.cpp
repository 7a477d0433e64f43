#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <doctest.h>

#include "emodyn/errors.hpp"
#include "emodyn/synth.hpp"
#include "emodyn/trainer.hpp"
#include "helpers.hpp"

using namespace emodyn;
using testutil::uniform_tensor;

namespace {

struct TrainFixture {
    Corpus train, val;
    Vocab vocab;
    LabelMap labels;
    ModelConfig config;

    explicit TrainFixture(std::size_t n_conversations = 4)
        : train(make(n_conversations, 1)),
          val(make(2, 2)),
          vocab(Vocab::build(train, 256, true)),
          labels(std::vector<std::string>{"a", "b", "c"}) {
        config.topology = Topology::FBert;
        config.context_window = 2;
        config.encoder.vocab_size = vocab.size();
        config.encoder.d_model = 8;
        config.encoder.n_heads = 2;
        config.encoder.n_layers = 1;
        config.encoder.d_hidden = 16;
        config.encoder.max_len = 32;
    }

    static Corpus make(std::size_t n, std::uint64_t seed) {
        SynthSpec spec;
        spec.n_conversations = n;
        spec.min_turns = 3;
        spec.max_turns = 4;
        spec.labels = {"a", "b", "c"};
        spec.background_vocab = 8;
        spec.background_tokens = 2;
        return generate_corpus(spec, seed);
    }

    Model model(std::uint64_t seed) const {
        std::mt19937_64 rng(seed);
        return Model(config, labels.size(), rng);
    }
};

std::vector<double> flatten_params(Model& model) {
    std::vector<double> all;
    model.visit_params([&](const std::string&, Tensor& t, bool) {
        all.insert(all.end(), t.values().begin(), t.values().end());
    });
    return all;
}

}  // namespace

TEST_CASE("adamw decoupled decay: zero gradient shrinks by (1 - lr*wd)") {
    OptimConfig oc;
    oc.lr = 0.01;
    oc.weight_decay = 0.01;
    AdamW opt(oc);
    Tensor theta = Tensor::from_values({3}, {1.0, -2.0, 0.5});
    const std::vector<double> before = theta.values();
    opt.add_param("theta", theta, /*decay=*/true);
    theta.zero_grad();  // gradients all zero
    opt.step();
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(theta.values()[i] == before[i] * (1.0 - 0.01 * 0.01));
    }

    // A non-decayed slot with zero gradient does not move at all.
    AdamW opt2(oc);
    Tensor frozen = Tensor::from_values({2}, {3.0, 4.0});
    opt2.add_param("frozen", frozen, /*decay=*/false);
    frozen.zero_grad();
    opt2.step();
    CHECK(frozen.values() == std::vector<double>{3.0, 4.0});
}

TEST_CASE("adamw first step has magnitude ~ lr for constant gradients") {
    OptimConfig oc;
    oc.lr = 0.05;
    oc.weight_decay = 0.0;
    AdamW opt(oc);
    Tensor theta = Tensor::from_values({2}, {0.7, -0.3});
    opt.add_param("theta", theta, true);
    theta.grad() = {0.9, -1.4};
    opt.step();
    // First step: m_hat/sqrt(v_hat) = sign(g) exactly (up to eps).
    CHECK(theta.values()[0] == doctest::Approx(0.7 - 0.05).epsilon(1e-6));
    CHECK(theta.values()[1] == doctest::Approx(-0.3 + 0.05).epsilon(1e-6));
}

TEST_CASE("adamw linear schedule endpoints and warmup") {
    OptimConfig oc;
    oc.lr = 0.1;
    oc.total_steps = 10;
    AdamW opt(oc);
    CHECK(opt.current_lr() == doctest::Approx(0.1));
    opt.set_steps(5);
    CHECK(opt.current_lr() == doctest::Approx(0.05));
    opt.set_steps(10);
    CHECK(opt.current_lr() == 0.0);

    // frozen at the endpoint
    Tensor theta = Tensor::from_values({1}, {1.0});
    opt.add_param("theta", theta, true);
    theta.grad() = {123.0};
    opt.step();
    CHECK(theta.values()[0] == 1.0);

    OptimConfig warm;
    warm.lr = 0.1;
    warm.warmup_steps = 4;
    warm.total_steps = 8;
    AdamW wopt(warm);
    CHECK(wopt.current_lr() == doctest::Approx(0.1 * 1.0 / 4.0));
    wopt.set_steps(3);
    CHECK(wopt.current_lr() == doctest::Approx(0.1));
    wopt.set_steps(6);
    CHECK(wopt.current_lr() == doctest::Approx(0.05));
}

TEST_CASE("adamw descends a quadratic bowl") {
    OptimConfig oc;
    oc.lr = 0.05;
    oc.weight_decay = 0.0;
    AdamW opt(oc);
    Tensor theta = Tensor::from_values({1}, {0.8});
    theta.set_requires_grad(true);
    opt.add_param("theta", theta, true);
    double prev = 0.8 * 0.8;
    for (int i = 0; i < 10; ++i) {
        opt.zero_grads();
        Tape tape;
        Tensor loss = dot(theta, theta);
        tape.backward(loss);
        opt.step();
        const double now = theta.values()[0] * theta.values()[0];
        CHECK(now < prev);
        prev = now;
    }
}

TEST_CASE("adamw rejects non-finite gradients naming the parameter") {
    AdamW opt(OptimConfig{});
    Tensor theta = Tensor::from_values({1}, {1.0});
    opt.add_param("layer0.w", theta, true);
    theta.grad() = {std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_WITH_AS(opt.step(), doctest::Contains("layer0.w"), TrainingError);
}

TEST_CASE("train: step accounting at batch size 1") {
    TrainFixture fx(1);
    Model model = fx.model(1);
    TrainConfig tc;
    tc.epochs = 1;
    std::size_t n_labeled = 0;
    for (const auto& u : fx.train[0].utterances) n_labeled += u.label.has_value();
    TrainResult result = train(model, fx.train, fx.val, fx.vocab, fx.labels, tc);
    CHECK(result.steps == n_labeled);
    CHECK(result.history.size() == 1);
}

TEST_CASE("train: fixed seed gives bit-identical parameters") {
    TrainFixture fx;
    TrainConfig tc;
    tc.epochs = 2;
    tc.seed = 77;

    Model m1 = fx.model(5);
    train(m1, fx.train, fx.val, fx.vocab, fx.labels, tc);
    Model m2 = fx.model(5);
    train(m2, fx.train, fx.val, fx.vocab, fx.labels, tc);
    CHECK(flatten_params(m1) == flatten_params(m2));

    // a different shuffle seed diverges
    tc.seed = 78;
    Model m3 = fx.model(5);
    train(m3, fx.train, fx.val, fx.vocab, fx.labels, tc);
    CHECK(flatten_params(m1) != flatten_params(m3));
}

TEST_CASE("train: empty corpus rejected, early stopping respects patience") {
    TrainFixture fx;
    Model model = fx.model(6);
    TrainConfig tc;
    CHECK_THROWS_AS(train(model, Corpus{}, fx.val, fx.vocab, fx.labels, tc),
                    ContractError);

    tc.epochs = 50;
    tc.patience = 2;
    tc.optim.lr = 0.0;  // nothing improves after epoch 1
    TrainResult result = train(model, fx.train, fx.val, fx.vocab, fx.labels, tc);
    CHECK(result.history.size() == 3);  // best at 1, then patience epochs
    CHECK(result.best_epoch == 1);
}

TEST_CASE("history CSV layout") {
    std::vector<EpochStats> history = {{1, 0.5, 0.6, 0.55, 1e-3}};
    std::ostringstream out;
    write_history_csv(history, out);
    std::istringstream lines(out.str());
    std::string header;
    std::getline(lines, header);
    CHECK(header == "epoch,train_loss,val_wacc,val_wf1,lr");
    std::string row;
    std::getline(lines, row);
    CHECK(row.rfind("1,0.5", 0) == 0);
}

TEST_CASE("predict/evaluate corpus and TSV output") {
    TrainFixture fx;
    Model model = fx.model(7);
    auto rows = predict_corpus(model, fx.val, fx.vocab, fx.labels);
    std::size_t expected = 0;
    for (const auto& conv : fx.val) expected += conv.utterances.size();
    REQUIRE(rows.size() == expected);
    CHECK(rows[0].turn == 1);
    CHECK(rows[0].probs.size() == fx.labels.size());

    EvalReport report = evaluate_corpus(model, fx.val, fx.vocab, fx.labels);
    CHECK(report.weighted_acc >= 0.0);
    CHECK(report.weighted_acc <= 1.0);

    std::ostringstream tsv;
    write_predictions_tsv(rows, fx.labels, tsv);
    std::string header;
    std::istringstream lines(tsv.str());
    std::getline(lines, header);
    CHECK(header == "conversation\tturn\tgold\tpredicted\tp_a\tp_b\tp_c");
}

TEST_CASE("evaluation worker count honors EMODYN_THREADS") {
    setenv("EMODYN_THREADS", "3", 1);
    CHECK(eval_worker_count() == 3);
    setenv("EMODYN_THREADS", "bogus", 1);
    CHECK(eval_worker_count() >= 1);
    unsetenv("EMODYN_THREADS");
    CHECK(eval_worker_count() >= 1);
}

TEST_CASE("parallel prediction matches single-threaded prediction") {
    TrainFixture fx;
    Model model = fx.model(8);
    setenv("EMODYN_THREADS", "1", 1);
    auto serial = predict_corpus(model, fx.val, fx.vocab, fx.labels);
    setenv("EMODYN_THREADS", "4", 1);
    auto parallel = predict_corpus(model, fx.val, fx.vocab, fx.labels);
    unsetenv("EMODYN_THREADS");
    REQUIRE(serial.size() == parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
        CHECK(serial[i].predicted == parallel[i].predicted);
        CHECK(serial[i].probs == parallel[i].probs);
    }
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    namespace fs = std::filesystem;
    TrainFixture fx;
    Model model = fx.model(9);
    TrainConfig tc;
    tc.epochs = 1;
    train(model, fx.train, fx.val, fx.vocab, fx.labels, tc);

    const fs::path dir = fs::temp_directory_path() / "emodyn_ckpt_test";
    fs::remove_all(dir);
    AdamW opt = AdamW::for_model(model, tc.optim);
    opt.set_steps(17);
    save_checkpoint(dir, model, &opt, fx.labels, fx.vocab);

    Checkpoint ckpt = load_checkpoint(dir);
    CHECK(flatten_params(ckpt.model) == flatten_params(model));
    CHECK(ckpt.labels.names() == fx.labels.names());
    REQUIRE(ckpt.optimizer.has_value());
    CHECK(ckpt.optimizer->steps_taken() == 17);

    EvalReport before = evaluate_corpus(model, fx.val, fx.vocab, fx.labels);
    EvalReport after = evaluate_corpus(ckpt.model, fx.val, ckpt.vocab, ckpt.labels);
    CHECK(before.weighted_acc == after.weighted_acc);
    CHECK(before.weighted_f1 == after.weighted_f1);
    CHECK(before.confusion == after.confusion);
    fs::remove_all(dir);
}

TEST_CASE("checkpoint load errors name the offending entry") {
    namespace fs = std::filesystem;
    TrainFixture fx;
    Model model = fx.model(10);
    const fs::path dir = fs::temp_directory_path() / "emodyn_ckpt_bad";
    fs::remove_all(dir);
    save_checkpoint(dir, model, nullptr, fx.labels, fx.vocab);

    // truncate one parameter file
    std::string victim;
    model.visit_params([&](const std::string& name, Tensor&, bool) {
        if (victim.empty()) victim = name;
    });
    {
        std::ofstream out(dir / "params" / (victim + ".f64"),
                          std::ios::binary | std::ios::trunc);
        out << "xx";
    }
    try {
        load_checkpoint(dir);
        FAIL("expected LoadError");
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find(victim) != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("train config JSON round-trip and validation") {
    TrainConfig tc;
    tc.epochs = 7;
    tc.batch_size = 3;
    tc.clip_norm = 1.5;
    tc.optim.lr = 6e-6;
    TrainConfig back = TrainConfig::from_json_string(tc.to_json_string());
    CHECK(back.epochs == 7);
    CHECK(back.batch_size == 3);
    CHECK(back.clip_norm == 1.5);
    CHECK(back.optim.lr == 6e-6);
    CHECK_THROWS_AS(TrainConfig::from_json_string(R"({"epochs":0})"), ContractError);
}
