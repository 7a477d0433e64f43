#include "emodyn/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <ostream>
#include <random>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "emodyn/errors.hpp"

namespace emodyn {

// ---- AdamW ------------------------------------------------------------------

AdamW::AdamW(OptimConfig config) : config_(config) {}

void AdamW::add_param(const std::string& name, Tensor param, bool decay) {
    Slot slot;
    slot.name = name;
    slot.param = std::move(param);
    slot.decay = decay;
    slot.m.assign(slot.param.size(), 0.0);
    slot.v.assign(slot.param.size(), 0.0);
    slots_.push_back(std::move(slot));
}

AdamW AdamW::for_model(Model& model, OptimConfig config) {
    AdamW optimizer(config);
    model.visit_params([&optimizer](const std::string& name, Tensor& t, bool decay) {
        optimizer.add_param(name, t, decay);
    });
    return optimizer;
}

double AdamW::current_lr() const {
    const std::size_t t = steps_;
    if (config_.warmup_steps > 0 && t < config_.warmup_steps) {
        return config_.lr * (double)(t + 1) / (double)config_.warmup_steps;
    }
    if (config_.total_steps == 0) return config_.lr;
    if (t >= config_.total_steps) return 0.0;
    const std::size_t done = t - config_.warmup_steps;
    const std::size_t span = config_.total_steps - config_.warmup_steps;
    return config_.lr * (1.0 - (double)done / (double)span);
}

void AdamW::step() {
    const double lr = current_lr();
    ++steps_;
    const double bc1 = 1.0 - std::pow(config_.beta1, (double)steps_);
    const double bc2 = 1.0 - std::pow(config_.beta2, (double)steps_);
    for (Slot& slot : slots_) {
        auto& theta = slot.param.values();
        const auto& g = slot.param.grad();
        for (double gi : g) {
            if (!std::isfinite(gi)) {
                throw TrainingError("non-finite gradient in parameter " + slot.name);
            }
        }
        const double wd = slot.decay ? config_.weight_decay : 0.0;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            slot.m[i] = config_.beta1 * slot.m[i] + (1.0 - config_.beta1) * g[i];
            slot.v[i] = config_.beta2 * slot.v[i] + (1.0 - config_.beta2) * g[i] * g[i];
            const double m_hat = slot.m[i] / bc1;
            const double v_hat = slot.v[i] / bc2;
            // Decay is decoupled: applied to theta directly, not folded into g.
            theta[i] -= lr * (m_hat / (std::sqrt(v_hat) + config_.eps) + wd * theta[i]);
        }
    }
}

void AdamW::zero_grads() {
    for (Slot& slot : slots_) slot.param.zero_grad();
}

// ---- TrainConfig -------------------------------------------------------------

std::string TrainConfig::to_json_string() const {
    nlohmann::ordered_json j;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["seed"] = seed;
    j["patience"] = patience;
    j["clip_norm"] = clip_norm;
    j["lr"] = optim.lr;
    j["beta1"] = optim.beta1;
    j["beta2"] = optim.beta2;
    j["eps"] = optim.eps;
    j["weight_decay"] = optim.weight_decay;
    j["warmup_steps"] = optim.warmup_steps;
    j["total_steps"] = optim.total_steps;
    return j.dump();
}

TrainConfig TrainConfig::from_json_string(const std::string& json) {
    nlohmann::json j = nlohmann::json::parse(json, nullptr, false);
    if (j.is_discarded()) throw LoadError("train config: invalid JSON");
    TrainConfig cfg;
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.patience = j.value("patience", cfg.patience);
    cfg.clip_norm = j.value("clip_norm", cfg.clip_norm);
    cfg.optim.lr = j.value("lr", cfg.optim.lr);
    cfg.optim.beta1 = j.value("beta1", cfg.optim.beta1);
    cfg.optim.beta2 = j.value("beta2", cfg.optim.beta2);
    cfg.optim.eps = j.value("eps", cfg.optim.eps);
    cfg.optim.weight_decay = j.value("weight_decay", cfg.optim.weight_decay);
    cfg.optim.warmup_steps = j.value("warmup_steps", cfg.optim.warmup_steps);
    cfg.optim.total_steps = j.value("total_steps", cfg.optim.total_steps);
    if (cfg.epochs < 1) throw ContractError("train config: epochs must be >= 1");
    if (cfg.batch_size < 1) throw ContractError("train config: batch size must be >= 1");
    return cfg;
}

// ---- training loop -----------------------------------------------------------

namespace {

struct Example {
    std::size_t conversation;
    std::size_t utterance;  // 1-based
    std::size_t label;
};

std::vector<Example> collect_examples(const Corpus& corpus, const LabelMap& labels) {
    std::vector<Example> examples;
    for (std::size_t c = 0; c < corpus.size(); ++c) {
        for (const Utterance& u : corpus[c].utterances) {
            if (u.label) examples.push_back({c, u.index, labels.id(*u.label)});
        }
    }
    return examples;
}

void clip_gradients(AdamW& optimizer, double clip_norm) {
    double sq = 0.0;
    for (const auto& slot : optimizer.slots()) {
        for (double g : slot.param.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm <= clip_norm) return;
    const double factor = clip_norm / norm;
    for (auto& slot : optimizer.slots()) {
        for (double& g : slot.param.grad()) g *= factor;
    }
}

std::unordered_map<std::string, std::vector<double>> snapshot_params(Model& model) {
    std::unordered_map<std::string, std::vector<double>> values;
    model.visit_params([&values](const std::string& name, Tensor& t, bool) {
        values[name] = t.values();
    });
    return values;
}

void restore_params(Model& model,
                    const std::unordered_map<std::string, std::vector<double>>& values) {
    model.visit_params([&values](const std::string& name, Tensor& t, bool) {
        t.values() = values.at(name);
    });
}

}  // namespace

TrainResult train(Model& model, const Corpus& train_corpus, const Corpus& val_corpus,
                  const Vocab& vocab, const LabelMap& labels, const TrainConfig& config,
                  std::ostream* log) {
    std::vector<Example> examples = collect_examples(train_corpus, labels);
    if (examples.empty()) throw ContractError("train: no labeled examples in corpus");

    const std::size_t batches_per_epoch =
        (examples.size() + config.batch_size - 1) / config.batch_size;
    AdamW optimizer = AdamW::for_model(model, config.optim);
    if (optimizer.config().total_steps == 0) {
        optimizer.set_total_steps(config.epochs * batches_per_epoch);
    }

    std::mt19937_64 rng(config.seed);
    TrainResult result;
    std::unordered_map<std::string, std::vector<double>> best;
    std::size_t epochs_since_best = 0;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(examples.begin(), examples.end(), rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < examples.size(); start += config.batch_size) {
            const std::size_t end = std::min(start + config.batch_size, examples.size());
            Tape tape;
            Tensor batch_loss;
            for (std::size_t i = start; i < end; ++i) {
                const Example& ex = examples[i];
                Tensor loss = cross_entropy(
                    model.logits(train_corpus[ex.conversation], ex.utterance, vocab),
                    ex.label);
                batch_loss = batch_loss.defined() ? add(batch_loss, loss) : loss;
            }
            batch_loss = scale(batch_loss, 1.0 / (double)(end - start));
            optimizer.zero_grads();
            tape.backward(batch_loss);
            if (config.clip_norm > 0.0) clip_gradients(optimizer, config.clip_norm);
            optimizer.step();
            loss_sum += batch_loss.item() * (double)(end - start);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / (double)examples.size();
        stats.lr = optimizer.current_lr();
        if (!val_corpus.empty()) {
            EvalReport report = evaluate_corpus(model, val_corpus, vocab, labels);
            stats.val_wacc = report.weighted_acc;
            stats.val_wf1 = report.weighted_f1;
        }
        result.history.push_back(stats);
        if (log) {
            (*log) << "epoch " << epoch << " loss " << std::fixed << std::setprecision(4)
                   << stats.train_loss << " val_wacc " << stats.val_wacc << " val_wf1 "
                   << stats.val_wf1 << "\n";
        }

        const bool improved =
            best.empty() || val_corpus.empty() || stats.val_wf1 > result.best_val_f1;
        if (improved) {
            result.best_val_f1 = stats.val_wf1;
            result.best_epoch = epoch;
            best = snapshot_params(model);
            epochs_since_best = 0;
        } else if (config.patience > 0 && ++epochs_since_best >= config.patience) {
            break;
        }
    }
    restore_params(model, best);
    result.steps = optimizer.steps_taken();
    return result;
}

void write_history_csv(const std::vector<EpochStats>& history, std::ostream& out) {
    out << "epoch,train_loss,val_wacc,val_wf1,lr\n";
    for (const EpochStats& s : history) {
        out << s.epoch << "," << std::setprecision(17) << s.train_loss << "," << s.val_wacc
            << "," << s.val_wf1 << "," << s.lr << "\n";
    }
}

// ---- evaluation ---------------------------------------------------------------

std::size_t eval_worker_count() {
    if (const char* env = std::getenv("EMODYN_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n >= 1) return (std::size_t)n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? hw : 1;
}

std::vector<PredictionRow> predict_corpus(const Model& model, const Corpus& corpus,
                                          const Vocab& vocab, const LabelMap& labels) {
    std::vector<std::pair<std::size_t, std::size_t>> tasks;
    for (std::size_t c = 0; c < corpus.size(); ++c) {
        for (const Utterance& u : corpus[c].utterances) tasks.emplace_back(c, u.index);
    }
    std::vector<PredictionRow> rows(tasks.size());
    const std::size_t n_workers = std::min(eval_worker_count(), std::max<std::size_t>(tasks.size(), 1));
    std::atomic<std::size_t> next(0);
    std::atomic<bool> failed(false);
    auto worker = [&]() {
        for (std::size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1)) {
            if (failed.load()) return;
            try {
                const auto [c, turn] = tasks[i];
                Discrimination d = model.predict(corpus[c], turn, vocab);
                PredictionRow row;
                row.conversation_id = corpus[c].id;
                row.turn = turn;
                row.gold = corpus[c].utterances[turn - 1].label;
                row.predicted = labels.name(d.predicted);
                row.probs = std::move(d.probs);
                rows[i] = std::move(row);
            } catch (...) {
                failed.store(true);
                throw;
            }
        }
    };
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
        if (failed.load()) throw TrainingError("prediction failed in a worker thread");
    }
    return rows;
}

EvalReport evaluate_corpus(const Model& model, const Corpus& corpus, const Vocab& vocab,
                           const LabelMap& labels) {
    std::vector<PredictionRow> rows = predict_corpus(model, corpus, vocab, labels);
    std::vector<std::size_t> gold, pred;
    for (const PredictionRow& row : rows) {
        if (!row.gold) continue;
        gold.push_back(labels.id(*row.gold));
        pred.push_back(labels.id(row.predicted));
    }
    return evaluate(gold, pred, labels.names());
}

void write_predictions_tsv(const std::vector<PredictionRow>& rows, const LabelMap& labels,
                           std::ostream& out) {
    out << "conversation\tturn\tgold\tpredicted";
    for (const std::string& name : labels.names()) out << "\tp_" << name;
    out << "\n";
    for (const PredictionRow& row : rows) {
        out << row.conversation_id << "\t" << row.turn << "\t"
            << (row.gold ? *row.gold : "") << "\t" << row.predicted;
        for (double p : row.probs) out << "\t" << std::setprecision(17) << p;
        out << "\n";
    }
}

}  // namespace emodyn
