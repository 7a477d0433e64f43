#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "emodyn/corpus.hpp"
#include "emodyn/metrics.hpp"
#include "emodyn/model.hpp"
#include "emodyn/tensor.hpp"
#include "emodyn/vocab.hpp"

namespace emodyn {

struct OptimConfig {
    double lr = 1e-3;  // 6e-6 is the fine-tuning default with pretrained weights
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    std::size_t warmup_steps = 0;
    std::size_t total_steps = 0;  // 0: derived from the training run
};

/// AdamW with decoupled weight decay and a linear learning-rate schedule
/// (optional linear warmup, then decay to zero at total_steps).
class AdamW {
public:
    explicit AdamW(OptimConfig config);

    void add_param(const std::string& name, Tensor param, bool decay);
    static AdamW for_model(Model& model, OptimConfig config);

    /// Learning rate of the upcoming step.
    double current_lr() const;
    std::size_t steps_taken() const { return steps_; }
    const OptimConfig& config() const { return config_; }
    void set_total_steps(std::size_t total) { config_.total_steps = total; }

    /// Applies one update from the accumulated gradients, then leaves the
    /// gradients untouched (call zero_grads between batches). Throws
    /// TrainingError naming the parameter on non-finite gradients.
    void step();
    void zero_grads();

    struct Slot {
        std::string name;
        Tensor param;
        bool decay;
        std::vector<double> m, v;
    };
    const std::vector<Slot>& slots() const { return slots_; }
    std::vector<Slot>& slots() { return slots_; }
    void set_steps(std::size_t steps) { steps_ = steps; }

private:
    OptimConfig config_;
    std::vector<Slot> slots_;
    std::size_t steps_ = 0;
};

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t batch_size = 1;
    std::uint64_t seed = 42;
    std::size_t patience = 0;   // 0: early stopping off
    double clip_norm = 0.0;     // 0: no gradient clipping
    OptimConfig optim;

    std::string to_json_string() const;
    static TrainConfig from_json_string(const std::string& json);
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_wacc = 0.0;
    double val_wf1 = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    std::size_t best_epoch = 0;
    double best_val_f1 = 0.0;
    std::size_t steps = 0;
};

/// Deterministic training loop: seeded example order, per-epoch validation
/// on weighted F1, best-epoch parameters restored into `model` at the end.
TrainResult train(Model& model, const Corpus& train_corpus, const Corpus& val_corpus,
                  const Vocab& vocab, const LabelMap& labels, const TrainConfig& config,
                  std::ostream* log = nullptr);

void write_history_csv(const std::vector<EpochStats>& history, std::ostream& out);

struct PredictionRow {
    std::string conversation_id;
    std::size_t turn = 0;
    std::optional<std::string> gold;
    std::string predicted;
    std::vector<double> probs;
};

/// Worker count for parallel evaluation: EMODYN_THREADS when set, else the
/// hardware concurrency.
std::size_t eval_worker_count();

std::vector<PredictionRow> predict_corpus(const Model& model, const Corpus& corpus,
                                          const Vocab& vocab, const LabelMap& labels);
EvalReport evaluate_corpus(const Model& model, const Corpus& corpus, const Vocab& vocab,
                           const LabelMap& labels);
void write_predictions_tsv(const std::vector<PredictionRow>& rows,
                           const LabelMap& labels, std::ostream& out);

// ---- checkpointing ---------------------------------------------------------
// A checkpoint is a directory: manifest.json (format version, configs, label
// order, parameter index) plus one raw little-endian f64 array per named
// parameter, and vocab.txt. Round-trips are bit-exact.

void save_checkpoint(const std::filesystem::path& dir, const Model& model,
                     const AdamW* optimizer, const LabelMap& labels, const Vocab& vocab);

struct Checkpoint {
    Model model;
    LabelMap labels;
    Vocab vocab;
    std::optional<AdamW> optimizer;  // bound to `model`'s parameters
};

Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace emodyn
