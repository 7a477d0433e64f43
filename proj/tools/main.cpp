// emodyn: prepare / train / eval / predict / synth for the emotion-dynamics
// models. Config-file-first: every knob lives in a JSON config, overridable
// on the command line with --set dotted.key=value.

#include <cmath>
#include <filesystem>
#include <optional>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "emodyn/corpus.hpp"
#include "emodyn/errors.hpp"
#include "emodyn/metrics.hpp"
#include "emodyn/model.hpp"
#include "emodyn/synth.hpp"
#include "emodyn/trainer.hpp"
#include "emodyn/vocab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw emodyn::LoadError("cannot open config " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw emodyn::LoadError("config " + path + ": invalid JSON");
    if (!j.is_object()) throw emodyn::LoadError("config " + path + ": expected an object");
    return j;
}

void apply_overrides(json& config, const std::vector<std::string>& sets) {
    for (const std::string& kv : sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw emodyn::LoadError("--set expects key=value, got \"" + kv + "\"");
        }
        const std::string key = kv.substr(0, eq);
        const std::string raw = kv.substr(eq + 1);
        json value = json::parse(raw, nullptr, false);
        if (value.is_discarded()) value = raw;  // bare strings need no quotes

        json* node = &config;
        std::istringstream path(key);
        std::string part;
        std::vector<std::string> parts;
        while (std::getline(path, part, '.')) parts.push_back(part);
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
            node = &(*node)[parts[i]];
            if (!node->is_object() && !node->is_null()) {
                throw emodyn::LoadError("--set " + key + ": " + parts[i] +
                                        " is not an object");
            }
        }
        (*node)[parts.back()] = value;
    }
}

emodyn::Corpus load_corpus_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw emodyn::LoadError("cannot open corpus " + path);
    return emodyn::parse_corpus(in);
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw emodyn::LoadError("cannot write " + path.string());
    out << text;
}

emodyn::ModelConfig model_config_for(json config, std::size_t vocab_size) {
    json m = config.value("model", json::object());
    m["encoder"]["vocab_size"] = vocab_size;
    if (m.value("topology", "f_bert") == "h_bert") {
        if (!m.contains("backbone")) {
            // Default backbone: encoder dims, positions for the K+1 window.
            m["backbone"] = m["encoder"];
            m["backbone"]["max_len"] =
                m.value("context_window", (std::size_t)5) + 1;
        }
        m["backbone"]["vocab_size"] = vocab_size;
    }
    return emodyn::ModelConfig::from_json_string(m.dump());
}

std::string stats_table(const emodyn::CorpusStats& stats) {
    std::ostringstream out;
    out << "conversations       " << stats.n_conversations << "\n"
        << "utterances          " << stats.n_utterances << "\n"
        << "classes             " << stats.n_classes << "\n"
        << "avg conv length     " << std::fixed << std::setprecision(2)
        << stats.avg_conversation_length << "\n";
    for (const auto& [label, count] : stats.class_counts) {
        out << "  " << std::left << std::setw(18) << label << count << "\n";
    }
    return out.str();
}

int cmd_prepare(const std::string& corpus_path, const json& config, const fs::path& out) {
    emodyn::Corpus corpus = load_corpus_file(corpus_path);
    const json vcfg = config.value("vocab", json::object());
    emodyn::Vocab vocab = emodyn::Vocab::build(
        corpus, vcfg.value("max_size", (std::size_t)4096), vcfg.value("lowercase", true));
    emodyn::CorpusStats stats = emodyn::corpus_stats(corpus);

    fs::create_directories(out);
    {
        std::ofstream vout(out / "vocab.txt");
        if (!vout) throw emodyn::LoadError("cannot write " + (out / "vocab.txt").string());
        vocab.save(vout);
    }
    nlohmann::ordered_json sj;
    sj["conversations"] = stats.n_conversations;
    sj["utterances"] = stats.n_utterances;
    sj["classes"] = stats.n_classes;
    sj["avg_conversation_length"] = stats.avg_conversation_length;
    nlohmann::ordered_json counts = nlohmann::ordered_json::object();
    for (const auto& [label, count] : stats.class_counts) counts[label] = count;
    sj["class_counts"] = std::move(counts);
    write_text_file(out / "stats.json", sj.dump(2) + "\n");

    std::cout << stats_table(stats) << "vocab size          " << vocab.size() << "\n";
    return 0;
}

int cmd_train(const std::string& train_path, const std::string& val_path, json config,
              const fs::path& out, std::optional<std::uint64_t> seed, std::size_t runs) {
    emodyn::Corpus train_corpus = load_corpus_file(train_path);
    emodyn::Corpus val_corpus = load_corpus_file(val_path);
    // Label ids follow first-seen training order; validation-only labels are
    // appended so the validation gold is always scorable.
    emodyn::Corpus labeled = train_corpus;
    labeled.insert(labeled.end(), val_corpus.begin(), val_corpus.end());
    emodyn::LabelMap labels = emodyn::LabelMap::from_corpus(labeled);
    if (labels.size() == 0) throw emodyn::ContractError("training corpus has no labels");

    const json vcfg = config.value("vocab", json::object());
    const json mcfg_json = config.value("model", json::object());
    emodyn::Vocab vocab = emodyn::Vocab::build(train_corpus,
                                               vcfg.value("max_size", (std::size_t)4096),
                                               mcfg_json.value("lowercase", true));
    emodyn::ModelConfig mcfg = model_config_for(config, vocab.size());
    emodyn::TrainConfig tcfg =
        emodyn::TrainConfig::from_json_string(config.value("train", json::object()).dump());

    fs::create_directories(out);
    std::vector<double> final_wacc, final_wf1;
    const std::uint64_t base_seed = seed.value_or(tcfg.seed);
    for (std::size_t run = 0; run < runs; ++run) {
        const std::uint64_t run_seed = base_seed + run;
        tcfg.seed = run_seed;
        std::mt19937_64 rng(run_seed);
        emodyn::Model model(mcfg, labels.size(), rng);

        std::cout << "run " << run + 1 << "/" << runs << " (seed " << run_seed << ")\n";
        emodyn::TrainResult result =
            emodyn::train(model, train_corpus, val_corpus, vocab, labels, tcfg, &std::cout);

        const fs::path run_dir = runs == 1 ? out : out / ("run" + std::to_string(run));
        fs::create_directories(run_dir);
        emodyn::save_checkpoint(run_dir / "checkpoint", model, nullptr, labels, vocab);
        {
            std::ofstream hout(run_dir / "history.csv");
            emodyn::write_history_csv(result.history, hout);
        }
        emodyn::EvalReport report =
            emodyn::evaluate_corpus(model, val_corpus, vocab, labels);
        write_text_file(run_dir / "val_report.json", report.to_json_string() + "\n");
        final_wacc.push_back(report.weighted_acc);
        final_wf1.push_back(report.weighted_f1);
        std::cout << "best epoch " << result.best_epoch << "  val wF1 " << std::fixed
                  << std::setprecision(4) << report.weighted_f1 << "\n";
    }

    if (runs > 1) {
        auto mean_std = [](const std::vector<double>& xs) {
            double mean = 0.0;
            for (double x : xs) mean += x;
            mean /= (double)xs.size();
            double var = 0.0;
            for (double x : xs) var += (x - mean) * (x - mean);
            return std::pair(mean, std::sqrt(var / (double)xs.size()));
        };
        const auto [am, as] = mean_std(final_wacc);
        const auto [fm, fsd] = mean_std(final_wf1);
        std::cout << "over " << runs << " runs: val wACC " << std::fixed
                  << std::setprecision(4) << am << " +/- " << as << ", val wF1 " << fm
                  << " +/- " << fsd << "\n";
        nlohmann::ordered_json summary;
        summary["runs"] = runs;
        summary["val_wacc_mean"] = am;
        summary["val_wacc_std"] = as;
        summary["val_wf1_mean"] = fm;
        summary["val_wf1_std"] = fsd;
        write_text_file(out / "summary.json", summary.dump(2) + "\n");
    }
    return 0;
}

int cmd_eval(const std::string& checkpoint_dir, const std::string& test_path,
             const fs::path& out) {
    emodyn::Checkpoint ckpt = emodyn::load_checkpoint(checkpoint_dir);
    emodyn::Corpus test = load_corpus_file(test_path);
    emodyn::EvalReport report =
        emodyn::evaluate_corpus(ckpt.model, test, ckpt.vocab, ckpt.labels);
    emodyn::print_report(report, std::cout);
    fs::create_directories(out);
    write_text_file(out / "report.json", report.to_json_string() + "\n");
    {
        std::ofstream csv(out / "confusion.csv");
        emodyn::write_confusion_csv(report, csv);
    }
    {
        std::ofstream svg(out / "confusion.svg");
        emodyn::write_confusion_svg(report, svg);
    }
    return 0;
}

int cmd_predict(const std::string& checkpoint_dir, const std::string& corpus_path,
                const std::string& out_path) {
    emodyn::Checkpoint ckpt = emodyn::load_checkpoint(checkpoint_dir);
    emodyn::Corpus corpus = load_corpus_file(corpus_path);
    std::vector<emodyn::PredictionRow> rows =
        emodyn::predict_corpus(ckpt.model, corpus, ckpt.vocab, ckpt.labels);
    if (out_path.empty()) {
        emodyn::write_predictions_tsv(rows, ckpt.labels, std::cout);
    } else {
        std::ofstream out(out_path);
        if (!out) throw emodyn::LoadError("cannot write " + out_path);
        emodyn::write_predictions_tsv(rows, ckpt.labels, out);
    }
    return 0;
}

int cmd_synth(const json& config, const fs::path& out, std::uint64_t seed) {
    const json scfg = config.value("synth", json::object());
    emodyn::SynthSpec spec = emodyn::SynthSpec::from_json_string(scfg.dump());
    const auto val_n = scfg.value("val_conversations",
                                  std::max<std::size_t>(1, spec.n_conversations / 5));
    const auto test_n = scfg.value("test_conversations",
                                   std::max<std::size_t>(1, spec.n_conversations / 5));

    fs::create_directories(out);
    auto emit = [&](const std::string& name, std::size_t n, std::uint64_t split_seed) {
        emodyn::SynthSpec split = spec;
        split.n_conversations = n;
        split.id_prefix = spec.id_prefix + "-" + name;
        emodyn::Corpus corpus = emodyn::generate_corpus(split, split_seed);
        std::ofstream fout(out / (name + ".jsonl"));
        if (!fout) throw emodyn::LoadError("cannot write " + (out / name).string());
        emodyn::write_corpus(fout, corpus);
    };
    emit("train", spec.n_conversations, seed);
    emit("val", val_n, seed + 1);
    emit("test", test_n, seed + 2);
    std::cout << "wrote " << spec.n_conversations << "/" << val_n << "/" << test_n
              << " conversations to " << out.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"emotion dynamics modeling: train and evaluate conversational "
                 "emotion classifiers"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    std::string config_path, out_dir = "out";
    std::uint64_t seed = 42;
    std::size_t runs = 1;
    std::vector<std::string> sets;
    app.add_option("--config", config_path, "JSON config file")->capture_default_str();
    app.add_option("--out", out_dir, "output directory")->capture_default_str();
    app.add_option("--seed", seed, "base RNG seed")->capture_default_str();
    app.add_option("--runs", runs, "independent training runs (train only)")
        ->capture_default_str();
    app.add_option("--set", sets, "config override, dotted.key=value (repeatable)");

    std::string corpus_arg, second_arg;
    CLI::App* prepare = app.add_subcommand("prepare", "build vocab and corpus statistics");
    prepare->add_option("corpus", corpus_arg, "corpus jsonl")->required();
    CLI::App* train = app.add_subcommand("train", "train a model");
    train->add_option("train_corpus", corpus_arg, "training corpus jsonl")->required();
    train->add_option("val_corpus", second_arg, "validation corpus jsonl")->required();
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("checkpoint", corpus_arg, "checkpoint directory")->required();
    eval_cmd->add_option("test_corpus", second_arg, "test corpus jsonl")->required();
    CLI::App* predict = app.add_subcommand("predict", "write predictions for a corpus");
    predict->add_option("checkpoint", corpus_arg, "checkpoint directory")->required();
    predict->add_option("corpus", second_arg, "input corpus jsonl")->required();
    std::string predict_out;
    predict->add_option("--tsv", predict_out, "output TSV path (default: stdout)");
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");

    CLI11_PARSE(app, argc, argv);

    try {
        json config = load_config(config_path);
        apply_overrides(config, sets);
        if (runs < 1) throw emodyn::ContractError("--runs must be >= 1");
        std::optional<std::uint64_t> seed_opt;
        if (app.count("--seed") > 0) seed_opt = seed;
        if (prepare->parsed()) return cmd_prepare(corpus_arg, config, out_dir);
        if (train->parsed()) return cmd_train(corpus_arg, second_arg, config, out_dir,
                                              seed_opt, runs);
        if (eval_cmd->parsed()) return cmd_eval(corpus_arg, second_arg, out_dir);
        if (predict->parsed()) return cmd_predict(corpus_arg, second_arg, predict_out);
        if (synth->parsed()) return cmd_synth(config, out_dir, seed);
    } catch (const std::exception& e) {
        std::cerr << "emodyn: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
