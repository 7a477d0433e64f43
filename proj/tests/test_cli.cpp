// Integration tests running the installed CLI binary end to end.

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <doctest.h>

#ifndef EMODYN_CLI_PATH
#error "EMODYN_CLI_PATH must point at the emodyn binary"
#endif

namespace fs = std::filesystem;

namespace {

struct Workdir {
    fs::path dir;
    Workdir() {
        dir = fs::temp_directory_path() /
              ("emodyn_cli_" + std::to_string(::getpid()));
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Workdir() { fs::remove_all(dir); }
    fs::path operator/(const std::string& leaf) const { return dir / leaf; }
};

int run(const std::string& args, const fs::path& log) {
    const std::string cmd =
        std::string(EMODYN_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

const std::string kTinyModel =
    " --set model.encoder.d_model=8 --set model.encoder.n_heads=2"
    " --set model.encoder.n_layers=1 --set model.encoder.d_hidden=16"
    " --set model.encoder.max_len=32 --set model.context_window=2";

}  // namespace

TEST_CASE("synth is deterministic per seed and feeds prepare") {
    Workdir wd;
    const std::string synth_args =
        "synth --seed 21 --set synth.n_conversations=5 --set synth.min_turns=3"
        " --set synth.max_turns=4 --out ";
    REQUIRE(run(synth_args + (wd / "d1").string(), wd / "log1") == 0);
    REQUIRE(run(synth_args + (wd / "d2").string(), wd / "log2") == 0);
    CHECK(slurp(wd / "d1" / "train.jsonl") == slurp(wd / "d2" / "train.jsonl"));
    CHECK(slurp(wd / "d1" / "test.jsonl") == slurp(wd / "d2" / "test.jsonl"));
    CHECK(fs::exists(wd / "d1" / "val.jsonl"));

    REQUIRE(run("prepare " + (wd / "d1" / "train.jsonl").string() + " --out " +
                    (wd / "prep").string(),
                wd / "plog") == 0);
    CHECK(fs::exists(wd / "prep" / "vocab.txt"));
    CHECK(fs::exists(wd / "prep" / "stats.json"));
    const std::string out = slurp(wd / "plog");
    CHECK(out.find("conversations") != std::string::npos);
}

TEST_CASE("train/eval/predict pipeline with config overrides") {
    Workdir wd;
    REQUIRE(run("synth --seed 22 --set synth.n_conversations=4"
                " --set 'synth.labels=[\"joy\",\"sadness\"]'"
                " --set synth.min_turns=3 --set synth.max_turns=3 --out " +
                    (wd / "data").string(),
                wd / "slog") == 0);

    const std::string train_args =
        "train " + (wd / "data" / "train.jsonl").string() + " " +
        (wd / "data" / "val.jsonl").string() + kTinyModel +
        " --set train.epochs=2 --set train.lr=0.001 --seed 5 --out ";
    REQUIRE(run(train_args + (wd / "run1").string(), wd / "tlog1") == 0);
    REQUIRE(run(train_args + (wd / "run2").string(), wd / "tlog2") == 0);
    CHECK(fs::exists(wd / "run1" / "checkpoint" / "manifest.json"));
    CHECK(fs::exists(wd / "run1" / "history.csv"));
    // idempotent given identical inputs and seed
    CHECK(slurp(wd / "run1" / "checkpoint" / "manifest.json") ==
          slurp(wd / "run2" / "checkpoint" / "manifest.json"));
    CHECK(slurp(wd / "run1" / "history.csv") == slurp(wd / "run2" / "history.csv"));
    for (const auto& entry :
         fs::directory_iterator(wd / "run1" / "checkpoint" / "params")) {
        CHECK(slurp(entry.path()) ==
              slurp(wd / "run2" / "checkpoint" / "params" / entry.path().filename()));
    }

    REQUIRE(run("eval " + (wd / "run1" / "checkpoint").string() + " " +
                    (wd / "data" / "test.jsonl").string() + " --out " +
                    (wd / "evalout").string(),
                wd / "elog") == 0);
    CHECK(fs::exists(wd / "evalout" / "report.json"));
    CHECK(fs::exists(wd / "evalout" / "confusion.csv"));
    CHECK(fs::exists(wd / "evalout" / "confusion.svg"));
    CHECK(slurp(wd / "elog").find("weighted ACC") != std::string::npos);

    REQUIRE(run("predict " + (wd / "run1" / "checkpoint").string() + " " +
                    (wd / "data" / "test.jsonl").string() + " --tsv " +
                    (wd / "pred.tsv").string(),
                wd / "prlog") == 0);
    const std::string tsv = slurp(wd / "pred.tsv");
    CHECK(tsv.rfind("conversation\tturn\tgold\tpredicted", 0) == 0);
}

TEST_CASE("multi-run training reports mean and std") {
    Workdir wd;
    REQUIRE(run("synth --seed 23 --set synth.n_conversations=3"
                " --set 'synth.labels=[\"joy\",\"sadness\"]'"
                " --set synth.min_turns=3 --set synth.max_turns=3 --out " +
                    (wd / "data").string(),
                wd / "slog") == 0);
    REQUIRE(run("train " + (wd / "data" / "train.jsonl").string() + " " +
                    (wd / "data" / "val.jsonl").string() + kTinyModel +
                    " --set train.epochs=1 --runs 2 --seed 9 --out " +
                    (wd / "runs").string(),
                wd / "tlog") == 0);
    CHECK(fs::exists(wd / "runs" / "run0" / "checkpoint"));
    CHECK(fs::exists(wd / "runs" / "run1" / "checkpoint"));
    CHECK(fs::exists(wd / "runs" / "summary.json"));
    CHECK(slurp(wd / "tlog").find("+/-") != std::string::npos);
}

TEST_CASE("errors exit nonzero with a single diagnostic line") {
    Workdir wd;
    CHECK(run("prepare " + (wd / "missing.jsonl").string() + " --out " +
                  (wd / "x").string(),
              wd / "log") == 1);
    const std::string log = slurp(wd / "log");
    CHECK(log.rfind("emodyn: ", 0) == 0);
    CHECK(std::count(log.begin(), log.end(), '\n') == 1);

    std::ofstream bad(wd / "bad.jsonl");
    bad << "{\"id\":\"a\",\"n_speakers\":1,\"turns\":[{\"speaker\":9,\"text\":\"x\"}]}\n";
    bad.close();
    CHECK(run("prepare " + (wd / "bad.jsonl").string() + " --out " +
                  (wd / "y").string(),
              wd / "log2") == 1);
    CHECK(slurp(wd / "log2").find("line 1") != std::string::npos);
}
