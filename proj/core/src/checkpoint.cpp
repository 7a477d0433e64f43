#include <bit>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "emodyn/errors.hpp"
#include "emodyn/trainer.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint files are little-endian raw f64 arrays");

namespace emodyn {

namespace {

constexpr int kFormatVersion = 1;

void write_f64_file(const std::filesystem::path& path, const std::vector<double>& values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(values.data()),
              (std::streamsize)(values.size() * sizeof(double)));
    if (!out) throw LoadError("short write to " + path.string());
}

std::vector<double> read_f64_file(const std::filesystem::path& path, std::size_t count,
                                  const std::string& entry) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw LoadError("checkpoint entry " + entry + ": missing file " + path.string());
    const auto bytes = (std::size_t)in.tellg();
    if (bytes != count * sizeof(double)) {
        throw LoadError("checkpoint entry " + entry + ": expected " +
                        std::to_string(count * sizeof(double)) + " bytes, found " +
                        std::to_string(bytes));
    }
    std::vector<double> values(count);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(values.data()), (std::streamsize)bytes);
    if (!in) throw LoadError("checkpoint entry " + entry + ": short read");
    return values;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Model& model,
                     const AdamW* optimizer, const LabelMap& labels, const Vocab& vocab) {
    std::filesystem::create_directories(dir / "params");

    nlohmann::ordered_json manifest;
    manifest["format_version"] = kFormatVersion;
    manifest["model"] = nlohmann::ordered_json::parse(model.config().to_json_string());
    manifest["labels"] = labels.names();

    nlohmann::ordered_json params = nlohmann::ordered_json::array();
    // visit_params hands out mutable tensor handles; saving only reads them.
    auto& mutable_model = const_cast<Model&>(model);
    mutable_model.visit_params([&](const std::string& name, Tensor& t, bool decay) {
        nlohmann::ordered_json entry;
        entry["name"] = name;
        entry["shape"] = t.shape();
        entry["decay"] = decay;
        params.push_back(std::move(entry));
        write_f64_file(dir / "params" / (name + ".f64"), t.values());
    });
    manifest["params"] = std::move(params);

    if (optimizer) {
        std::filesystem::create_directories(dir / "optim");
        nlohmann::ordered_json optim;
        optim["lr"] = optimizer->config().lr;
        optim["beta1"] = optimizer->config().beta1;
        optim["beta2"] = optimizer->config().beta2;
        optim["eps"] = optimizer->config().eps;
        optim["weight_decay"] = optimizer->config().weight_decay;
        optim["warmup_steps"] = optimizer->config().warmup_steps;
        optim["total_steps"] = optimizer->config().total_steps;
        optim["steps"] = optimizer->steps_taken();
        manifest["optim"] = std::move(optim);
        for (const AdamW::Slot& slot : optimizer->slots()) {
            write_f64_file(dir / "optim" / (slot.name + ".m.f64"), slot.m);
            write_f64_file(dir / "optim" / (slot.name + ".v.f64"), slot.v);
        }
    }

    {
        std::ofstream out(dir / "manifest.json");
        if (!out) throw LoadError("cannot write " + (dir / "manifest.json").string());
        out << manifest.dump(2) << "\n";
    }
    {
        std::ofstream out(dir / "vocab.txt");
        if (!out) throw LoadError("cannot write " + (dir / "vocab.txt").string());
        vocab.save(out);
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream manifest_in(dir / "manifest.json");
    if (!manifest_in) throw LoadError("missing checkpoint manifest in " + dir.string());
    nlohmann::json manifest = nlohmann::json::parse(manifest_in, nullptr, false);
    if (manifest.is_discarded()) throw LoadError("checkpoint manifest: invalid JSON");
    if (manifest.value("format_version", -1) != kFormatVersion) {
        throw LoadError("checkpoint manifest: unsupported format version");
    }

    ModelConfig config = ModelConfig::from_json_string(manifest.at("model").dump());
    LabelMap labels(manifest.at("labels").get<std::vector<std::string>>());
    if (labels.size() == 0) throw LoadError("checkpoint manifest: empty label list");

    std::ifstream vocab_in(dir / "vocab.txt");
    if (!vocab_in) throw LoadError("missing vocab.txt in " + dir.string());
    Vocab vocab = Vocab::load(vocab_in);

    Model model(config, labels.size());
    std::unordered_map<std::string, Tensor> by_name;
    model.visit_params([&by_name](const std::string& name, Tensor& t, bool) {
        by_name.emplace(name, t);
    });

    std::unordered_set<std::string> seen;
    for (const auto& entry : manifest.at("params")) {
        const std::string name = entry.at("name").get<std::string>();
        auto it = by_name.find(name);
        if (it == by_name.end()) {
            throw LoadError("checkpoint entry " + name + ": unknown parameter for this config");
        }
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        if (shape != it->second.shape()) {
            std::ostringstream msg;
            msg << "checkpoint entry " << name << ": shape mismatch";
            throw LoadError(msg.str());
        }
        it->second.values() = read_f64_file(dir / "params" / (name + ".f64"),
                                            it->second.size(), name);
        seen.insert(name);
    }
    for (const auto& [name, t] : by_name) {
        if (!seen.count(name)) {
            throw LoadError("checkpoint is missing parameter " + name);
        }
    }

    Checkpoint ckpt{std::move(model), std::move(labels), std::move(vocab), std::nullopt};
    if (manifest.contains("optim")) {
        const auto& oj = manifest.at("optim");
        OptimConfig oc;
        oc.lr = oj.at("lr").get<double>();
        oc.beta1 = oj.at("beta1").get<double>();
        oc.beta2 = oj.at("beta2").get<double>();
        oc.eps = oj.at("eps").get<double>();
        oc.weight_decay = oj.at("weight_decay").get<double>();
        oc.warmup_steps = oj.at("warmup_steps").get<std::size_t>();
        oc.total_steps = oj.at("total_steps").get<std::size_t>();
        AdamW optimizer = AdamW::for_model(ckpt.model, oc);
        optimizer.set_steps(oj.at("steps").get<std::size_t>());
        for (AdamW::Slot& slot : optimizer.slots()) {
            slot.m = read_f64_file(dir / "optim" / (slot.name + ".m.f64"), slot.param.size(),
                                   slot.name + " (adam m)");
            slot.v = read_f64_file(dir / "optim" / (slot.name + ".v.f64"), slot.param.size(),
                                   slot.name + " (adam v)");
        }
        ckpt.optimizer.emplace(std::move(optimizer));
    }
    return ckpt;
}

}  // namespace emodyn
