// Command-line front end over the C API.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vos/vos.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitNumeric = 2;
constexpr double kGradTolerance = 1e-4;

struct Failure {
    int code;
    std::string message;
};

void check(vos_status s) {
    if (s == VOS_OK) return;
    throw Failure{s == VOS_ERR_NUMERIC ? kExitNumeric : kExitInvalid, vos_last_error()};
}

[[noreturn]] void invalid(const std::string& msg) { throw Failure{kExitInvalid, msg}; }

struct ModelDeleter {
    void operator()(vos_model* m) const { vos_model_free(m); }
};
using ModelPtr = std::unique_ptr<vos_model, ModelDeleter>;

ModelPtr load_model(const fs::path& path) {
    vos_model* m = nullptr;
    check(vos_model_load(path.c_str(), &m));
    return ModelPtr(m);
}

void save_model(const vos_model* m, const fs::path& path) { check(vos_model_save(m, path.c_str())); }

// Ordered key=value lines, written to <out>/run_config.txt before anything else.
class RunConfig {
public:
    explicit RunConfig(std::string command) { add("command", std::move(command)); }

    template <class T>
    RunConfig& add(const std::string& key, const T& value) {
        std::ostringstream os;
        os.precision(17);
        os << value;
        lines_.push_back(key + "=" + os.str());
        return *this;
    }

    void write(const fs::path& dir) const {
        fs::create_directories(dir);
        std::ofstream out(dir / "run_config.txt", std::ios::binary);
        if (!out) invalid("cannot write " + (dir / "run_config.txt").string());
        for (const auto& l : lines_) out << l << '\n';
        if (!out) invalid("cannot write " + (dir / "run_config.txt").string());
    }

private:
    std::vector<std::string> lines_;
};

std::string join(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

bool is_sequence_dir(const fs::path& p) { return fs::is_directory(p / "frames"); }

// Sequence directories named by `path`: the path itself when it is a
// sequence, otherwise every sequence of `split` listed in <path>/index.txt.
std::vector<fs::path> resolve_sequences(const fs::path& path, const std::string& split) {
    if (is_sequence_dir(path)) return {path};
    std::ifstream in(path / "index.txt");
    if (!in) invalid(path.string() + " is neither a sequence directory nor a dataset root with index.txt");
    std::vector<fs::path> out;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string s, id;
        if (ls >> s >> id && s == split) out.push_back(path / s / id);
    }
    if (out.empty()) invalid("dataset " + path.string() + " has no '" + split + "' sequences");
    return out;
}

std::vector<fs::path> instance_checkpoints(const fs::path& dir) {
    std::vector<fs::path> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.starts_with("instance_") && e.path().extension() == ".ckpt")
            out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

// Per-sequence fine-tuned models (<models>/<id>/instance_NN.ckpt or
// <models>/instance_NN.ckpt), else one shared model file.
std::vector<fs::path> models_for(const fs::path& models, const fs::path& sequence) {
    if (fs::is_regular_file(models)) return {models};
    if (auto v = instance_checkpoints(models / sequence.filename()); !v.empty()) return v;
    if (auto v = instance_checkpoints(models); !v.empty()) return v;
    if (fs::is_regular_file(models / "model.ckpt")) return {models / "model.ckpt"};
    invalid("no checkpoints for sequence '" + sequence.filename().string() + "' under " + models.string());
}

std::vector<std::size_t> parse_filters(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t pos = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(item, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != item.size()) invalid("--filters: '" + text + "' is not a comma-separated list of integers");
        out.push_back(v);
    }
    if (out.empty()) invalid("--filters must not be empty");
    return out;
}

const std::map<std::string, vos_loss> kLosses{
    {"wce", VOS_LOSS_WEIGHTED_CE}, {"dice", VOS_LOSS_DICE}, {"ce", VOS_LOSS_UNWEIGHTED_CE}};
const std::map<std::string, vos_optimizer> kOptimizers{{"adam", VOS_OPTIMIZER_ADAM}, {"sgd", VOS_OPTIMIZER_SGD}};

// ---- gen-data ----

struct GenArgs {
    std::uint64_t seed = 1;
    std::string out;
    std::size_t sequences = 16;
    std::size_t frames = 16;
    std::size_t size = 64;
    std::size_t instances = 2;
    bool crossing = false;
    bool exit_return = false;
};

int run_gen(const GenArgs& a) {
    if (a.sequences < 2) invalid("--sequences must be at least 2 (one train, one val)");
    vos_synthetic_config c;
    vos_synthetic_config_default(&c);
    c.val_sequences = std::max<std::size_t>(1, a.sequences / 4);
    c.train_sequences = a.sequences - c.val_sequences;
    c.frames = a.frames;
    c.image_size = a.size;
    c.instances = a.instances;
    c.crossing = a.crossing;
    c.exit_return = a.exit_return;
    c.seed = a.seed;
    RunConfig("gen-data")
        .add("seed", a.seed)
        .add("sequences", a.sequences)
        .add("train_sequences", c.train_sequences)
        .add("val_sequences", c.val_sequences)
        .add("frames", a.frames)
        .add("size", a.size)
        .add("instances", a.instances)
        .add("crossing", a.crossing)
        .add("exit_return", a.exit_return)
        .write(a.out);
    check(vos_generate_dataset(&c, a.out.c_str()));
    return kExitOk;
}

// ---- train ----

struct TrainArgs {
    std::string data;
    std::string out;
    std::string filters = "8,16,32";
    double lr = 1e-3;
    std::size_t batch = 8;
    std::size_t iters = 1000;
    std::string loss = "wce";
    std::string arch = "unet";
    std::string optimizer = "adam";
    std::uint64_t seed = 1;
    std::size_t val_every = 100;
    bool shuffle = false;
};

int run_train(const TrainArgs& a) {
    const auto filters = parse_filters(a.filters);
    vos_model_config mc;
    vos_model_config_default(&mc, filters.data(), filters.size());
    if (a.arch == "segnet") {
        mc.skip_connections = 0;
        mc.upsample = VOS_UPSAMPLE_TRANSPOSED_CONV;
    }
    vos_hyperparams hp;
    vos_hyperparams_default(&hp);
    hp.learning_rate = a.lr;
    hp.batch_size = a.batch;
    hp.max_iterations = a.iters;
    hp.loss = kLosses.at(a.loss);
    hp.optimizer = kOptimizers.at(a.optimizer);
    hp.seed = a.seed;
    hp.val_every = a.val_every;
    hp.shuffle = a.shuffle;

    RunConfig("train")
        .add("data", a.data)
        .add("filters", join(filters))
        .add("arch", a.arch)
        .add("lr", a.lr)
        .add("batch", a.batch)
        .add("iters", a.iters)
        .add("loss", a.loss)
        .add("optimizer", a.optimizer)
        .add("seed", a.seed)
        .add("val_every", a.val_every)
        .add("shuffle", a.shuffle)
        .write(a.out);

    vos_model* raw = nullptr;
    check(vos_model_create(&mc, a.seed, &raw));
    ModelPtr model(raw);
    std::cout << "params=" << vos_model_param_count(model.get()) << '\n';
    const auto progress = [](std::size_t it, double loss, void*) {
        if (it % 100 == 0) std::cout << "iteration=" << it << " loss=" << loss << std::endl;
    };
    const auto status = vos_train_parent(model.get(), a.data.c_str(), &hp, a.out.c_str(), progress, nullptr);
    if (status == VOS_ERR_NUMERIC) {
        const std::string msg = vos_last_error();
        save_model(model.get(), fs::path(a.out) / "last_finite.ckpt");
        throw Failure{kExitNumeric, msg + " (last finite parameters saved to last_finite.ckpt)"};
    }
    check(status);
    save_model(model.get(), fs::path(a.out) / "model.ckpt");
    return kExitOk;
}

// ---- finetune ----

struct FinetuneArgs {
    std::string model;
    std::string sequence;
    std::string out;
    std::string split = "val";
    std::size_t iters = 100;
    double lr = 1e-4;
    std::string loss = "wce";
};

int run_finetune(const FinetuneArgs& a) {
    vos_hyperparams hp;
    vos_hyperparams_default(&hp);
    hp.finetune_iterations = a.iters;
    hp.finetune_learning_rate = a.lr;
    hp.loss = kLosses.at(a.loss);
    RunConfig("finetune")
        .add("model", a.model)
        .add("sequence", a.sequence)
        .add("split", a.split)
        .add("iters", a.iters)
        .add("lr", a.lr > 0.0 ? a.lr : hp.learning_rate)
        .add("loss", a.loss)
        .write(a.out);

    const auto parent = load_model(a.model);
    const auto sequences = resolve_sequences(a.sequence, a.split);
    for (const auto& seq : sequences) {
        const fs::path dir = sequences.size() == 1 && is_sequence_dir(a.sequence) ? fs::path(a.out)
                                                                                   : fs::path(a.out) / seq.filename();
        fs::create_directories(dir);
        std::size_t n = 0;
        check(vos_sequence_instances(seq.c_str(), &n));
        for (std::size_t k = 1; k <= n; ++k) {
            vos_model* raw = nullptr;
            check(vos_finetune(parent.get(), seq.c_str(), k, &hp, &raw));
            ModelPtr tuned(raw);
            char name[32];
            std::snprintf(name, sizeof name, "instance_%02zu.ckpt", k);
            save_model(tuned.get(), dir / name);
        }
    }
    return kExitOk;
}

// ---- predict ----

struct PredictArgs {
    std::string models;
    std::string sequence;
    std::string out;
    std::string split = "val";
};

int run_predict(const PredictArgs& a) {
    RunConfig("predict").add("models", a.models).add("sequence", a.sequence).add("split", a.split).write(a.out);
    for (const auto& seq : resolve_sequences(a.sequence, a.split)) {
        std::vector<ModelPtr> owned;
        std::vector<const vos_model*> models;
        for (const auto& p : models_for(a.models, seq)) {
            owned.push_back(load_model(p));
            models.push_back(owned.back().get());
        }
        check(vos_predict_sequence(models.data(), models.size(), seq.c_str(), a.out.c_str()));
    }
    return kExitOk;
}

// ---- eval ----

struct EvalArgs {
    std::string pred;
    std::string gt;
    std::string out;
    double tolerance = -1.0;
};

int run_eval(const EvalArgs& a) {
    RunConfig cfg("eval");
    cfg.add("pred", a.pred).add("gt", a.gt);
    if (a.tolerance >= 0.0)
        cfg.add("tolerance", a.tolerance);
    else
        cfg.add("tolerance", "default");
    cfg.write(a.out);
    double j = 0.0, f = 0.0;
    check(vos_evaluate(a.pred.c_str(), a.gt.c_str(), a.tolerance, a.out.c_str(), &j, &f));
    std::printf("j_mean=%.6f f_mean=%.6f\n", j, f);
    return kExitOk;
}

// ---- gradcheck ----

struct GradArgs {
    std::uint64_t seed = 1;
    std::size_t trials = 100;
    std::string out;
};

int run_gradcheck(const GradArgs& a) {
    if (!a.out.empty()) RunConfig("gradcheck").add("seed", a.seed).add("trials", a.trials).write(a.out);
    std::vector<vos_grad_result> results(64);
    std::size_t count = 0;
    check(vos_gradcheck(a.seed, a.trials, results.data(), results.size(), &count));
    results.resize(std::min(count, results.size()));
    bool ok = true;
    std::ostringstream report;
    for (const auto& r : results) {
        const bool pass = r.max_rel_error < kGradTolerance;
        ok = ok && pass;
        char line[160];
        std::snprintf(line, sizeof line, "op=%s max_rel_error=%.3e checked=%zu skipped=%zu %s\n", r.op,
                      r.max_rel_error, r.checked, r.skipped, pass ? "ok" : "FAIL");
        report << line;
    }
    std::cout << report.str();
    if (!a.out.empty()) {
        std::ofstream f(fs::path(a.out) / "gradcheck.txt", std::ios::binary);
        f << report.str();
    }
    return ok ? kExitOk : kExitInvalid;
}

// Lists every flag of `app` on one line, for unknown-flag diagnostics.
std::string valid_flags(const CLI::App* app) {
    std::string s;
    for (const auto* opt : app->get_options()) {
        const auto name = opt->get_name(false, true);
        if (name.empty() || name == "--help,-h" || name == "-h,--help") continue;
        if (!opt->get_lnames().empty()) s += (s.empty() ? "--" : " --") + opt->get_lnames().front();
    }
    return s;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-instance video object segmentation toolkit"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen-data", "Generate a synthetic moving-shapes dataset");
    g->add_option("--seed", gen.seed);
    g->add_option("--out", gen.out)->required();
    g->add_option("--sequences", gen.sequences, "Total sequences, split 3:1 train/val");
    g->add_option("--frames", gen.frames);
    g->add_option("--size", gen.size);
    g->add_option("--instances", gen.instances);
    g->add_flag("--crossing", gen.crossing);
    g->add_flag("--exit-return", gen.exit_return);

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a parent model");
    t->set_config("--config", "", "key=value file; command-line flags take precedence");
    t->add_option("--data", tr.data)->required();
    t->add_option("--out", tr.out)->required();
    t->add_option("--filters", tr.filters);
    t->add_option("--lr", tr.lr);
    t->add_option("--batch", tr.batch);
    t->add_option("--iters", tr.iters);
    t->add_option("--loss", tr.loss)->check(CLI::IsMember({"wce", "dice", "ce"}));
    t->add_option("--arch", tr.arch)->check(CLI::IsMember({"unet", "segnet"}));
    t->add_option("--optimizer", tr.optimizer)->check(CLI::IsMember({"adam", "sgd"}));
    t->add_option("--seed", tr.seed);
    t->add_option("--val-every", tr.val_every);
    t->add_flag("--shuffle", tr.shuffle);

    FinetuneArgs ft;
    auto* f = app.add_subcommand("finetune", "Fine-tune a parent model on first frames");
    f->add_option("--model", ft.model)->required();
    f->add_option("--sequence", ft.sequence, "Sequence directory or dataset root")->required();
    f->add_option("--out", ft.out)->required();
    f->add_option("--iters", ft.iters);
    f->add_option("--lr", ft.lr);
    f->add_option("--loss", ft.loss)->check(CLI::IsMember({"wce", "dice", "ce"}));
    f->add_option("--split", ft.split, "Split used when --sequence is a dataset root");

    PredictArgs pr;
    auto* p = app.add_subcommand("predict", "Predict masks for every frame");
    p->add_option("--models", pr.models, "Checkpoint file or directory")->required();
    p->add_option("--sequence", pr.sequence, "Sequence directory or dataset root")->required();
    p->add_option("--out", pr.out)->required();
    p->add_option("--split", pr.split, "Split used when --sequence is a dataset root");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Score predictions against ground truth");
    e->add_option("--pred", ev.pred)->required();
    e->add_option("--gt", ev.gt)->required();
    e->add_option("--out", ev.out)->required();
    e->add_option("--tolerance", ev.tolerance, "Boundary tolerance in pixels (default ceil(0.8% of diagonal))");

    GradArgs gc;
    auto* c = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
    c->add_option("--seed", gc.seed);
    c->add_option("--trials", gc.trials);
    c->add_option("--out", gc.out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        const CLI::App* sub = nullptr;
        for (const auto* s : app.get_subcommands()) sub = s;
        std::cerr << "error: " << ex.what();
        if (sub) std::cerr << "; valid flags for " << sub->get_name() << ": " << valid_flags(sub);
        std::cerr << '\n';
        return kExitInvalid;
    }

    try {
        if (g->parsed()) return run_gen(gen);
        if (t->parsed()) return run_train(tr);
        if (f->parsed()) return run_finetune(ft);
        if (p->parsed()) return run_predict(pr);
        if (e->parsed()) return run_eval(ev);
        if (c->parsed()) return run_gradcheck(gc);
    } catch (const Failure& fail) {
        std::cerr << "error: " << fail.message << '\n';
        return fail.code;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return kExitInvalid;
    }
    return kExitInvalid;
}
