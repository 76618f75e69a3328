// Acceptance suite: one PASS/FAIL line per criterion, exit 0 iff all pass.
//   vos_acceptance [--only 1,4,...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <fmt/format.h>

#include "common/random.hpp"
#include "dataset/synthetic.hpp"
#include "isolation/isolation.hpp"
#include "metrics/metrics.hpp"
#include "network/model.hpp"
#include "oracles.hpp"
#include "tensor/tensor.hpp"
#include "trainer/trainer.hpp"
#include "verify/grad_suite.hpp"

namespace fs = std::filesystem;
using namespace vos;

namespace {

// Budgets for the training criteria.
constexpr std::size_t kParentIterations = 1500;
constexpr std::size_t kSparseIterations = 600;
constexpr std::size_t kFinetuneIterations = 100;

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Split {
    std::vector<data::VideoSequence> train;
    std::vector<data::VideoSequence> val;
};

Split generate(const data::SyntheticConfig& c) {
    Split s;
    for (std::size_t i = 0; i < c.train_sequences; ++i)
        s.train.push_back(data::generate_sequence(c, i, data::synthetic_sequence_id("train", i)));
    for (std::size_t i = 0; i < c.val_sequences; ++i)
        s.val.push_back(data::generate_sequence(c, c.train_sequences + i, data::synthetic_sequence_id("val", i)));
    return s;
}

std::vector<train::Sample> samples_of(const std::vector<data::VideoSequence>& seqs) {
    std::vector<train::Sample> out;
    for (const auto& s : seqs) {
        auto x = train::make_training_samples(s);
        out.insert(out.end(), std::make_move_iterator(x.begin()), std::make_move_iterator(x.end()));
    }
    return out;
}

net::Model train_model(const net::ModelConfig& cfg, const Split& data, loss::LossKind kind, std::size_t iterations) {
    auto model = net::Model::build(cfg, 1);
    train::Hyperparams hp;
    hp.loss = kind;
    hp.max_iterations = iterations;
    hp.val_every = 0;
    train::train_parent(model, samples_of(data.train), {}, hp);
    return model;
}

metrics::SequenceMasks predict(std::span<const net::Model> models, const data::VideoSequence& s) {
    return {s.id, train::predict_sequence(models, s)};
}

metrics::EvalReport evaluate(const std::vector<metrics::SequenceMasks>& preds,
                             const std::vector<data::VideoSequence>& seqs) {
    std::vector<metrics::SequenceMasks> gt;
    for (const auto& s : seqs) gt.push_back({s.id, s.ground_truth});
    return metrics::evaluate_dataset(preds, gt);
}

metrics::EvalReport evaluate_parent(const net::Model& m, const std::vector<data::VideoSequence>& seqs) {
    std::vector<metrics::SequenceMasks> preds;
    std::vector<net::Model> models{m};
    for (const auto& s : seqs) preds.push_back(predict(models, s));
    return evaluate(preds, seqs);
}

double sequence_j(const metrics::EvalReport& r, const std::string& id) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& e : r.entries)
        if (e.sequence == id) {
            sum += e.j_mean;
            ++n;
        }
    return sum / double(n);
}

// State shared by the training criteria so the parent is trained once.
struct Shared {
    std::optional<Split> data;
    std::optional<net::Model> unet;
    std::optional<metrics::EvalReport> unet_report;
    double unet_seconds = 0.0;

    const Split& dataset() {
        if (!data) data = generate(data::SyntheticConfig{});
        return *data;
    }
    const net::Model& parent() {
        if (!unet) {
            const auto t0 = std::chrono::steady_clock::now();
            unet = train_model(net::unet_config({8, 16, 32}), dataset(), loss::LossKind::WeightedCe, kParentIterations);
            unet_report = evaluate_parent(*unet, dataset().val);
            unet_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }
        return *unet;
    }
    const metrics::EvalReport& report() {
        parent();
        return *unet_report;
    }
};

Outcome gradient_suite(Shared&) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto results = verify::grad_suite(1, 100);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double worst = 0.0;
    std::string worst_op;
    for (const auto& r : results)
        if (r.max_rel_error >= worst) {
            worst = r.max_rel_error;
            worst_op = r.op;
        }
    const bool ok = worst < 1e-4 && secs < 120.0;
    return {ok, fmt::format("{} ops x 100 seeds, worst {:.3g} ({}), {:.1f} s", results.size(), worst, worst_op, secs)};
}

Outcome metric_oracles(Shared&) {
    Rng rng(2024);
    std::size_t j_mismatch = 0;
    double f_worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        BinaryMask m(16, 16), g(16, 16);
        const double pm = rng.uniform(0.0, 0.6), pg = rng.uniform(0.0, 0.6);
        for (auto& v : m.data) v = rng.uniform() < pm;
        for (auto& v : g.data) v = rng.uniform() < pg;
        const double tol = double(rng.below(4));
        if (metrics::region_similarity_j(m, g) != test::brute_j(m, g)) ++j_mismatch;
        f_worst = std::max(f_worst, std::abs(metrics::boundary_f(m, g, tol).f - test::brute_f(m, g, tol)));
    }
    const BinaryMask empty(16, 16);
    BinaryMask dot(16, 16);
    dot.at(4, 4) = 1;
    const bool edges = metrics::region_similarity_j(empty, empty) == 1.0 && metrics::boundary_f(empty, empty, 1).f == 1.0 &&
                       metrics::region_similarity_j(empty, dot) == 0.0 && metrics::boundary_f(empty, dot, 1).f == 0.0 &&
                       metrics::region_similarity_j(dot, empty) == 0.0 && metrics::boundary_f(dot, empty, 1).f == 0.0;
    return {j_mismatch == 0 && f_worst <= 1e-12 && edges,
            fmt::format("J mismatches {}, worst F error {:.3g}, empty cases {}", j_mismatch, f_worst,
                        edges ? "ok" : "wrong")};
}

Outcome isolation_round_trip(Shared&) {
    Rng rng(77);
    std::size_t failures = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.below(5);
        InstanceMask m(1 + rng.below(16), 1 + rng.below(16));
        for (auto& v : m.data) v = static_cast<std::uint8_t>(rng.below(n + 1));
        m[0] = static_cast<std::uint8_t>(n);
        std::vector<ProbabilityMap> layers;
        for (const auto& b : iso::isolate(m)) layers.push_back(iso::to_probability(b));
        if (!(iso::merge(layers) == m)) ++failures;
    }
    return {failures == 0, fmt::format("{} of 1000 masks differ", failures)};
}

Outcome toy_training(Shared& shared) {
    const auto& r = shared.report();
    const bool ok = r.j_mean >= 0.70 && r.f_mean >= 0.50 && shared.unet_seconds <= 900.0;
    return {ok, fmt::format("J {:.4f} F {:.4f} after {} iterations, {:.0f} s", r.j_mean, r.f_mean, kParentIterations,
                            shared.unet_seconds)};
}

Outcome segnet_ordering(Shared& shared) {
    const auto& u = shared.report();
    const auto seg = train_model(net::segnet_config({8, 16, 32}), shared.dataset(), loss::LossKind::WeightedCe,
                                 kParentIterations);
    const auto s = evaluate_parent(seg, shared.dataset().val);
    return {s.f_mean < u.f_mean && s.j_mean <= u.j_mean,
            fmt::format("segnet J {:.4f} F {:.4f} vs u-net J {:.4f} F {:.4f}", s.j_mean, s.f_mean, u.j_mean, u.f_mean)};
}

// Fraction of pixels above 0.5 over every validation sample, each fed its
// ground-truth previous mask.
double predicted_foreground(const net::Model& m, const std::vector<train::Sample>& samples) {
    ad::NoGradGuard no_grad;
    std::size_t fg = 0, total = 0;
    for (const auto& s : samples) {
        const train::Sample* one[] = {&s};
        for (double p : m.forward(train::stack_inputs(one)).values()) fg += p > 0.5;
        total += s.target.size();
    }
    return double(fg) / double(total);
}

Outcome collapse(Shared&) {
    data::SyntheticConfig c;
    c.instances = 1;
    c.min_radius = 3.5;
    c.max_radius = 4.5;
    c.min_fg_fraction = 0.003;
    c.max_fg_fraction = 0.02;
    const auto data = generate(c);
    double truth = 0.0;
    std::size_t pixels = 0;
    for (const auto& s : data.train)
        for (const auto& f : s.ground_truth) {
            for (auto v : f.data) truth += v != 0;
            pixels += f.size();
        }
    truth /= double(pixels);
    const auto val = samples_of(data.val);
    const auto plain = train_model(net::unet_config({8, 16, 32}), data, loss::LossKind::UnweightedCe, kSparseIterations);
    const double fg = predicted_foreground(plain, val);
    const auto weighted = train_model(net::unet_config({8, 16, 32}), data, loss::LossKind::WeightedCe, kSparseIterations);
    const auto r = evaluate_parent(weighted, data.val);
    return {truth <= 0.02 && fg < 0.005 && r.j_mean > 0.5,
            fmt::format("train fg {:.2f}%, unweighted predicts {:.3f}% fg, weighted J {:.4f} ({} iterations)",
                        100 * truth, 100 * fg, r.j_mean, kSparseIterations)};
}

Outcome finetune_benefit(Shared& shared) {
    const auto& parent = shared.parent();
    const auto& base = shared.report();
    train::Hyperparams hp;
    std::vector<metrics::SequenceMasks> preds;
    for (const auto& s : shared.dataset().val) {
        std::vector<net::Model> models;
        for (std::size_t k = 1; k <= s.instance_count(); ++k)
            models.push_back(train::finetune(parent, s.frames[0], s.first_mask, k, kFinetuneIterations, hp));
        preds.push_back(predict(models, s));
    }
    const auto tuned = evaluate(preds, shared.dataset().val);
    std::size_t improved = 0;
    std::string per;
    for (const auto& s : shared.dataset().val) {
        const double a = sequence_j(base, s.id), b = sequence_j(tuned, s.id);
        improved += b > a;
        per += fmt::format(" {} {:.3f}->{:.3f}", s.id, a, b);
    }
    const auto n = shared.dataset().val.size();
    return {tuned.j_mean >= base.j_mean && 2 * improved >= n,
            fmt::format("J {:.4f} -> {:.4f}, improved {}/{};{}", base.j_mean, tuned.j_mean, improved, n, per)};
}

Outcome param_counts(Shared&) {
    const auto big = net::Model::build(net::unet_config({64, 128, 256, 512}), 1).param_count();
    const auto small = net::Model::build(net::unet_config({16, 32, 64}), 1).param_count();
    const bool tallies = big == test::closed_form_params({64, 128, 256, 512}, true) &&
                         small == test::closed_form_params({16, 32, 64}, true);
    const bool big_ok = big >= 28'000'000 && big <= 34'000'000;
    const bool small_ok = small >= 500'000 && small <= 900'000;
    return {tallies && big_ok && small_ok,
            fmt::format("[64,128,256,512] {} ({}), [16,32,64] {} ({}), closed form {}", big,
                        big_ok ? "in range" : "out of range", small, small_ok ? "in range" : "out of range",
                        tallies ? "matches" : "differs")};
}

// True when the two masks overlap or touch (8-neighbourhood).
bool touching(const BinaryMask& a, const BinaryMask& b) {
    for (std::size_t y = 0; y < a.height; ++y)
        for (std::size_t x = 0; x < a.width; ++x) {
            if (!a.at(y, x)) continue;
            for (std::size_t v = y ? y - 1 : 0; v <= std::min(y + 1, a.height - 1); ++v)
                for (std::size_t u = x ? x - 1 : 0; u <= std::min(x + 1, a.width - 1); ++u)
                    if (b.at(v, u)) return true;
        }
    return false;
}

bool any(const BinaryMask& m) {
    return std::any_of(m.data.begin(), m.data.end(), [](auto v) { return v != 0; });
}

struct Mean {
    double sum = 0.0;
    std::size_t n = 0;
    void add(double v) {
        sum += v;
        ++n;
    }
    double value() const { return n ? sum / double(n) : 0.0; }
};

Outcome failure_probes(Shared& shared) {
    const auto& parent = shared.parent();
    std::vector<net::Model> models{parent};

    data::SyntheticConfig cross;
    cross.crossing = true;
    Mean before, during;
    for (const auto& s : generate(cross).val) {
        const auto pred = train::predict_sequence(models, s);
        const auto gt1 = [&](std::size_t t) { return iso::isolate_one(s.ground_truth[t], 1); };
        const auto gt2 = [&](std::size_t t) { return iso::isolate_one(s.ground_truth[t], 2); };
        bool occluded_yet = false;
        for (std::size_t t = 1; t < s.frames.size(); ++t) {
            const bool occ = touching(gt1(t), gt2(t));
            occluded_yet = occluded_yet || occ;
            if (!occ && occluded_yet) continue; // post-occlusion frames are neither
            for (std::size_t k = 1; k <= 2; ++k) {
                const double j = metrics::region_similarity_j(iso::isolate_one(pred[t], k),
                                                              iso::isolate_one(s.ground_truth[t], k));
                (occ ? during : before).add(j);
            }
        }
    }

    data::SyntheticConfig exit;
    exit.exit_return = true;
    exit.frames = 24;
    Mean pre, post;
    for (const auto& s : generate(exit).val) {
        const auto pred = train::predict_sequence(models, s);
        bool gone = false, back = false;
        for (std::size_t t = 1; t < s.frames.size(); ++t) {
            const auto g = iso::isolate_one(s.ground_truth[t], 1);
            const bool present = any(g);
            gone = gone || !present;
            back = gone && present;
            if (!present) continue;
            const double j = metrics::region_similarity_j(iso::isolate_one(pred[t], 1), g);
            if (!gone) pre.add(j);
            else if (back) post.add(j);
        }
    }
    const bool occlusion_dip = during.n > 0 && before.n > 0 && during.value() < before.value();
    const bool return_drop = post.n > 0 && pre.n > 0 && post.value() < pre.value();
    return {occlusion_dip && return_drop,
            fmt::format("crossing J pre-occlusion {:.4f} ({} pts) vs occlusion {:.4f} ({} pts); exit-return J pre-exit "
                        "{:.4f} ({} pts) vs post-return {:.4f} ({} pts)",
                        before.value(), before.n, during.value(), during.n, pre.value(), pre.n, post.value(), post.n)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

// Runs the CLI pipeline twice in separate directories and compares every
// produced file byte for byte.
Outcome determinism(Shared&) {
    const fs::path root = fs::temp_directory_path() / fmt::format("vos-acceptance-{}", ::getpid());
    const std::string cli = VOS_CLI_PATH;
    const std::vector<std::string> steps = {
        "gen-data --seed 5 --out data --sequences 4 --frames 6",
        "train --data data --out run --filters 4,8 --iters 12 --batch 4 --val-every 4 --seed 3",
        "finetune --model run/model.ckpt --sequence data --split val --out tuned --iters 5",
        "predict --models tuned --sequence data --split val --out pred",
        "eval --pred pred --gt data/val --out eval",
    };
    for (const char* rep : {"a", "b"}) {
        fs::create_directories(root / rep);
        for (const auto& step : steps) {
            const auto cmd = fmt::format("cd '{}' && '{}' {} > /dev/null", (root / rep).string(), cli, step);
            if (std::system(cmd.c_str()) != 0) {
                fs::remove_all(root);
                return {false, fmt::format("step failed: {}", step)};
            }
        }
    }
    std::set<std::string> files;
    for (const char* rep : {"a", "b"})
        for (const auto& e : fs::recursive_directory_iterator(root / rep))
            if (e.is_regular_file()) files.insert(fs::relative(e.path(), root / rep).string());
    std::size_t differ = 0;
    std::string first;
    for (const auto& f : files)
        if (!fs::exists(root / "a" / f) || !fs::exists(root / "b" / f) || slurp(root / "a" / f) != slurp(root / "b" / f)) {
            if (!differ) first = f;
            ++differ;
        }
    fs::remove_all(root);
    const bool has_all = files.count("run/model.ckpt") && files.count("run/train_log.csv") &&
                         files.count("eval/report.txt") && files.count("pred/val-000/annotations/00001.pgm");
    return {differ == 0 && has_all,
            fmt::format("{} files compared, {} differ{}{}", files.size(), differ, differ ? ", first " : "", first)};
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome(Shared&)> run;
};

} // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--only" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
        } else {
            std::fprintf(stderr, "usage: %s [--only 1,2,...]\n", argv[0]);
            return 2;
        }
    }
    const std::vector<Criterion> criteria = {
        {1, "gradient-suite", gradient_suite},     {2, "metric-oracles", metric_oracles},
        {3, "isolation-round-trip", isolation_round_trip}, {4, "toy-training", toy_training},
        {5, "segnet-ordering", segnet_ordering},   {6, "unweighted-ce-collapse", collapse},
        {7, "finetune-benefit", finetune_benefit}, {8, "param-counts", param_counts},
        {9, "failure-probes", failure_probes},     {10, "determinism", determinism},
    };
    Shared shared;
    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        Outcome o;
        try {
            o = c.run(shared);
        } catch (const std::exception& e) {
            o = {false, fmt::format("threw: {}", e.what())};
        }
        failed += !o.pass;
        std::printf("criterion %d %s: %s (%s)\n", c.id, c.name, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
    }
    return failed ? 1 : 0;
}
