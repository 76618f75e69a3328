#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "vos/vos.h"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("vos-capi-" + std::to_string(::getpid()) + "-" + std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int n = 0;
        return n;
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct Run {
    int code;
    std::string out;
};

Run cli(const fs::path& cwd, const std::string& args) {
    const fs::path log = cwd / "cli_output.txt";
    const std::string cmd = "cd '" + cwd.string() + "' && '" VOS_CLI_PATH "' " + args + " > '" + log.string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    return {WEXITSTATUS(status), slurp(log)};
}

vos_synthetic_config small_data() {
    vos_synthetic_config c;
    vos_synthetic_config_default(&c);
    c.image_size = 32;
    c.train_sequences = 2;
    c.val_sequences = 1;
    c.frames = 4;
    return c;
}

vos_model* tiny_model() {
    const size_t filters[] = {4, 8};
    vos_model_config cfg;
    vos_model_config_default(&cfg, filters, 2);
    vos_model* m = nullptr;
    REQUIRE(vos_model_create(&cfg, 1, &m) == VOS_OK);
    return m;
}

} // namespace

TEST_CASE("model create, forward, save and load") {
    TempDir dir;
    vos_model* m = tiny_model();
    CHECK(vos_model_param_count(m) > 0);
    std::vector<double> in(4 * 16 * 16, 0.5), a(16 * 16), b(16 * 16);
    REQUIRE(vos_model_forward(m, in.data(), 1, 16, 16, a.data()) == VOS_OK);
    const auto path = (dir.path / "m.ckpt").string();
    REQUIRE(vos_model_save(m, path.c_str()) == VOS_OK);
    vos_model* n = nullptr;
    REQUIRE(vos_model_load(path.c_str(), &n) == VOS_OK);
    REQUIRE(vos_model_forward(n, in.data(), 1, 16, 16, b.data()) == VOS_OK);
    CHECK(a == b);
    CHECK(vos_model_param_count(n) == vos_model_param_count(m));
    vos_model_free(m);
    vos_model_free(n);
}

TEST_CASE("errors map to status codes with a message") {
    vos_model* m = nullptr;
    CHECK(vos_model_load("/nonexistent/m.ckpt", &m) == VOS_ERR_IO);
    CHECK(std::string(vos_last_error()).size() > 0);
    vos_model_config cfg;
    vos_model_config_default(&cfg, nullptr, 0);
    CHECK(vos_model_create(&cfg, 1, &m) == VOS_ERR_INVALID);
    const size_t bad[] = {16, 8};
    vos_model_config_default(&cfg, bad, 2);
    CHECK(vos_model_create(&cfg, 1, &m) == VOS_ERR_INVALID);
    CHECK(m == nullptr);
}

TEST_CASE("train, finetune, predict and evaluate through the C interface") {
    TempDir dir;
    const auto data = small_data();
    const auto root = (dir.path / "data").string();
    REQUIRE(vos_generate_dataset(&data, root.c_str()) == VOS_OK);
    CHECK(fs::exists(dir.path / "data" / "index.txt"));

    vos_model* m = tiny_model();
    vos_hyperparams hp;
    vos_hyperparams_default(&hp);
    hp.max_iterations = 3;
    hp.batch_size = 2;
    hp.val_every = 1;
    std::size_t calls = 0;
    auto progress = [](size_t, double, void* user) { ++*static_cast<std::size_t*>(user); };
    const auto run = (dir.path / "run").string();
    REQUIRE(vos_train_parent(m, root.c_str(), &hp, run.c_str(), progress, &calls) == VOS_OK);
    CHECK(calls == 3);
    CHECK(slurp(dir.path / "run" / "train_log.csv").rfind("iteration,train_loss\n1,", 0) == 0);

    const auto seq = (dir.path / "data" / "val" / "val-000").string();
    size_t instances = 0;
    REQUIRE(vos_sequence_instances(seq.c_str(), &instances) == VOS_OK);
    CHECK(instances == 2);
    hp.finetune_iterations = 2;
    std::vector<vos_model*> tuned(instances);
    for (size_t k = 0; k < instances; ++k) REQUIRE(vos_finetune(m, seq.c_str(), k + 1, &hp, &tuned[k]) == VOS_OK);
    vos_model* absent = nullptr;
    CHECK(vos_finetune(m, seq.c_str(), 3, &hp, &absent) == VOS_ERR_INVALID);

    const auto pred = (dir.path / "pred").string();
    REQUIRE(vos_predict_sequence(tuned.data(), tuned.size(), seq.c_str(), pred.c_str()) == VOS_OK);
    CHECK(slurp(dir.path / "pred" / "val-000" / "annotations" / "00000.pgm") ==
          slurp(dir.path / "data" / "val" / "val-000" / "annotations" / "00000.pgm"));

    double j = -1, f = -1;
    const auto gt = (dir.path / "data" / "val").string();
    const auto eval = (dir.path / "eval").string();
    REQUIRE(vos_evaluate(pred.c_str(), gt.c_str(), -1.0, eval.c_str(), &j, &f) == VOS_OK);
    CHECK(j >= 0.0);
    CHECK(j <= 1.0);
    CHECK(fs::exists(dir.path / "eval" / "report.csv"));
    // Ground truth scored against itself is perfect.
    REQUIRE(vos_evaluate(gt.c_str(), gt.c_str(), -1.0, eval.c_str(), &j, &f) == VOS_OK);
    CHECK(j == 1.0);
    CHECK(f == 1.0);

    for (auto* t : tuned) vos_model_free(t);
    vos_model_free(m);
}

TEST_CASE("divergent training reports a numeric error") {
    TempDir dir;
    const auto data = small_data();
    const auto root = (dir.path / "data").string();
    REQUIRE(vos_generate_dataset(&data, root.c_str()) == VOS_OK);
    vos_model* m = tiny_model();
    vos_hyperparams hp;
    vos_hyperparams_default(&hp);
    hp.optimizer = VOS_OPTIMIZER_SGD;
    hp.learning_rate = 1e300;
    hp.max_iterations = 3;
    hp.val_every = 0;
    const auto run = (dir.path / "run").string();
    CHECK(vos_train_parent(m, root.c_str(), &hp, run.c_str(), nullptr, nullptr) == VOS_ERR_NUMERIC);
    CHECK(std::string(vos_last_error()).find("non-finite") != std::string::npos);
    vos_model_free(m);
}

TEST_CASE("gradcheck reports every op") {
    size_t count = 0;
    REQUIRE(vos_gradcheck(1, 1, nullptr, 0, &count) == VOS_OK);
    std::vector<vos_grad_result> rs(count);
    REQUIRE(vos_gradcheck(1, 1, rs.data(), rs.size(), &count) == VOS_OK);
    for (const auto& r : rs) {
        CHECK(r.max_rel_error < 1e-4);
        CHECK(r.checked > 0);
    }
}

TEST_CASE("cli pipeline and exit codes") {
    TempDir dir;
    CHECK(cli(dir.path, "gen-data --seed 2 --out data --sequences 4 --frames 4 --size 32").code == 0);
    const auto train = cli(dir.path, "train --data data --out run --filters 4,8 --iters 2 --batch 2 --lr 5e-4");
    CHECK(train.code == 0);
    const auto config = slurp(dir.path / "run" / "run_config.txt");
    CHECK(config.find("lr=0.0005") != std::string::npos);
    CHECK(config.find("filters=4,8") != std::string::npos);
    CHECK(fs::exists(dir.path / "run" / "model.ckpt"));

    CHECK(cli(dir.path, "predict --models run/model.ckpt --sequence data --split val --out pred").code == 0);
    const auto eval = cli(dir.path, "eval --pred data/val --gt data/val --out eval");
    CHECK(eval.code == 0);
    CHECK(eval.out.find("j_mean=1.000000") != std::string::npos);

    const auto bad = cli(dir.path, "train --data data --bogus 1");
    CHECK(bad.code == 1);
    CHECK(bad.out.find("--iters") != std::string::npos);
    CHECK(cli(dir.path, "predict --models missing.ckpt --sequence data --out p").code != 0);
}
