#include "vos/vos.h"

#include <cstring>
#include <exception>
#include <filesystem>
#include <new>
#include <string>

#include <fmt/format.h>

#include "common/error.hpp"
#include "dataset/pnm.hpp"
#include "dataset/sequence_io.hpp"
#include "dataset/synthetic.hpp"
#include "metrics/metrics.hpp"
#include "network/checkpoint.hpp"
#include "trainer/trainer.hpp"
#include "verify/grad_suite.hpp"

struct vos_model {
    vos::net::Model model;
};

namespace {

thread_local std::string last_error;

template <class F>
vos_status guarded(F&& f) {
    try {
        f();
        last_error.clear();
        return VOS_OK;
    } catch (const vos::Error& e) {
        last_error = e.what();
        switch (e.kind()) {
        case vos::ErrorKind::Io: return VOS_ERR_IO;
        case vos::ErrorKind::Numeric: return VOS_ERR_NUMERIC;
        case vos::ErrorKind::Invalid: return VOS_ERR_INVALID;
        }
        return VOS_ERR_INVALID;
    } catch (const std::filesystem::filesystem_error& e) {
        last_error = e.what();
        return VOS_ERR_IO;
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
        return VOS_ERR_INVALID;
    } catch (const std::exception& e) {
        last_error = e.what();
        return VOS_ERR_INVALID;
    }
}

void require(const void* p, const char* what) {
    if (!p) vos::fail_invalid(fmt::format("{} must not be null", what));
}

vos::net::ModelConfig to_config(const vos_model_config& c) {
    require(c.filters, "filters");
    vos::net::ModelConfig m;
    m.encoder_filters.assign(c.filters, c.filters + c.filter_count);
    m.skip_connections = c.skip_connections != 0;
    m.upsample_mode = static_cast<vos::net::UpsampleMode>(c.upsample);
    m.input_channels = c.input_channels;
    m.convs_per_level = c.convs_per_level;
    m.kernel_size = c.kernel_size;
    return m;
}

vos::train::Hyperparams to_hyperparams(const vos_hyperparams& h) {
    vos::train::Hyperparams hp;
    hp.learning_rate = h.learning_rate;
    hp.batch_size = h.batch_size;
    hp.max_iterations = h.max_iterations;
    switch (h.loss) {
    case VOS_LOSS_WEIGHTED_CE: hp.loss = vos::loss::LossKind::WeightedCe; break;
    case VOS_LOSS_DICE: hp.loss = vos::loss::LossKind::Dice; break;
    case VOS_LOSS_UNWEIGHTED_CE: hp.loss = vos::loss::LossKind::UnweightedCe; break;
    default: vos::fail_invalid(fmt::format("unknown loss kind {}", static_cast<int>(h.loss)));
    }
    switch (h.optimizer) {
    case VOS_OPTIMIZER_ADAM: hp.optimizer = vos::train::OptimizerKind::Adam; break;
    case VOS_OPTIMIZER_SGD: hp.optimizer = vos::train::OptimizerKind::Sgd; break;
    default: vos::fail_invalid(fmt::format("unknown optimizer {}", static_cast<int>(h.optimizer)));
    }
    hp.beta1 = h.beta1;
    hp.beta2 = h.beta2;
    hp.epsilon = h.epsilon;
    hp.seed = h.seed;
    hp.finetune_iterations = h.finetune_iterations;
    hp.finetune_learning_rate = h.finetune_learning_rate;
    hp.val_every = h.val_every;
    hp.val_samples = h.val_samples;
    hp.shuffle = h.shuffle != 0;
    vos::train::validate_hyperparams(hp);
    return hp;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    vos::data::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

} // namespace

extern "C" {

const char* vos_last_error(void) { return last_error.c_str(); }

void vos_synthetic_config_default(vos_synthetic_config* config) {
    if (!config) return;
    const vos::data::SyntheticConfig d;
    *config = {d.image_size, d.train_sequences, d.val_sequences, d.frames, d.instances,
               d.exit_return ? 1 : 0, d.crossing ? 1 : 0, d.seed};
}

vos_status vos_generate_dataset(const vos_synthetic_config* config, const char* out_dir) {
    return guarded([&] {
        require(config, "config");
        require(out_dir, "out_dir");
        vos::data::SyntheticConfig c;
        c.image_size = config->image_size;
        c.train_sequences = config->train_sequences;
        c.val_sequences = config->val_sequences;
        c.frames = config->frames;
        c.instances = config->instances;
        c.exit_return = config->exit_return != 0;
        c.crossing = config->crossing != 0;
        c.seed = config->seed;
        vos::data::generate_synthetic(c, out_dir);
    });
}

void vos_model_config_default(vos_model_config* config, const size_t* filters, size_t filter_count) {
    if (!config) return;
    const vos::net::ModelConfig d;
    *config = {filters,
               filter_count,
               d.skip_connections ? 1 : 0,
               static_cast<vos_upsample>(d.upsample_mode),
               d.input_channels,
               d.convs_per_level,
               d.kernel_size};
}

vos_status vos_model_create(const vos_model_config* config, uint64_t seed, vos_model** out) {
    return guarded([&] {
        require(config, "config");
        require(out, "out");
        *out = new vos_model{vos::net::Model::build(to_config(*config), seed)};
    });
}

vos_status vos_model_load(const char* path, vos_model** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = new vos_model{vos::net::load_checkpoint(path)};
    });
}

vos_status vos_model_save(const vos_model* model, const char* path) {
    return guarded([&] {
        require(model, "model");
        require(path, "path");
        vos::net::save_checkpoint(model->model, path);
    });
}

void vos_model_free(vos_model* model) { delete model; }

size_t vos_model_param_count(const vos_model* model) { return model ? model->model.param_count() : 0; }

vos_status vos_model_forward(const vos_model* model, const double* input, size_t n, size_t h, size_t w,
                             double* output) {
    return guarded([&] {
        require(model, "model");
        require(input, "input");
        require(output, "output");
        const auto c = model->model.config().input_channels;
        vos::ad::NoGradGuard no_grad;
        const auto x = vos::ad::Tensor::from({n, c, h, w}, std::vector<double>(input, input + n * c * h * w));
        const auto y = model->model.forward(x).values();
        std::memcpy(output, y.data(), y.size() * sizeof(double));
    });
}

void vos_hyperparams_default(vos_hyperparams* hp) {
    if (!hp) return;
    const vos::train::Hyperparams d;
    *hp = {d.learning_rate,
           d.batch_size,
           d.max_iterations,
           VOS_LOSS_WEIGHTED_CE,
           VOS_OPTIMIZER_ADAM,
           d.beta1,
           d.beta2,
           d.epsilon,
           d.seed,
           d.finetune_iterations,
           d.finetune_learning_rate,
           d.val_every,
           d.val_samples,
           d.shuffle ? 1 : 0};
}

vos_status vos_train_parent(vos_model* model, const char* data_root, const vos_hyperparams* hp, const char* run_dir,
                            vos_progress_fn progress, void* user) {
    return guarded([&] {
        require(model, "model");
        require(data_root, "data_root");
        require(hp, "hyperparams");
        require(run_dir, "run_dir");
        const auto params = to_hyperparams(*hp);
        const auto index = vos::data::load_index(data_root);
        vos::train::ProgressFn fn;
        if (progress) fn = [progress, user](std::size_t it, double loss) { progress(it, loss, user); };
        vos::train::TrainLog log;
        try {
            log = vos::train::train_parent(model->model, index, params, fn);
        } catch (const vos::Error& e) {
            if (e.kind() != vos::ErrorKind::Numeric) throw;
            model->model.zero_grad();
            throw;
        }
        const std::filesystem::path dir(run_dir);
        std::filesystem::create_directories(dir);
        write_text(dir / "train_log.csv", vos::train::format_train_csv(log));
        write_text(dir / "val_log.csv", vos::train::format_val_csv(log));
    });
}

vos_status vos_finetune(const vos_model* parent, const char* sequence_dir, size_t instance, const vos_hyperparams* hp,
                        vos_model** out) {
    return guarded([&] {
        require(parent, "parent");
        require(sequence_dir, "sequence_dir");
        require(hp, "hyperparams");
        require(out, "out");
        const auto params = to_hyperparams(*hp);
        const auto seq = vos::data::load_sequence(sequence_dir);
        *out = new vos_model{vos::train::finetune(parent->model, seq.frames.at(0), seq.first_mask, instance,
                                                  params.finetune_iterations, params)};
    });
}

vos_status vos_sequence_instances(const char* sequence_dir, size_t* out) {
    return guarded([&] {
        require(sequence_dir, "sequence_dir");
        require(out, "out");
        *out = vos::data::load_sequence(sequence_dir).instance_count();
    });
}

vos_status vos_predict_sequence(const vos_model* const* models, size_t model_count, const char* sequence_dir,
                                const char* out_dir) {
    return guarded([&] {
        require(models, "models");
        require(sequence_dir, "sequence_dir");
        require(out_dir, "out_dir");
        std::vector<const vos::net::Model*> ptrs;
        for (size_t i = 0; i < model_count; ++i) {
            require(models[i], "model");
            ptrs.push_back(&models[i]->model);
        }
        const auto seq = vos::data::load_sequence(sequence_dir);
        const auto masks = vos::train::predict_sequence(vos::train::model_predictor(std::move(ptrs)), seq);
        vos::data::write_annotations(std::filesystem::path(out_dir) / seq.id, masks);
    });
}

vos_status vos_evaluate(const char* pred_root, const char* gt_root, double tolerance, const char* out_dir,
                        double* j_mean, double* f_mean) {
    return guarded([&] {
        require(pred_root, "pred_root");
        require(gt_root, "gt_root");
        require(out_dir, "out_dir");
        const auto preds = vos::data::load_annotation_tree(pred_root);
        const auto gt = vos::data::load_annotation_tree(gt_root);
        std::optional<double> tol;
        if (tolerance >= 0.0) tol = tolerance;
        const auto report = vos::metrics::evaluate_dataset(preds, gt, tol);
        const std::filesystem::path dir(out_dir);
        std::filesystem::create_directories(dir);
        write_text(dir / "report.txt", vos::metrics::format_report_text(report));
        write_text(dir / "report.csv", vos::metrics::format_report_csv(report));
        write_text(dir / "frames.csv", vos::metrics::format_frames_csv(report));
        if (j_mean) *j_mean = report.j_mean;
        if (f_mean) *f_mean = report.f_mean;
    });
}

vos_status vos_gradcheck(uint64_t seed, size_t trials, vos_grad_result* results, size_t capacity, size_t* count) {
    return guarded([&] {
        require(count, "count");
        const auto rs = vos::verify::grad_suite(seed, trials);
        *count = rs.size();
        for (size_t i = 0; i < rs.size() && i < capacity; ++i) {
            vos_grad_result& r = results[i];
            std::memset(r.op, 0, sizeof r.op);
            std::strncpy(r.op, rs[i].op.c_str(), sizeof r.op - 1);
            r.max_rel_error = rs[i].max_rel_error;
            r.checked = rs[i].checked;
            r.skipped = rs[i].skipped;
        }
    });
}

} // extern "C"
