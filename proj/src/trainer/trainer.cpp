#include "trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "common/error.hpp"
#include "common/random.hpp"
#include "isolation/isolation.hpp"
#include "tensor/ops.hpp"

namespace vos::train {

namespace {

constexpr std::size_t kEvalBatch = 8;

std::vector<double> frame_input(const RgbImage& frame, std::span<const double> guidance) {
    const auto plane = frame.height * frame.width;
    std::vector<double> in(4 * plane);
    for (std::size_t i = 0; i < plane; ++i) {
        for (std::size_t ch = 0; ch < 3; ++ch) in[ch * plane + i] = frame.pixels[i * 3 + ch] / 255.0;
        in[3 * plane + i] = guidance[i];
    }
    return in;
}

ProbabilityMap slice_map(const ad::Tensor& out, std::size_t s) {
    const auto h = out.dim(2), w = out.dim(3);
    const auto v = out.values();
    return ProbabilityMap(h, w, std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(s * h * w),
                                                    v.begin() + static_cast<std::ptrdiff_t>((s + 1) * h * w)));
}

void check_finite_loss(double loss, std::size_t iteration) {
    if (!std::isfinite(loss))
        fail_numeric(fmt::format("training diverged: non-finite loss at iteration {}", iteration));
}

// Sample order per epoch: identity, or a seeded permutation.
class BatchCursor {
public:
    BatchCursor(std::size_t n, bool shuffle, std::uint64_t seed) : order_(n), shuffle_(shuffle), rng_(seed) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        reshuffle();
    }

    std::vector<std::size_t> next(std::size_t batch) {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < batch; ++i) {
            if (pos_ == order_.size()) {
                pos_ = 0;
                reshuffle();
            }
            out.push_back(order_[pos_++]);
        }
        return out;
    }

private:
    void reshuffle() {
        if (!shuffle_) return;
        for (std::size_t i = order_.size(); i > 1; --i) std::swap(order_[i - 1], order_[rng_.below(i)]);
    }

    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
    bool shuffle_;
    Rng rng_;
};

std::vector<Sample> load_split_samples(const data::DatasetIndex& dataset, const std::string& split) {
    std::vector<Sample> out;
    for (const auto& e : dataset.split(split)) {
        auto s = make_training_samples(data::load_sequence(dataset.sequence_dir(e)));
        std::move(s.begin(), s.end(), std::back_inserter(out));
    }
    return out;
}

} // namespace

void validate_hyperparams(const Hyperparams& hp) {
    if (!(hp.learning_rate > 0.0)) fail_invalid("hyperparams: learning rate must be > 0");
    if (hp.finetune_learning_rate < 0.0) fail_invalid("hyperparams: fine-tune learning rate must be >= 0");
    if (hp.batch_size < 1) fail_invalid("hyperparams: batch size must be >= 1");
    if (hp.max_iterations < 1) fail_invalid("hyperparams: max iterations must be >= 1");
    if (!(hp.beta1 >= 0.0 && hp.beta1 < 1.0 && hp.beta2 >= 0.0 && hp.beta2 < 1.0))
        fail_invalid("hyperparams: adam betas must lie in [0,1)");
    if (!(hp.epsilon > 0.0)) fail_invalid("hyperparams: adam epsilon must be > 0");
}

OptimizerSettings optimizer_settings(const Hyperparams& hp, bool finetuning) {
    const double lr = finetuning && hp.finetune_learning_rate > 0.0 ? hp.finetune_learning_rate : hp.learning_rate;
    return {hp.optimizer, lr, hp.beta1, hp.beta2, hp.epsilon};
}

GuidanceChannel mask_guidance(const BinaryMask& mask) {
    GuidanceChannel g(mask.height, mask.width);
    for (std::size_t i = 0; i < mask.size(); ++i) g[i] = mask[i] ? 1.0 : 0.0;
    return g;
}

Sample make_sample(const RgbImage& frame, const GuidanceChannel& guidance, BinaryMask target) {
    require_same_dims(frame, guidance, "make_sample");
    require_same_dims(frame, target, "make_sample");
    for (double v : guidance.data)
        if (!(v >= 0.0 && v <= 1.0)) fail_invalid(fmt::format("make_sample: guidance value {} outside [0,1]", v));
    return {frame_input(frame, guidance.data), std::move(target), frame.height, frame.width};
}

std::vector<Sample> make_training_samples(const data::VideoSequence& sequence) {
    if (!sequence.has_ground_truth())
        fail_invalid(fmt::format("sequence '{}' has no ground-truth series", sequence.id));
    if (sequence.ground_truth.size() != sequence.frames.size())
        fail_invalid(fmt::format("sequence '{}': {} annotations for {} frames", sequence.id,
                                 sequence.ground_truth.size(), sequence.frames.size()));
    const auto n = sequence.instance_count();
    std::vector<Sample> out;
    for (std::size_t t = 1; t < sequence.frames.size(); ++t)
        for (std::size_t k = 1; k <= n; ++k)
            out.push_back(make_sample(sequence.frames[t], mask_guidance(iso::isolate_one(sequence.ground_truth[t - 1], k)),
                                      iso::isolate_one(sequence.ground_truth[t], k)));
    return out;
}

ad::Tensor stack_inputs(std::span<const Sample* const> samples) {
    if (samples.empty()) fail_invalid("stack_inputs: empty batch");
    const auto h = samples[0]->height, w = samples[0]->width;
    std::vector<double> data;
    data.reserve(samples.size() * 4 * h * w);
    for (const auto* s : samples) {
        if (s->height != h || s->width != w) fail_invalid("stack_inputs: samples differ in size");
        data.insert(data.end(), s->input.begin(), s->input.end());
    }
    return ad::Tensor::from({samples.size(), 4, h, w}, std::move(data));
}

std::string format_train_csv(const TrainLog& log) {
    std::string out = "iteration,train_loss\n";
    for (const auto& p : log.train) out += fmt::format("{},{:.17g}\n", p.iteration, p.loss);
    return out;
}

std::string format_val_csv(const TrainLog& log) {
    std::string out = "iteration,val_ce,val_dice\n";
    for (const auto& p : log.validation) out += fmt::format("{},{:.17g},{:.17g}\n", p.iteration, p.ce, p.dice);
    return out;
}

TrainLog::ValPoint evaluate_losses(const net::Model& model, std::span<const Sample> samples, std::size_t iteration) {
    ad::NoGradGuard no_grad;
    double ce = 0.0, dice = 0.0;
    for (std::size_t start = 0; start < samples.size(); start += kEvalBatch) {
        const auto end = std::min(samples.size(), start + kEvalBatch);
        std::vector<const Sample*> batch;
        std::vector<BinaryMask> targets;
        for (auto i = start; i < end; ++i) {
            batch.push_back(&samples[i]);
            targets.push_back(samples[i].target);
        }
        const auto out = model.forward(stack_inputs(batch));
        const auto count = static_cast<double>(end - start);
        ce += loss::batch_loss(out, targets, loss::LossKind::WeightedCe).item() * count;
        dice += loss::batch_loss(out, targets, loss::LossKind::Dice).item() * count;
    }
    const auto n = static_cast<double>(std::max<std::size_t>(samples.size(), 1));
    return {iteration, ce / n, dice / n};
}

TrainLog train_parent(net::Model& model, std::span<const Sample> train_samples, std::span<const Sample> val_samples,
                      const Hyperparams& hp, const ProgressFn& progress) {
    validate_hyperparams(hp);
    if (train_samples.empty()) fail_invalid("train_parent: no training samples");
    if (model.config().input_channels != 4)
        fail_invalid(fmt::format("train_parent: model takes {} input channels, samples carry 4",
                                 model.config().input_channels));
    const auto val = val_samples.first(std::min(val_samples.size(), hp.val_samples));
    const auto settings = optimizer_settings(hp);
    OptimizerState state;
    BatchCursor cursor(train_samples.size(), hp.shuffle, hp.seed);
    TrainLog log;

    for (std::size_t it = 1; it <= hp.max_iterations; ++it) {
        std::vector<const Sample*> batch;
        std::vector<BinaryMask> targets;
        for (auto i : cursor.next(hp.batch_size)) {
            batch.push_back(&train_samples[i]);
            targets.push_back(train_samples[i].target);
        }
        model.zero_grad();
        const auto pred = model.forward(stack_inputs(batch));
        const auto loss = loss::batch_loss(pred, targets, hp.loss);
        check_finite_loss(loss.item(), it);
        loss.backward();
        optimizer_step(model.params(), state, settings);
        log.train.push_back({it, loss.item()});
        if (progress) progress(it, loss.item());
        if (hp.val_every > 0 && !val.empty() && (it % hp.val_every == 0 || it == hp.max_iterations))
            log.validation.push_back(evaluate_losses(model, val, it));
    }
    model.zero_grad();
    return log;
}

TrainLog train_parent(net::Model& model, const data::DatasetIndex& dataset, const Hyperparams& hp,
                      const ProgressFn& progress) {
    const auto train = load_split_samples(dataset, "train");
    const auto val = load_split_samples(dataset, "val");
    if (train.empty()) fail_invalid(fmt::format("dataset '{}' has no training sequences", dataset.root.string()));
    return train_parent(model, train, val, hp, progress);
}

net::Model finetune(const net::Model& parent, const RgbImage& first_frame, const InstanceMask& first_mask,
                    std::size_t instance, std::size_t iterations, const Hyperparams& hp, std::vector<double>* losses) {
    validate_hyperparams(hp);
    auto target = iso::isolate_one(first_mask, instance);
    if (instance == 0 || std::none_of(target.data.begin(), target.data.end(), [](auto v) { return v != 0; }))
        fail_invalid(fmt::format("finetune: instance {} is absent from the first-frame annotation", instance));
    net::Model model = parent.clone();
    if (iterations == 0) return model;

    const auto sample = make_sample(first_frame, mask_guidance(target), target);
    const Sample* batch[] = {&sample};
    const auto input = stack_inputs(batch);
    const std::vector<BinaryMask> targets{sample.target};
    const auto settings = optimizer_settings(hp, true);
    OptimizerState state;
    for (std::size_t it = 1; it <= iterations; ++it) {
        model.zero_grad();
        const auto loss = loss::batch_loss(model.forward(input), targets, hp.loss);
        check_finite_loss(loss.item(), it);
        loss.backward();
        optimizer_step(model.params(), state, settings);
        if (losses) losses->push_back(loss.item());
    }
    model.zero_grad();
    return model;
}

GuidanceChannel previous_mask_guidance(std::size_t, std::size_t instance, const InstanceMask& previous) {
    return mask_guidance(iso::isolate_one(previous, instance));
}

FramePredictor model_predictor(std::vector<const net::Model*> models) {
    if (models.empty()) fail_invalid("model_predictor: no models");
    return [models = std::move(models)](const RgbImage& frame, std::span<const GuidanceChannel> guidance) {
        ad::NoGradGuard no_grad;
        std::vector<Sample> samples;
        for (const auto& g : guidance) samples.push_back(make_sample(frame, g, BinaryMask(frame.height, frame.width)));
        std::vector<ProbabilityMap> out;
        if (models.size() == 1) {
            std::vector<const Sample*> batch;
            for (const auto& s : samples) batch.push_back(&s);
            const auto pred = models[0]->forward(stack_inputs(batch));
            for (std::size_t k = 0; k < samples.size(); ++k) out.push_back(slice_map(pred, k));
            return out;
        }
        if (models.size() != guidance.size())
            fail_invalid(fmt::format("{} models for {} instances", models.size(), guidance.size()));
        for (std::size_t k = 0; k < samples.size(); ++k) {
            const Sample* batch[] = {&samples[k]};
            out.push_back(slice_map(models[k]->forward(stack_inputs(batch)), 0));
        }
        return out;
    };
}

std::vector<InstanceMask> predict_sequence(const FramePredictor& predictor, const data::VideoSequence& sequence,
                                           const GuidanceProvider& guidance) {
    if (sequence.frames.empty()) fail_invalid(fmt::format("sequence '{}' has no frames", sequence.id));
    require_same_dims(sequence.frames[0], sequence.first_mask, "predict_sequence");
    const auto n = sequence.instance_count();
    if (n == 0) fail_invalid(fmt::format("sequence '{}': first-frame annotation has no instances", sequence.id));

    std::vector<InstanceMask> out{sequence.first_mask};
    for (std::size_t t = 1; t < sequence.frames.size(); ++t) {
        std::vector<GuidanceChannel> planes;
        for (std::size_t k = 1; k <= n; ++k) planes.push_back(guidance(t, k, out.back()));
        const auto probs = predictor(sequence.frames[t], planes);
        if (probs.size() != n)
            fail_invalid(fmt::format("predictor returned {} maps for {} instances", probs.size(), n));
        out.push_back(iso::merge(probs));
    }
    return out;
}

std::vector<InstanceMask> predict_sequence(std::span<const net::Model> models, const data::VideoSequence& sequence) {
    std::vector<const net::Model*> ptrs;
    for (const auto& m : models) ptrs.push_back(&m);
    return predict_sequence(model_predictor(std::move(ptrs)), sequence);
}

std::vector<MultiLabelSample> make_multilabel_samples(const data::VideoSequence& sequence) {
    if (!sequence.has_ground_truth())
        fail_invalid(fmt::format("sequence '{}' has no ground-truth series", sequence.id));
    const auto n = std::max<std::size_t>(sequence.instance_count(), 1);
    std::vector<MultiLabelSample> out;
    for (std::size_t t = 1; t < sequence.frames.size(); ++t) {
        const auto& prev = sequence.ground_truth[t - 1];
        const auto& cur = sequence.ground_truth[t];
        std::vector<double> raw(prev.data.begin(), prev.data.end());
        MultiLabelSample s{frame_input(sequence.frames[t], raw), {}, cur.height, cur.width, n};
        for (auto v : cur.data) s.target.push_back(std::min(1.0, static_cast<double>(v) / static_cast<double>(n)));
        out.push_back(std::move(s));
    }
    return out;
}

TrainLog train_multilabel(net::Model& model, std::span<const MultiLabelSample> samples, const Hyperparams& hp) {
    validate_hyperparams(hp);
    if (samples.empty()) fail_invalid("train_multilabel: no samples");
    const auto settings = optimizer_settings(hp);
    OptimizerState state;
    BatchCursor cursor(samples.size(), hp.shuffle, hp.seed);
    TrainLog log;
    const auto h = samples[0].height, w = samples[0].width;
    for (std::size_t it = 1; it <= hp.max_iterations; ++it) {
        std::vector<double> data;
        std::vector<std::vector<double>> targets;
        const auto idx = cursor.next(hp.batch_size);
        for (auto i : idx) {
            data.insert(data.end(), samples[i].input.begin(), samples[i].input.end());
            targets.push_back(samples[i].target);
        }
        model.zero_grad();
        const auto pred = model.forward(ad::Tensor::from({idx.size(), 4, h, w}, std::move(data)));
        const auto loss = loss::batch_soft_cross_entropy(pred, targets);
        check_finite_loss(loss.item(), it);
        loss.backward();
        optimizer_step(model.params(), state, settings);
        log.train.push_back({it, loss.item()});
    }
    model.zero_grad();
    return log;
}

std::vector<InstanceMask> predict_sequence_multilabel(const net::Model& model, const data::VideoSequence& sequence) {
    ad::NoGradGuard no_grad;
    const auto n = sequence.instance_count();
    if (n == 0) fail_invalid(fmt::format("sequence '{}': first-frame annotation has no instances", sequence.id));
    std::vector<InstanceMask> out{sequence.first_mask};
    for (std::size_t t = 1; t < sequence.frames.size(); ++t) {
        const auto& frame = sequence.frames[t];
        std::vector<double> raw(out.back().data.begin(), out.back().data.end());
        const auto pred = model.forward(ad::Tensor::from({1, 4, frame.height, frame.width}, frame_input(frame, raw)));
        InstanceMask m(frame.height, frame.width);
        const auto v = pred.values();
        for (std::size_t i = 0; i < m.size(); ++i)
            m[i] = static_cast<std::uint8_t>(std::clamp<long>(std::lround(v[i] * static_cast<double>(n)), 0,
                                                              static_cast<long>(n)));
        out.push_back(std::move(m));
    }
    return out;
}

} // namespace vos::train
