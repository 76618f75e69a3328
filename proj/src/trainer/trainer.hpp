#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "common/grid.hpp"
#include "dataset/sequence_io.hpp"
#include "losses/losses.hpp"
#include "network/model.hpp"
#include "trainer/optimizer.hpp"

namespace vos::train {

struct Hyperparams {
    double learning_rate = 1e-3;
    std::size_t batch_size = 8;
    std::size_t max_iterations = 1000;
    loss::LossKind loss = loss::LossKind::WeightedCe;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 1;
    std::size_t finetune_iterations = 100;
    double finetune_learning_rate = 1e-4; // 0 -> learning_rate
    std::size_t val_every = 100;         // 0 disables validation logging
    std::size_t val_samples = 32;        // first N validation samples are scored
    bool shuffle = false;
};

void validate_hyperparams(const Hyperparams& hp);
OptimizerSettings optimizer_settings(const Hyperparams& hp, bool finetuning = false);

struct GuidanceTag {};
// Per-instance prior plane in [0,1], fed as the 4th input channel.
using GuidanceChannel = Grid<double, GuidanceTag>;

GuidanceChannel mask_guidance(const BinaryMask& mask);

struct Sample {
    std::vector<double> input; // [4,H,W]: RGB in [0,1], then guidance
    BinaryMask target;
    std::size_t height = 0;
    std::size_t width = 0;
};

Sample make_sample(const RgbImage& frame, const GuidanceChannel& guidance, BinaryMask target);

// One sample per (frame t >= 1, instance k): guidance is instance k's
// ground-truth mask at t-1, target its mask at t.
std::vector<Sample> make_training_samples(const data::VideoSequence& sequence);

// Stacks samples into a [N,4,H,W] tensor.
ad::Tensor stack_inputs(std::span<const Sample* const> samples);

struct TrainLog {
    struct TrainPoint {
        std::size_t iteration;
        double loss;
    };
    struct ValPoint {
        std::size_t iteration;
        double ce;   // weighted cross-entropy
        double dice;
    };
    std::vector<TrainPoint> train;
    std::vector<ValPoint> validation;
};

std::string format_train_csv(const TrainLog& log); // iteration,train_loss
std::string format_val_csv(const TrainLog& log);   // iteration,val_ce,val_dice

// Mean weighted-CE and dice over `samples` (no gradients).
TrainLog::ValPoint evaluate_losses(const net::Model& model, std::span<const Sample> samples, std::size_t iteration);

using ProgressFn = std::function<void(std::size_t iteration, double loss)>;

// Mini-batch optimisation over `train_samples` in their given order (or a
// seeded per-epoch permutation when hp.shuffle is set). A non-finite loss or
// gradient aborts with a numeric error; the model then still holds the last
// finite parameters.
TrainLog train_parent(net::Model& model, std::span<const Sample> train_samples, std::span<const Sample> val_samples,
                      const Hyperparams& hp, const ProgressFn& progress = {});

// Loads the train/val splits of an on-disk dataset and trains on them.
TrainLog train_parent(net::Model& model, const data::DatasetIndex& dataset, const Hyperparams& hp,
                      const ProgressFn& progress = {});

// Copies `parent` and fits the copy to the single first-frame sample of
// instance `instance` (guidance and target are both its first-frame mask).
// `losses`, when given, receives the loss of each iteration.
net::Model finetune(const net::Model& parent, const RgbImage& first_frame, const InstanceMask& first_mask,
                    std::size_t instance, std::size_t iterations, const Hyperparams& hp,
                    std::vector<double>* losses = nullptr);

// Maps one frame plus one guidance plane per instance to one probability
// map per instance.
using FramePredictor =
    std::function<std::vector<ProbabilityMap>(const RgbImage& frame, std::span<const GuidanceChannel> guidance)>;

// Supplies instance `instance`'s guidance at frame t from the merged
// prediction at t-1.
using GuidanceProvider =
    std::function<GuidanceChannel(std::size_t t, std::size_t instance, const InstanceMask& previous)>;

GuidanceChannel previous_mask_guidance(std::size_t t, std::size_t instance, const InstanceMask& previous);

// One model per instance (instance k uses models[k-1]), or a single model
// shared by every instance.
FramePredictor model_predictor(std::vector<const net::Model*> models);

// Frame 0 is the given annotation verbatim; later frames merge the per-instance
// probabilities with iso::merge.
std::vector<InstanceMask> predict_sequence(const FramePredictor& predictor, const data::VideoSequence& sequence,
                                           const GuidanceProvider& guidance = previous_mask_guidance);

std::vector<InstanceMask> predict_sequence(std::span<const net::Model> models, const data::VideoSequence& sequence);

// Negative control: the raw multi-label mask is fed as guidance and the
// target is the label map scaled to [0,1] (label / N). Experimental; exists
// to reproduce how poorly the direct multi-instance formulation behaves.
struct MultiLabelSample {
    std::vector<double> input;
    std::vector<double> target;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t instances = 0;
};

std::vector<MultiLabelSample> make_multilabel_samples(const data::VideoSequence& sequence);
TrainLog train_multilabel(net::Model& model, std::span<const MultiLabelSample> samples, const Hyperparams& hp);
std::vector<InstanceMask> predict_sequence_multilabel(const net::Model& model, const data::VideoSequence& sequence);

} // namespace vos::train
