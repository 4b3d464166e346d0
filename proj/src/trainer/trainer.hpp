#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core_math/param_vector.hpp"
#include "nn_model/model.hpp"
#include "task_suite/task_suite.hpp"

namespace mergelab::train {

enum class Optimizer { Sgd, SgdMomentum };

const char* to_string(Optimizer o) noexcept;
Optimizer optimizer_from_string(std::string_view name);

struct TrainConfig {
    int epochs = 20;
    std::size_t batch_size = 32;
    double learning_rate = 0.05;
    std::uint64_t seed = 0;
    Optimizer optimizer = Optimizer::SgdMomentum;
    double momentum = 0.9;

    /// epochs >= 1, batch_size >= 1, learning_rate >= 0 (0 is allowed as a no-op run).
    void validate() const;
};

struct CurvePoint {
    int epoch = 0;
    std::string split;  // "train" or "test"
    double loss = 0.0;
    double accuracy = 0.0;
};

struct TrainResult {
    ParamVector params;
    std::vector<CurvePoint> curve;
    double test_accuracy = 0.0;
};

struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};

/// Mean cross-entropy and accuracy of `params` over `split`.
EvalResult evaluate(const nn::ModelSpec& spec, const ParamVector& params, const data::Split& split);

/// Minibatch SGD on `train` starting from `init`; the shuffle of epoch e is a
/// pure function of (cfg.seed, e). Throws a numeric error on divergence.
TrainResult train(const nn::ModelSpec& spec, ParamVector init, const data::Split& train_split,
                  const data::Split& test_split, const TrainConfig& cfg);

/// theta_PT: fresh init_params(spec, cfg.seed) trained on the union of all tasks.
TrainResult pretrain(const nn::ModelSpec& spec, const data::TaskSuite& suite, const TrainConfig& cfg);

/// theta_i: theta_PT trained on one task's train split only.
TrainResult finetune(const nn::ModelSpec& spec, const ParamVector& pretrained, const data::TaskDataset& task,
                     const TrainConfig& cfg);

/// CSV with header epoch,split,loss,accuracy.
std::string curve_csv(const std::vector<CurvePoint>& curve);

}  // namespace mergelab::train
