#include "trainer/trainer.hpp"

#include <cmath>
#include <numeric>

#include "core_math/error.hpp"
#include "core_math/io_util.hpp"
#include "core_math/rng.hpp"

namespace mergelab::train {

const char* to_string(Optimizer o) noexcept { return o == Optimizer::Sgd ? "sgd" : "sgd_momentum"; }

Optimizer optimizer_from_string(std::string_view name) {
    if (name == "sgd") return Optimizer::Sgd;
    if (name == "sgd_momentum") return Optimizer::SgdMomentum;
    fail(ErrorKind::Config, "unknown optimizer '" + std::string(name) + "' (expected sgd or sgd_momentum)");
}

void TrainConfig::validate() const {
    if (epochs < 1) fail(ErrorKind::Domain, "train config: epochs must be >= 1");
    if (batch_size < 1) fail(ErrorKind::Domain, "train config: batch_size must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        fail(ErrorKind::Domain, "train config: learning_rate must be a finite value >= 0");
}

EvalResult evaluate(const nn::ModelSpec& spec, const ParamVector& params, const data::Split& split) {
    if (split.size() == 0) fail(ErrorKind::Domain, "cannot evaluate on an empty split");
    nn::require_matches(spec, params);
    double loss = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < split.size(); ++i) {
        const auto logits = nn::forward(spec, params, split.x(i));
        loss += nn::cross_entropy(logits.values, split.labels[i]);
        correct += nn::argmax(logits.values) == split.labels[i];
    }
    const auto n = static_cast<double>(split.size());
    return {loss / n, static_cast<double>(correct) / n};
}

TrainResult train(const nn::ModelSpec& spec, ParamVector init, const data::Split& train_split,
                  const data::Split& test_split, const TrainConfig& cfg) {
    cfg.validate();
    nn::require_matches(spec, init);
    if (train_split.size() == 0) fail(ErrorKind::Domain, "cannot train on an empty split");

    TrainResult result;
    result.params = std::move(init);
    auto theta = result.params.values();
    std::vector<double> grad(theta.size()), velocity(theta.size(), 0.0);
    std::vector<std::size_t> order(train_split.size());

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        CounterRng rng(cfg.seed, 0x5EED0000ULL + static_cast<std::uint64_t>(epoch));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::fill(grad.begin(), grad.end(), 0.0);
            for (std::size_t k = start; k < end; ++k)
                epoch_loss += nn::accumulate_gradient(spec, result.params, train_split.x(order[k]),
                                                      train_split.labels[order[k]], grad);
            const double scale = 1.0 / static_cast<double>(end - start);
            for (std::size_t q = 0; q < theta.size(); ++q) {
                double step = grad[q] * scale;
                if (cfg.optimizer == Optimizer::SgdMomentum) step = velocity[q] = cfg.momentum * velocity[q] + step;
                theta[q] = static_cast<float>(static_cast<double>(theta[q]) - cfg.learning_rate * step);
            }
        }
        epoch_loss /= static_cast<double>(order.size());
        if (!std::isfinite(epoch_loss))
            fail(ErrorKind::Numeric, "training diverged at epoch " + std::to_string(epoch) +
                                         " (loss is not finite); try a smaller learning_rate");
        result.params.check_finite();

        const auto train_eval = evaluate(spec, result.params, train_split);
        result.curve.push_back({epoch, "train", epoch_loss, train_eval.accuracy});
        if (test_split.size() > 0) {
            const auto test_eval = evaluate(spec, result.params, test_split);
            result.curve.push_back({epoch, "test", test_eval.loss, test_eval.accuracy});
            result.test_accuracy = test_eval.accuracy;
        }
    }
    return result;
}

TrainResult pretrain(const nn::ModelSpec& spec, const data::TaskSuite& suite, const TrainConfig& cfg) {
    cfg.validate();
    if (spec.input_dim() != suite.dim() || spec.classes() != suite.classes())
        fail(ErrorKind::Structural, "model spec does not match the suite's input dim / class count");
    return train(spec, nn::init_params(spec, cfg.seed), data::union_split(suite, false),
                 data::union_split(suite, true), cfg);
}

TrainResult finetune(const nn::ModelSpec& spec, const ParamVector& pretrained, const data::TaskDataset& task,
                     const TrainConfig& cfg) {
    return train(spec, pretrained, task.train, task.test, cfg);
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
    std::string out = "epoch,split,loss,accuracy\n";
    for (const auto& p : curve)
        out += std::to_string(p.epoch) + "," + p.split + "," + fixed6(p.loss) + "," + fixed6(p.accuracy) + "\n";
    return out;
}

}  // namespace mergelab::train
