#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gpp/tensor.hpp"

namespace gpp {

enum class LayerKind { conv, maxpool, relu, flatten, dense };

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    int k = 0;       // kernel size (conv, maxpool)
    int out = 0;     // output channels (conv) or units (dense)
    int stride = 1;  // conv stride; maxpool always strides by k

    static LayerSpec conv(int k, int out, int stride = 1) { return {LayerKind::conv, k, out, stride}; }
    static LayerSpec maxpool(int k) { return {LayerKind::maxpool, k, 0, k}; }
    static LayerSpec relu() { return {LayerKind::relu, 0, 0, 1}; }
    static LayerSpec flatten() { return {LayerKind::flatten, 0, 0, 1}; }
    static LayerSpec dense(int out) { return {LayerKind::dense, 0, out, 1}; }
};

enum class HeadKind { binary_classifier, scalar_regressor };

// Convolutions use odd kernels with zero 'same' padding. The head maps the
// final layer to the network output: a binary classifier applies a logistic
// to a single unit or a softmax to several; a regressor is identity, or a
// logistic squash when the decode consumes a fraction.
struct MicroNetConfig {
    int in_h = 0, in_w = 0, in_c = 0;
    std::vector<LayerSpec> layers;
    HeadKind head = HeadKind::scalar_regressor;
    bool squash = false;
    std::int64_t param_budget = 0;  // 0 = unlimited

    std::string to_json() const;
    static MicroNetConfig from_json(const std::string& text);
};

std::int64_t param_count(const MicroNetConfig& config);

struct MicroNet {
    MicroNetConfig config;
    std::vector<double> params;

    // derived, fixed at build time
    std::vector<std::int64_t> param_offset;          // per layer
    std::vector<std::array<int, 3>> shapes;          // activation shape after each layer; [h,w,c] or [n,1,0]
    std::array<int, 3> out_shape = {0, 0, 0};
};

// Validates the layer chain, checks the parameter budget, and initialises
// weights fan-in-scaled uniform (biases zero) from the seed.
MicroNet build_micronet(const MicroNetConfig& config, std::uint64_t seed);

struct ForwardCache {
    std::vector<Tensor> acts;                 // acts[0] = input, acts[i+1] = layer i output
    std::vector<std::vector<int>> pool_src;   // per maxpool layer: winning input index per output
    Tensor logits;                            // pre-head
    Tensor output;                            // post-head
};

Tensor forward(const MicroNet& net, const Tensor& x, ForwardCache* cache = nullptr);

// Gradients for every parameter, same flat layout as net.params.
// upstream_grad is dLoss/dOutput (post-head).
std::vector<double> backward(const MicroNet& net, const ForwardCache& cache,
                             const Tensor& upstream_grad);

enum class LossKind { mse, bce, ce, sigmoid_focal, sn_combined };

struct LossSpec {
    LossKind kind = LossKind::mse;
    double alpha = 0.25;  // focal
    double gamma = 2.0;   // focal
    double lambda = 6.0;  // sn_combined regression weight
};

// Returns the loss and its gradient with respect to `pred`. bce/ce consume
// probabilities (clamped at 1e-7, gradient zero where the clamp is active);
// sigmoid_focal and sn_combined consume raw logits. For sn_combined, pred is
// [objectness_logit, offset_logit], target is [contained, offset_frac] and
// `mask` gates the regression term.
std::pair<double, Tensor> compute_loss(const LossSpec& spec, const Tensor& pred,
                                       const Tensor& target, double mask = 1.0);

struct AdamState {
    std::int64_t step = 0;
    std::vector<double> m, v;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double decoupled_decay = 0.0;  // AdamW-style, applied straight to the parameters
};

AdamState make_adam_state(std::size_t n_params, double decoupled_decay = 0.0);
void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
               double lr);

// Central finite differences on a seeded random parameter subset
// (>= 100 when available) against the analytic gradients. Returns
// max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
double grad_check(const MicroNet& net, const Tensor& x, const Tensor& target, const LossSpec& loss,
                  double eps, double mask = 1.0, std::uint64_t seed = 17);

struct TrainSample {
    Tensor x;
    Tensor target;
    double mask = 1.0;
};

struct LrSegment {
    int until_epoch = 0;  // exclusive; the last segment covers the rest
    double lr = 1e-3;
};

struct TrainSchedule {
    int epochs = 0;
    std::vector<LrSegment> segments = {{0, 1e-3}};
    int batch = 16;
    std::uint64_t seed = 0;
    double decoupled_decay = 0.0;
    LossSpec loss;
};

struct TrainResult {
    std::vector<double> epoch_loss;  // mean per-sample loss per epoch
};

// Deterministic given (net, dataset, schedule): seeded shuffle per epoch,
// fixed accumulation order, single logical thread. Aborts with a diagnostic
// when the loss turns non-finite.
TrainResult train(MicroNet& net, const std::vector<TrainSample>& dataset,
                  const TrainSchedule& schedule);

// The 120-epoch schedule the sub-40k networks were tuned with: lr 1e-3 for
// 80 epochs then 5e-4 (1e-4 for the classifier variant), elementwise
// decoupled decay 1e-4.
TrainSchedule sv_default_schedule(bool classifier);

// Default sub-40k-parameter configs: four conv stages (k=3, channels
// 8/16/24/32, each followed by a 2x2 maxpool) and a dense head.
MicroNetConfig sv_classifier_config();   // 96x96x1 -> 2-class softmax
MicroNetConfig sv_regressor_config();    // 96x96x51 -> fraction in (0,1)

// GPM model file: "GPM1" magic, config JSON, then float32 little-endian
// parameters in layer order.
void save_model(const MicroNet& net, const std::filesystem::path& path);
MicroNet load_model(const std::filesystem::path& path);

}  // namespace gpp
