#include "gpp/micronet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "gpp/common.hpp"
#include "gpp/rng.hpp"

namespace gpp {

using nlohmann::json;

namespace {

constexpr double kProbClamp = 1e-7;

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv: return "conv";
        case LayerKind::maxpool: return "maxpool";
        case LayerKind::relu: return "relu";
        case LayerKind::flatten: return "flatten";
        case LayerKind::dense: return "dense";
    }
    throw std::invalid_argument("unknown layer kind");
}

LayerKind layer_kind_from(const std::string& name) {
    if (name == "conv") return LayerKind::conv;
    if (name == "maxpool") return LayerKind::maxpool;
    if (name == "relu") return LayerKind::relu;
    if (name == "flatten") return LayerKind::flatten;
    if (name == "dense") return LayerKind::dense;
    throw InputError("unknown layer kind: " + name);
}

inline double sigmoid(double x) {
    if (x >= 0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Shape bookkeeping: [h, w, c] while spatial, [n, 1, 0] after flatten.
struct ShapeChain {
    std::vector<std::array<int, 3>> after;  // per layer
    std::array<int, 3> out;
    std::vector<std::int64_t> offsets;
    std::int64_t total_params = 0;
};

ShapeChain chain_shapes(const MicroNetConfig& config) {
    if (config.in_h <= 0 || config.in_w <= 0 || config.in_c <= 0)
        throw std::invalid_argument("micronet: input dims must be positive");
    if (config.layers.empty()) throw std::invalid_argument("micronet: no layers");

    ShapeChain chain;
    std::array<int, 3> cur = {config.in_h, config.in_w, config.in_c};
    bool flat = false;
    for (const auto& layer : config.layers) {
        chain.offsets.push_back(chain.total_params);
        switch (layer.kind) {
            case LayerKind::conv: {
                if (flat) throw std::invalid_argument("micronet: conv after flatten");
                if (layer.k < 1 || layer.k % 2 == 0)
                    throw std::invalid_argument("micronet: conv kernel must be odd and positive");
                if (layer.out < 1 || layer.stride < 1)
                    throw std::invalid_argument("micronet: bad conv out/stride");
                const int pad = layer.k / 2;
                const int oh = (cur[0] + 2 * pad - layer.k) / layer.stride + 1;
                const int ow = (cur[1] + 2 * pad - layer.k) / layer.stride + 1;
                if (oh < 1 || ow < 1) throw std::invalid_argument("micronet: conv collapses input");
                chain.total_params +=
                    static_cast<std::int64_t>(layer.k) * layer.k * cur[2] * layer.out + layer.out;
                cur = {oh, ow, layer.out};
                break;
            }
            case LayerKind::maxpool: {
                if (flat) throw std::invalid_argument("micronet: maxpool after flatten");
                if (layer.k < 1) throw std::invalid_argument("micronet: bad pool size");
                const int oh = cur[0] / layer.k;
                const int ow = cur[1] / layer.k;
                if (oh < 1 || ow < 1) throw std::invalid_argument("micronet: pool collapses input");
                cur = {oh, ow, cur[2]};
                break;
            }
            case LayerKind::relu:
                break;
            case LayerKind::flatten: {
                if (flat) throw std::invalid_argument("micronet: flatten twice");
                cur = {cur[0] * cur[1] * cur[2], 1, 0};
                flat = true;
                break;
            }
            case LayerKind::dense: {
                if (!flat) throw std::invalid_argument("micronet: dense requires flatten first");
                if (layer.out < 1) throw std::invalid_argument("micronet: bad dense width");
                chain.total_params += static_cast<std::int64_t>(cur[0]) * layer.out + layer.out;
                cur = {layer.out, 1, 0};
                break;
            }
        }
        chain.after.push_back(cur);
    }
    if (!flat) throw std::invalid_argument("micronet: network must end in flatten/dense");
    chain.out = cur;
    return chain;
}

inline std::int64_t act_count(const std::array<int, 3>& s) {
    return s[2] == 0 ? s[0] : static_cast<std::int64_t>(s[0]) * s[1] * s[2];
}

std::vector<int> act_shape(const std::array<int, 3>& s) {
    if (s[2] == 0) return {s[0]};
    return {s[0], s[1], s[2]};
}

}  // namespace

std::string MicroNetConfig::to_json() const {
    json j;
    j["input"] = {in_h, in_w, in_c};
    json layers_json = json::array();
    for (const auto& layer : layers) {
        json lj;
        lj["type"] = layer_kind_name(layer.kind);
        if (layer.kind == LayerKind::conv) {
            lj["k"] = layer.k;
            lj["out"] = layer.out;
            lj["stride"] = layer.stride;
        } else if (layer.kind == LayerKind::maxpool) {
            lj["k"] = layer.k;
        } else if (layer.kind == LayerKind::dense) {
            lj["out"] = layer.out;
        }
        layers_json.push_back(std::move(lj));
    }
    j["layers"] = std::move(layers_json);
    j["head"] = head == HeadKind::binary_classifier ? "binary_classifier" : "scalar_regressor";
    j["squash"] = squash;
    j["param_budget"] = param_budget;
    return j.dump();
}

MicroNetConfig MicroNetConfig::from_json(const std::string& text) {
    MicroNetConfig config;
    try {
        const json j = json::parse(text);
        config.in_h = j.at("input").at(0).get<int>();
        config.in_w = j.at("input").at(1).get<int>();
        config.in_c = j.at("input").at(2).get<int>();
        for (const auto& lj : j.at("layers")) {
            LayerSpec layer;
            layer.kind = layer_kind_from(lj.at("type").get<std::string>());
            if (layer.kind == LayerKind::conv) {
                layer.k = lj.at("k").get<int>();
                layer.out = lj.at("out").get<int>();
                layer.stride = lj.at("stride").get<int>();
            } else if (layer.kind == LayerKind::maxpool) {
                layer.k = lj.at("k").get<int>();
                layer.stride = layer.k;
            } else if (layer.kind == LayerKind::dense) {
                layer.out = lj.at("out").get<int>();
            }
            config.layers.push_back(layer);
        }
        const auto head = j.at("head").get<std::string>();
        if (head == "binary_classifier") config.head = HeadKind::binary_classifier;
        else if (head == "scalar_regressor") config.head = HeadKind::scalar_regressor;
        else throw InputError("unknown head kind: " + head);
        config.squash = j.at("squash").get<bool>();
        config.param_budget = j.at("param_budget").get<std::int64_t>();
    } catch (const json::exception& e) {
        throw InputError(std::string("bad micronet config: ") + e.what());
    }
    return config;
}

std::int64_t param_count(const MicroNetConfig& config) {
    return chain_shapes(config).total_params;
}

MicroNet build_micronet(const MicroNetConfig& config, std::uint64_t seed) {
    const ShapeChain chain = chain_shapes(config);
    if (config.param_budget > 0 && chain.total_params > config.param_budget)
        throw std::invalid_argument("micronet: " + std::to_string(chain.total_params) +
                                    " parameters exceed the budget of " +
                                    std::to_string(config.param_budget));

    MicroNet net;
    net.config = config;
    net.param_offset = chain.offsets;
    net.shapes = chain.after;
    net.out_shape = chain.out;
    net.params.assign(static_cast<std::size_t>(chain.total_params), 0.0);

    // Fan-in-scaled uniform init, biases zero.
    Rng rng(derive_seed(seed, "micronet-init"));
    std::array<int, 3> cur = {config.in_h, config.in_w, config.in_c};
    for (std::size_t li = 0; li < config.layers.size(); ++li) {
        const auto& layer = config.layers[li];
        double* p = net.params.data() + net.param_offset[li];
        if (layer.kind == LayerKind::conv) {
            const std::int64_t n_weights =
                static_cast<std::int64_t>(layer.k) * layer.k * cur[2] * layer.out;
            const double bound = std::sqrt(3.0 / (static_cast<double>(layer.k) * layer.k * cur[2]));
            for (std::int64_t i = 0; i < n_weights; ++i) p[i] = rng.uniform(-bound, bound);
        } else if (layer.kind == LayerKind::dense) {
            const std::int64_t n_weights = static_cast<std::int64_t>(cur[0]) * layer.out;
            const double bound = std::sqrt(3.0 / cur[0]);
            for (std::int64_t i = 0; i < n_weights; ++i) p[i] = rng.uniform(-bound, bound);
        }
        cur = chain.after[li];
    }
    return net;
}

Tensor forward(const MicroNet& net, const Tensor& x, ForwardCache* cache) {
    const auto& config = net.config;
    if (x.shape != std::vector<int>{config.in_h, config.in_w, config.in_c})
        throw std::invalid_argument("micronet forward: input shape mismatch");

    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.acts.clear();
    c.pool_src.clear();
    c.acts.push_back(x);

    std::array<int, 3> cur = {config.in_h, config.in_w, config.in_c};
    for (std::size_t li = 0; li < config.layers.size(); ++li) {
        const auto& layer = config.layers[li];
        const Tensor& in = c.acts.back();
        const std::array<int, 3> next = net.shapes[li];
        Tensor out(act_shape(next));
        const double* p = net.params.data() + net.param_offset[li];

        switch (layer.kind) {
            case LayerKind::conv: {
                const int kh = layer.k, pad = layer.k / 2, stride = layer.stride;
                const int ih = cur[0], iw = cur[1], ic = cur[2];
                const int oh = next[0], ow = next[1], oc = next[2];
                const double* bias = p + static_cast<std::int64_t>(kh) * kh * ic * oc;
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        double* dst = out.data.data() + (static_cast<std::size_t>(oy) * ow + ox) * oc;
                        for (int o = 0; o < oc; ++o) dst[o] = bias[o];
                        for (int dy = 0; dy < kh; ++dy) {
                            const int iy = oy * stride + dy - pad;
                            if (iy < 0 || iy >= ih) continue;
                            for (int dx = 0; dx < kh; ++dx) {
                                const int ix = ox * stride + dx - pad;
                                if (ix < 0 || ix >= iw) continue;
                                const double* src =
                                    in.data.data() + (static_cast<std::size_t>(iy) * iw + ix) * ic;
                                const double* w =
                                    p + (static_cast<std::size_t>(dy) * kh + dx) * ic * oc;
                                for (int i = 0; i < ic; ++i) {
                                    const double a = src[i];
                                    const double* wrow = w + static_cast<std::size_t>(i) * oc;
                                    for (int o = 0; o < oc; ++o) dst[o] += a * wrow[o];
                                }
                            }
                        }
                    }
                }
                break;
            }
            case LayerKind::maxpool: {
                const int k = layer.k;
                const int iw = cur[1], ic = cur[2];
                const int oh = next[0], ow = next[1];
                std::vector<int> src_idx(static_cast<std::size_t>(act_count(next)));
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        for (int ch = 0; ch < ic; ++ch) {
                            double best = -1e300;
                            int best_idx = -1;
                            for (int dy = 0; dy < k; ++dy) {
                                for (int dx = 0; dx < k; ++dx) {
                                    const int idx =
                                        ((oy * k + dy) * iw + (ox * k + dx)) * ic + ch;
                                    if (in.data[static_cast<std::size_t>(idx)] > best) {
                                        best = in.data[static_cast<std::size_t>(idx)];
                                        best_idx = idx;
                                    }
                                }
                            }
                            const std::size_t out_idx =
                                (static_cast<std::size_t>(oy) * ow + ox) * ic + ch;
                            out.data[out_idx] = best;
                            src_idx[out_idx] = best_idx;
                        }
                    }
                }
                c.pool_src.push_back(std::move(src_idx));
                break;
            }
            case LayerKind::relu:
                for (std::size_t i = 0; i < in.data.size(); ++i)
                    out.data[i] = in.data[i] > 0.0 ? in.data[i] : 0.0;
                break;
            case LayerKind::flatten:
                out.data = in.data;
                break;
            case LayerKind::dense: {
                const int n_in = cur[0], n_out = next[0];
                const double* bias = p + static_cast<std::int64_t>(n_in) * n_out;
                for (int o = 0; o < n_out; ++o) out.data[static_cast<std::size_t>(o)] = bias[o];
                for (int i = 0; i < n_in; ++i) {
                    const double a = in.data[static_cast<std::size_t>(i)];
                    const double* wrow = p + static_cast<std::size_t>(i) * n_out;
                    for (int o = 0; o < n_out; ++o) out.data[static_cast<std::size_t>(o)] += a * wrow[o];
                }
                break;
            }
        }
        c.acts.push_back(std::move(out));
        cur = next;
    }

    c.logits = c.acts.back();
    Tensor output = c.logits;
    if (config.head == HeadKind::binary_classifier) {
        if (output.size() == 1) {
            output.data[0] = sigmoid(output.data[0]);
        } else {
            double mx = output.data[0];
            for (const double v : output.data) mx = std::max(mx, v);
            double sum = 0.0;
            for (auto& v : output.data) {
                v = std::exp(v - mx);
                sum += v;
            }
            for (auto& v : output.data) v /= sum;
        }
    } else if (config.squash) {
        for (auto& v : output.data) v = sigmoid(v);
    }
    c.output = output;
    return output;
}

std::vector<double> backward(const MicroNet& net, const ForwardCache& cache,
                             const Tensor& upstream_grad) {
    const auto& config = net.config;
    if (cache.acts.size() != config.layers.size() + 1)
        throw std::invalid_argument("micronet backward: cache does not match network");
    if (upstream_grad.data.size() != cache.output.data.size())
        throw std::invalid_argument("micronet backward: upstream gradient shape mismatch");

    // Head jacobian: output grad -> logits grad.
    Tensor grad = upstream_grad;
    if (config.head == HeadKind::binary_classifier) {
        if (grad.size() == 1) {
            const double p = cache.output.data[0];
            grad.data[0] *= p * (1.0 - p);
        } else {
            double dot = 0.0;
            for (std::size_t i = 0; i < grad.data.size(); ++i)
                dot += grad.data[i] * cache.output.data[i];
            Tensor g = grad;
            for (std::size_t i = 0; i < grad.data.size(); ++i)
                g.data[i] = cache.output.data[i] * (grad.data[i] - dot);
            grad = std::move(g);
        }
    } else if (config.squash) {
        for (std::size_t i = 0; i < grad.data.size(); ++i) {
            const double p = cache.output.data[i];
            grad.data[i] *= p * (1.0 - p);
        }
    }

    std::vector<double> param_grads(net.params.size(), 0.0);
    int pool_cursor = static_cast<int>(cache.pool_src.size());

    std::array<int, 3> cur;
    for (int li = static_cast<int>(config.layers.size()) - 1; li >= 0; --li) {
        const auto& layer = config.layers[li];
        const Tensor& in = cache.acts[static_cast<std::size_t>(li)];
        cur = li == 0 ? std::array<int, 3>{config.in_h, config.in_w, config.in_c}
                      : net.shapes[static_cast<std::size_t>(li) - 1];
        const std::array<int, 3> next = net.shapes[static_cast<std::size_t>(li)];
        const double* p = net.params.data() + net.param_offset[static_cast<std::size_t>(li)];
        double* pg = param_grads.data() + net.param_offset[static_cast<std::size_t>(li)];
        Tensor in_grad(act_shape(cur));

        switch (layer.kind) {
            case LayerKind::conv: {
                const int kh = layer.k, pad = layer.k / 2, stride = layer.stride;
                const int ih = cur[0], iw = cur[1], ic = cur[2];
                const int oh = next[0], ow = next[1], oc = next[2];
                double* bias_grad = pg + static_cast<std::int64_t>(kh) * kh * ic * oc;
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        const double* gout =
                            grad.data.data() + (static_cast<std::size_t>(oy) * ow + ox) * oc;
                        for (int o = 0; o < oc; ++o) bias_grad[o] += gout[o];
                        for (int dy = 0; dy < kh; ++dy) {
                            const int iy = oy * stride + dy - pad;
                            if (iy < 0 || iy >= ih) continue;
                            for (int dx = 0; dx < kh; ++dx) {
                                const int ix = ox * stride + dx - pad;
                                if (ix < 0 || ix >= iw) continue;
                                const std::size_t in_base =
                                    (static_cast<std::size_t>(iy) * iw + ix) * ic;
                                const double* w =
                                    p + (static_cast<std::size_t>(dy) * kh + dx) * ic * oc;
                                double* wg =
                                    pg + (static_cast<std::size_t>(dy) * kh + dx) * ic * oc;
                                for (int i = 0; i < ic; ++i) {
                                    const double a = in.data[in_base + static_cast<std::size_t>(i)];
                                    const double* wrow = w + static_cast<std::size_t>(i) * oc;
                                    double* wgrow = wg + static_cast<std::size_t>(i) * oc;
                                    double acc = 0.0;
                                    for (int o = 0; o < oc; ++o) {
                                        wgrow[o] += a * gout[o];
                                        acc += wrow[o] * gout[o];
                                    }
                                    in_grad.data[in_base + static_cast<std::size_t>(i)] += acc;
                                }
                            }
                        }
                    }
                }
                break;
            }
            case LayerKind::maxpool: {
                --pool_cursor;
                const auto& src = cache.pool_src[static_cast<std::size_t>(pool_cursor)];
                for (std::size_t i = 0; i < grad.data.size(); ++i)
                    in_grad.data[static_cast<std::size_t>(src[i])] += grad.data[i];
                break;
            }
            case LayerKind::relu: {
                const Tensor& out = cache.acts[static_cast<std::size_t>(li) + 1];
                for (std::size_t i = 0; i < grad.data.size(); ++i)
                    in_grad.data[i] = out.data[i] > 0.0 ? grad.data[i] : 0.0;
                break;
            }
            case LayerKind::flatten:
                in_grad.data = grad.data;
                break;
            case LayerKind::dense: {
                const int n_in = cur[0], n_out = next[0];
                double* bias_grad = pg + static_cast<std::int64_t>(n_in) * n_out;
                for (int o = 0; o < n_out; ++o) bias_grad[o] += grad.data[static_cast<std::size_t>(o)];
                for (int i = 0; i < n_in; ++i) {
                    const double a = in.data[static_cast<std::size_t>(i)];
                    const double* wrow = p + static_cast<std::size_t>(i) * n_out;
                    double* wgrow = pg + static_cast<std::size_t>(i) * n_out;
                    double acc = 0.0;
                    for (int o = 0; o < n_out; ++o) {
                        const double g = grad.data[static_cast<std::size_t>(o)];
                        wgrow[o] += a * g;
                        acc += wrow[o] * g;
                    }
                    in_grad.data[static_cast<std::size_t>(i)] = acc;
                }
                break;
            }
        }
        grad = std::move(in_grad);
    }
    return param_grads;
}

namespace {

inline double clamp_prob(double p) { return std::clamp(p, kProbClamp, 1.0 - kProbClamp); }

// Focal loss on a single logit; returns {loss, dloss/dlogit}.
std::pair<double, double> focal_on_logit(double logit, double t, double alpha, double gamma) {
    const double p = sigmoid(logit);
    const double pt = clamp_prob(t * p + (1.0 - t) * (1.0 - p));
    const double at = t * alpha + (1.0 - t) * (1.0 - alpha);
    const double one_minus = 1.0 - pt;
    const double loss = -at * std::pow(one_minus, gamma) * std::log(pt);
    double dldpt = -at * (std::pow(one_minus, gamma) / pt);
    if (gamma != 0.0) dldpt += at * gamma * std::pow(one_minus, gamma - 1.0) * std::log(pt);
    const double dptdx = (2.0 * t - 1.0) * p * (1.0 - p);
    return {loss, dldpt * dptdx};
}

}  // namespace

std::pair<double, Tensor> compute_loss(const LossSpec& spec, const Tensor& pred,
                                       const Tensor& target, double mask) {
    if (spec.kind != LossKind::sn_combined && pred.data.size() != target.data.size())
        throw std::invalid_argument("compute_loss: pred/target shape mismatch");

    Tensor grad = pred;
    std::fill(grad.data.begin(), grad.data.end(), 0.0);
    const auto n = static_cast<double>(pred.data.size());
    double loss = 0.0;

    switch (spec.kind) {
        case LossKind::mse: {
            for (std::size_t i = 0; i < pred.data.size(); ++i) {
                const double d = pred.data[i] - target.data[i];
                loss += d * d;
                grad.data[i] = 2.0 * d / n;
            }
            loss /= n;
            break;
        }
        case LossKind::bce: {
            for (std::size_t i = 0; i < pred.data.size(); ++i) {
                const double t = target.data[i];
                const double p = pred.data[i];
                const double pc = clamp_prob(p);
                loss += -(t * std::log(pc) + (1.0 - t) * std::log(1.0 - pc));
                if (p > kProbClamp && p < 1.0 - kProbClamp)
                    grad.data[i] = (p - t) / (p * (1.0 - p)) / n;
            }
            loss /= n;
            break;
        }
        case LossKind::ce: {
            for (std::size_t i = 0; i < pred.data.size(); ++i) {
                const double t = target.data[i];
                const double p = pred.data[i];
                const double pc = clamp_prob(p);
                loss += -t * std::log(pc);
                if (p > kProbClamp && p < 1.0 - kProbClamp) grad.data[i] = -t / p;
            }
            break;
        }
        case LossKind::sigmoid_focal: {
            for (std::size_t i = 0; i < pred.data.size(); ++i) {
                const auto [l, g] =
                    focal_on_logit(pred.data[i], target.data[i], spec.alpha, spec.gamma);
                loss += l;
                grad.data[i] = g / n;
            }
            loss /= n;
            break;
        }
        case LossKind::sn_combined: {
            if (pred.data.size() != 2 || target.data.size() != 2)
                throw std::invalid_argument(
                    "sn_combined expects pred [objectness_logit, offset_logit] and target "
                    "[contained, offset_frac]");
            const auto [l_cls, g_cls] =
                focal_on_logit(pred.data[0], target.data[0], spec.alpha, spec.gamma);
            loss = l_cls;
            grad.data[0] = g_cls;
            if (mask != 0.0) {
                const double f = sigmoid(pred.data[1]);
                const double d = f - target.data[1];
                loss += spec.lambda * mask * d * d;
                grad.data[1] = spec.lambda * mask * 2.0 * d * f * (1.0 - f);
            }
            break;
        }
    }
    return {loss, std::move(grad)};
}

AdamState make_adam_state(std::size_t n_params, double decoupled_decay) {
    AdamState state;
    state.m.assign(n_params, 0.0);
    state.v.assign(n_params, 0.0);
    state.decoupled_decay = decoupled_decay;
    return state;
}

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state,
               double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: size mismatch");
    state.step += 1;
    const double b1t = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double b2t = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        const double mhat = state.m[i] / b1t;
        const double vhat = state.v[i] / b2t;
        double update = mhat / (std::sqrt(vhat) + state.eps);
        if (state.decoupled_decay > 0.0) update += state.decoupled_decay * params[i];
        params[i] -= lr * update;
    }
}

double grad_check(const MicroNet& net, const Tensor& x, const Tensor& target, const LossSpec& loss,
                  double eps, double mask, std::uint64_t seed) {
    if (eps <= 0.0) throw std::invalid_argument("grad_check: eps must be positive");

    ForwardCache cache;
    forward(net, x, &cache);
    const auto [l0, lgrad] = compute_loss(loss, cache.output, target, mask);
    (void)l0;
    const auto analytic = backward(net, cache, lgrad);

    const auto total = static_cast<std::int64_t>(net.params.size());
    std::vector<std::int64_t> picks;
    if (total <= 128) {
        picks.resize(static_cast<std::size_t>(total));
        for (std::int64_t i = 0; i < total; ++i) picks[static_cast<std::size_t>(i)] = i;
    } else {
        Rng rng(derive_seed(seed, "grad-check"));
        std::vector<std::int64_t> all(static_cast<std::size_t>(total));
        for (std::int64_t i = 0; i < total; ++i) all[static_cast<std::size_t>(i)] = i;
        rng.shuffle(all);
        all.resize(128);
        picks = std::move(all);
    }

    MicroNet probe = net;
    double worst = 0.0;
    for (const std::int64_t idx : picks) {
        const double saved = probe.params[static_cast<std::size_t>(idx)];
        probe.params[static_cast<std::size_t>(idx)] = saved + eps;
        const double lp = compute_loss(loss, forward(probe, x), target, mask).first;
        probe.params[static_cast<std::size_t>(idx)] = saved - eps;
        const double lm = compute_loss(loss, forward(probe, x), target, mask).first;
        probe.params[static_cast<std::size_t>(idx)] = saved;

        const double numeric = (lp - lm) / (2.0 * eps);
        const double a = analytic[static_cast<std::size_t>(idx)];
        const double rel = std::abs(a - numeric) /
                           std::max({std::abs(a), std::abs(numeric), 1e-8});
        worst = std::max(worst, rel);
    }
    return worst;
}

namespace {

double lr_for_epoch(const TrainSchedule& schedule, int epoch) {
    double lr = schedule.segments.empty() ? 1e-3 : schedule.segments.back().lr;
    for (const auto& segment : schedule.segments) {
        if (epoch < segment.until_epoch) {
            lr = segment.lr;
            break;
        }
    }
    return lr;
}

}  // namespace

TrainResult train(MicroNet& net, const std::vector<TrainSample>& dataset,
                  const TrainSchedule& schedule) {
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    if (schedule.batch < 1) throw std::invalid_argument("train: batch must be >= 1");

    TrainResult result;
    if (schedule.epochs == 0) return result;

    AdamState adam = make_adam_state(net.params.size(), schedule.decoupled_decay);
    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> batch_grads(net.params.size());
    for (int epoch = 0; epoch < schedule.epochs; ++epoch) {
        Rng rng(derive_seed(schedule.seed, "train-epoch", epoch));
        rng.shuffle(order);
        const double lr = lr_for_epoch(schedule, epoch);

        double epoch_loss = 0.0;
        std::size_t pos = 0;
        while (pos < order.size()) {
            const std::size_t take = std::min<std::size_t>(schedule.batch, order.size() - pos);
            std::fill(batch_grads.begin(), batch_grads.end(), 0.0);
            double batch_loss = 0.0;
            for (std::size_t bi = 0; bi < take; ++bi) {
                const TrainSample& sample = dataset[order[pos + bi]];
                ForwardCache cache;
                forward(net, sample.x, &cache);
                const auto [loss, lgrad] =
                    compute_loss(schedule.loss, cache.output, sample.target, sample.mask);
                batch_loss += loss;
                const auto grads = backward(net, cache, lgrad);
                for (std::size_t i = 0; i < grads.size(); ++i) batch_grads[i] += grads[i];
            }
            const double inv = 1.0 / static_cast<double>(take);
            for (auto& g : batch_grads) g *= inv;
            batch_loss *= inv;
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                         std::to_string(epoch) + ", sample offset " +
                                         std::to_string(pos));
            adam_step(net.params, batch_grads, adam, lr);
            epoch_loss += batch_loss * static_cast<double>(take);
            pos += take;
        }
        result.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    }
    return result;
}

TrainSchedule sv_default_schedule(bool classifier) {
    TrainSchedule schedule;
    schedule.epochs = 120;
    schedule.segments = {{80, 1e-3}, {120, classifier ? 1e-4 : 5e-4}};
    schedule.decoupled_decay = 1e-4;
    schedule.loss.kind = classifier ? LossKind::ce : LossKind::mse;
    return schedule;
}

namespace {

MicroNetConfig sv_shape_config(int in_c, int out, HeadKind head, bool squash) {
    MicroNetConfig config;
    config.in_h = 96;
    config.in_w = 96;
    config.in_c = in_c;
    config.layers = {
        LayerSpec::conv(3, 8),  LayerSpec::relu(), LayerSpec::maxpool(2),
        LayerSpec::conv(3, 16), LayerSpec::relu(), LayerSpec::maxpool(2),
        LayerSpec::conv(3, 24), LayerSpec::relu(), LayerSpec::maxpool(2),
        LayerSpec::conv(3, 32), LayerSpec::relu(), LayerSpec::maxpool(2),
        LayerSpec::flatten(),   LayerSpec::dense(out),
    };
    config.head = head;
    config.squash = squash;
    config.param_budget = 40000;
    return config;
}

}  // namespace

MicroNetConfig sv_classifier_config() {
    return sv_shape_config(1, 2, HeadKind::binary_classifier, false);
}

MicroNetConfig sv_regressor_config() {
    return sv_shape_config(51, 1, HeadKind::scalar_regressor, true);
}

void save_model(const MicroNet& net, const std::filesystem::path& path) {
    const std::string config_text = net.config.to_json();
    std::vector<std::uint8_t> bytes;
    bytes.reserve(16 + config_text.size() + net.params.size() * 4);
    bytes.insert(bytes.end(), {'G', 'P', 'M', '1'});
    append_le32(bytes, static_cast<std::uint32_t>(config_text.size()));
    bytes.insert(bytes.end(), config_text.begin(), config_text.end());
    append_le64(bytes, static_cast<std::uint64_t>(net.params.size()));
    for (const double p : net.params) {
        const auto f = static_cast<float>(p);
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        append_le32(bytes, u);
    }
    write_file_bytes(path, bytes.data(), bytes.size());
}

MicroNet load_model(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), "GPM1", 4) != 0)
        throw InputError("not a GPM model file: " + path.string());
    const std::uint32_t config_len = read_le32(&bytes[4]);
    if (bytes.size() < 8 + config_len + 8)
        throw InputError("truncated GPM model file: " + path.string());
    const std::string config_text(reinterpret_cast<const char*>(&bytes[8]), config_len);
    const std::uint64_t n_params = read_le64(&bytes[8 + config_len]);
    const std::size_t payload_start = 8 + config_len + 8;
    if (bytes.size() != payload_start + n_params * 4)
        throw InputError("GPM parameter payload length mismatch: " + path.string());

    MicroNet net = build_micronet(MicroNetConfig::from_json(config_text), 0);
    if (net.params.size() != n_params)
        throw InputError("GPM parameter count does not match its config: " + path.string());
    for (std::size_t i = 0; i < n_params; ++i) {
        const std::uint32_t u = read_le32(&bytes[payload_start + i * 4]);
        float f;
        std::memcpy(&f, &u, 4);
        net.params[i] = f;
    }
    return net;
}

}  // namespace gpp
