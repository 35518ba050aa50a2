#include "mfnet/network.hpp"

#include <algorithm>

namespace mfnet {

namespace {

void check_unique_name(const std::map<std::string, Param>& params, const std::string& name) {
    if (params.count(name)) throw ArgumentError("duplicate parameter name '" + name + "'");
}

}  // namespace

int NetworkSpec::add_node(Node node) {
    for (int in : node.inputs)
        if (in < 0 || in >= static_cast<int>(nodes_.size()))
            throw ArgumentError("node '" + node.name + "' references unknown input " + std::to_string(in));
    for (const Node& n : nodes_)
        if (n.name == node.name) throw ArgumentError("duplicate node name '" + node.name + "'");
    nodes_.push_back(std::move(node));
    output_ = static_cast<int>(nodes_.size()) - 1;
    return output_;
}

int NetworkSpec::add_input(std::vector<int64_t> shape_chw) {
    if (!nodes_.empty()) throw StateError("network already has an input node");
    if (shape_chw.size() != 3) throw DimensionError("input shape must be [c,h,w]");
    input_shape_ = std::move(shape_chw);
    Node n;
    n.kind = NodeKind::input;
    n.name = "input";
    return add_node(std::move(n));
}

int NetworkSpec::add_conv(const std::string& name, int input, Tensor filters, Tensor bias, int stride,
                          int pad, bool with_bias) {
    check_unique_name(params_, name + ".filters");
    params_[name + ".filters"] = Param{std::move(filters), true};
    if (with_bias) params_[name + ".bias"] = Param{std::move(bias), true};
    Node n;
    n.kind = NodeKind::conv;
    n.name = name;
    n.inputs = {input};
    n.stride = stride;
    n.pad = pad;
    n.conv_bias = with_bias;
    return add_node(std::move(n));
}

int NetworkSpec::add_dense(const std::string& name, int input, Tensor weights, Tensor bias) {
    check_unique_name(params_, name + ".weights");
    params_[name + ".weights"] = Param{std::move(weights), true};
    params_[name + ".bias"] = Param{std::move(bias), true};
    Node n;
    n.kind = NodeKind::dense;
    n.name = name;
    n.inputs = {input};
    return add_node(std::move(n));
}

int NetworkSpec::add_batchnorm(const std::string& name, int input, int64_t channels, double momentum,
                               double epsilon) {
    check_unique_name(params_, name + ".gamma");
    params_[name + ".gamma"] = Param{Tensor::full({channels}, 1.0), true};
    params_[name + ".beta"] = Param{Tensor({channels}), true};
    params_[name + ".running_mean"] = Param{Tensor({channels}), false};
    params_[name + ".running_var"] = Param{Tensor::full({channels}, 1.0), false};
    Node n;
    n.kind = NodeKind::batchnorm;
    n.name = name;
    n.inputs = {input};
    n.bn_momentum = momentum;
    n.bn_epsilon = epsilon;
    return add_node(std::move(n));
}

int NetworkSpec::add_activation(const std::string& name, int input, Activation act) {
    Node n;
    n.kind = NodeKind::activation;
    n.name = name;
    n.inputs = {input};
    n.act = act;
    return add_node(std::move(n));
}

int NetworkSpec::add_maxpool(const std::string& name, int input) {
    Node n;
    n.kind = NodeKind::maxpool;
    n.name = name;
    n.inputs = {input};
    return add_node(std::move(n));
}

int NetworkSpec::add_dropout(const std::string& name, int input, double keep_prob) {
    if (keep_prob < 0.0 || keep_prob > 1.0) throw ArgumentError("keep_prob must be in [0,1]");
    Node n;
    n.kind = NodeKind::dropout;
    n.name = name;
    n.inputs = {input};
    n.keep_prob = keep_prob;
    return add_node(std::move(n));
}

int NetworkSpec::add_flatten(const std::string& name, int input) {
    Node n;
    n.kind = NodeKind::flatten;
    n.name = name;
    n.inputs = {input};
    return add_node(std::move(n));
}

int NetworkSpec::add_global_avg_pool(const std::string& name, int input) {
    Node n;
    n.kind = NodeKind::global_avg_pool;
    n.name = name;
    n.inputs = {input};
    return add_node(std::move(n));
}

int NetworkSpec::add_add(const std::string& name, int a, int b, double scale_b) {
    Node n;
    n.kind = NodeKind::add;
    n.name = name;
    n.inputs = {a, b};
    n.add_scale = scale_b;
    return add_node(std::move(n));
}

int NetworkSpec::add_concat(const std::string& name, std::vector<int> inputs) {
    if (inputs.size() < 2) throw ArgumentError("concat needs at least 2 inputs");
    Node n;
    n.kind = NodeKind::concat;
    n.name = name;
    n.inputs = std::move(inputs);
    return add_node(std::move(n));
}

void NetworkSpec::set_output(int node) {
    if (node < 0 || node >= static_cast<int>(nodes_.size())) throw ArgumentError("output node out of range");
    output_ = node;
}

int NetworkSpec::node_index(const std::string& name) const {
    for (size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].name == name) return static_cast<int>(i);
    return -1;
}

Param& NetworkSpec::param(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ArgumentError("unknown parameter '" + name + "'");
    return it->second;
}

const Param& NetworkSpec::param(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ArgumentError("unknown parameter '" + name + "'");
    return it->second;
}

int64_t NetworkSpec::parameter_count() const {
    int64_t n = 0;
    for (const auto& [name, p] : params_) n += p.value.size();
    return n;
}

std::vector<std::string> NetworkSpec::parameter_names() const {
    std::vector<std::string> names;
    names.reserve(params_.size());
    for (const auto& [name, p] : params_) names.push_back(name);
    return names;
}

ConvLayer NetworkSpec::conv_view(const Node& node) const {
    const Tensor& filters = param(node.name + ".filters").value;
    Tensor bias = node.conv_bias ? param(node.name + ".bias").value : Tensor({filters.dim(0)});
    return ConvLayer{filters, std::move(bias), node.stride, node.pad};
}

DenseLayer NetworkSpec::dense_view(const Node& node) const {
    return DenseLayer{param(node.name + ".weights").value, param(node.name + ".bias").value};
}

BatchNormLayer NetworkSpec::bn_view(const Node& node) const {
    return BatchNormLayer{param(node.name + ".gamma").value, param(node.name + ".beta").value,
                          param(node.name + ".running_mean").value, param(node.name + ".running_var").value,
                          node.bn_momentum, node.bn_epsilon};
}

void NetworkSpec::store_bn(const Node& node, BatchNormLayer&& layer) {
    param(node.name + ".running_mean").value = std::move(layer.running_mean);
    param(node.name + ".running_var").value = std::move(layer.running_var);
}

Tensor global_avg_pool(const Tensor& x) {
    if (x.rank() != 4) throw DimensionError("global_avg_pool expects [n,c,h,w]");
    int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor y({n, c});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch) {
            const double* plane = x.data() + (i * c + ch) * hw;
            double sum = 0.0;
            for (int64_t p = 0; p < hw; ++p) sum += plane[p];
            y.at2(i, ch) = sum / static_cast<double>(hw);
        }
    apply_precision(y);
    return y;
}

Tensor NetworkSpec::forward(const Tensor& x, RunMode mode, SeededRng& rng, ForwardTrace* trace,
                            bool deterministic) {
    if (nodes_.empty() || output_ < 0) throw StateError("network has no nodes");
    if (x.rank() != 4 || x.dim(1) != input_shape_[0] || x.dim(2) != input_shape_[1] ||
        x.dim(3) != input_shape_[2])
        throw DimensionError("network input " + shape_to_string(x.shape()) + " does not match declared " +
                             shape_to_string(input_shape_));

    bool training = mode == RunMode::train;
    ForwardTrace local;
    ForwardTrace& t = trace ? *trace : local;
    t = ForwardTrace{};
    t.mode = mode;
    t.retained = training;
    t.outputs.resize(nodes_.size());

    for (size_t i = 0; i <= static_cast<size_t>(output_); ++i) {
        const Node& node = nodes_[i];
        int idx = static_cast<int>(i);
        switch (node.kind) {
            case NodeKind::input: t.outputs[i] = x; break;
            case NodeKind::conv: {
                auto [y, cache] = conv2d_forward(t.outputs[node.inputs[0]], conv_view(node));
                t.outputs[i] = std::move(y);
                break;  // the conv cache is just the input, already retained
            }
            case NodeKind::dense: {
                auto [y, cache] = dense_forward(t.outputs[node.inputs[0]], dense_view(node));
                t.outputs[i] = std::move(y);
                break;
            }
            case NodeKind::batchnorm: {
                BatchNormLayer layer = bn_view(node);
                BatchNormCache cache;
                Tensor y = batchnorm_forward(t.outputs[node.inputs[0]], layer, training,
                                             training && !deterministic, training ? &cache : nullptr);
                if (training && !deterministic) store_bn(node, std::move(layer));
                if (training) t.bn[idx] = std::move(cache);
                t.outputs[i] = std::move(y);
                break;
            }
            case NodeKind::activation:
                t.outputs[i] = activation_forward(t.outputs[node.inputs[0]], node.act);
                break;
            case NodeKind::maxpool: {
                auto [y, cache] = maxpool2d_forward(t.outputs[node.inputs[0]]);
                if (training) t.pool[idx] = std::move(cache);
                t.outputs[i] = std::move(y);
                break;
            }
            case NodeKind::dropout: {
                double keep = deterministic ? 1.0 : node.keep_prob;
                DropoutResult r = dropout_forward(t.outputs[node.inputs[0]], keep, training, rng);
                t.outputs[i] = r.output;
                if (training) t.dropout[idx] = std::move(r);
                break;
            }
            case NodeKind::flatten: {
                const Tensor& in = t.outputs[node.inputs[0]];
                t.outputs[i] = in.reshaped({in.dim(0), in.size() / in.dim(0)});
                break;
            }
            case NodeKind::global_avg_pool:
                t.outputs[i] = global_avg_pool(t.outputs[node.inputs[0]]);
                break;
            case NodeKind::add: {
                const Tensor& a = t.outputs[node.inputs[0]];
                const Tensor& b = t.outputs[node.inputs[1]];
                if (!a.same_shape(b))
                    throw DimensionError("add '" + node.name + "': operand shapes differ, " +
                                         shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
                Tensor y(a.shape());
                for (int64_t p = 0; p < y.size(); ++p) y[p] = a[p] + node.add_scale * b[p];
                apply_precision(y);
                t.outputs[i] = std::move(y);
                break;
            }
            case NodeKind::concat: {
                const Tensor& first = t.outputs[node.inputs[0]];
                if (first.rank() != 4) throw DimensionError("concat expects rank-4 operands");
                int64_t n = first.dim(0), h = first.dim(2), w = first.dim(3);
                int64_t c_total = 0;
                for (int in : node.inputs) {
                    const Tensor& b = t.outputs[in];
                    if (b.rank() != 4 || b.dim(0) != n || b.dim(2) != h || b.dim(3) != w)
                        throw DimensionError("concat '" + node.name + "': non-channel dims differ, " +
                                             shape_to_string(first.shape()) + " vs " +
                                             shape_to_string(b.shape()));
                    c_total += b.dim(1);
                }
                Tensor y({n, c_total, h, w});
                for (int64_t s = 0; s < n; ++s) {
                    int64_t c_off = 0;
                    for (int in : node.inputs) {
                        const Tensor& b = t.outputs[in];
                        int64_t cb = b.dim(1);
                        std::copy(b.data() + s * cb * h * w, b.data() + (s + 1) * cb * h * w,
                                  y.data() + (s * c_total + c_off) * h * w);
                        c_off += cb;
                    }
                }
                t.outputs[i] = std::move(y);
                break;
            }
        }
    }

    return t.outputs[static_cast<size_t>(output_)];
}

GradMap NetworkSpec::backward(const ForwardTrace& trace, const Tensor& grad_output) const {
    if (!trace.retained || trace.outputs.size() != nodes_.size())
        throw StateError("backward requires a trace from a train-mode forward pass");

    std::vector<Tensor> grads(nodes_.size());
    std::vector<bool> has_grad(nodes_.size(), false);
    auto accumulate = [&](int node, Tensor g) {
        if (!has_grad[static_cast<size_t>(node)]) {
            grads[static_cast<size_t>(node)] = std::move(g);
            has_grad[static_cast<size_t>(node)] = true;
        } else {
            Tensor& dst = grads[static_cast<size_t>(node)];
            for (int64_t p = 0; p < dst.size(); ++p) dst[p] += g[p];
            apply_precision(dst);
        }
    };

    if (!grad_output.same_shape(trace.outputs[static_cast<size_t>(output_)]))
        throw DimensionError("grad_output shape does not match network output");
    accumulate(output_, grad_output);

    GradMap out;
    auto record = [&](const std::string& name, Tensor g) {
        auto it = params_.find(name);
        if (it == params_.end()) throw StateError("gradient for unknown parameter '" + name + "'");
        if (!it->second.trainable) return;  // frozen parameters get no entry
        out[name] = std::move(g);
    };

    for (int i = output_; i >= 0; --i) {
        if (!has_grad[static_cast<size_t>(i)]) continue;
        const Node& node = nodes_[static_cast<size_t>(i)];
        const Tensor& gy = grads[static_cast<size_t>(i)];
        switch (node.kind) {
            case NodeKind::input: break;
            case NodeKind::conv: {
                ConvCache cache{trace.outputs[node.inputs[0]]};
                ConvGrads g = conv2d_backward(gy, cache, conv_view(node));
                record(node.name + ".filters", std::move(g.filters));
                if (node.conv_bias) record(node.name + ".bias", std::move(g.bias));
                accumulate(node.inputs[0], std::move(g.input));
                break;
            }
            case NodeKind::dense: {
                DenseCache cache{trace.outputs[node.inputs[0]]};
                DenseGrads g = dense_backward(gy, cache, dense_view(node));
                record(node.name + ".weights", std::move(g.weights));
                record(node.name + ".bias", std::move(g.bias));
                accumulate(node.inputs[0], std::move(g.input));
                break;
            }
            case NodeKind::batchnorm: {
                auto it = trace.bn.find(i);
                if (it == trace.bn.end()) throw StateError("missing batch norm cache for '" + node.name + "'");
                BatchNormGrads g = batchnorm_backward(gy, it->second, bn_view(node));
                record(node.name + ".gamma", std::move(g.gamma));
                record(node.name + ".beta", std::move(g.beta));
                accumulate(node.inputs[0], std::move(g.input));
                break;
            }
            case NodeKind::activation:
                accumulate(node.inputs[0], activation_backward(gy, trace.outputs[node.inputs[0]],
                                                               trace.outputs[static_cast<size_t>(i)], node.act));
                break;
            case NodeKind::maxpool: {
                auto it = trace.pool.find(i);
                if (it == trace.pool.end()) throw StateError("missing pool cache for '" + node.name + "'");
                accumulate(node.inputs[0], maxpool2d_backward(gy, it->second));
                break;
            }
            case NodeKind::dropout: {
                auto it = trace.dropout.find(i);
                if (it == trace.dropout.end())
                    throw StateError("missing dropout cache for '" + node.name + "'");
                accumulate(node.inputs[0], dropout_backward(gy, it->second));
                break;
            }
            case NodeKind::flatten:
                accumulate(node.inputs[0], gy.reshaped(trace.outputs[node.inputs[0]].shape()));
                break;
            case NodeKind::global_avg_pool: {
                const Tensor& in = trace.outputs[node.inputs[0]];
                int64_t n = in.dim(0), c = in.dim(1), hw = in.dim(2) * in.dim(3);
                Tensor gx(in.shape());
                for (int64_t s = 0; s < n; ++s)
                    for (int64_t ch = 0; ch < c; ++ch) {
                        double v = gy.at2(s, ch) / static_cast<double>(hw);
                        double* dst = gx.data() + (s * c + ch) * hw;
                        for (int64_t p = 0; p < hw; ++p) dst[p] = v;
                    }
                apply_precision(gx);
                accumulate(node.inputs[0], std::move(gx));
                break;
            }
            case NodeKind::add: {
                accumulate(node.inputs[0], gy);
                if (node.add_scale == 1.0) {
                    accumulate(node.inputs[1], gy);
                } else {
                    Tensor gb(gy.shape());
                    for (int64_t p = 0; p < gb.size(); ++p) gb[p] = node.add_scale * gy[p];
                    apply_precision(gb);
                    accumulate(node.inputs[1], std::move(gb));
                }
                break;
            }
            case NodeKind::concat: {
                int64_t n = gy.dim(0), c_total = gy.dim(1), h = gy.dim(2), w = gy.dim(3);
                int64_t c_off = 0;
                for (int in : node.inputs) {
                    const Tensor& b = trace.outputs[in];
                    int64_t cb = b.dim(1);
                    Tensor gb({n, cb, h, w});
                    for (int64_t s = 0; s < n; ++s)
                        std::copy(gy.data() + (s * c_total + c_off) * h * w,
                                  gy.data() + (s * c_total + c_off + cb) * h * w, gb.data() + s * cb * h * w);
                    accumulate(in, std::move(gb));
                    c_off += cb;
                }
                break;
            }
        }
    }
    return out;
}

Tensor NetworkSpec::extract_features(const Tensor& x, const std::string& node_name) {
    int idx = node_index(node_name);
    if (idx < 0) throw ArgumentError("unknown node '" + node_name + "'");
    SeededRng rng(0);
    ForwardTrace trace;
    forward(x, RunMode::infer, rng, &trace);
    const Tensor& act = trace.outputs[static_cast<size_t>(idx)];
    if (act.rank() == 4) return global_avg_pool(act);
    if (act.rank() == 2) return act;
    throw ArgumentError("node '" + node_name + "' output is not poolable (rank " +
                        std::to_string(act.rank()) + ")");
}

}  // namespace mfnet
