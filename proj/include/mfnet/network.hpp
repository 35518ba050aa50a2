#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mfnet/layers.hpp"
#include "mfnet/tensor.hpp"

namespace mfnet {

enum class NodeKind {
    input,
    conv,
    dense,
    batchnorm,
    activation,
    maxpool,
    dropout,
    flatten,
    global_avg_pool,
    add,     // in0 + add_scale * in1
    concat,  // channel concatenation of all inputs
};

struct Node {
    NodeKind kind;
    std::string name;         // unique; parameter names hang off it
    std::vector<int> inputs;  // indices of producer nodes

    // per-kind configuration
    int stride = 1;
    int pad = 0;
    bool conv_bias = true;  // false for conv units whose bias a following batch norm would cancel
    Activation act = Activation::relu;
    double keep_prob = 1.0;
    double add_scale = 1.0;
    double bn_momentum = 0.9;
    double bn_epsilon = 1e-5;
};

struct Param {
    Tensor value;
    bool trainable = true;
};

enum class RunMode { train, infer };

// Per-forward bookkeeping needed by the backward pass.
struct ForwardTrace {
    std::vector<Tensor> outputs;  // one per node
    std::map<int, BatchNormCache> bn;
    std::map<int, DropoutResult> dropout;
    std::map<int, MaxPoolCache> pool;
    RunMode mode = RunMode::infer;
    bool retained = false;  // true when intermediate outputs were kept
};

using GradMap = std::map<std::string, Tensor>;

// Directed acyclic layer graph: single input, single output, nodes stored in
// topological order. Parameters live in a named registry so that freezing,
// checkpointing and the optimizer can address them uniformly.
class NetworkSpec {
  public:
    NetworkSpec() = default;

    // --- construction (used by the builders in blocks.hpp) ---
    int add_input(std::vector<int64_t> shape_chw);
    int add_conv(const std::string& name, int input, Tensor filters, Tensor bias, int stride, int pad,
                 bool with_bias = true);
    int add_dense(const std::string& name, int input, Tensor weights, Tensor bias);
    int add_batchnorm(const std::string& name, int input, int64_t channels, double momentum = 0.9,
                      double epsilon = 1e-5);
    int add_activation(const std::string& name, int input, Activation act);
    int add_maxpool(const std::string& name, int input);
    int add_dropout(const std::string& name, int input, double keep_prob);
    int add_flatten(const std::string& name, int input);
    int add_global_avg_pool(const std::string& name, int input);
    int add_add(const std::string& name, int a, int b, double scale_b = 1.0);
    int add_concat(const std::string& name, std::vector<int> inputs);
    void set_output(int node);

    // --- structure access ---
    const std::vector<Node>& nodes() const { return nodes_; }
    int output_node() const { return output_; }
    int node_index(const std::string& name) const;  // -1 when absent
    const std::vector<int64_t>& input_shape() const { return input_shape_; }

    std::map<std::string, Param>& params() { return params_; }
    const std::map<std::string, Param>& params() const { return params_; }
    Param& param(const std::string& name);
    const Param& param(const std::string& name) const;
    bool has_param(const std::string& name) const { return params_.count(name) != 0; }
    int64_t parameter_count() const;
    std::vector<std::string> parameter_names() const;

    // --- metadata filled in by build_network ---
    std::string arch;
    int n_classes = 0;
    int declared_depth = 0;           // layer count of the full-scale preset
    int64_t feature_dim = 0;          // width of extract_features at this build
    std::string feature_node;         // node extract_features defaults to
    std::vector<int64_t> full_input;  // declared full-scale input [c,h,w]
    std::vector<std::string> half_trainable_prefixes;  // posterior-half partition

    // --- execution ---
    // When `deterministic` is set dropout acts as identity and batch norm does
    // not touch its running statistics; used by the gradient checker.
    Tensor forward(const Tensor& x, RunMode mode, SeededRng& rng, ForwardTrace* trace = nullptr,
                   bool deterministic = false);
    GradMap backward(const ForwardTrace& trace, const Tensor& grad_output) const;

    // Activation of a named node, global-average-pooled to [n, channels].
    Tensor extract_features(const Tensor& x, const std::string& node_name);

  private:
    int add_node(Node node);
    ConvLayer conv_view(const Node& node) const;
    DenseLayer dense_view(const Node& node) const;
    BatchNormLayer bn_view(const Node& node) const;
    void store_bn(const Node& node, BatchNormLayer&& layer);

    std::vector<Node> nodes_;
    std::map<std::string, Param> params_;
    std::vector<int64_t> input_shape_;  // [c,h,w]
    int output_ = -1;
};

Tensor global_avg_pool(const Tensor& x);

}  // namespace mfnet
