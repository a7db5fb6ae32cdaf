#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "milda/random.hpp"
#include "milda/types.hpp"

namespace milda {

/// Two-class distribution (p(y=0), p(y=1)).
using Distribution = Eigen::Vector2d;

/// A trainable tensor with its gradient accumulator and adaptive-moment state.
struct Parameter {
    std::string name;
    Eigen::MatrixXd value;
    Eigen::MatrixXd grad;
    Eigen::MatrixXd moment1;
    Eigen::MatrixXd moment2;
    long steps = 0;

    Parameter() = default;
    Parameter(std::string n, Eigen::Index rows, Eigen::Index cols);
    void zero_grad() { grad.setZero(); }
};

using ParameterList = std::vector<Parameter*>;
using ConstParameterList = std::vector<const Parameter*>;

/// Fully connected layer  y = x W^T + b  on row-major batches (N x in).
class Linear {
public:
    Linear() = default;
    Linear(std::string name, int in, int out, Rng& rng);

    Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
    /// Accumulates parameter gradients and returns d loss / d x.
    Eigen::MatrixXd backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& dy);

    int in_dim() const { return static_cast<int>(weight.value.cols()); }
    int out_dim() const { return static_cast<int>(weight.value.rows()); }

    Parameter weight;
    Parameter bias;
};

struct ArchitectureSpec {
    int input_dim = 2;
    int encoder_hidden = 64;
    int feature_dim = 64;    // H
    int attention_dim = 64;  // L
    int head_hidden = 64;

    friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

nlohmann::json to_json(const ArchitectureSpec& a);
ArchitectureSpec architecture_from_json(const nlohmann::json& j);

/// G: D -> encoder_hidden -> H, tanh after both layers.
class Encoder {
public:
    struct Cache {
        Eigen::MatrixXd x;
        Eigen::MatrixXd hidden;
        Eigen::MatrixXd out;
    };

    Encoder() = default;
    Encoder(const ArchitectureSpec& arch, Rng& rng);

    Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache = nullptr) const;
    void backward(const Cache& cache, const Eigen::MatrixXd& d_out);

    ParameterList parameters() { return {&l1.weight, &l1.bias, &l2.weight, &l2.bias}; }
    ConstParameterList parameters() const { return {&l1.weight, &l1.bias, &l2.weight, &l2.bias}; }
    int input_dim() const { return l1.in_dim(); }
    int output_dim() const { return l2.out_dim(); }

    Linear l1;
    Linear l2;
};

/// F_B: sigmoid attention a_j = sigmoid(w^T tanh(V h_j)), pooled feature
/// z = (sum_j a_j h_j) / K, then a linear layer and a softmax over two classes.
class AttentionBagHead {
public:
    struct Cache {
        Eigen::MatrixXd h;        // K x H
        Eigen::MatrixXd tanh_vh;  // K x L
        Eigen::VectorXd attention;
        Eigen::VectorXd pooled;
        Distribution probs;
    };

    AttentionBagHead() = default;
    AttentionBagHead(const ArchitectureSpec& arch, Rng& rng);

    Eigen::VectorXd attention(const Eigen::MatrixXd& h) const;
    Distribution forward(const Eigen::MatrixXd& h, Cache* cache = nullptr) const;
    /// Backward from d loss / d logits; returns d loss / d h (K x H).
    Eigen::MatrixXd backward(const Cache& cache, const Eigen::Vector2d& d_logits);

    ParameterList parameters() { return {&V, &w, &classifier.weight, &classifier.bias}; }
    ConstParameterList parameters() const { return {&V, &w, &classifier.weight, &classifier.bias}; }

    Parameter V;  // L x H
    Parameter w;  // L x 1
    Linear classifier;
};

/// F_I: H -> head_hidden (tanh) -> 2, softmax.
class InstanceHead {
public:
    struct Cache {
        Eigen::MatrixXd h;
        Eigen::MatrixXd hidden;
        Eigen::MatrixXd probs;  // N x 2
    };

    InstanceHead() = default;
    InstanceHead(std::string name, const ArchitectureSpec& arch, Rng& rng);

    Eigen::MatrixXd forward(const Eigen::MatrixXd& h, Cache* cache = nullptr) const;
    Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& d_logits);

    ParameterList parameters() { return {&l1.weight, &l1.bias, &l2.weight, &l2.bias}; }
    ConstParameterList parameters() const { return {&l1.weight, &l1.bias, &l2.weight, &l2.bias}; }

    Linear l1;
    Linear l2;
};

/// Encoder, bag head and either the pretraining head or the twin heads.
struct ModelBundle {
    ArchitectureSpec arch;
    Encoder encoder;
    AttentionBagHead bag_head;
    std::optional<InstanceHead> pretrain_head;  // F_IP
    std::optional<InstanceHead> head1;          // F_I1
    std::optional<InstanceHead> head2;          // F_I2

    static ModelBundle create(const ArchitectureSpec& arch, std::uint64_t seed);

    bool has_twin_heads() const { return head1.has_value() && head2.has_value(); }

    /// Instance positive-class distributions from whichever heads exist
    /// (twin average when present, else F_IP). N x 2.
    Eigen::MatrixXd instance_probs(const Eigen::MatrixXd& features) const;

    ParameterList all_parameters();
    ConstParameterList all_parameters() const;
};

// Forward contracts ---------------------------------------------------------

Eigen::MatrixXd encode(const Encoder& encoder, const std::vector<Instance>& instances);
Eigen::MatrixXd encode(const Encoder& encoder, const Eigen::MatrixXd& x);
Eigen::VectorXd attention_weights(const AttentionBagHead& head, const Eigen::MatrixXd& features);
Distribution bag_predict(const AttentionBagHead& head, const Eigen::MatrixXd& features);
Distribution instance_predict(const InstanceHead& head, const Eigen::VectorXd& feature);
Distribution instance_predict_avg(const InstanceHead& a, const InstanceHead& b, const Eigen::VectorXd& feature);

/// Row-wise softmax.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);
/// d loss / d logits given softmax output p and d loss / d p, row-wise.
Eigen::MatrixXd softmax_backward(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& d_probs);

// Parameter utilities -------------------------------------------------------

void zero_grads(const ParameterList& params);
/// FNV-1a over the raw bytes of every value tensor.
std::string parameter_hash(const ConstParameterList& params);
std::string parameter_hash(const ParameterList& params);
double parameter_distance(const ConstParameterList& a, const ConstParameterList& b);
std::size_t parameter_count(const ConstParameterList& params);

// Checkpoints ---------------------------------------------------------------
//
//   line 1   "MILDA-CHECKPOINT 1"
//   line 2   decimal byte length L of the JSON header
//   L bytes  {"version":1, "architecture":{...}, "tensors":[{name, rows, cols}...]}
//   payload  float64 little-endian, tensors in header order, column-major.

std::string encode_checkpoint(const ModelBundle& bundle);
ModelBundle decode_checkpoint(const std::string& bytes, const std::optional<ArchitectureSpec>& expected = {});
void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle);
ModelBundle load_checkpoint(const std::filesystem::path& path, const std::optional<ArchitectureSpec>& expected = {});

}  // namespace milda
