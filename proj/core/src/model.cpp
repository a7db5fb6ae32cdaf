#include "milda/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "milda/dataset_io.hpp"

namespace milda {

Parameter::Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
    : name(std::move(n)),
      value(Eigen::MatrixXd::Zero(rows, cols)),
      grad(Eigen::MatrixXd::Zero(rows, cols)),
      moment1(Eigen::MatrixXd::Zero(rows, cols)),
      moment2(Eigen::MatrixXd::Zero(rows, cols)) {}

namespace {

void uniform_fill(Eigen::MatrixXd& m, double bound, Rng& rng) {
    std::uniform_real_distribution<double> u(-bound, bound);
    // Column-major fill order; fixed so initialization is reproducible.
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(rng);
}

Eigen::MatrixXd tanh_grad(const Eigen::MatrixXd& t, const Eigen::MatrixXd& d) {
    return d.array() * (1.0 - t.array().square());
}

}  // namespace

Linear::Linear(std::string name, int in, int out, Rng& rng)
    : weight(name + ".weight", out, in), bias(name + ".bias", out, 1) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    uniform_fill(weight.value, bound, rng);
    uniform_fill(bias.value, bound, rng);
}

Eigen::MatrixXd Linear::forward(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd y = x * weight.value.transpose();
    y.rowwise() += bias.value.col(0).transpose();
    return y;
}

Eigen::MatrixXd Linear::backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& dy) {
    weight.grad.noalias() += dy.transpose() * x;
    bias.grad.col(0) += dy.colwise().sum().transpose();
    return dy * weight.value;
}

nlohmann::json to_json(const ArchitectureSpec& a) {
    return {{"input_dim", a.input_dim},
            {"encoder_hidden", a.encoder_hidden},
            {"feature_dim", a.feature_dim},
            {"attention_dim", a.attention_dim},
            {"head_hidden", a.head_hidden}};
}

ArchitectureSpec architecture_from_json(const nlohmann::json& j) {
    ArchitectureSpec a;
    a.input_dim = j.value("input_dim", a.input_dim);
    a.encoder_hidden = j.value("encoder_hidden", a.encoder_hidden);
    a.feature_dim = j.value("feature_dim", a.feature_dim);
    a.attention_dim = j.value("attention_dim", a.attention_dim);
    a.head_hidden = j.value("head_hidden", a.head_hidden);
    return a;
}

// ---- Encoder --------------------------------------------------------------

Encoder::Encoder(const ArchitectureSpec& arch, Rng& rng)
    : l1("G.l1", arch.input_dim, arch.encoder_hidden, rng), l2("G.l2", arch.encoder_hidden, arch.feature_dim, rng) {}

Eigen::MatrixXd Encoder::forward(const Eigen::MatrixXd& x, Cache* cache) const {
    if (x.cols() != input_dim()) throw std::invalid_argument("encoder input dimension mismatch");
    Eigen::MatrixXd hidden = l1.forward(x).array().tanh();
    Eigen::MatrixXd out = l2.forward(hidden).array().tanh();
    if (cache != nullptr) {
        cache->x = x;
        cache->hidden = hidden;
        cache->out = out;
    }
    return out;
}

void Encoder::backward(const Cache& cache, const Eigen::MatrixXd& d_out) {
    const Eigen::MatrixXd d_hidden = l2.backward(cache.hidden, tanh_grad(cache.out, d_out));
    l1.backward(cache.x, tanh_grad(cache.hidden, d_hidden));
}

// ---- Attention bag head ---------------------------------------------------

AttentionBagHead::AttentionBagHead(const ArchitectureSpec& arch, Rng& rng)
    : V("FB.V", arch.attention_dim, arch.feature_dim), w("FB.w", arch.attention_dim, 1) {
    uniform_fill(V.value, 1.0 / std::sqrt(static_cast<double>(arch.feature_dim)), rng);
    uniform_fill(w.value, 1.0 / std::sqrt(static_cast<double>(arch.attention_dim)), rng);
    classifier = Linear("FB.classifier", arch.feature_dim, 2, rng);
}

Eigen::VectorXd AttentionBagHead::attention(const Eigen::MatrixXd& h) const {
    if (h.cols() != V.value.cols()) throw std::invalid_argument("bag head feature dimension mismatch");
    const Eigen::MatrixXd t = (h * V.value.transpose()).array().tanh();
    const Eigen::VectorXd s = t * w.value.col(0);
    return (1.0 / (1.0 + (-s.array()).exp())).matrix();
}

Distribution AttentionBagHead::forward(const Eigen::MatrixXd& h, Cache* cache) const {
    if (h.rows() == 0) throw std::invalid_argument("bag must contain at least one instance");
    if (h.cols() != V.value.cols()) throw std::invalid_argument("bag head feature dimension mismatch");
    const Eigen::MatrixXd t = (h * V.value.transpose()).array().tanh();
    const Eigen::VectorXd s = t * w.value.col(0);
    const Eigen::VectorXd a = (1.0 / (1.0 + (-s.array()).exp())).matrix();
    // Fixed summation order over instances.
    Eigen::VectorXd pooled = Eigen::VectorXd::Zero(h.cols());
    for (Eigen::Index j = 0; j < h.rows(); ++j) pooled += a[j] * h.row(j).transpose();
    pooled /= static_cast<double>(h.rows());
    const Eigen::MatrixXd logits = classifier.forward(pooled.transpose());
    const Distribution p = softmax_rows(logits).row(0).transpose();
    if (cache != nullptr) {
        cache->h = h;
        cache->tanh_vh = t;
        cache->attention = a;
        cache->pooled = pooled;
        cache->probs = p;
    }
    return p;
}

Eigen::MatrixXd AttentionBagHead::backward(const Cache& cache, const Eigen::Vector2d& d_logits) {
    const double k = static_cast<double>(cache.h.rows());
    const Eigen::MatrixXd dz_row = classifier.backward(cache.pooled.transpose(), d_logits.transpose());
    const Eigen::VectorXd dz = dz_row.row(0).transpose();

    Eigen::MatrixXd dh = cache.attention * dz.transpose() / k;
    const Eigen::VectorXd da = cache.h * dz / k;
    const Eigen::VectorXd ds = da.array() * cache.attention.array() * (1.0 - cache.attention.array());
    w.grad.col(0).noalias() += cache.tanh_vh.transpose() * ds;
    const Eigen::MatrixXd d_pre = tanh_grad(cache.tanh_vh, ds * w.value.col(0).transpose());
    V.grad.noalias() += d_pre.transpose() * cache.h;
    dh.noalias() += d_pre * V.value;
    return dh;
}

// ---- Instance head --------------------------------------------------------

InstanceHead::InstanceHead(std::string name, const ArchitectureSpec& arch, Rng& rng)
    : l1(name + ".l1", arch.feature_dim, arch.head_hidden, rng), l2(name + ".l2", arch.head_hidden, 2, rng) {}

Eigen::MatrixXd InstanceHead::forward(const Eigen::MatrixXd& h, Cache* cache) const {
    if (h.cols() != l1.in_dim()) throw std::invalid_argument("instance head feature dimension mismatch");
    Eigen::MatrixXd hidden = l1.forward(h).array().tanh();
    Eigen::MatrixXd probs = softmax_rows(l2.forward(hidden));
    if (cache != nullptr) {
        cache->h = h;
        cache->hidden = hidden;
        cache->probs = probs;
    }
    return probs;
}

Eigen::MatrixXd InstanceHead::backward(const Cache& cache, const Eigen::MatrixXd& d_logits) {
    const Eigen::MatrixXd d_hidden = l2.backward(cache.hidden, d_logits);
    return l1.backward(cache.h, tanh_grad(cache.hidden, d_hidden));
}

// ---- Bundle ---------------------------------------------------------------

ModelBundle ModelBundle::create(const ArchitectureSpec& arch, std::uint64_t seed) {
    ModelBundle b;
    b.arch = arch;
    Rng enc_rng(derive_seed(seed, 10));
    Rng bag_rng(derive_seed(seed, 11));
    Rng ip_rng(derive_seed(seed, 12));
    b.encoder = Encoder(arch, enc_rng);
    b.bag_head = AttentionBagHead(arch, bag_rng);
    b.pretrain_head = InstanceHead("FIP", arch, ip_rng);
    return b;
}

Eigen::MatrixXd ModelBundle::instance_probs(const Eigen::MatrixXd& features) const {
    if (has_twin_heads()) return 0.5 * (head1->forward(features) + head2->forward(features));
    if (pretrain_head) return pretrain_head->forward(features);
    throw std::logic_error("model bundle has no instance head");
}

ParameterList ModelBundle::all_parameters() {
    ParameterList out = encoder.parameters();
    for (auto* p : bag_head.parameters()) out.push_back(p);
    for (auto* h : {&pretrain_head, &head1, &head2}) {
        if (h->has_value())
            for (auto* p : (*h)->parameters()) out.push_back(p);
    }
    return out;
}

ConstParameterList ModelBundle::all_parameters() const {
    ConstParameterList out = encoder.parameters();
    for (const auto* p : bag_head.parameters()) out.push_back(p);
    for (const auto* h : {&pretrain_head, &head1, &head2}) {
        if (h->has_value())
            for (const auto* p : (*h)->parameters()) out.push_back(p);
    }
    return out;
}

// ---- Forward contracts ----------------------------------------------------

Eigen::MatrixXd encode(const Encoder& encoder, const std::vector<Instance>& instances) {
    if (instances.empty()) return Eigen::MatrixXd(0, encoder.output_dim());
    return encoder.forward(stack_features(instances));
}

Eigen::MatrixXd encode(const Encoder& encoder, const Eigen::MatrixXd& x) { return encoder.forward(x); }

Eigen::VectorXd attention_weights(const AttentionBagHead& head, const Eigen::MatrixXd& features) {
    if (features.rows() == 0) throw std::invalid_argument("attention needs at least one instance");
    return head.attention(features);
}

Distribution bag_predict(const AttentionBagHead& head, const Eigen::MatrixXd& features) {
    return head.forward(features);
}

Distribution instance_predict(const InstanceHead& head, const Eigen::VectorXd& feature) {
    return head.forward(feature.transpose()).row(0).transpose();
}

Distribution instance_predict_avg(const InstanceHead& a, const InstanceHead& b, const Eigen::VectorXd& feature) {
    return 0.5 * (instance_predict(a, feature) + instance_predict(b, feature));
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
    Eigen::MatrixXd out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        const Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
        out.row(i) = e / e.sum();
    }
    return out;
}

Eigen::MatrixXd softmax_backward(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& d_probs) {
    const Eigen::VectorXd dot = (probs.array() * d_probs.array()).rowwise().sum();
    return probs.array() * (d_probs.colwise() - dot).array();
}

// ---- Parameter utilities --------------------------------------------------

void zero_grads(const ParameterList& params) {
    for (auto* p : params) p->zero_grad();
}

std::string parameter_hash(const ParameterList& params) {
    return parameter_hash(ConstParameterList(params.begin(), params.end()));
}

std::string parameter_hash(const ConstParameterList& params) {
    std::string bytes;
    for (const auto* p : params) {
        bytes.append(p->name);
        bytes.append(reinterpret_cast<const char*>(p->value.data()),
                     static_cast<std::size_t>(p->value.size()) * sizeof(double));
    }
    return fnv1a_hex(bytes);
}

double parameter_distance(const ConstParameterList& a, const ConstParameterList& b) {
    if (a.size() != b.size()) throw std::invalid_argument("parameter lists differ in length");
    double sq = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i]->value - b[i]->value).squaredNorm();
    return std::sqrt(sq);
}

std::size_t parameter_count(const ConstParameterList& params) {
    std::size_t n = 0;
    for (const auto* p : params) n += static_cast<std::size_t>(p->value.size());
    return n;
}

// ---- Checkpoints ----------------------------------------------------------

namespace {

constexpr std::string_view kCheckpointMagic = "MILDA-CHECKPOINT 1";

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double get_f64(const std::string& in, std::size_t& pos) {
    if (pos + 8 > in.size()) throw std::runtime_error("checkpoint payload truncated");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + static_cast<std::size_t>(i)])) << (8 * i);
    pos += 8;
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

std::string encode_checkpoint(const ModelBundle& bundle) {
    nlohmann::json header;
    header["version"] = 1;
    header["architecture"] = to_json(bundle.arch);
    header["heads"] = bundle.has_twin_heads() ? nlohmann::json::array({"I1", "I2"})
                      : bundle.pretrain_head  ? nlohmann::json::array({"IP"})
                                              : nlohmann::json::array();
    auto tensors = nlohmann::json::array();
    std::string payload;
    for (const auto* p : bundle.all_parameters()) {
        tensors.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
        for (Eigen::Index i = 0; i < p->value.size(); ++i) put_f64(payload, p->value.data()[i]);
    }
    header["tensors"] = tensors;
    const std::string h = header.dump(2);
    std::string out;
    out += kCheckpointMagic;
    out += '\n';
    out += std::to_string(h.size());
    out += '\n';
    out += h;
    out += payload;
    return out;
}

ModelBundle decode_checkpoint(const std::string& bytes, const std::optional<ArchitectureSpec>& expected) {
    std::size_t pos = bytes.find('\n');
    if (pos == std::string::npos || bytes.compare(0, pos, kCheckpointMagic) != 0)
        throw std::runtime_error("not a checkpoint (bad magic)");
    ++pos;
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw std::runtime_error("checkpoint header truncated");
    const std::size_t len = std::stoull(bytes.substr(pos, nl - pos));
    pos = nl + 1;
    const auto header = nlohmann::json::parse(bytes.substr(pos, len));
    pos += len;
    if (header.at("version").get<int>() != 1) throw std::runtime_error("unsupported checkpoint version");
    const auto arch = architecture_from_json(header.at("architecture"));
    if (expected && !(*expected == arch)) throw std::runtime_error("checkpoint architecture does not match");

    ModelBundle b = ModelBundle::create(arch, 0);
    const auto heads = header.at("heads").get<std::vector<std::string>>();
    if (heads == std::vector<std::string>{"I1", "I2"}) {
        Rng rng(0);
        b.pretrain_head.reset();
        b.head1 = InstanceHead("FI1", arch, rng);
        b.head2 = InstanceHead("FI2", arch, rng);
    } else if (heads.empty()) {
        b.pretrain_head.reset();
    }
    auto params = b.all_parameters();
    const auto& tensors = header.at("tensors");
    if (tensors.size() != params.size()) throw std::runtime_error("checkpoint tensor count does not match architecture");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& t = tensors[i];
        if (t.at("name").get<std::string>() != params[i]->name || t.at("rows").get<Eigen::Index>() != params[i]->value.rows() ||
            t.at("cols").get<Eigen::Index>() != params[i]->value.cols())
            throw std::runtime_error("checkpoint tensor " + t.at("name").get<std::string>() + " does not match architecture");
        for (Eigen::Index k = 0; k < params[i]->value.size(); ++k) params[i]->value.data()[k] = get_f64(bytes, pos);
    }
    if (pos != bytes.size()) throw std::runtime_error("trailing bytes after checkpoint payload");
    return b;
}

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    const auto bytes = encode_checkpoint(bundle);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ModelBundle load_checkpoint(const std::filesystem::path& path, const std::optional<ArchitectureSpec>& expected) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return decode_checkpoint(ss.str(), expected);
}

}  // namespace milda
