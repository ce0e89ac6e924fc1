#pragma once

#include "selfpath/common.hpp"
#include "selfpath/image.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace selfpath::model {

// NCHW activation/parameter block. Dense activations use shape (n, d, 1, 1).
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<float> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<size_t>(n_) * c_ * h_ * w_, 0.f) {}

    size_t count() const { return v.size(); }
    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
};

// Batch of HWC images -> NCHW tensor and back.
Tensor to_tensor(const std::vector<const Image*>& batch);
Tensor to_tensor(const std::vector<Image>& batch);
Image to_image(const Tensor& t, int index);

struct Param {
    std::string name;
    std::vector<float>* value;
    std::vector<float>* grad;
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x) = 0;
    virtual Tensor backward(const Tensor& gout) = 0;
    virtual void collect_params(const std::string& prefix, std::vector<Param>& out) { (void)prefix; (void)out; }
};

class Sequential {
public:
    Sequential() = default;
    Sequential(Sequential&&) = default;
    Sequential& operator=(Sequential&&) = default;

    template <typename L, typename... Args>
    L* add(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L* raw = layer.get();
        layers_.push_back(std::move(layer));
        return raw;
    }

    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& gout);
    void collect_params(const std::string& prefix, std::vector<Param>& out);
    size_t size() const { return layers_.size(); }

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

// Identity forward; backward multiplies the incoming gradient by -lambda.
class GradientReversal : public Layer {
public:
    explicit GradientReversal(double lambda) : lambda_(lambda) {
        if (lambda < 0.0) throw ConfigError("grl lambda must be >= 0");
    }
    Tensor forward(const Tensor& x) override { return x; }
    Tensor backward(const Tensor& gout) override;
    double lambda() const { return lambda_; }
    void set_lambda(double l) { lambda_ = l; }

private:
    double lambda_;
};

// ----- losses (reductions are batch means, computed in double) -----

// Row-wise softmax of logits (n, k).
Tensor softmax_rows(const Tensor& logits);
// Mean cross-entropy; writes d(loss)/d(logits) into dlogits.
double softmax_ce(const Tensor& logits, const std::vector<int>& labels, Tensor* dlogits);
// Mean absolute error over all elements.
double l1_loss(const Tensor& pred, const Tensor& target, Tensor* dpred);
// -mean log sigmoid(s) and -mean log(1 - sigmoid(s)) on logits.
double neg_log_sigmoid_mean(const Tensor& logits, Tensor* dlogits);
double neg_log_one_minus_sigmoid_mean(const Tensor& logits, Tensor* dlogits);

// ----- model graph -----

struct EncoderConfig {
    std::string arch = "small-conv";  // small-conv | deep-residual
    int input_size = 128;
    int in_channels = 3;
    int feature_width = 64;  // channel count of the shared representation
};

struct HeadConfig {
    std::string kind;  // classifier | decoder | discriminator | domain
    int classes = 0;
    int out_channels = 0;
    double grl_lambda = 1.0;
};

struct GeneratorConfig {
    int noise_dim = 64;
    int out_size = 128;
    int out_channels = 3;
};

// Shared encoder plus named heads; the unit every training regime drives.
class ModelGraph {
public:
    ModelGraph(const EncoderConfig& cfg, uint64_t seed);

    void add_classifier_head(const std::string& name, int classes);
    void add_decoder_head(const std::string& name, int out_channels);
    void add_discriminator_head(const std::string& name);
    void add_domain_head(const std::string& name, double grl_lambda);
    void add_generator(const GeneratorConfig& cfg);

    // Encoder forward; validates batch shape. Output is (n, feature_width, 1, 1).
    Tensor forward_shared(const Tensor& batch);
    Tensor backward_shared(const Tensor& gfeatures);

    Tensor head_forward(const std::string& name, const Tensor& features);
    Tensor head_backward(const std::string& name, const Tensor& gout);

    bool has_head(const std::string& name) const { return heads_.count(name) > 0; }
    const HeadConfig& head_config(const std::string& name) const;

    // Class probabilities from the named classifier head (softmax rows).
    Tensor predict_proba(const Tensor& batch, const std::string& head = "main");

    // Probability of "fake" from the discriminator head (sigmoid of logits).
    Tensor discriminate(const Tensor& features, const std::string& head = "dis");

    Tensor generator_forward(const Tensor& z);
    Tensor generator_backward(const Tensor& gout);
    bool has_generator() const { return generator_ != nullptr; }
    const GeneratorConfig& generator_config() const { return gen_cfg_; }

    std::vector<Param> params();            // everything
    std::vector<Param> encoder_params();
    std::vector<Param> head_params(const std::string& name);
    std::vector<Param> generator_params();

    const EncoderConfig& encoder_config() const { return enc_cfg_; }
    int feature_width() const { return enc_cfg_.feature_width; }

    void set_grl_lambda(const std::string& head, double lambda);

    // Full parameter snapshot (used for best-checkpoint tracking).
    std::vector<std::vector<float>> snapshot();
    void restore(const std::vector<std::vector<float>>& snap);

    // Versioned checkpoint container; reload gives bit-identical parameters.
    void save(const std::string& path) const;
    static ModelGraph load(const std::string& path);

private:
    struct Head {
        HeadConfig cfg;
        Sequential net;
        GradientReversal* grl = nullptr;  // domain heads only
    };

    EncoderConfig enc_cfg_;
    GeneratorConfig gen_cfg_;
    uint64_t init_seed_ = 0;
    Rng init_rng_;
    Sequential encoder_;
    std::map<std::string, Head> heads_;
    std::unique_ptr<Sequential> generator_;

    Head& head_at(const std::string& name);
    const Head& head_at(const std::string& name) const;
    void build_encoder();
    Sequential build_decoder_net(int out_channels);
};

// Adam with the standard defaults; state is keyed by parameter storage.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void zero_grad(const std::vector<Param>& params);
    void step(const std::vector<Param>& params);

private:
    struct State {
        std::vector<float> m, v;
    };
    double lr_, b1_, b2_, eps_;
    long long t_ = 0;
    std::map<const std::vector<float>*, State> state_;
};

}  // namespace selfpath::model
