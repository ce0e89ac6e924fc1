#include "selfpath/model.hpp"

#include "selfpath/kernels.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace selfpath::model {

using nlohmann::json;

Tensor to_tensor(const std::vector<const Image*>& batch) {
    if (batch.empty()) throw ConfigError("to_tensor: empty batch");
    const Image& first = *batch.front();
    Tensor t(static_cast<int>(batch.size()), first.c, first.h, first.w);
    const size_t plane = static_cast<size_t>(first.h) * first.w;
    for (size_t i = 0; i < batch.size(); ++i) {
        const Image& img = *batch[i];
        if (img.h != first.h || img.w != first.w || img.c != first.c)
            throw ConfigError("to_tensor: mixed image shapes in batch");
        for (int ch = 0; ch < first.c; ++ch) {
            float* dst = &t.v[(i * first.c + ch) * plane];
            for (size_t p = 0; p < plane; ++p) dst[p] = img.px[p * first.c + ch];
        }
    }
    return t;
}

Tensor to_tensor(const std::vector<Image>& batch) {
    std::vector<const Image*> ptrs;
    ptrs.reserve(batch.size());
    for (const auto& img : batch) ptrs.push_back(&img);
    return to_tensor(ptrs);
}

Image to_image(const Tensor& t, int index) {
    Image img(t.h, t.w, t.c);
    const size_t plane = static_cast<size_t>(t.h) * t.w;
    for (int ch = 0; ch < t.c; ++ch) {
        const float* src = &t.v[(static_cast<size_t>(index) * t.c + ch) * plane];
        for (size_t p = 0; p < plane; ++p) img.px[p * t.c + ch] = src[p];
    }
    return img;
}

Tensor Sequential::forward(const Tensor& x) {
    Tensor cur = x;
    for (auto& l : layers_) cur = l->forward(cur);
    return cur;
}

Tensor Sequential::backward(const Tensor& gout) {
    Tensor cur = gout;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
    return cur;
}

void Sequential::collect_params(const std::string& prefix, std::vector<Param>& out) {
    for (size_t i = 0; i < layers_.size(); ++i)
        layers_[i]->collect_params(prefix + ".L" + std::to_string(i), out);
}

Tensor GradientReversal::backward(const Tensor& gout) {
    Tensor gin = gout;
    const float s = static_cast<float>(-lambda_);
    for (float& g : gin.v) g *= s;
    return gin;
}

// ----- concrete layers -----

namespace {

struct Conv3x3 : Layer {
    int cin, cout;
    std::vector<float> w, b, gw, gb;
    Tensor in_cache;

    Conv3x3(int cin_, int cout_, Rng& rng) : cin(cin_), cout(cout_) {
        w.resize(static_cast<size_t>(cout) * cin * 9);
        b.assign(static_cast<size_t>(cout), 0.f);
        gw.assign(w.size(), 0.f);
        gb.assign(b.size(), 0.f);
        const double std = std::sqrt(2.0 / (static_cast<double>(cin) * 9.0));
        for (float& x : w) x = static_cast<float>(rng.normal(0.0, std));
    }

    Tensor forward(const Tensor& x) override {
        in_cache = x;
        Tensor out(x.n, cout, x.h, x.w);
        kernels::conv3x3_forward(x.v.data(), x.n, cin, x.h, x.w, w.data(), b.data(), cout,
                                 out.v.data());
        return out;
    }

    Tensor backward(const Tensor& gout) override {
        kernels::conv3x3_backward_params(gout.v.data(), in_cache.v.data(), gout.n, cin, cout,
                                         gout.h, gout.w, gw.data(), gb.data());
        Tensor gin(in_cache.n, cin, in_cache.h, in_cache.w);
        kernels::conv3x3_backward_input(gout.v.data(), gout.n, cout, gout.h, gout.w, w.data(),
                                        cin, gin.v.data());
        return gin;
    }

    void collect_params(const std::string& prefix, std::vector<Param>& out) override {
        out.push_back({prefix + ".conv.w", &w, &gw});
        out.push_back({prefix + ".conv.b", &b, &gb});
    }
};

struct Dense : Layer {
    int din, dout;
    std::vector<float> w, b, gw, gb;
    Tensor in_cache;

    Dense(int din_, int dout_, Rng& rng) : din(din_), dout(dout_) {
        w.resize(static_cast<size_t>(dout) * din);
        b.assign(static_cast<size_t>(dout), 0.f);
        gw.assign(w.size(), 0.f);
        gb.assign(b.size(), 0.f);
        const double std = std::sqrt(2.0 / static_cast<double>(din + dout));
        for (float& x : w) x = static_cast<float>(rng.normal(0.0, std));
    }

    Tensor forward(const Tensor& x) override {
        if (static_cast<int>(x.count()) / x.n != din)
            throw ConfigError("dense: input width mismatch");
        in_cache = x;
        Tensor out(x.n, dout, 1, 1);
        kernels::dense_forward(x.v.data(), x.n, din, w.data(), b.data(), dout, out.v.data());
        return out;
    }

    Tensor backward(const Tensor& gout) override {
        kernels::dense_backward_params(gout.v.data(), in_cache.v.data(), gout.n, din, dout,
                                       gw.data(), gb.data());
        Tensor gin(in_cache.n, in_cache.c, in_cache.h, in_cache.w);
        kernels::dense_backward_input(gout.v.data(), gout.n, dout, w.data(), din, gin.v.data());
        return gin;
    }

    void collect_params(const std::string& prefix, std::vector<Param>& out) override {
        out.push_back({prefix + ".dense.w", &w, &gw});
        out.push_back({prefix + ".dense.b", &b, &gb});
    }
};

struct ReLU : Layer {
    Tensor in_cache;
    Tensor forward(const Tensor& x) override {
        in_cache = x;
        Tensor out(x.n, x.c, x.h, x.w);
        kernels::relu_forward(x.v.data(), x.count(), out.v.data());
        return out;
    }
    Tensor backward(const Tensor& gout) override {
        Tensor gin(gout.n, gout.c, gout.h, gout.w);
        kernels::relu_backward(gout.v.data(), in_cache.v.data(), gout.count(), gin.v.data());
        return gin;
    }
};

struct Sigmoid : Layer {
    Tensor out_cache;
    Tensor forward(const Tensor& x) override {
        Tensor out(x.n, x.c, x.h, x.w);
        kernels::sigmoid_forward(x.v.data(), x.count(), out.v.data());
        out_cache = out;
        return out;
    }
    Tensor backward(const Tensor& gout) override {
        Tensor gin(gout.n, gout.c, gout.h, gout.w);
        kernels::sigmoid_backward(gout.v.data(), out_cache.v.data(), gout.count(), gin.v.data());
        return gin;
    }
};

struct AvgPool2 : Layer {
    int h = 0, w = 0;
    Tensor forward(const Tensor& x) override {
        if (x.h % 2 != 0 || x.w % 2 != 0) throw ConfigError("avgpool2: odd spatial size");
        h = x.h;
        w = x.w;
        Tensor out(x.n, x.c, x.h / 2, x.w / 2);
        kernels::avgpool2_forward(x.v.data(), x.n, x.c, x.h, x.w, out.v.data());
        return out;
    }
    Tensor backward(const Tensor& gout) override {
        Tensor gin(gout.n, gout.c, h, w);
        kernels::avgpool2_backward(gout.v.data(), gout.n, gout.c, h, w, gin.v.data());
        return gin;
    }
};

struct Upsample2 : Layer {
    Tensor forward(const Tensor& x) override {
        Tensor out(x.n, x.c, x.h * 2, x.w * 2);
        kernels::upsample2_forward(x.v.data(), x.n, x.c, x.h, x.w, out.v.data());
        return out;
    }
    Tensor backward(const Tensor& gout) override {
        Tensor gin(gout.n, gout.c, gout.h / 2, gout.w / 2);
        kernels::upsample2_backward(gout.v.data(), gout.n, gout.c, gout.h / 2, gout.w / 2,
                                    gin.v.data());
        return gin;
    }
};

struct GlobalAvgPool : Layer {
    int h = 0, w = 0;
    Tensor forward(const Tensor& x) override {
        h = x.h;
        w = x.w;
        Tensor out(x.n, x.c, 1, 1);
        kernels::gap_forward(x.v.data(), x.n, x.c, x.h, x.w, out.v.data());
        return out;
    }
    Tensor backward(const Tensor& gout) override {
        Tensor gin(gout.n, gout.c, h, w);
        kernels::gap_backward(gout.v.data(), gout.n, gout.c, h, w, gin.v.data());
        return gin;
    }
};

struct Reshape : Layer {
    int c, h, w;
    int in_c = 0, in_h = 0, in_w = 0;
    Reshape(int c_, int h_, int w_) : c(c_), h(h_), w(w_) {}
    Tensor forward(const Tensor& x) override {
        if (x.count() != static_cast<size_t>(x.n) * c * h * w)
            throw ConfigError("reshape: element count mismatch");
        in_c = x.c;
        in_h = x.h;
        in_w = x.w;
        Tensor out(x.n, c, h, w);
        out.v = x.v;
        return out;
    }
    Tensor backward(const Tensor& gout) override {
        Tensor gin(gout.n, in_c, in_h, in_w);
        gin.v = gout.v;
        return gin;
    }
};

// out = ReLU(x + conv2(ReLU(conv1(x)))), channel-preserving.
struct ResidualBlock : Layer {
    Conv3x3 conv1, conv2;
    ReLU relu1;
    Tensor sum_cache;

    ResidualBlock(int c, Rng& rng) : conv1(c, c, rng), conv2(c, c, rng) {}

    Tensor forward(const Tensor& x) override {
        Tensor branch = conv2.forward(relu1.forward(conv1.forward(x)));
        Tensor sum(x.n, x.c, x.h, x.w);
        for (size_t i = 0; i < sum.count(); ++i) sum.v[i] = x.v[i] + branch.v[i];
        sum_cache = sum;
        Tensor out(x.n, x.c, x.h, x.w);
        kernels::relu_forward(sum.v.data(), sum.count(), out.v.data());
        return out;
    }

    Tensor backward(const Tensor& gout) override {
        Tensor gsum(gout.n, gout.c, gout.h, gout.w);
        kernels::relu_backward(gout.v.data(), sum_cache.v.data(), gout.count(), gsum.v.data());
        Tensor gbranch = conv1.backward(relu1.backward(conv2.backward(gsum)));
        for (size_t i = 0; i < gbranch.count(); ++i) gbranch.v[i] += gsum.v[i];
        return gbranch;
    }

    void collect_params(const std::string& prefix, std::vector<Param>& out) override {
        conv1.collect_params(prefix + ".res1", out);
        conv2.collect_params(prefix + ".res2", out);
    }
};

}  // namespace

// ----- losses -----

Tensor softmax_rows(const Tensor& logits) {
    Tensor probs(logits.n, logits.c, 1, 1);
    const int k = logits.c;
    for (int i = 0; i < logits.n; ++i) {
        const float* row = &logits.v[static_cast<size_t>(i) * k];
        float* out = &probs.v[static_cast<size_t>(i) * k];
        double mx = row[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double sum = 0.0;
        for (int j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
        for (int j = 0; j < k; ++j)
            out[j] = static_cast<float>(std::exp(static_cast<double>(row[j]) - mx) / sum);
    }
    return probs;
}

double softmax_ce(const Tensor& logits, const std::vector<int>& labels, Tensor* dlogits) {
    if (static_cast<int>(labels.size()) != logits.n)
        throw ConfigError("softmax_ce: label count mismatch");
    const int k = logits.c;
    double loss = 0.0;
    if (dlogits) *dlogits = Tensor(logits.n, k, 1, 1);
    for (int i = 0; i < logits.n; ++i) {
        const int y = labels[static_cast<size_t>(i)];
        if (y < 0 || y >= k) throw ConfigError("softmax_ce: label out of range");
        const float* row = &logits.v[static_cast<size_t>(i) * k];
        double mx = row[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
        double sum = 0.0;
        for (int j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
        const double logsum = std::log(sum) + mx;
        loss += logsum - row[y];
        if (dlogits) {
            float* d = &dlogits->v[static_cast<size_t>(i) * k];
            for (int j = 0; j < k; ++j) {
                const double p = std::exp(static_cast<double>(row[j]) - logsum);
                d[j] = static_cast<float>((p - (j == y ? 1.0 : 0.0)) / logits.n);
            }
        }
    }
    return loss / logits.n;
}

double l1_loss(const Tensor& pred, const Tensor& target, Tensor* dpred) {
    if (!pred.same_shape(target)) throw ConfigError("l1_loss: shape mismatch");
    double loss = 0.0;
    if (dpred) *dpred = Tensor(pred.n, pred.c, pred.h, pred.w);
    const double inv = 1.0 / static_cast<double>(pred.count());
    for (size_t i = 0; i < pred.count(); ++i) {
        const double d = static_cast<double>(pred.v[i]) - target.v[i];
        loss += std::abs(d);
        if (dpred) dpred->v[i] = static_cast<float>((d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * inv);
    }
    return loss * inv;
}

namespace {
double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

double neg_log_sigmoid_mean(const Tensor& logits, Tensor* dlogits) {
    double loss = 0.0;
    if (dlogits) *dlogits = Tensor(logits.n, logits.c, logits.h, logits.w);
    const double inv = 1.0 / static_cast<double>(logits.count());
    for (size_t i = 0; i < logits.count(); ++i) {
        const double s = logits.v[i];
        loss += softplus(-s);
        if (dlogits) dlogits->v[i] = static_cast<float>((sigmoid(s) - 1.0) * inv);
    }
    return loss * inv;
}

double neg_log_one_minus_sigmoid_mean(const Tensor& logits, Tensor* dlogits) {
    double loss = 0.0;
    if (dlogits) *dlogits = Tensor(logits.n, logits.c, logits.h, logits.w);
    const double inv = 1.0 / static_cast<double>(logits.count());
    for (size_t i = 0; i < logits.count(); ++i) {
        const double s = logits.v[i];
        loss += softplus(s);
        if (dlogits) dlogits->v[i] = static_cast<float>(sigmoid(s) * inv);
    }
    return loss * inv;
}

// ----- ModelGraph -----

ModelGraph::ModelGraph(const EncoderConfig& cfg, uint64_t seed)
    : enc_cfg_(cfg), init_seed_(seed), init_rng_(seed) {
    if (cfg.feature_width % 4 != 0 || cfg.feature_width < 8)
        throw ConfigError("encoder feature_width must be a multiple of 4 and >= 8");
    build_encoder();
}

void ModelGraph::build_encoder() {
    const int fw = enc_cfg_.feature_width;
    const int s = enc_cfg_.input_size;
    if (enc_cfg_.arch == "small-conv") {
        if (s % 16 != 0) throw ConfigError("small-conv encoder needs input_size divisible by 16");
        const int widths[4] = {fw / 4, fw / 2, fw, fw};
        int cin = enc_cfg_.in_channels;
        for (int i = 0; i < 4; ++i) {
            encoder_.add<Conv3x3>(cin, widths[i], init_rng_);
            encoder_.add<ReLU>();
            encoder_.add<AvgPool2>();
            cin = widths[i];
        }
        encoder_.add<GlobalAvgPool>();
    } else if (enc_cfg_.arch == "deep-residual") {
        if (s % 8 != 0) throw ConfigError("deep-residual encoder needs input_size divisible by 8");
        const int w1 = fw / 4, w2 = fw / 2;
        encoder_.add<Conv3x3>(enc_cfg_.in_channels, w1, init_rng_);
        encoder_.add<ReLU>();
        encoder_.add<ResidualBlock>(w1, init_rng_);
        encoder_.add<ResidualBlock>(w1, init_rng_);
        encoder_.add<Conv3x3>(w1, w2, init_rng_);
        encoder_.add<ReLU>();
        encoder_.add<AvgPool2>();
        encoder_.add<ResidualBlock>(w2, init_rng_);
        encoder_.add<ResidualBlock>(w2, init_rng_);
        encoder_.add<Conv3x3>(w2, fw, init_rng_);
        encoder_.add<ReLU>();
        encoder_.add<AvgPool2>();
        encoder_.add<ResidualBlock>(fw, init_rng_);
        encoder_.add<ResidualBlock>(fw, init_rng_);
        encoder_.add<AvgPool2>();
        encoder_.add<GlobalAvgPool>();
    } else {
        throw ConfigError("unknown encoder architecture '" + enc_cfg_.arch + "'");
    }
}

Sequential ModelGraph::build_decoder_net(int out_channels) {
    const int fw = enc_cfg_.feature_width;
    const int s0 = enc_cfg_.input_size / 16;
    Sequential net;
    net.add<Dense>(fw, fw * s0 * s0, init_rng_);
    net.add<ReLU>();
    net.add<Reshape>(fw, s0, s0);
    net.add<Upsample2>();
    net.add<Conv3x3>(fw, fw / 2, init_rng_);
    net.add<ReLU>();
    net.add<Upsample2>();
    net.add<Conv3x3>(fw / 2, fw / 4, init_rng_);
    net.add<ReLU>();
    net.add<Upsample2>();
    net.add<Conv3x3>(fw / 4, fw / 4, init_rng_);
    net.add<ReLU>();
    net.add<Upsample2>();
    net.add<Conv3x3>(fw / 4, out_channels, init_rng_);
    net.add<Sigmoid>();
    return net;
}

void ModelGraph::add_classifier_head(const std::string& name, int classes) {
    if (classes < 2) throw ConfigError("classifier head needs >= 2 classes");
    Head h;
    h.cfg = {"classifier", classes, 0, 1.0};
    h.net.add<Dense>(enc_cfg_.feature_width, classes, init_rng_);
    heads_[name] = std::move(h);
}

void ModelGraph::add_decoder_head(const std::string& name, int out_channels) {
    Head h;
    h.cfg = {"decoder", 0, out_channels, 1.0};
    h.net = build_decoder_net(out_channels);
    heads_[name] = std::move(h);
}

void ModelGraph::add_discriminator_head(const std::string& name) {
    Head h;
    h.cfg = {"discriminator", 0, 0, 1.0};
    h.net.add<Dense>(enc_cfg_.feature_width, enc_cfg_.feature_width / 2, init_rng_);
    h.net.add<ReLU>();
    h.net.add<Dense>(enc_cfg_.feature_width / 2, 1, init_rng_);
    heads_[name] = std::move(h);
}

void ModelGraph::add_domain_head(const std::string& name, double grl_lambda) {
    Head h;
    h.cfg = {"domain", 2, 0, grl_lambda};
    h.grl = h.net.add<GradientReversal>(grl_lambda);
    h.net.add<Dense>(enc_cfg_.feature_width, enc_cfg_.feature_width / 2, init_rng_);
    h.net.add<ReLU>();
    h.net.add<Dense>(enc_cfg_.feature_width / 2, 2, init_rng_);
    heads_[name] = std::move(h);
}

void ModelGraph::add_generator(const GeneratorConfig& cfg) {
    if (cfg.out_size % 16 != 0) throw ConfigError("generator out_size must be divisible by 16");
    gen_cfg_ = cfg;
    const int fw = enc_cfg_.feature_width;
    const int s0 = cfg.out_size / 16;
    generator_ = std::make_unique<Sequential>();
    generator_->add<Dense>(cfg.noise_dim, fw * s0 * s0, init_rng_);
    generator_->add<ReLU>();
    generator_->add<Reshape>(fw, s0, s0);
    generator_->add<Upsample2>();
    generator_->add<Conv3x3>(fw, fw / 2, init_rng_);
    generator_->add<ReLU>();
    generator_->add<Upsample2>();
    generator_->add<Conv3x3>(fw / 2, fw / 4, init_rng_);
    generator_->add<ReLU>();
    generator_->add<Upsample2>();
    generator_->add<Conv3x3>(fw / 4, fw / 4, init_rng_);
    generator_->add<ReLU>();
    generator_->add<Upsample2>();
    generator_->add<Conv3x3>(fw / 4, cfg.out_channels, init_rng_);
    generator_->add<Sigmoid>();
}

Tensor ModelGraph::forward_shared(const Tensor& batch) {
    if (batch.c != enc_cfg_.in_channels || batch.h != enc_cfg_.input_size ||
        batch.w != enc_cfg_.input_size)
        throw ConfigError("forward_shared: batch shape does not match encoder config");
    return encoder_.forward(batch);
}

Tensor ModelGraph::backward_shared(const Tensor& gfeatures) {
    return encoder_.backward(gfeatures);
}

ModelGraph::Head& ModelGraph::head_at(const std::string& name) {
    auto it = heads_.find(name);
    if (it == heads_.end()) throw ConfigError("no head named '" + name + "'");
    return it->second;
}

const ModelGraph::Head& ModelGraph::head_at(const std::string& name) const {
    auto it = heads_.find(name);
    if (it == heads_.end()) throw ConfigError("no head named '" + name + "'");
    return it->second;
}

const HeadConfig& ModelGraph::head_config(const std::string& name) const {
    return head_at(name).cfg;
}

Tensor ModelGraph::head_forward(const std::string& name, const Tensor& features) {
    return head_at(name).net.forward(features);
}

Tensor ModelGraph::head_backward(const std::string& name, const Tensor& gout) {
    return head_at(name).net.backward(gout);
}

Tensor ModelGraph::predict_proba(const Tensor& batch, const std::string& head) {
    return softmax_rows(head_forward(head, forward_shared(batch)));
}

Tensor ModelGraph::discriminate(const Tensor& features, const std::string& head) {
    Tensor logits = head_forward(head, features);
    Tensor probs(logits.n, logits.c, logits.h, logits.w);
    kernels::sigmoid_forward(logits.v.data(), logits.count(), probs.v.data());
    return probs;
}

Tensor ModelGraph::generator_forward(const Tensor& z) {
    if (!generator_) throw ConfigError("model has no generator");
    if (z.c != gen_cfg_.noise_dim) throw ConfigError("generator: noise dimension mismatch");
    return generator_->forward(z);
}

Tensor ModelGraph::generator_backward(const Tensor& gout) {
    if (!generator_) throw ConfigError("model has no generator");
    return generator_->backward(gout);
}

std::vector<Param> ModelGraph::params() {
    std::vector<Param> out = encoder_params();
    for (auto& [name, head] : heads_) head.net.collect_params("head." + name, out);
    if (generator_) generator_->collect_params("generator", out);
    return out;
}

std::vector<Param> ModelGraph::encoder_params() {
    std::vector<Param> out;
    encoder_.collect_params("encoder", out);
    return out;
}

std::vector<Param> ModelGraph::head_params(const std::string& name) {
    std::vector<Param> out;
    head_at(name).net.collect_params("head." + name, out);
    return out;
}

std::vector<Param> ModelGraph::generator_params() {
    std::vector<Param> out;
    if (generator_) generator_->collect_params("generator", out);
    return out;
}

void ModelGraph::set_grl_lambda(const std::string& head, double lambda) {
    Head& h = head_at(head);
    if (!h.grl) throw ConfigError("head '" + head + "' has no gradient reversal layer");
    h.grl->set_lambda(lambda);
    h.cfg.grl_lambda = lambda;
}

std::vector<std::vector<float>> ModelGraph::snapshot() {
    std::vector<std::vector<float>> snap;
    for (const Param& p : params()) snap.push_back(*p.value);
    return snap;
}

void ModelGraph::restore(const std::vector<std::vector<float>>& snap) {
    auto ps = params();
    if (snap.size() != ps.size()) throw ConfigError("restore: snapshot/parameter count mismatch");
    for (size_t i = 0; i < ps.size(); ++i) {
        if (snap[i].size() != ps[i].value->size())
            throw ConfigError("restore: tensor size mismatch at " + ps[i].name);
        *ps[i].value = snap[i];
    }
}

void ModelGraph::save(const std::string& path) const {
    json header;
    header["version"] = 1;
    header["init_seed"] = init_seed_;
    header["encoder"] = {{"arch", enc_cfg_.arch},
                         {"input_size", enc_cfg_.input_size},
                         {"in_channels", enc_cfg_.in_channels},
                         {"feature_width", enc_cfg_.feature_width}};
    header["heads"] = json::array();
    for (const auto& [name, head] : heads_)
        header["heads"].push_back({{"name", name},
                                   {"kind", head.cfg.kind},
                                   {"classes", head.cfg.classes},
                                   {"out_channels", head.cfg.out_channels},
                                   {"grl_lambda", head.cfg.grl_lambda}});
    if (generator_)
        header["generator"] = {{"noise_dim", gen_cfg_.noise_dim},
                               {"out_size", gen_cfg_.out_size},
                               {"out_channels", gen_cfg_.out_channels}};
    else
        header["generator"] = nullptr;

    auto* self = const_cast<ModelGraph*>(this);
    auto ps = self->params();
    header["tensors"] = json::array();
    for (const Param& p : ps)
        header["tensors"].push_back({{"name", p.name}, {"count", p.value->size()}});

    const std::string head_str = header.dump();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("checkpoint: cannot open " + path);
    f << "SPCK1\n";
    const uint64_t len = head_str.size();
    f.write(reinterpret_cast<const char*>(&len), sizeof(len));
    f.write(head_str.data(), static_cast<std::streamsize>(head_str.size()));
    for (const Param& p : ps)
        f.write(reinterpret_cast<const char*>(p.value->data()),
                static_cast<std::streamsize>(p.value->size() * sizeof(float)));
    if (!f) throw DataError("checkpoint: write failed for " + path);
}

ModelGraph ModelGraph::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("checkpoint: cannot open " + path);
    std::string magic(6, '\0');
    f.read(magic.data(), 6);
    if (magic != "SPCK1\n") throw DataError("checkpoint: bad magic in " + path);
    uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string head_str(len, '\0');
    f.read(head_str.data(), static_cast<std::streamsize>(len));
    if (!f) throw DataError("checkpoint: truncated header in " + path);
    json header = json::parse(head_str);
    if (header.at("version").get<int>() != 1)
        throw DataError("checkpoint: unsupported version");

    EncoderConfig cfg;
    cfg.arch = header.at("encoder").at("arch").get<std::string>();
    cfg.input_size = header.at("encoder").at("input_size").get<int>();
    cfg.in_channels = header.at("encoder").at("in_channels").get<int>();
    cfg.feature_width = header.at("encoder").at("feature_width").get<int>();

    ModelGraph m(cfg, header.at("init_seed").get<uint64_t>());
    for (const auto& h : header.at("heads")) {
        const auto kind = h.at("kind").get<std::string>();
        const auto name = h.at("name").get<std::string>();
        if (kind == "classifier") m.add_classifier_head(name, h.at("classes").get<int>());
        else if (kind == "decoder") m.add_decoder_head(name, h.at("out_channels").get<int>());
        else if (kind == "discriminator") m.add_discriminator_head(name);
        else if (kind == "domain") m.add_domain_head(name, h.at("grl_lambda").get<double>());
        else throw DataError("checkpoint: unknown head kind '" + kind + "'");
    }
    if (!header.at("generator").is_null()) {
        GeneratorConfig g;
        g.noise_dim = header.at("generator").at("noise_dim").get<int>();
        g.out_size = header.at("generator").at("out_size").get<int>();
        g.out_channels = header.at("generator").at("out_channels").get<int>();
        m.add_generator(g);
    }

    auto ps = m.params();
    const auto& tensors = header.at("tensors");
    if (tensors.size() != ps.size()) throw DataError("checkpoint: tensor list mismatch");
    for (size_t i = 0; i < ps.size(); ++i) {
        if (tensors[i].at("name").get<std::string>() != ps[i].name ||
            tensors[i].at("count").get<size_t>() != ps[i].value->size())
            throw DataError("checkpoint: tensor layout mismatch at " + ps[i].name);
        f.read(reinterpret_cast<char*>(ps[i].value->data()),
               static_cast<std::streamsize>(ps[i].value->size() * sizeof(float)));
    }
    if (!f) throw DataError("checkpoint: truncated tensor data in " + path);
    return m;
}

// ----- Adam -----

void Adam::zero_grad(const std::vector<Param>& params) {
    for (const Param& p : params) std::fill(p.grad->begin(), p.grad->end(), 0.f);
}

void Adam::step(const std::vector<Param>& params) {
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (const Param& p : params) {
        State& s = state_[p.value];
        if (s.m.empty()) {
            s.m.assign(p.value->size(), 0.f);
            s.v.assign(p.value->size(), 0.f);
        }
        for (size_t i = 0; i < p.value->size(); ++i) {
            const double g = (*p.grad)[i];
            const double m = b1_ * s.m[i] + (1.0 - b1_) * g;
            const double v = b2_ * s.v[i] + (1.0 - b2_) * g * g;
            s.m[i] = static_cast<float>(m);
            s.v[i] = static_cast<float>(v);
            (*p.value)[i] -= static_cast<float>(lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_));
        }
    }
}

}  // namespace selfpath::model
