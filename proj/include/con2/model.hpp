// ============================================================================
// model.hpp - encoder presets and the dual projection heads
//
// Two presets: "tiny-cnn" (3 conv blocks + global pool, d = 64) for desk
// scale, and "paper-resnet18" (standard 18-layer residual network without the
// final linear layer, d = 512) for full scale. Both heads are one-hidden-
// layer MLPs with disjoint parameters.
// ============================================================================

#pragma once
#include <memory>
#include <string>
#include <vector>

#include "con2/nn.hpp"

namespace con2 {

struct HeadConfig {
    int hidden = 64;
    int out = 32;
};

struct ModelConfig {
    std::string encoder = "tiny-cnn";  // "tiny-cnn" | "paper-resnet18"
    int input_size = 16;
    HeadConfig context_head{64, 32};
    HeadConfig content_head{64, 32};

    void validate() const {
        if (encoder != "tiny-cnn" && encoder != "paper-resnet18")
            throw ConfigError("unknown encoder preset: " + encoder);
        if (input_size < 8) throw ConfigError("model input size must be >= 8");
        if (context_head.out < 2 || content_head.out < 2)
            throw ConfigError("projection head output dim must be >= 2");
        if (context_head.hidden < 1 || content_head.hidden < 1)
            throw ConfigError("projection head hidden dim must be >= 1");
    }

    int repr_dim() const { return encoder == "tiny-cnn" ? 64 : 512; }
};

class EncoderBase {
  public:
    virtual ~EncoderBase() = default;
    virtual Batch forward(const Batch& x, bool train) = 0;
    virtual Batch backward(const Batch& grad_reps) = 0;
    virtual void init(Rng& rng) = 0;
    virtual std::vector<Param*> params() = 0;
    virtual std::vector<std::vector<float>*> buffers() = 0;
    virtual int repr_dim() const = 0;
};

// conv3x3-BN-ReLU-pool, x3, channels 16/32/64, then global average pool.
class TinyCnnEncoder : public EncoderBase {
  public:
    TinyCnnEncoder()
        : conv1_(3, 16, 3, 1, 1), bn1_(16), pool1_(2, 2),
          conv2_(16, 32, 3, 1, 1), bn2_(32), pool2_(2, 2),
          conv3_(32, 64, 3, 1, 1), bn3_(64) {}

    Batch forward(const Batch& x, bool train) override {
        Batch h = relu1_.forward(bn1_.forward(conv1_.forward(x), train));
        h = pool1_.forward(h);
        h = relu2_.forward(bn2_.forward(conv2_.forward(h), train));
        h = pool2_.forward(h);
        h = relu3_.forward(bn3_.forward(conv3_.forward(h), train));
        return gap_.forward(h);
    }

    Batch backward(const Batch& grad_reps) override {
        Batch g = gap_.backward(grad_reps);
        g = conv3_.backward(bn3_.backward(relu3_.backward(g)));
        g = pool2_.backward(g);
        g = conv2_.backward(bn2_.backward(relu2_.backward(g)));
        g = pool1_.backward(g);
        return conv1_.backward(bn1_.backward(relu1_.backward(g)));
    }

    void init(Rng& rng) override {
        conv1_.init(rng);
        conv2_.init(rng);
        conv3_.init(rng);
    }

    std::vector<Param*> params() override {
        std::vector<Param*> out;
        for (auto* layer_params : {&conv1_, &conv2_, &conv3_})
            for (Param* p : layer_params->params()) out.push_back(p);
        for (auto* bn : {&bn1_, &bn2_, &bn3_})
            for (Param* p : bn->params()) out.push_back(p);
        return out;
    }

    std::vector<std::vector<float>*> buffers() override {
        std::vector<std::vector<float>*> out;
        for (auto* bn : {&bn1_, &bn2_, &bn3_})
            for (auto* b : bn->buffers()) out.push_back(b);
        return out;
    }

    int repr_dim() const override { return 64; }

  private:
    Conv2d conv1_;
    BatchNorm2d bn1_;
    ReLU relu1_;
    MaxPool2d pool1_;
    Conv2d conv2_;
    BatchNorm2d bn2_;
    ReLU relu2_;
    MaxPool2d pool2_;
    Conv2d conv3_;
    BatchNorm2d bn3_;
    ReLU relu3_;
    GlobalAvgPool gap_;
};

namespace detail {

// Two 3x3 convs with BN plus a skip connection (1x1 projection when the
// shape changes).
class BasicBlock {
  public:
    BasicBlock(int in_ch, int out_ch, int stride)
        : conv1_(in_ch, out_ch, 3, stride, 1), bn1_(out_ch),
          conv2_(out_ch, out_ch, 3, 1, 1), bn2_(out_ch),
          project_(in_ch != out_ch || stride != 1) {
        if (project_) {
            proj_conv_ = std::make_unique<Conv2d>(in_ch, out_ch, 1, stride, 0);
            proj_bn_ = std::make_unique<BatchNorm2d>(out_ch);
        }
    }

    Batch forward(const Batch& x, bool train) {
        Batch main = relu1_.forward(bn1_.forward(conv1_.forward(x), train));
        main = bn2_.forward(conv2_.forward(main), train);
        Batch skip = project_ ? proj_bn_->forward(proj_conv_->forward(x), train) : x;
        for (std::size_t i = 0; i < main.v.size(); ++i) main.v[i] += skip.v[i];
        return relu_out_.forward(main);
    }

    Batch backward(const Batch& grad_y) {
        Batch g = relu_out_.backward(grad_y);
        Batch g_main = conv1_.backward(bn1_.backward(relu1_.backward(
            conv2_.backward(bn2_.backward(g)))));
        Batch g_skip = project_ ? proj_conv_->backward(proj_bn_->backward(g)) : g;
        for (std::size_t i = 0; i < g_main.v.size(); ++i) g_main.v[i] += g_skip.v[i];
        return g_main;
    }

    void init(Rng& rng) {
        conv1_.init(rng);
        conv2_.init(rng);
        if (project_) proj_conv_->init(rng);
    }

    void collect(std::vector<Param*>& params, std::vector<std::vector<float>*>& buffers) {
        for (Param* p : conv1_.params()) params.push_back(p);
        for (Param* p : conv2_.params()) params.push_back(p);
        for (Param* p : bn1_.params()) params.push_back(p);
        for (Param* p : bn2_.params()) params.push_back(p);
        for (auto* b : bn1_.buffers()) buffers.push_back(b);
        for (auto* b : bn2_.buffers()) buffers.push_back(b);
        if (project_) {
            for (Param* p : proj_conv_->params()) params.push_back(p);
            for (Param* p : proj_bn_->params()) params.push_back(p);
            for (auto* b : proj_bn_->buffers()) buffers.push_back(b);
        }
    }

  private:
    Conv2d conv1_;
    BatchNorm2d bn1_;
    ReLU relu1_;
    Conv2d conv2_;
    BatchNorm2d bn2_;
    bool project_;
    std::unique_ptr<Conv2d> proj_conv_;
    std::unique_ptr<BatchNorm2d> proj_bn_;
    ReLU relu_out_;
};

}  // namespace detail

// ResNet18 without the final linear layer: 7x7/2 stem, 3x3/2 max pool, four
// stages of two basic blocks (64/128/256/512), global average pool.
class ResNet18Encoder : public EncoderBase {
  public:
    ResNet18Encoder() : stem_(3, 64, 7, 2, 3), bn_stem_(64), pool_(3, 2, 1) {
        int widths[4] = {64, 128, 256, 512};
        int in_ch = 64;
        for (int s = 0; s < 4; ++s) {
            int stride = s == 0 ? 1 : 2;
            blocks_.push_back(std::make_unique<detail::BasicBlock>(in_ch, widths[s], stride));
            blocks_.push_back(std::make_unique<detail::BasicBlock>(widths[s], widths[s], 1));
            in_ch = widths[s];
        }
    }

    Batch forward(const Batch& x, bool train) override {
        Batch h = pool_.forward(relu_stem_.forward(bn_stem_.forward(stem_.forward(x), train)));
        for (auto& block : blocks_) h = block->forward(h, train);
        return gap_.forward(h);
    }

    Batch backward(const Batch& grad_reps) override {
        Batch g = gap_.backward(grad_reps);
        for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = (*it)->backward(g);
        return stem_.backward(bn_stem_.backward(relu_stem_.backward(pool_.backward(g))));
    }

    void init(Rng& rng) override {
        stem_.init(rng);
        for (auto& block : blocks_) block->init(rng);
    }

    std::vector<Param*> params() override {
        std::vector<Param*> params;
        std::vector<std::vector<float>*> buffers;
        for (Param* p : stem_.params()) params.push_back(p);
        for (Param* p : bn_stem_.params()) params.push_back(p);
        for (auto& block : blocks_) block->collect(params, buffers);
        return params;
    }

    std::vector<std::vector<float>*> buffers() override {
        std::vector<Param*> params;
        std::vector<std::vector<float>*> buffers;
        for (auto* b : bn_stem_.buffers()) buffers.push_back(b);
        for (auto& block : blocks_) block->collect(params, buffers);
        return buffers;
    }

    int repr_dim() const override { return 512; }

  private:
    Conv2d stem_;
    BatchNorm2d bn_stem_;
    ReLU relu_stem_;
    MaxPool2d pool_;
    std::vector<std::unique_ptr<detail::BasicBlock>> blocks_;
    GlobalAvgPool gap_;
};

inline std::unique_ptr<EncoderBase> make_encoder(const ModelConfig& cfg) {
    cfg.validate();
    if (cfg.encoder == "tiny-cnn") return std::make_unique<TinyCnnEncoder>();
    return std::make_unique<ResNet18Encoder>();
}

// One hidden layer, as in the SimCLR projection head.
class Mlp {
  public:
    Mlp(int in_dim, int hidden, int out_dim) : fc1_(in_dim, hidden), fc2_(hidden, out_dim) {}

    Batch forward(const Batch& x) { return fc2_.forward(relu_.forward(fc1_.forward(x))); }
    Batch backward(const Batch& grad_y) {
        return fc1_.backward(relu_.backward(fc2_.backward(grad_y)));
    }
    void init(Rng& rng) {
        fc1_.init(rng);
        fc2_.init(rng);
    }
    std::vector<Param*> params() {
        std::vector<Param*> out;
        for (Param* p : fc1_.params()) out.push_back(p);
        for (Param* p : fc2_.params()) out.push_back(p);
        return out;
    }

  private:
    Dense fc1_;
    ReLU relu_;
    Dense fc2_;
};

// Encoder plus the two independent projection heads.
struct Con2Model {
    ModelConfig cfg;
    std::unique_ptr<EncoderBase> encoder;
    Mlp head_context;
    Mlp head_content;

    explicit Con2Model(ModelConfig config)
        : cfg(std::move(config)), encoder(make_encoder(cfg)),
          head_context(cfg.repr_dim(), cfg.context_head.hidden, cfg.context_head.out),
          head_content(cfg.repr_dim(), cfg.content_head.hidden, cfg.content_head.out) {}

    void init(Rng& rng) {
        encoder->init(rng);
        head_context.init(rng);
        head_content.init(rng);
    }

    std::vector<Param*> params() {
        auto out = encoder->params();
        for (Param* p : head_context.params()) out.push_back(p);
        for (Param* p : head_content.params()) out.push_back(p);
        return out;
    }

    std::vector<Param*> context_head_params() { return head_context.params(); }
    std::vector<Param*> content_head_params() { return head_content.params(); }

    void zero_grad() {
        for (Param* p : params()) p->zero_grad();
    }

    // Serialized state: every parameter tensor followed by every buffer, in
    // declaration order.
    void save_state(ByteWriter& w) {
        auto ps = params();
        auto bs = encoder->buffers();
        w.u64(ps.size());
        for (Param* p : ps) {
            w.u64(p->w.size());
            w.f32s(p->w);
        }
        w.u64(bs.size());
        for (auto* b : bs) {
            w.u64(b->size());
            w.f32s(*b);
        }
    }

    void load_state(ByteReader& r) {
        auto ps = params();
        auto bs = encoder->buffers();
        if (r.u64() != ps.size()) throw ArtifactError("checkpoint parameter count mismatch");
        for (Param* p : ps) {
            std::size_t n = r.u64();
            if (n != p->w.size()) throw ArtifactError("checkpoint parameter shape mismatch");
            p->w = r.f32s(n);
        }
        if (r.u64() != bs.size()) throw ArtifactError("checkpoint buffer count mismatch");
        for (auto* b : bs) {
            std::size_t n = r.u64();
            if (n != b->size()) throw ArtifactError("checkpoint buffer shape mismatch");
            *b = r.f32s(n);
        }
    }
};

}  // namespace con2
