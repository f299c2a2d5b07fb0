#include "ff/backbone.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>

#include "ff/archive.hpp"
#include "ff/digest.hpp"
#include "ff/errors.hpp"
#include "ff/nn_ops.hpp"
#include "ff/parallel.hpp"
#include "ff/rng.hpp"

namespace ff {

namespace {

constexpr float kImageNetMean[3] = {0.485f, 0.456f, 0.406f};
constexpr float kImageNetStd[3] = {0.229f, 0.224f, 0.225f};
constexpr int kInputSize = 224;

// ---------------------------------------------------------------------------
// Parameter binding. One code path per architecture declares every tensor
// name and shape; in collect mode the Binder records the table, in load mode
// it reads from the archive into a node-stable store and hands out pointers.
// ---------------------------------------------------------------------------

class Binder {
 public:
  explicit Binder(std::vector<TensorSpecEntry>* specs) : specs_(specs) {}
  Binder(const ArchiveReader* archive, std::map<std::string, Tensor>* store)
      : archive_(archive), store_(store) {}

  const Tensor* tensor(const std::string& name, std::vector<std::int64_t> shape,
                       bool trainable) {
    if (specs_) {
      specs_->push_back({name, std::move(shape), trainable});
      return nullptr;
    }
    Tensor t = archive_->read_f32(name, shape);
    auto [it, inserted] = store_->emplace(name, std::move(t));
    if (!inserted) throw InvalidConfig("duplicate tensor binding: " + name);
    return &it->second;
  }

  bool collecting() const { return specs_ != nullptr; }

 private:
  std::vector<TensorSpecEntry>* specs_ = nullptr;
  const ArchiveReader* archive_ = nullptr;
  std::map<std::string, Tensor>* store_ = nullptr;
};

std::span<const float> as_span(const Tensor* t) {
  return {t->data.data(), t->data.size()};
}

// conv -> batchnorm -> (relu). The only weighted layer kind in all three
// graphs; bias-free convs with BN folding the shift.
struct ConvBn {
  const Tensor* w = nullptr;
  const Tensor *bn_w = nullptr, *bn_b = nullptr, *bn_rm = nullptr, *bn_rv = nullptr;
  int stride_h = 1, stride_w = 1, pad_h = 0, pad_w = 0;
  float eps = 1e-5f;

  Tensor operator()(const Tensor& x, bool relu = true) const {
    Tensor y = conv2d(x, *w, stride_h, stride_w, pad_h, pad_w);
    batchnorm_infer(y, as_span(bn_w), as_span(bn_b), as_span(bn_rm), as_span(bn_rv), eps);
    if (relu) relu_inplace(y);
    return y;
  }
};

// batchnorm -> relu -> conv (pre-activation ordering).
struct BnConv {
  const Tensor *bn_w = nullptr, *bn_b = nullptr, *bn_rm = nullptr, *bn_rv = nullptr;
  const Tensor* w = nullptr;
  int stride_h = 1, stride_w = 1, pad_h = 0, pad_w = 0;
  float eps = 1e-5f;

  Tensor operator()(const Tensor& x) const {
    Tensor y = x;
    batchnorm_infer(y, as_span(bn_w), as_span(bn_b), as_span(bn_rm), as_span(bn_rv), eps);
    relu_inplace(y);
    return conv2d(y, *w, stride_h, stride_w, pad_h, pad_w);
  }
};

void bind_bn(Binder& b, const std::string& bn_name, std::int64_t c, const Tensor** bn_w,
             const Tensor** bn_b, const Tensor** bn_rm, const Tensor** bn_rv) {
  *bn_w = b.tensor(bn_name + ".weight", {c}, true);
  *bn_b = b.tensor(bn_name + ".bias", {c}, true);
  *bn_rm = b.tensor(bn_name + ".running_mean", {c}, false);
  *bn_rv = b.tensor(bn_name + ".running_var", {c}, false);
}

ConvBn conv_bn(Binder& b, const std::string& conv_name, const std::string& bn_name,
               std::int64_t out_c, std::int64_t in_c, int kh, int kw, int stride_h = 1,
               int stride_w = 1, int pad_h = 0, int pad_w = 0, float eps = 1e-5f) {
  ConvBn cb;
  cb.w = b.tensor(conv_name + ".weight", {out_c, in_c, kh, kw}, true);
  bind_bn(b, bn_name, out_c, &cb.bn_w, &cb.bn_b, &cb.bn_rm, &cb.bn_rv);
  cb.stride_h = stride_h;
  cb.stride_w = stride_w;
  cb.pad_h = pad_h;
  cb.pad_w = pad_w;
  cb.eps = eps;
  return cb;
}

BnConv bn_conv(Binder& b, const std::string& bn_name, const std::string& conv_name,
               std::int64_t out_c, std::int64_t in_c, int kh, int kw, int stride_h = 1,
               int stride_w = 1, int pad_h = 0, int pad_w = 0) {
  BnConv bc;
  bind_bn(b, bn_name, in_c, &bc.bn_w, &bc.bn_b, &bc.bn_rm, &bc.bn_rv);
  bc.w = b.tensor(conv_name + ".weight", {out_c, in_c, kh, kw}, true);
  bc.stride_h = stride_h;
  bc.stride_w = stride_w;
  bc.pad_h = pad_h;
  bc.pad_w = pad_w;
  return bc;
}

struct GraphBase {
  virtual ~GraphBase() = default;
  virtual Tensor forward(const Tensor& input) const = 0;
};

// ---------------------------------------------------------------------------
// ResNet18: stem 7x7/2 + maxpool, then 4 stages of 2 basic blocks.
// Feature map widths 64-128-256-512; final map 512 x 7 x 7 at 224 input.
// ---------------------------------------------------------------------------

struct ResNet18Graph final : GraphBase {
  struct Block {
    ConvBn c1, c2;
    std::optional<ConvBn> down;
  };

  ConvBn stem;
  std::vector<Block> blocks;

  explicit ResNet18Graph(Binder& b) {
    stem = conv_bn(b, "conv1", "bn1", 64, 3, 7, 7, 2, 2, 3, 3);
    const int widths[4] = {64, 128, 256, 512};
    int in_c = 64;
    for (int stage = 0; stage < 4; ++stage) {
      for (int i = 0; i < 2; ++i) {
        const std::string p = "layer" + std::to_string(stage + 1) + "." + std::to_string(i);
        const int out_c = widths[stage];
        const int stride = (stage > 0 && i == 0) ? 2 : 1;
        Block blk;
        blk.c1 = conv_bn(b, p + ".conv1", p + ".bn1", out_c, in_c, 3, 3, stride, stride, 1, 1);
        blk.c2 = conv_bn(b, p + ".conv2", p + ".bn2", out_c, out_c, 3, 3, 1, 1, 1, 1);
        if (stride != 1 || in_c != out_c) {
          blk.down = conv_bn(b, p + ".downsample.0", p + ".downsample.1", out_c, in_c, 1,
                             1, stride, stride, 0, 0);
        }
        blocks.push_back(std::move(blk));
        in_c = out_c;
      }
    }
  }

  Tensor forward(const Tensor& x) const override {
    Tensor y = stem(x);
    y = maxpool2d(y, 3, 2, 1);
    for (const Block& blk : blocks) {
      Tensor identity = blk.down ? (*blk.down)(y, false) : y;
      Tensor out = blk.c1(y);
      out = blk.c2(out, false);
      add_inplace(out, identity);
      relu_inplace(out);
      y = std::move(out);
    }
    return y;
  }
};

// ---------------------------------------------------------------------------
// DenseNet121: growth 32, blocks of 6/12/24/16 pre-activation layers with
// 1x1 bottlenecks (128 wide), halving transitions between blocks, final BN.
// Channel trajectory 64 -> 256 -> 128 -> 512 -> 256 -> 1024 -> 512 -> 1024.
// ---------------------------------------------------------------------------

struct DenseNet121Graph final : GraphBase {
  struct DenseLayer {
    BnConv bottleneck;  // norm1 + conv1, 1x1 -> 128
    BnConv grow;        // norm2 + conv2, 3x3 -> 32
  };

  ConvBn stem;
  std::vector<std::vector<DenseLayer>> blocks;
  std::vector<BnConv> transitions;
  const Tensor *final_w = nullptr, *final_b = nullptr, *final_rm = nullptr,
               *final_rv = nullptr;

  explicit DenseNet121Graph(Binder& b) {
    stem = conv_bn(b, "features.conv0", "features.norm0", 64, 3, 7, 7, 2, 2, 3, 3);
    const int growth = 32;
    const int bottleneck_width = 4 * growth;
    const int block_sizes[4] = {6, 12, 24, 16};
    int c = 64;
    for (int bi = 0; bi < 4; ++bi) {
      std::vector<DenseLayer> layers;
      for (int li = 0; li < block_sizes[bi]; ++li) {
        const std::string p = "features.denseblock" + std::to_string(bi + 1) +
                              ".denselayer" + std::to_string(li + 1);
        DenseLayer dl;
        dl.bottleneck = bn_conv(b, p + ".norm1", p + ".conv1", bottleneck_width, c, 1, 1);
        dl.grow = bn_conv(b, p + ".norm2", p + ".conv2", growth, bottleneck_width, 3, 3,
                          1, 1, 1, 1);
        layers.push_back(std::move(dl));
        c += growth;
      }
      blocks.push_back(std::move(layers));
      if (bi < 3) {
        const std::string p = "features.transition" + std::to_string(bi + 1);
        transitions.push_back(bn_conv(b, p + ".norm", p + ".conv", c / 2, c, 1, 1));
        c /= 2;
      }
    }
    bind_bn(b, "features.norm5", c, &final_w, &final_b, &final_rm, &final_rv);
  }

  Tensor forward(const Tensor& x) const override {
    Tensor y = stem(x);
    y = maxpool2d(y, 3, 2, 1);
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
      for (const DenseLayer& dl : blocks[bi]) {
        Tensor grown = dl.grow(dl.bottleneck(y));
        const Tensor* parts[2] = {&y, &grown};
        y = concat_channels(parts);
      }
      if (bi + 1 < blocks.size()) {
        y = transitions[bi](y);
        y = avgpool2d(y, 2, 2, 0, true);
      }
    }
    batchnorm_infer(y, as_span(final_w), as_span(final_b), as_span(final_rm),
                    as_span(final_rv), 1e-5f);
    relu_inplace(y);
    return y;
  }
};

// ---------------------------------------------------------------------------
// Inception V3, auxiliary classifier excluded. BN eps 1e-3 throughout. At
// 224 input the map shrinks 224 -> 111 -> 109 -> 54 -> 52 -> 25 -> 12 -> 5,
// ending 2048 x 5 x 5 before pooling.
// ---------------------------------------------------------------------------

struct InceptionV3Graph final : GraphBase {
  static constexpr float kEps = 1e-3f;

  // BasicConv2d: "<prefix>.conv" + "<prefix>.bn".
  static ConvBn basic(Binder& b, const std::string& prefix, std::int64_t out_c,
                      std::int64_t in_c, int kh, int kw, int stride = 1, int pad_h = 0,
                      int pad_w = 0) {
    return conv_bn(b, prefix + ".conv", prefix + ".bn", out_c, in_c, kh, kw, stride,
                   stride, pad_h, pad_w, kEps);
  }

  struct BlockA {  // out 224 + pool_c
    ConvBn b1x1, b5x5_1, b5x5_2, dbl_1, dbl_2, dbl_3, pool;
    BlockA() = default;
    BlockA(Binder& b, const std::string& p, std::int64_t in_c, std::int64_t pool_c) {
      b1x1 = basic(b, p + ".branch1x1", 64, in_c, 1, 1);
      b5x5_1 = basic(b, p + ".branch5x5_1", 48, in_c, 1, 1);
      b5x5_2 = basic(b, p + ".branch5x5_2", 64, 48, 5, 5, 1, 2, 2);
      dbl_1 = basic(b, p + ".branch3x3dbl_1", 64, in_c, 1, 1);
      dbl_2 = basic(b, p + ".branch3x3dbl_2", 96, 64, 3, 3, 1, 1, 1);
      dbl_3 = basic(b, p + ".branch3x3dbl_3", 96, 96, 3, 3, 1, 1, 1);
      pool = basic(b, p + ".branch_pool", pool_c, in_c, 1, 1);
    }
    Tensor forward(const Tensor& x) const {
      Tensor p1 = b1x1(x);
      Tensor p2 = b5x5_2(b5x5_1(x));
      Tensor p3 = dbl_3(dbl_2(dbl_1(x)));
      Tensor p4 = pool(avgpool2d(x, 3, 1, 1, true));
      const Tensor* parts[4] = {&p1, &p2, &p3, &p4};
      return concat_channels(parts);
    }
  };

  struct BlockB {  // grid reduction, out 768
    ConvBn b3x3, dbl_1, dbl_2, dbl_3;
    BlockB() = default;
    BlockB(Binder& b, const std::string& p, std::int64_t in_c) {
      b3x3 = basic(b, p + ".branch3x3", 384, in_c, 3, 3, 2);
      dbl_1 = basic(b, p + ".branch3x3dbl_1", 64, in_c, 1, 1);
      dbl_2 = basic(b, p + ".branch3x3dbl_2", 96, 64, 3, 3, 1, 1, 1);
      dbl_3 = basic(b, p + ".branch3x3dbl_3", 96, 96, 3, 3, 2);
    }
    Tensor forward(const Tensor& x) const {
      Tensor p1 = b3x3(x);
      Tensor p2 = dbl_3(dbl_2(dbl_1(x)));
      Tensor p3 = maxpool2d(x, 3, 2, 0);
      const Tensor* parts[3] = {&p1, &p2, &p3};
      return concat_channels(parts);
    }
  };

  struct BlockC {  // factorized 7x7 branches, out 768
    ConvBn b1x1, s1, s2, s3, d1, d2, d3, d4, d5, pool;
    BlockC() = default;
    BlockC(Binder& b, const std::string& p, std::int64_t in_c, std::int64_t c7) {
      b1x1 = basic(b, p + ".branch1x1", 192, in_c, 1, 1);
      s1 = basic(b, p + ".branch7x7_1", c7, in_c, 1, 1);
      s2 = basic(b, p + ".branch7x7_2", c7, c7, 1, 7, 1, 0, 3);
      s3 = basic(b, p + ".branch7x7_3", 192, c7, 7, 1, 1, 3, 0);
      d1 = basic(b, p + ".branch7x7dbl_1", c7, in_c, 1, 1);
      d2 = basic(b, p + ".branch7x7dbl_2", c7, c7, 7, 1, 1, 3, 0);
      d3 = basic(b, p + ".branch7x7dbl_3", c7, c7, 1, 7, 1, 0, 3);
      d4 = basic(b, p + ".branch7x7dbl_4", c7, c7, 7, 1, 1, 3, 0);
      d5 = basic(b, p + ".branch7x7dbl_5", 192, c7, 1, 7, 1, 0, 3);
      pool = basic(b, p + ".branch_pool", 192, in_c, 1, 1);
    }
    Tensor forward(const Tensor& x) const {
      Tensor p1 = b1x1(x);
      Tensor p2 = s3(s2(s1(x)));
      Tensor p3 = d5(d4(d3(d2(d1(x)))));
      Tensor p4 = pool(avgpool2d(x, 3, 1, 1, true));
      const Tensor* parts[4] = {&p1, &p2, &p3, &p4};
      return concat_channels(parts);
    }
  };

  struct BlockD {  // grid reduction, out 1280
    ConvBn t1, t2, s1, s2, s3, s4;
    BlockD() = default;
    BlockD(Binder& b, const std::string& p, std::int64_t in_c) {
      t1 = basic(b, p + ".branch3x3_1", 192, in_c, 1, 1);
      t2 = basic(b, p + ".branch3x3_2", 320, 192, 3, 3, 2);
      s1 = basic(b, p + ".branch7x7x3_1", 192, in_c, 1, 1);
      s2 = basic(b, p + ".branch7x7x3_2", 192, 192, 1, 7, 1, 0, 3);
      s3 = basic(b, p + ".branch7x7x3_3", 192, 192, 7, 1, 1, 3, 0);
      s4 = basic(b, p + ".branch7x7x3_4", 192, 192, 3, 3, 2);
    }
    Tensor forward(const Tensor& x) const {
      Tensor p1 = t2(t1(x));
      Tensor p2 = s4(s3(s2(s1(x))));
      Tensor p3 = maxpool2d(x, 3, 2, 0);
      const Tensor* parts[3] = {&p1, &p2, &p3};
      return concat_channels(parts);
    }
  };

  struct BlockE {  // widest block, out 2048
    ConvBn b1x1, t1, t2a, t2b, d1, d2, d3a, d3b, pool;
    BlockE() = default;
    BlockE(Binder& b, const std::string& p, std::int64_t in_c) {
      b1x1 = basic(b, p + ".branch1x1", 320, in_c, 1, 1);
      t1 = basic(b, p + ".branch3x3_1", 384, in_c, 1, 1);
      t2a = basic(b, p + ".branch3x3_2a", 384, 384, 1, 3, 1, 0, 1);
      t2b = basic(b, p + ".branch3x3_2b", 384, 384, 3, 1, 1, 1, 0);
      d1 = basic(b, p + ".branch3x3dbl_1", 448, in_c, 1, 1);
      d2 = basic(b, p + ".branch3x3dbl_2", 384, 448, 3, 3, 1, 1, 1);
      d3a = basic(b, p + ".branch3x3dbl_3a", 384, 384, 1, 3, 1, 0, 1);
      d3b = basic(b, p + ".branch3x3dbl_3b", 384, 384, 3, 1, 1, 1, 0);
      pool = basic(b, p + ".branch_pool", 192, in_c, 1, 1);
    }
    Tensor forward(const Tensor& x) const {
      Tensor p1 = b1x1(x);
      Tensor t = t1(x);
      Tensor p2a = t2a(t);
      Tensor p2b = t2b(t);
      Tensor d = d2(d1(x));
      Tensor p3a = d3a(d);
      Tensor p3b = d3b(d);
      Tensor p4 = pool(avgpool2d(x, 3, 1, 1, true));
      const Tensor* parts[6] = {&p1, &p2a, &p2b, &p3a, &p3b, &p4};
      return concat_channels(parts);
    }
  };

  ConvBn c1a, c2a, c2b, c3b, c4a;
  BlockA m5b, m5c, m5d;
  BlockB m6a;
  BlockC m6b, m6c, m6d, m6e;
  BlockD m7a;
  BlockE m7b, m7c;

  explicit InceptionV3Graph(Binder& b) {
    c1a = basic(b, "Conv2d_1a_3x3", 32, 3, 3, 3, 2);
    c2a = basic(b, "Conv2d_2a_3x3", 32, 32, 3, 3);
    c2b = basic(b, "Conv2d_2b_3x3", 64, 32, 3, 3, 1, 1, 1);
    c3b = basic(b, "Conv2d_3b_1x1", 80, 64, 1, 1);
    c4a = basic(b, "Conv2d_4a_3x3", 192, 80, 3, 3);
    m5b = BlockA(b, "Mixed_5b", 192, 32);
    m5c = BlockA(b, "Mixed_5c", 256, 64);
    m5d = BlockA(b, "Mixed_5d", 288, 64);
    m6a = BlockB(b, "Mixed_6a", 288);
    m6b = BlockC(b, "Mixed_6b", 768, 128);
    m6c = BlockC(b, "Mixed_6c", 768, 160);
    m6d = BlockC(b, "Mixed_6d", 768, 160);
    m6e = BlockC(b, "Mixed_6e", 768, 192);
    m7a = BlockD(b, "Mixed_7a", 768);
    m7b = BlockE(b, "Mixed_7b", 1280);
    m7c = BlockE(b, "Mixed_7c", 2048);
  }

  Tensor forward(const Tensor& x) const override {
    Tensor y = c1a(x);
    y = c2a(y);
    y = c2b(y);
    y = maxpool2d(y, 3, 2, 0);
    y = c3b(y);
    y = c4a(y);
    y = maxpool2d(y, 3, 2, 0);
    y = m5b.forward(y);
    y = m5c.forward(y);
    y = m5d.forward(y);
    y = m6a.forward(y);
    y = m6b.forward(y);
    y = m6c.forward(y);
    y = m6d.forward(y);
    y = m6e.forward(y);
    y = m7a.forward(y);
    y = m7b.forward(y);
    y = m7c.forward(y);
    return y;
  }
};

std::unique_ptr<GraphBase> make_graph(BackboneId id, Binder& b) {
  switch (id) {
    case BackboneId::kResNet18:
      return std::make_unique<ResNet18Graph>(b);
    case BackboneId::kDenseNet121:
      return std::make_unique<DenseNet121Graph>(b);
    case BackboneId::kInceptionV3:
      return std::make_unique<InceptionV3Graph>(b);
  }
  throw InvalidConfig("unknown backbone id");
}

}  // namespace

// ---------------------------------------------------------------------------
// Registry facts
// ---------------------------------------------------------------------------

std::string_view to_string(BackboneId id) {
  switch (id) {
    case BackboneId::kResNet18:
      return "RESNET18";
    case BackboneId::kDenseNet121:
      return "DENSENET121";
    case BackboneId::kInceptionV3:
      return "INCEPTIONV3";
  }
  return "UNKNOWN";
}

BackboneId backbone_from_string(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (upper == "RESNET18") return BackboneId::kResNet18;
  if (upper == "DENSENET121") return BackboneId::kDenseNet121;
  if (upper == "INCEPTIONV3" || upper == "INCEPTION_V3") return BackboneId::kInceptionV3;
  throw InvalidConfig("unknown backbone '" + std::string(name) + "'");
}

std::filesystem::path weights_path(BackboneId id, const std::filesystem::path& dir) {
  std::string file(to_string(id));
  std::transform(file.begin(), file.end(), file.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return dir / (file + ".weights");
}

BackboneSpec backbone_spec(BackboneId id, const std::filesystem::path& weights_dir) {
  BackboneSpec spec;
  spec.id = id;
  spec.input_size = kInputSize;
  spec.normalization = {{kImageNetMean[0], kImageNetMean[1], kImageNetMean[2]},
                        {kImageNetStd[0], kImageNetStd[1], kImageNetStd[2]}};
  switch (id) {
    case BackboneId::kResNet18:
      spec.feature_dim = 512;
      break;
    case BackboneId::kDenseNet121:
      spec.feature_dim = 1024;
      break;
    case BackboneId::kInceptionV3:
      spec.feature_dim = 2048;
      break;
  }
  if (!weights_dir.empty()) spec.weight_source = weights_path(id, weights_dir);
  return spec;
}

const std::vector<TensorSpecEntry>& backbone_tensor_specs(BackboneId id) {
  static const std::vector<TensorSpecEntry> tables[3] = {
      [] {
        std::vector<TensorSpecEntry> specs;
        Binder b(&specs);
        ResNet18Graph g(b);
        return specs;
      }(),
      [] {
        std::vector<TensorSpecEntry> specs;
        Binder b(&specs);
        DenseNet121Graph g(b);
        return specs;
      }(),
      [] {
        std::vector<TensorSpecEntry> specs;
        Binder b(&specs);
        InceptionV3Graph g(b);
        return specs;
      }(),
  };
  return tables[static_cast<int>(id)];
}

std::int64_t headless_param_count(BackboneId id) {
  std::int64_t total = 0;
  for (const auto& e : backbone_tensor_specs(id)) {
    if (e.trainable) total += Tensor::numel_of(e.shape);
  }
  return total;
}

std::int64_t published_head_param_count(BackboneId id) {
  const std::int64_t width = backbone_spec(id).feature_dim;
  return width * 1000 + 1000;
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

namespace {

// Half-pixel-centered bilinear sampling; identity when sizes match.
std::vector<float> bilinear_resize(const std::vector<float>& src, int in_w, int in_h,
                                   int out_w, int out_h) {
  std::vector<float> dst(static_cast<std::size_t>(out_w) * out_h);
  const float sx = static_cast<float>(in_w) / static_cast<float>(out_w);
  const float sy = static_cast<float>(in_h) / static_cast<float>(out_h);
  for (int oy = 0; oy < out_h; ++oy) {
    float fy = (static_cast<float>(oy) + 0.5f) * sy - 0.5f;
    fy = std::clamp(fy, 0.0f, static_cast<float>(in_h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, in_h - 1);
    const float wy = fy - static_cast<float>(y0);
    for (int ox = 0; ox < out_w; ++ox) {
      float fx = (static_cast<float>(ox) + 0.5f) * sx - 0.5f;
      fx = std::clamp(fx, 0.0f, static_cast<float>(in_w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, in_w - 1);
      const float wx = fx - static_cast<float>(x0);
      const float a = src[static_cast<std::size_t>(y0) * in_w + x0];
      const float b = src[static_cast<std::size_t>(y0) * in_w + x1];
      const float c = src[static_cast<std::size_t>(y1) * in_w + x0];
      const float d = src[static_cast<std::size_t>(y1) * in_w + x1];
      const float top = a + (b - a) * wx;
      const float bot = c + (d - c) * wx;
      dst[static_cast<std::size_t>(oy) * out_w + ox] = top + (bot - top) * wy;
    }
  }
  return dst;
}

}  // namespace

PreprocessedImage preprocess(const RawImage& raw, const BackboneSpec& spec,
                             std::string source_id) {
  if (raw.width <= 0 || raw.height <= 0 || raw.pixels.empty()) {
    throw EmptyImage("preprocess: empty image" +
                     (source_id.empty() ? "" : " '" + source_id + "'"));
  }
  if (raw.channels != 1 && raw.channels != 3) {
    throw DecodeError("preprocess: unsupported channel count " +
                      std::to_string(raw.channels));
  }

  // Collapse to one gray channel (BT.601 luma for RGB inputs), scaled to [0,1].
  const std::size_t n = static_cast<std::size_t>(raw.width) * raw.height;
  std::vector<float> gray(n);
  if (raw.channels == 1) {
    for (std::size_t i = 0; i < n; ++i) gray[i] = raw.pixels[i] / 255.0f;
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const float r = raw.pixels[3 * i];
      const float g = raw.pixels[3 * i + 1];
      const float b = raw.pixels[3 * i + 2];
      gray[i] = (0.299f * r + 0.587f * g + 0.114f * b) / 255.0f;
    }
  }

  const int s = spec.input_size;
  std::vector<float> resized = bilinear_resize(gray, raw.width, raw.height, s, s);

  // Replicate to three channels, then normalize each with its own constants.
  PreprocessedImage out;
  out.source_id = std::move(source_id);
  out.pixels = Tensor({3, s, s});
  for (int c = 0; c < 3; ++c) {
    const float mean = spec.normalization.mean[c];
    const float inv_std = 1.0f / spec.normalization.stddev[c];
    float* plane = out.pixels.plane(c);
    for (std::size_t i = 0; i < resized.size(); ++i) {
      plane[i] = (resized[i] - mean) * inv_std;
    }
  }
  return out;
}

std::string preprocess_digest(const BackboneSpec& spec) {
  std::ostringstream os;
  os << "gray=bt601-replicate;scale=1/255;interp=bilinear-halfpel;size="
     << spec.input_size;
  os.precision(9);
  for (int c = 0; c < 3; ++c) {
    os << ";m" << c << "=" << spec.normalization.mean[c] << ";s" << c << "="
       << spec.normalization.stddev[c];
  }
  return sha256_hex(os.str());
}

// ---------------------------------------------------------------------------
// FrozenBackbone
// ---------------------------------------------------------------------------

struct FrozenBackbone::Impl {
  BackboneSpec spec;
  std::map<std::string, Tensor> store;
  std::unique_ptr<GraphBase> graph;
  std::int64_t param_count = 0;
  std::string digest;

  std::string hash_store() const {
    Sha256 h;
    for (const auto& e : backbone_tensor_specs(spec.id)) {
      const Tensor& t = store.at(e.name);
      h.update(e.name);
      h.update(shape_str(t.shape));
      h.update(t.data.data(), t.data.size() * sizeof(float));
    }
    return h.hex();
  }
};

FrozenBackbone load_frozen_backbone(const BackboneSpec& spec) {
  if (spec.weight_source.empty()) {
    throw InvalidConfig("load_frozen_backbone: no weight source configured for " +
                        std::string(to_string(spec.id)));
  }
  ArchiveReader archive(spec.weight_source);

  auto impl = std::make_shared<FrozenBackbone::Impl>();
  impl->spec = spec;
  Binder binder(&archive, &impl->store);
  impl->graph = make_graph(spec.id, binder);
  impl->param_count = headless_param_count(spec.id);
  impl->digest = impl->hash_store();

  FrozenBackbone fb;
  fb.impl_ = std::move(impl);
  return fb;
}

const BackboneSpec& FrozenBackbone::spec() const { return impl_->spec; }

std::int64_t FrozenBackbone::param_count_headless() const { return impl_->param_count; }

const std::string& FrozenBackbone::weights_digest() const { return impl_->digest; }

std::string FrozenBackbone::recompute_digest() const { return impl_->hash_store(); }

FeatureMatrix FrozenBackbone::extract(std::span<const PreprocessedImage> batch,
                                      int threads) const {
  if (batch.empty()) throw DimensionError("extract: empty batch");
  const int s = impl_->spec.input_size;
  for (const auto& img : batch) {
    if (img.pixels.shape != std::vector<std::int64_t>{3, s, s}) {
      throw DimensionError("extract: image '" + img.source_id + "' has shape " +
                           shape_str(img.pixels.shape) + ", expected [3," +
                           std::to_string(s) + "," + std::to_string(s) + "]");
    }
  }

  FeatureMatrix out(static_cast<Eigen::Index>(batch.size()), impl_->spec.feature_dim);
  parallel_for(static_cast<std::int64_t>(batch.size()), threads, [&](std::int64_t i) {
    Tensor fmap = impl_->graph->forward(batch[static_cast<std::size_t>(i)].pixels);
    std::vector<float> pooled = global_avg_pool(fmap);
    if (pooled.size() != static_cast<std::size_t>(impl_->spec.feature_dim)) {
      throw DimensionError("extract: pooled width " + std::to_string(pooled.size()) +
                           " != declared feature_dim");
    }
    std::copy(pooled.begin(), pooled.end(), &out(static_cast<Eigen::Index>(i), 0));
  });
  return out;
}

void write_synthetic_weights(BackboneId id, const std::filesystem::path& file,
                             std::uint64_t seed) {
  ArchiveWriter writer(file);
  const auto& specs = backbone_tensor_specs(id);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& e = specs[i];
    std::vector<float> data(static_cast<std::size_t>(Tensor::numel_of(e.shape)));
    if (e.name.ends_with(".weight") && e.shape.size() == 4) {
      // He-style scale keeps activations finite through deep stacks.
      Rng rng(Rng::derive(seed, i));
      std::int64_t fan_in = e.shape[1] * e.shape[2] * e.shape[3];
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (float& v : data) v = static_cast<float>(rng.normal() * stddev);
    } else if (e.name.ends_with("running_var")) {
      std::fill(data.begin(), data.end(), 1.0f);
    } else if (e.name.ends_with(".weight")) {  // batch-norm scale
      std::fill(data.begin(), data.end(), 1.0f);
    }
    // biases and running means stay zero
    writer.add_f32(e.name, e.shape, data.data());
  }
  writer.finish();
}

}  // namespace ff
