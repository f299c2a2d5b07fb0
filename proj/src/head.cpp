#include "ff/head.hpp"

#include <cmath>
#include <cstdio>

#include "ff/archive.hpp"
#include "ff/errors.hpp"
#include "json.hpp"

namespace ff {

std::int64_t TaskHeadConfig::trainable_param_count() const {
  const std::int64_t d = input_dim, h = hidden_dim, c = num_classes;
  return d * h + h  // linear
         + 2 * h    // batch-norm scale + shift
         + h * c + c;  // fc
}

void TaskHeadConfig::validate() const {
  if (input_dim <= 0) throw InvalidConfig("head: input_dim must be positive");
  if (hidden_dim <= 0) throw InvalidConfig("head: hidden_dim must be positive");
  if (num_classes <= 0) throw InvalidConfig("head: num_classes must be positive");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
    throw InvalidConfig("head: dropout_p must lie in [0,1)");
  }
}

TaskHead TaskHead::init(const TaskHeadConfig& config, std::uint64_t seed) {
  config.validate();
  TaskHead head;
  head.config = config;
  const int d = config.input_dim, h = config.hidden_dim, c = config.num_classes;
  head.linear_w.resize(h, d);
  head.linear_b = Eigen::VectorXd::Zero(h);
  head.bn_scale = Eigen::VectorXd::Ones(h);
  head.bn_shift = Eigen::VectorXd::Zero(h);
  head.bn_running_mean = Eigen::VectorXd::Zero(h);
  head.bn_running_var = Eigen::VectorXd::Ones(h);
  head.fc_w.resize(c, h);
  head.fc_b = Eigen::VectorXd::Zero(c);

  Rng rng(Rng::derive(seed, 0xF0));
  const double lin_bound = 1.0 / std::sqrt(static_cast<double>(d));
  for (int r = 0; r < h; ++r) {
    for (int col = 0; col < d; ++col) head.linear_w(r, col) = rng.uniform(-lin_bound, lin_bound);
  }
  const double fc_bound = 1.0 / std::sqrt(static_cast<double>(h));
  for (int r = 0; r < c; ++r) {
    for (int col = 0; col < h; ++col) head.fc_w(r, col) = rng.uniform(-fc_bound, fc_bound);
  }
  return head;
}

namespace {

void check_width(const TaskHead& head, const Eigen::MatrixXd& batch) {
  if (batch.cols() != head.config.input_dim) {
    throw DimensionError("head_forward: feature width " + std::to_string(batch.cols()) +
                         " != configured input_dim " +
                         std::to_string(head.config.input_dim));
  }
  if (batch.rows() == 0) throw DimensionError("head_forward: empty batch");
}

}  // namespace

Eigen::MatrixXd head_forward(const TaskHead& head, const Eigen::MatrixXd& batch) {
  check_width(head, batch);
  Eigen::MatrixXd z = (batch * head.linear_w.transpose()).rowwise() +
                      head.linear_b.transpose();
  const Eigen::ArrayXd inv_std =
      (head.bn_running_var.array() + head.bn_eps).sqrt().inverse();
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double scale = head.bn_scale(j) * inv_std(j);
    const double shift = head.bn_shift(j) - head.bn_running_mean(j) * scale;
    z.col(j) = z.col(j).array() * scale + shift;
  }
  z.array() = z.array().max(0.0);  // ReLU; Dropout is identity in EVAL
  return (z * head.fc_w.transpose()).rowwise() + head.fc_b.transpose();
}

Eigen::MatrixXd head_forward(TaskHead& head, const Eigen::MatrixXd& batch, HeadMode mode,
                             Rng* dropout_rng, HeadForwardCache* cache) {
  if (mode == HeadMode::kEval) return head_forward(head, batch);
  check_width(head, batch);
  const Eigen::Index b = batch.rows();
  if (b < 2) {
    throw BatchTooSmall("head_forward: TRAIN mode needs batch size >= 2, got " +
                        std::to_string(b));
  }

  HeadForwardCache local;
  HeadForwardCache& c = cache ? *cache : local;
  c.input = batch;

  Eigen::MatrixXd z = (batch * head.linear_w.transpose()).rowwise() +
                      head.linear_b.transpose();

  const Eigen::RowVectorXd mu = z.colwise().mean();
  c.centered = z.rowwise() - mu;
  const Eigen::RowVectorXd var_biased = c.centered.array().square().colwise().mean();
  c.inv_std = (var_biased.transpose().array() + head.bn_eps).rsqrt().matrix();

  const Eigen::Index h = head.config.hidden_dim;
  c.normalized.resize(b, h);
  Eigen::MatrixXd y(b, h);
  for (Eigen::Index j = 0; j < h; ++j) {
    c.normalized.col(j) = c.centered.col(j) * c.inv_std(j);
    y.col(j) = c.normalized.col(j) * head.bn_scale(j);
    y.col(j).array() += head.bn_shift(j);
  }

  // Running statistics: EMA with unbiased variance, matching the EVAL path's
  // expectations.
  const double m = head.bn_momentum;
  const double unbias = static_cast<double>(b) / static_cast<double>(b - 1);
  head.bn_running_mean = (1.0 - m) * head.bn_running_mean + m * mu.transpose();
  head.bn_running_var =
      (1.0 - m) * head.bn_running_var + (m * unbias) * var_biased.transpose();

  c.relu_mask = (y.array() > 0.0).cast<double>().matrix();
  Eigen::MatrixXd a = y.cwiseProduct(c.relu_mask);

  const double p = head.config.dropout_p;
  c.drop_mask.resize(b, h);
  if (p > 0.0) {
    if (!dropout_rng) {
      throw InvalidConfig("head_forward: TRAIN with dropout_p > 0 needs an RNG");
    }
    const double keep_scale = 1.0 / (1.0 - p);
    for (Eigen::Index r = 0; r < b; ++r) {
      for (Eigen::Index j = 0; j < h; ++j) {
        c.drop_mask(r, j) = dropout_rng->uniform() < p ? 0.0 : keep_scale;
      }
    }
  } else {
    c.drop_mask.setOnes();
  }
  c.dropped = a.cwiseProduct(c.drop_mask);

  return (c.dropped * head.fc_w.transpose()).rowwise() + head.fc_b.transpose();
}

HeadGrads head_backward(const TaskHead& head, const HeadForwardCache& cache,
                        const Eigen::MatrixXd& dlogits) {
  const Eigen::Index b = cache.input.rows();
  if (dlogits.rows() != b || dlogits.cols() != head.config.num_classes) {
    throw DimensionError("head_backward: dlogits shape mismatch");
  }

  HeadGrads g;
  g.fc_w = dlogits.transpose() * cache.dropped;
  g.fc_b = dlogits.colwise().sum().transpose();

  Eigen::MatrixXd da = (dlogits * head.fc_w).cwiseProduct(cache.drop_mask);
  Eigen::MatrixXd dy = da.cwiseProduct(cache.relu_mask);

  g.bn_scale = dy.cwiseProduct(cache.normalized).colwise().sum().transpose();
  g.bn_shift = dy.colwise().sum().transpose();

  // Batch-statistics BN backward, column (= feature) at a time.
  const Eigen::Index h = head.config.hidden_dim;
  const double inv_b = 1.0 / static_cast<double>(b);
  Eigen::MatrixXd dz(b, h);
  for (Eigen::Index j = 0; j < h; ++j) {
    const double inv_std = cache.inv_std(j);
    const Eigen::VectorXd dxhat = dy.col(j) * head.bn_scale(j);
    const double dvar = -0.5 * inv_std * inv_std * inv_std *
                        dxhat.dot(cache.centered.col(j));
    const double dmu = -inv_std * dxhat.sum() -
                       2.0 * inv_b * dvar * cache.centered.col(j).sum();
    dz.col(j) = dxhat * inv_std +
                cache.centered.col(j) * (2.0 * inv_b * dvar) +
                Eigen::VectorXd::Constant(b, inv_b * dmu);
  }

  g.linear_w = dz.transpose() * cache.input;
  g.linear_b = dz.colwise().sum().transpose();
  return g;
}

// --- fusion -------------------------------------------------------------------

std::int64_t fused_input_dim(std::span<const BackboneId> order) {
  std::int64_t total = 0;
  for (BackboneId id : order) total += backbone_spec(id).feature_dim;
  return total;
}

FusedFeature fuse(std::span<const std::vector<float>> features,
                  std::span<const BackboneId> order, std::string source_id) {
  if (features.empty() || features.size() != order.size()) {
    throw DimensionError("fuse: feature list and backbone order disagree");
  }
  FusedFeature out;
  out.source_id = std::move(source_id);
  out.order.assign(order.begin(), order.end());
  out.vector.reserve(static_cast<std::size_t>(fused_input_dim(order)));
  for (std::size_t i = 0; i < features.size(); ++i) {
    const int expected = backbone_spec(order[i]).feature_dim;
    if (features[i].size() != static_cast<std::size_t>(expected)) {
      throw DimensionError("fuse: " + std::string(to_string(order[i])) + " vector has " +
                           std::to_string(features[i].size()) + " dims, expected " +
                           std::to_string(expected));
    }
    out.vector.insert(out.vector.end(), features[i].begin(), features[i].end());
  }
  return out;
}

FeatureMatrix fuse_rows(std::span<const FeatureMatrix> per_backbone,
                        std::span<const BackboneId> order) {
  if (per_backbone.empty() || per_backbone.size() != order.size()) {
    throw DimensionError("fuse_rows: matrix list and backbone order disagree");
  }
  const Eigen::Index rows = per_backbone[0].rows();
  FeatureMatrix out(rows, fused_input_dim(order));
  Eigen::Index col = 0;
  for (std::size_t i = 0; i < per_backbone.size(); ++i) {
    const int expected = backbone_spec(order[i]).feature_dim;
    if (per_backbone[i].rows() != rows || per_backbone[i].cols() != expected) {
      throw DimensionError("fuse_rows: matrix " + std::to_string(i) + " has shape " +
                           std::to_string(per_backbone[i].rows()) + "x" +
                           std::to_string(per_backbone[i].cols()));
    }
    out.middleCols(col, expected) = per_backbone[i];
    col += expected;
  }
  return out;
}

// --- parameter accounting -------------------------------------------------------

ParamReport count_params(std::span<const BackboneId> backbones, const TaskHeadConfig& head,
                         CountMode mode) {
  if (backbones.empty()) {
    throw InvalidConfig("count_params: at least one backbone required");
  }
  head.validate();
  if (head.input_dim != fused_input_dim(backbones)) {
    throw InvalidConfig("count_params: head input_dim " + std::to_string(head.input_dim) +
                        " != fused width " + std::to_string(fused_input_dim(backbones)));
  }
  std::int64_t backbone_params = 0;
  for (BackboneId id : backbones) backbone_params += headless_param_count(id);
  const std::int64_t head_params = head.trainable_param_count();

  ParamReport report;
  report.total = backbone_params + head_params;
  report.trainable =
      mode == CountMode::kFrozen ? head_params : backbone_params + head_params;
  return report;
}

std::string format_millions(std::int64_t count) {
  // round(count/1000) gives thousandths of a million, half away from zero.
  const std::int64_t thousandths = (count >= 0)
                                       ? (count + 500) / 1000
                                       : -((-count + 500) / 1000);
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%lld.%03lld M",
                static_cast<long long>(thousandths / 1000),
                static_cast<long long>(std::llabs(thousandths % 1000)));
  return buf;
}

// --- checkpoints ----------------------------------------------------------------

namespace {

void add_vec(ArchiveWriter& w, const std::string& name, const Eigen::VectorXd& v) {
  w.add_f64(name, {v.size()}, v.data());
}

void add_mat(ArchiveWriter& w, const std::string& name, const Eigen::MatrixXd& m) {
  // stored row-major
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  w.add_f64(name, {m.rows(), m.cols()}, rm.data());
}

Eigen::MatrixXd read_mat(const ArchiveReader& r, const std::string& name,
                         Eigen::Index rows, Eigen::Index cols) {
  std::vector<double> raw = r.read_f64(name, {rows, cols});
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                        Eigen::RowMajor>>(raw.data(), rows, cols);
}

Eigen::VectorXd read_vec(const ArchiveReader& r, const std::string& name,
                         Eigen::Index size) {
  std::vector<double> raw = r.read_f64(name, {size});
  return Eigen::Map<const Eigen::VectorXd>(raw.data(), size);
}

}  // namespace

void save_head_checkpoint(const TaskHead& head, const HeadCheckpointMeta& meta,
                          const std::filesystem::path& file) {
  ArchiveWriter w(file);
  add_mat(w, "linear.weight", head.linear_w);
  add_vec(w, "linear.bias", head.linear_b);
  add_vec(w, "bn.weight", head.bn_scale);
  add_vec(w, "bn.bias", head.bn_shift);
  add_vec(w, "bn.running_mean", head.bn_running_mean);
  add_vec(w, "bn.running_var", head.bn_running_var);
  add_mat(w, "fc.weight", head.fc_w);
  add_vec(w, "fc.bias", head.fc_b);
  w.finish();

  nlohmann::json sidecar;
  sidecar["config"] = {{"input_dim", head.config.input_dim},
                       {"hidden_dim", head.config.hidden_dim},
                       {"num_classes", head.config.num_classes},
                       {"dropout_p", head.config.dropout_p}};
  sidecar["bn_eps"] = head.bn_eps;
  sidecar["bn_momentum"] = head.bn_momentum;
  nlohmann::json order = nlohmann::json::array();
  for (BackboneId id : meta.backbone_order) order.push_back(std::string(to_string(id)));
  sidecar["backbone_order"] = order;
  sidecar["seed"] = meta.seed;
  sidecar["selection"] = meta.selection;
  sidecar["selected_epoch"] = meta.selected_epoch;

  const auto json_path = file.string() + ".json";
  const auto tmp = json_path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IOFailure("cannot write " + tmp);
    out << sidecar.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, json_path);
}

TaskHead load_head_checkpoint(const std::filesystem::path& file, HeadCheckpointMeta* meta) {
  const auto json_path = file.string() + ".json";
  std::ifstream in(json_path);
  if (!in) throw IOFailure("cannot open checkpoint sidecar " + json_path);
  nlohmann::json sidecar = nlohmann::json::parse(in);

  TaskHeadConfig config;
  config.input_dim = sidecar.at("config").at("input_dim").get<int>();
  config.hidden_dim = sidecar.at("config").at("hidden_dim").get<int>();
  config.num_classes = sidecar.at("config").at("num_classes").get<int>();
  config.dropout_p = sidecar.at("config").at("dropout_p").get<double>();
  config.validate();

  ArchiveReader r(file);
  TaskHead head;
  head.config = config;
  head.bn_eps = sidecar.at("bn_eps").get<double>();
  head.bn_momentum = sidecar.at("bn_momentum").get<double>();
  head.linear_w = read_mat(r, "linear.weight", config.hidden_dim, config.input_dim);
  head.linear_b = read_vec(r, "linear.bias", config.hidden_dim);
  head.bn_scale = read_vec(r, "bn.weight", config.hidden_dim);
  head.bn_shift = read_vec(r, "bn.bias", config.hidden_dim);
  head.bn_running_mean = read_vec(r, "bn.running_mean", config.hidden_dim);
  head.bn_running_var = read_vec(r, "bn.running_var", config.hidden_dim);
  head.fc_w = read_mat(r, "fc.weight", config.num_classes, config.hidden_dim);
  head.fc_b = read_vec(r, "fc.bias", config.num_classes);

  if (meta) {
    meta->backbone_order.clear();
    for (const auto& name : sidecar.at("backbone_order")) {
      meta->backbone_order.push_back(backbone_from_string(name.get<std::string>()));
    }
    meta->seed = sidecar.at("seed").get<std::uint64_t>();
    meta->selection = sidecar.at("selection").get<std::string>();
    meta->selected_epoch = sidecar.at("selected_epoch").get<int>();
  }
  return head;
}

}  // namespace ff
