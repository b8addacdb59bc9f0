#include "icodiff/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

#include "icodiff/errors.hpp"
#include "icodiff/parallel.hpp"
#include "icodiff/rng.hpp"

namespace icodiff {

// ---------------------------------------------------------------------------
// Configuration and parameter layout

bool DenoiserConfig::attends_at(int order) const {
  return std::find(attention_orders.begin(), attention_orders.end(), order) != attention_orders.end();
}

void DenoiserConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("denoiser." + field + ": " + why);
  };
  if (out_channels < 1) fail("out_channels", "must be >= 1");
  if (in_channels <= out_channels) fail("in_channels", "must exceed out_channels (mask channels follow features)");
  if (min_order < 0) fail("min_order", "must be >= 0");
  if (base_order < min_order || base_order > kMaxMeshOrder) fail("base_order", "must be in [min_order, 8]");
  if (static_cast<int>(widths.size()) != levels())
    fail("widths", "needs base_order - min_order + 1 = " + std::to_string(levels()) + " entries");
  for (int w : widths)
    if (w < 1) fail("widths", "entries must be >= 1");
  if (blocks_per_level < 1) fail("blocks_per_level", "must be >= 1");
  if (embed_dim < 2 || embed_dim % 2 != 0) fail("embed_dim", "must be even and >= 2");
}

namespace {

// At most 8 groups and at least 2 channels per group, so a per-channel
// constant is never normalized away entirely.
int group_count(int channels) {
  for (int g = 8; g > 1; --g)
    if (channels % g == 0 && channels / g >= 2) return g;
  return 1;
}

std::string res_name(const char* stage, int level, int block) {
  return std::string(stage) + std::to_string(level) + ".res" + std::to_string(block);
}

std::string attn_name(const char* stage, int level, int block) {
  return std::string(stage) + std::to_string(level) + ".attn" + std::to_string(block);
}

}  // namespace

void DenoiserParams::add(std::string name, ParamKind kind, std::vector<std::size_t> shape, Eigen::Index rows,
                         Eigen::Index cols) {
  lookup_.emplace(name, arrays_.size());
  arrays_.push_back(ParamArray{std::move(name), kind, std::move(shape), nn::Mat::Zero(rows, cols)});
}

void DenoiserParams::add_conv(const std::string& name, int in, int out, ParamKind kind) {
  add(name + ".w", kind, {std::size_t(out), std::size_t(in), 7}, out, in * 7);
  add(name + ".b", ParamKind::kBias, {std::size_t(out)}, out, 1);
}

void DenoiserParams::add_linear(const std::string& name, int in, int out, bool bias) {
  add(name + ".w", ParamKind::kLinear, {std::size_t(out), std::size_t(in)}, out, in);
  if (bias) add(name + ".b", ParamKind::kBias, {std::size_t(out)}, out, 1);
}

void DenoiserParams::add_norm(const std::string& name, int channels) {
  add(name + ".gain", ParamKind::kNormGain, {std::size_t(channels)}, channels, 1);
  add(name + ".shift", ParamKind::kNormShift, {std::size_t(channels)}, channels, 1);
}

void DenoiserParams::add_resblock(const std::string& name, int in, int out) {
  add_norm(name + ".norm1", in);
  add_conv(name + ".conv1", in, out);
  add_linear(name + ".emb", config_.embed_dim, out, true);
  add_norm(name + ".norm2", out);
  add_conv(name + ".conv2", out, out);
  if (in != out) add_linear(name + ".skip", in, out, true);
}

void DenoiserParams::add_attention(const std::string& name, int channels) {
  add_norm(name + ".norm", channels);
  add_linear(name + ".q", channels, channels, false);
  add_linear(name + ".k", channels, channels, false);
  add_linear(name + ".v", channels, channels, false);
  add_linear(name + ".proj", channels, channels, true);
}

// Array order here is the checkpoint order.
DenoiserParams::DenoiserParams(DenoiserConfig config) : config_(std::move(config)) {
  config_.validate();
  const int d = config_.embed_dim;
  const auto& w = config_.widths;
  const int levels = config_.levels();

  add("emb.gender", ParamKind::kTable, {std::size_t(d), 2}, d, 2);  // column g embeds gender g
  add("emb.age.w", ParamKind::kTable, {std::size_t(d)}, d, 1);
  add("emb.age.b", ParamKind::kBias, {std::size_t(d)}, d, 1);
  add_linear("emb.mlp1", d, d, true);
  add_linear("emb.mlp2", d, d, true);

  add_conv("in.conv", config_.in_channels, w[0]);
  int ch = w[0];
  for (int l = 0; l < levels; ++l) {
    const int order = config_.base_order - l;
    for (int j = 0; j < config_.blocks_per_level; ++j) {
      add_resblock(res_name("enc", l, j), ch, w[l]);
      ch = w[l];
      if (config_.attends_at(order)) add_attention(attn_name("enc", l, j), ch);
    }
  }
  add_resblock("mid.res0", ch, ch);
  add_attention("mid.attn", ch);
  add_resblock("mid.res1", ch, ch);
  for (int l = levels - 1; l >= 0; --l) {
    const int order = config_.base_order - l;
    for (int j = 0; j < config_.blocks_per_level; ++j) {
      add_resblock(res_name("dec", l, j), j == 0 ? ch + w[l] : w[l], w[l]);
      if (config_.attends_at(order)) add_attention(attn_name("dec", l, j), w[l]);
    }
    ch = w[l];
  }
  add_norm("out.norm", ch);
  add_conv("out.conv", ch, config_.out_channels, ParamKind::kOutputConv);
}

std::size_t DenoiserParams::index(const std::string& name) const {
  const auto it = lookup_.find(name);
  if (it == lookup_.end()) throw std::out_of_range("no parameter array named " + name);
  return it->second;
}

std::size_t DenoiserParams::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& a : arrays_) n += static_cast<std::size_t>(a.value.size());
  return n;
}

bool DenoiserParams::all_finite() const noexcept {
  return std::all_of(arrays_.begin(), arrays_.end(), [](const ParamArray& a) { return a.value.allFinite(); });
}

void DenoiserParams::round_to_float() {
  for (auto& a : arrays_)
    for (Eigen::Index i = 0; i < a.value.size(); ++i)
      a.value.data()[i] = static_cast<double>(static_cast<float>(a.value.data()[i]));
}

DenoiserParams init_params(const DenoiserConfig& config, std::uint64_t seed, InitMode mode) {
  DenoiserParams params(config);
  if (mode == InitMode::kZero) return params;
  const bool all = mode == InitMode::kRandomAll;
  auto& arrays = params.arrays();
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    auto& a = arrays[i];
    RandomStream rng(seed, mix_ids({0x1417ull, i}));
    auto fill = [&](double mean, double sd) {
      for (Eigen::Index k = 0; k < a.value.size(); ++k) a.value.data()[k] = mean + sd * rng.normal();
    };
    const auto fan_in = static_cast<double>(a.value.cols());
    switch (a.kind) {
      case ParamKind::kConv:
      case ParamKind::kLinear:
        fill(0.0, std::sqrt(1.0 / fan_in));
        break;
      case ParamKind::kOutputConv:
        if (all) fill(0.0, std::sqrt(1.0 / fan_in));
        break;
      case ParamKind::kTable:
        fill(0.0, 1.0);
        break;
      case ParamKind::kBias:
      case ParamKind::kNormShift:
        if (all) fill(0.0, 0.1);
        break;
      case ParamKind::kNormGain:
        if (all)
          fill(1.0, 0.1);
        else
          a.value.setOnes();
        break;
    }
  }
  params.round_to_float();
  return params;
}

// ---------------------------------------------------------------------------
// Embeddings

std::vector<double> time_embedding(int t, int dim) {
  if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("time_embedding: dim must be even, got " + std::to_string(dim));
  const int half = dim / 2;
  std::vector<double> out(static_cast<std::size_t>(dim));
  for (int i = 0; i < half; ++i) {
    const double freq = half == 1 ? 1.0 : std::exp(-std::log(10000.0) * i / (half - 1));
    out[static_cast<std::size_t>(i)] = std::sin(t * freq);
    out[static_cast<std::size_t>(i + half)] = std::cos(t * freq);
  }
  return out;
}

const IcosphereMesh& cached_mesh(int order) {
  static std::mutex mutex;
  static std::map<int, std::unique_ptr<const IcosphereMesh>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[order];
  if (!slot) slot = std::make_unique<const IcosphereMesh>(build_icosphere(order));
  return *slot;
}

namespace {

void check_conditioning(double age_scaled, int gender) {
  if (gender != 0 && gender != 1) throw std::invalid_argument("gender must be 0 or 1, got " + std::to_string(gender));
  if (!(age_scaled >= 0.0 && age_scaled <= 1.0))
    throw std::invalid_argument("scaled age must lie in [0, 1], got " + std::to_string(age_scaled));
}

nn::Mat to_mat(const FeatureMap& m) {
  nn::Mat out(static_cast<Eigen::Index>(m.channels()), static_cast<Eigen::Index>(m.vertex_count()));
  const auto d = m.data();
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = d[static_cast<std::size_t>(i)];
  return out;
}

FeatureMap to_map(const nn::Mat& m, int order) {
  FeatureMap out(order, static_cast<std::size_t>(m.rows()));
  auto d = out.data();
  for (Eigen::Index i = 0; i < m.size(); ++i) d[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
  return out;
}

// Binds parameter arrays to tape nodes and builds the UNet graph.
class Graph {
 public:
  Graph(nn::Tape& tape, const DenoiserParams& params) : tape_(tape), params_(params) {
    vars_.reserve(params.arrays().size());
    for (const auto& a : params.arrays()) vars_.push_back(tape.parameter(a.value));
  }

  const std::vector<nn::Var>& vars() const noexcept { return vars_; }

  nn::Var condition(double age_scaled, int gender) {
    nn::Mat age(1, 1);
    age(0, 0) = age_scaled;
    const nn::Var g = nn::select_column(tape_, p("emb.gender"), static_cast<std::size_t>(gender));
    const nn::Var a = nn::silu(tape_, nn::channel_linear(tape_, tape_.constant(age), p("emb.age.w"), p("emb.age.b")));
    return nn::add(tape_, g, a);
  }

  // silu(mlp(time + condition)), shared by every ResBlock projection.
  nn::Var embedding(int t, double age_scaled, int gender) {
    const auto temb = time_embedding(t, params_.config().embed_dim);
    const nn::Var te = tape_.constant(Eigen::Map<const nn::Mat>(temb.data(), static_cast<Eigen::Index>(temb.size()), 1));
    nn::Var e = nn::add(tape_, te, condition(age_scaled, gender));
    e = nn::silu(tape_, linear(e, "emb.mlp1"));
    e = linear(e, "emb.mlp2");
    return nn::silu(tape_, e);
  }

  nn::Var forward(const nn::Mat& input, int t, double age_scaled, int gender) {
    const auto& cfg = params_.config();
    const int levels = cfg.levels();
    emb_ = embedding(t, age_scaled, gender);

    nn::Var h = conv(tape_.constant(input), "in.conv", cfg.base_order);
    std::vector<nn::Var> skips;
    for (int l = 0; l < levels; ++l) {
      const int order = cfg.base_order - l;
      for (int j = 0; j < cfg.blocks_per_level; ++j) {
        h = resblock(h, res_name("enc", l, j), order);
        if (cfg.attends_at(order)) h = attention(h, attn_name("enc", l, j));
      }
      skips.push_back(h);
      if (l + 1 < levels) h = nn::slice_columns(tape_, h, prefix_count(order - 1));
    }
    h = resblock(h, "mid.res0", cfg.min_order);
    h = attention(h, "mid.attn");
    h = resblock(h, "mid.res1", cfg.min_order);
    for (int l = levels - 1; l >= 0; --l) {
      const int order = cfg.base_order - l;
      if (l + 1 < levels) h = nn::pad_columns(tape_, h, prefix_count(order));
      h = nn::concat_rows(tape_, h, skips[static_cast<std::size_t>(l)]);
      for (int j = 0; j < cfg.blocks_per_level; ++j) {
        h = resblock(h, res_name("dec", l, j), order);
        if (cfg.attends_at(order)) h = attention(h, attn_name("dec", l, j));
      }
    }
    h = nn::silu(tape_, norm(h, "out.norm"));
    return conv(h, "out.conv", cfg.base_order);
  }

 private:
  nn::Var p(const std::string& name) const { return vars_[params_.index(name)]; }

  nn::Var linear(nn::Var x, const std::string& name) {
    return nn::channel_linear(tape_, x, p(name + ".w"), p(name + ".b"));
  }

  nn::Var conv(nn::Var x, const std::string& name, int order) {
    return nn::ring_conv(tape_, x, p(name + ".w"), p(name + ".b"), cached_mesh(order).neighbor_table());
  }

  nn::Var norm(nn::Var x, const std::string& name) {
    const int channels = static_cast<int>(tape_.value(x).rows());
    return nn::group_norm(tape_, x, p(name + ".gain"), p(name + ".shift"), group_count(channels));
  }

  nn::Var resblock(nn::Var x, const std::string& name, int order) {
    nn::Var h = conv(nn::silu(tape_, norm(x, name + ".norm1")), name + ".conv1", order);
    // Conditioning enters after the second norm so normalization cannot cancel it.
    h = nn::add_bias(tape_, norm(h, name + ".norm2"), linear(emb_, name + ".emb"));
    h = conv(nn::silu(tape_, h), name + ".conv2", order);
    const nn::Var skip = tape_.value(x).rows() == tape_.value(h).rows() ? x : linear(x, name + ".skip");
    return nn::add(tape_, skip, h);
  }

  nn::Var attention(nn::Var x, const std::string& name) {
    const nn::Var n = norm(x, name + ".norm");
    const nn::Var q = nn::channel_linear(tape_, n, p(name + ".q.w"));
    const nn::Var k = nn::channel_linear(tape_, n, p(name + ".k.w"));
    const nn::Var v = nn::channel_linear(tape_, n, p(name + ".v.w"));
    return nn::add(tape_, x, linear(nn::attention(tape_, q, k, v), name + ".proj"));
  }

  nn::Tape& tape_;
  const DenoiserParams& params_;
  std::vector<nn::Var> vars_;
  nn::Var emb_;
};

nn::Mat assemble_input(const DenoiserInput& in, const DenoiserConfig& cfg) {
  check_conditioning(in.age_scaled, in.gender);
  const auto out_ch = static_cast<std::size_t>(cfg.out_channels);
  const auto mask_ch = static_cast<std::size_t>(cfg.mask_channels());
  if (in.x_t.order() != cfg.base_order || in.x_t.channels() != out_ch)
    throw ShapeError("denoiser input must have " + std::to_string(out_ch) + " channels at order " +
                     std::to_string(cfg.base_order));
  const std::size_t nv = in.x_t.vertex_count();
  nn::Mat m = nn::Mat::Zero(cfg.in_channels, static_cast<Eigen::Index>(nv));
  for (std::size_t c = 0; c < out_ch; ++c)
    for (std::size_t v = 0; v < nv; ++v) m(Eigen::Index(c), Eigen::Index(v)) = in.x_t.at(c, v);
  if (!cfg.use_mask) return m;

  if (in.mask.order() != cfg.base_order || in.mask.channels() != mask_ch)
    throw ShapeError("mask must have " + std::to_string(mask_ch) + " channels at order " +
                     std::to_string(cfg.base_order));
  for (std::size_t v = 0; v < nv; ++v) {
    float sum = 0.0f;
    for (std::size_t c = 0; c < mask_ch; ++c) {
      const float x = in.mask.at(c, v);
      if (x != 0.0f && x != 1.0f) throw ShapeError("mask is not one-hot at vertex " + std::to_string(v));
      sum += x;
      m(Eigen::Index(out_ch + c), Eigen::Index(v)) = x;
    }
    if (sum != 1.0f) throw ShapeError("mask is not one-hot at vertex " + std::to_string(v));
  }
  return m;
}

}  // namespace

std::vector<double> condition_embedding(double age_scaled, int gender, const DenoiserParams& params) {
  check_conditioning(age_scaled, gender);
  nn::Tape tape(false);
  Graph graph(tape, params);
  const auto& v = tape.value(graph.condition(age_scaled, gender));
  return {v.data(), v.data() + v.size()};
}

// ---------------------------------------------------------------------------
// Feature-map level operators

FeatureMap ring_conv(const FeatureMap& x, const nn::Mat& weights, const nn::Mat& bias, const IcosphereMesh& mesh) {
  if (x.order() != mesh.order()) throw ShapeError("ring_conv: map order does not match mesh order");
  nn::Tape tape(false);
  const nn::Var out = nn::ring_conv(tape, tape.constant(to_mat(x)), tape.constant(weights), tape.constant(bias),
                                    mesh.neighbor_table());
  return to_map(tape.value(out), x.order());
}

FeatureMap pool(const FeatureMap& x, int from_order) {
  if (x.order() != from_order) throw ShapeError("pool: map order does not match from_order");
  if (from_order < 1) throw ShapeError("pool: cannot pool an order-0 map");
  FeatureMap out(from_order - 1, x.channels());
  for (std::size_t c = 0; c < x.channels(); ++c) {
    const auto src = x.channel(c);
    std::copy_n(src.begin(), out.vertex_count(), out.channel(c).begin());
  }
  return out;
}

FeatureMap unpool(const FeatureMap& x, int to_order) {
  if (x.order() + 1 != to_order) throw ShapeError("unpool: map order must be to_order - 1");
  FeatureMap out(to_order, x.channels(), 0.0f);
  for (std::size_t c = 0; c < x.channels(); ++c) {
    const auto src = x.channel(c);
    std::copy(src.begin(), src.end(), out.channel(c).begin());
  }
  return out;
}

FeatureMap denoiser_forward(const DenoiserInput& input, const DenoiserParams& params) {
  const auto& cfg = params.config();
  const nn::Mat in = assemble_input(input, cfg);
  nn::Tape tape(false);
  Graph graph(tape, params);
  const nn::Var out = graph.forward(in, input.t, input.age_scaled, input.gender);
  return to_map(tape.value(out), cfg.base_order);
}

std::vector<FeatureMap> denoiser_forward_batch(std::span<const DenoiserInput> batch, const DenoiserParams& params,
                                               int workers) {
  std::vector<FeatureMap> out(batch.size());
  parallel_for(batch.size(), workers, [&](std::size_t i) { out[i] = denoiser_forward(batch[i], params); });
  return out;
}

LossAndGrad loss_and_grad(std::span<const TrainingItem> batch, std::span<const int> steps,
                          std::span<const FeatureMap> noise, const NoiseSchedule& sched, const DenoiserParams& params,
                          int workers) {
  if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  if (steps.size() != batch.size() || noise.size() != batch.size())
    throw ShapeError("loss_and_grad: batch, steps and noise sizes differ");
  const auto& cfg = params.config();
  const std::size_t n = batch.size();

  std::vector<double> losses(n);
  std::vector<std::vector<nn::Mat>> item_grads(n);
  parallel_for(n, workers, [&](std::size_t i) {
    const auto& item = batch[i];
    const int t = steps[i];
    if (t < 1 || t > sched.steps) throw std::out_of_range("loss_and_grad: timestep outside [1, T]");
    const FeatureMap x_t = q_sample(item.x0, t, noise[i], sched);
    const FeatureMap target = v_target(item.x0, noise[i], t, sched);
    const nn::Mat in = assemble_input(DenoiserInput{x_t, item.mask, t, item.age_scaled, item.gender}, cfg);

    nn::Tape tape(true);
    Graph graph(tape, params);
    const nn::Var pred = graph.forward(in, t, item.age_scaled, item.gender);
    const nn::Var loss = nn::mse(tape, pred, to_mat(target));
    tape.backward(loss);
    losses[i] = tape.value(loss)(0, 0);
    auto& g = item_grads[i];
    g.reserve(graph.vars().size());
    for (auto v : graph.vars()) g.push_back(tape.grad(v));
  });

  LossAndGrad result;
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) result.loss += losses[i] * inv;
  if (!std::isfinite(result.loss)) {
    std::string detail;
    for (std::size_t i = 0; i < n; ++i)
      detail += " item" + std::to_string(i) + "(t=" + std::to_string(steps[i]) + ")=" + std::to_string(losses[i]);
    throw NumericalFault("non-finite training loss:" + detail);
  }
  result.grads = std::move(item_grads[0]);
  for (auto& g : result.grads) g *= inv;
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t a = 0; a < result.grads.size(); ++a) result.grads[a] += item_grads[i][a] * inv;
  return result;
}

}  // namespace icodiff
