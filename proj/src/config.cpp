#include "icodiff/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace icodiff {
namespace {

using nlohmann::json;

// One JSON object being read; remembers which keys were consumed so the
// leftovers can be reported.
class Section {
 public:
  Section(const json* node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && !node_->is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  Section sub(const char* key) {
    const json* j = find(key);
    return Section(j, name(key));
  }

  void read(const char* key, int& out) {
    if (const json* j = find(key)) {
      if (!j->is_number_integer()) throw ConfigError(name(key), "expected an integer");
      const auto v = j->get<long long>();
      if (v < INT32_MIN || v > INT32_MAX) throw ConfigError(name(key), "integer out of range");
      out = static_cast<int>(v);
    }
  }

  void read(const char* key, std::uint64_t& out) {
    if (const json* j = find(key)) {
      if (!j->is_number_unsigned() && !(j->is_number_integer() && j->get<long long>() >= 0))
        throw ConfigError(name(key), "expected a non-negative integer");
      out = j->get<std::uint64_t>();
    }
  }

  void read(const char* key, double& out) {
    if (const json* j = find(key)) {
      if (!j->is_number()) throw ConfigError(name(key), "expected a number");
      out = j->get<double>();
    }
  }

  void read(const char* key, bool& out) {
    if (const json* j = find(key)) {
      if (!j->is_boolean()) throw ConfigError(name(key), "expected true or false");
      out = j->get<bool>();
    }
  }

  void read(const char* key, std::string& out) {
    if (const json* j = find(key)) {
      if (!j->is_string()) throw ConfigError(name(key), "expected a string");
      out = j->get<std::string>();
    }
  }

  template <class T>
  void read(const char* key, std::vector<T>& out) {
    if (const json* j = find(key)) {
      if (!j->is_array()) throw ConfigError(name(key), "expected an array of integers");
      std::vector<T> v;
      for (const auto& e : *j) {
        if (!e.is_number_integer() || e.get<long long>() < 0)
          throw ConfigError(name(key), "expected an array of non-negative integers");
        v.push_back(e.get<T>());
      }
      out = std::move(v);
    }
  }

  // Throws for any key that no read() consumed.
  void finish() const {
    if (!node_) return;
    for (const auto& [k, v] : node_->items())
      if (!seen_.count(k)) throw ConfigError(name(k.c_str()), "unknown key");
  }

 private:
  const json* find(const char* key) {
    if (!node_) return nullptr;
    seen_.insert(key);
    const auto it = node_->find(key);
    return it == node_->end() ? nullptr : &*it;
  }

  std::string name(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* node_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

CohortConfig RunConfig::effective_cohort() const {
  CohortConfig c = cohort.scaled(cohort_scale);
  c.mesh_order = mesh_order;
  c.seed = seed;
  return c;
}

DenoiserConfig RunConfig::effective_denoiser() const {
  DenoiserConfig d = denoiser;
  d.base_order = mesh_order;
  return d;
}

void RunConfig::validate() const {
  auto wrap = [](const char* prefix, auto&& fn) {
    try {
      fn();
    } catch (const std::invalid_argument& e) {
      // The component validators name their field as "<section>.<key>: why".
      std::string msg = e.what();
      const auto colon = msg.find(':');
      std::string key = colon == std::string::npos ? prefix : msg.substr(0, colon);
      throw ConfigError(key, colon == std::string::npos ? msg : msg.substr(colon + 2));
    }
  };
  if (workers < 1) throw ConfigError("workers", "must be >= 1");
  if (mesh_order < 0 || mesh_order > kMaxMeshOrder) throw ConfigError("mesh_order", "must be in [0, 8]");
  if (!(cohort_scale > 0.0)) throw ConfigError("cohort.scale", "must be > 0");
  if (steps < 1) throw ConfigError("schedule.steps", "must be >= 1");
  if (!(cosine_offset > 0.0)) throw ConfigError("schedule.cosine_offset", "must be > 0");
  if (sampler.t_noise < 1 || sampler.t_noise > steps)
    throw ConfigError("sampler.t_noise", "must be in [1, schedule.steps]");
  if (sampler.n_samples < 2) throw ConfigError("sampler.n_samples", "abnormal scores need >= 2 samples");
  if (template_k < 2) throw ConfigError("score.template_k", "must be >= 2");
  if (classify.folds < 2) throw ConfigError("classify.folds", "must be >= 2");
  if (!(classify.svm.c_reg > 0.0)) throw ConfigError("classify.c_reg", "must be > 0");
  if (classify.svm.epochs < 1) throw ConfigError("classify.epochs", "must be >= 1");
  if (!(classify.svm.step0 > 0.0)) throw ConfigError("classify.step0", "must be > 0");
  wrap("cohort", [&] { effective_cohort().validate(); });
  wrap("denoiser", [&] { effective_denoiser().validate(); });
  wrap("optimizer", [&] { optimizer.validate(); });
}

RunConfig parse_run_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Section top(&root, "");
  top.read("seed", c.seed);
  top.read("workers", c.workers);
  top.read("mesh_order", c.mesh_order);

  auto paths = top.sub("paths");
  paths.read("data", c.data_dir);
  paths.read("run", c.run_dir);
  paths.finish();

  auto co = top.sub("cohort");
  co.read("scale", c.cohort_scale);
  co.read("roi_count", c.cohort.roi_count);
  co.read("atlas_seed", c.cohort.atlas_seed);
  co.read("n_cn_train", c.cohort.n_cn_train);
  co.read("n_cn_test", c.cohort.n_cn_test);
  co.read("n_mci", c.cohort.n_mci);
  co.read("n_ad", c.cohort.n_ad);
  co.read("atrophy_rois", c.cohort.atrophy_rois);
  co.read("atrophy_mci_mm", c.cohort.atrophy_mci_mm);
  co.read("atrophy_ad_mm", c.cohort.atrophy_ad_mm);
  co.read("age_min", c.cohort.age_min);
  co.read("age_max", c.cohort.age_max);
  co.read("age_slope_mm_per_year", c.cohort.age_slope_mm_per_year);
  co.read("noise_sd_mm", c.cohort.noise_sd_mm);
  co.read("shape_index_noise_sd", c.cohort.shape_index_noise_sd);
  co.read("smoothness", c.cohort.smoothness);
  co.finish();

  auto sc = top.sub("schedule");
  sc.read("steps", c.steps);
  sc.read("cosine_offset", c.cosine_offset);
  sc.finish();

  auto de = top.sub("denoiser");
  de.read("min_order", c.denoiser.min_order);
  de.read("widths", c.denoiser.widths);
  de.read("blocks_per_level", c.denoiser.blocks_per_level);
  de.read("attention_orders", c.denoiser.attention_orders);
  de.read("embed_dim", c.denoiser.embed_dim);
  de.finish();

  auto op = top.sub("optimizer");
  op.read("lr0", c.optimizer.lr0);
  op.read("lr_min", c.optimizer.lr_min);
  op.read("epochs", c.optimizer.epochs);
  op.read("batch_size", c.optimizer.batch_size);
  op.read("beta1", c.optimizer.beta1);
  op.read("beta2", c.optimizer.beta2);
  op.read("eps", c.optimizer.eps);
  op.finish();

  auto sa = top.sub("sampler");
  sa.read("t_noise", c.sampler.t_noise);
  sa.read("n_samples", c.sampler.n_samples);
  sa.read("stochastic", c.sampler.stochastic);
  sa.finish();

  auto so = top.sub("score");
  so.read("template_k", c.template_k);
  so.finish();

  auto cl = top.sub("classify");
  cl.read("folds", c.classify.folds);
  cl.read("inverted", c.classify.inverted);
  cl.read("c_reg", c.classify.svm.c_reg);
  cl.read("epochs", c.classify.svm.epochs);
  cl.read("step0", c.classify.svm.step0);
  cl.finish();

  top.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

std::string to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["mesh_order"] = c.mesh_order;
  j["paths"] = {{"data", c.data_dir}, {"run", c.run_dir}};
  const auto& co = c.cohort;
  j["cohort"] = {{"scale", c.cohort_scale},
                 {"roi_count", co.roi_count},
                 {"atlas_seed", co.atlas_seed},
                 {"n_cn_train", co.n_cn_train},
                 {"n_cn_test", co.n_cn_test},
                 {"n_mci", co.n_mci},
                 {"n_ad", co.n_ad},
                 {"atrophy_rois", co.atrophy_rois},
                 {"atrophy_mci_mm", co.atrophy_mci_mm},
                 {"atrophy_ad_mm", co.atrophy_ad_mm},
                 {"age_min", co.age_min},
                 {"age_max", co.age_max},
                 {"age_slope_mm_per_year", co.age_slope_mm_per_year},
                 {"noise_sd_mm", co.noise_sd_mm},
                 {"shape_index_noise_sd", co.shape_index_noise_sd},
                 {"smoothness", co.smoothness}};
  j["schedule"] = {{"steps", c.steps}, {"cosine_offset", c.cosine_offset}};
  const auto& d = c.denoiser;
  j["denoiser"] = {{"min_order", d.min_order},
                   {"widths", d.widths},
                   {"blocks_per_level", d.blocks_per_level},
                   {"attention_orders", d.attention_orders},
                   {"embed_dim", d.embed_dim}};
  const auto& o = c.optimizer;
  j["optimizer"] = {{"lr0", o.lr0},         {"lr_min", o.lr_min}, {"epochs", o.epochs}, {"batch_size", o.batch_size},
                    {"beta1", o.beta1}, {"beta2", o.beta2},   {"eps", o.eps}};
  j["sampler"] = {{"t_noise", c.sampler.t_noise},
                  {"n_samples", c.sampler.n_samples},
                  {"stochastic", c.sampler.stochastic}};
  j["score"] = {{"template_k", c.template_k}};
  j["classify"] = {{"folds", c.classify.folds},
                   {"inverted", c.classify.inverted},
                   {"c_reg", c.classify.svm.c_reg},
                   {"epochs", c.classify.svm.epochs},
                   {"step0", c.classify.svm.step0}};
  return j.dump(2);
}

}  // namespace icodiff
