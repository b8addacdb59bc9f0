// icodiff command-line entry point.
//
// Exit codes: 0 success, 2 usage, input or configuration error, 3 numerical fault.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <streambuf>

#include "icodiff/config.hpp"
#include "icodiff/errors.hpp"
#include "icodiff/pipeline.hpp"

using namespace icodiff;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

// Writes every character to two buffers.
class TeeBuf : public std::streambuf {
 public:
  TeeBuf(std::streambuf* a, std::streambuf* b) : a_(a), b_(b) {}

 protected:
  int overflow(int c) override {
    if (c == traits_type::eof()) return traits_type::not_eof(c);
    const auto ch = traits_type::to_char_type(c);
    return a_->sputc(ch) == traits_type::eof() || b_->sputc(ch) == traits_type::eof() ? traits_type::eof() : c;
  }
  int sync() override { return a_->pubsync() == 0 && b_->pubsync() == 0 ? 0 : -1; }

 private:
  std::streambuf* a_;
  std::streambuf* b_;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out;
};

void add_common(CLI::App* sub, Common& c, const std::string& out_help) {
  sub->add_option("--config", c.config, "JSON run configuration")->check(CLI::ExistingFile);
  sub->add_option("--seed", c.seed, "master seed (overrides the config)");
  sub->add_option("--workers", c.workers, "worker threads (overrides the config)")->check(CLI::PositiveNumber);
  sub->add_option("--out", c.out, out_help);
}

// Config file plus flag overrides; flags win.
RunConfig load(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.workers) cfg.workers = *c.workers;
  cfg.validate();
  return cfg;
}

fs::path or_default(const std::string& flag, const fs::path& fallback) {
  return flag.empty() ? fallback : fs::path(flag);
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional diffusion normative modeling on icospheres"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen-data", "write the synthetic cohort");
  add_common(gen, common, "dataset directory (default: paths.data)");

  auto* train = app.add_subcommand("train", "train the denoiser on CN training subjects");
  add_common(train, common, "checkpoint path (default: <paths.run>/model.ickp)");
  std::string data_dir, log_path;
  bool no_mask = false;
  std::optional<int> epochs;
  train->add_option("--data", data_dir, "dataset directory (default: paths.data)");
  train->add_option("--log", log_path, "epoch log file (default: checkpoint path with .log)");
  train->add_flag("--no-mask", no_mask, "replace the mask channels with zeros (unconditional ablation)");
  train->add_option("--epochs", epochs, "epoch count (overrides the config)")->check(CLI::PositiveNumber);

  auto* recon = app.add_subcommand("reconstruct", "partial-noise reconstructions of test subjects");
  add_common(recon, common, "samples directory (default: <paths.run>/samples)");
  std::string ckpt_path;
  std::vector<std::string> subjects;
  std::optional<int> n_samples, t_noise;
  bool deterministic = false;
  recon->add_option("--checkpoint", ckpt_path, "ICKP checkpoint (default: <paths.run>/model.ickp)");
  recon->add_option("--data", data_dir, "dataset directory (default: paths.data)");
  recon->add_option("--subjects", subjects, "subject ids (default: every test subject)")->delimiter(',');
  recon->add_option("--n-samples", n_samples, "samples per subject");
  recon->add_option("--t-noise", t_noise, "noise level to start from");
  recon->add_flag("--deterministic", deterministic, "no injected noise in the reverse steps");

  auto* score = app.add_subcommand("score", "abnormal scores of the test subjects");
  add_common(score, common, "score table (default: <paths.run>/scores.tsv)");
  std::string samples_dir;
  bool template_baseline = false;
  score->add_option("--data", data_dir, "dataset directory (default: paths.data)");
  score->add_option("--samples", samples_dir, "samples directory (default: <paths.run>/samples)");
  score->add_flag("--template-baseline", template_baseline,
                  "score against the age-nearest CN training subjects instead of reconstructions");

  auto* classify = app.add_subcommand("classify", "k-fold SVM on score tables");
  add_common(classify, common, "also write the report to this file");
  std::string scores_path;
  classify->add_option("--scores", scores_path, "score table (default: <paths.run>/scores.tsv)");
  classify->add_option("--data", data_dir, "dataset directory holding the manifest (default: paths.data)");

  auto* eval = app.add_subcommand("eval", "SSIM and MSE of reconstructions against the originals");
  add_common(eval, common, "also write the summary to this file");
  eval->add_option("--data", data_dir, "dataset directory (default: paths.data)");
  eval->add_option("--samples", samples_dir, "samples directory (default: <paths.run>/samples)");
  eval->add_option("--subjects", subjects, "subject ids (default: every subject with samples)")->delimiter(',');

  auto* mesh = app.add_subcommand("mesh-info", "counts of the icosphere at one order");
  add_common(mesh, common, "unused");
  std::optional<int> order;
  mesh->add_option("--order", order, "mesh order (default: mesh_order)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    RunConfig cfg = load(common);
    const fs::path data = or_default(data_dir, cfg.data_dir);
    const fs::path run = cfg.run_dir;

    if (*gen) {
      const fs::path out = or_default(common.out, cfg.data_dir);
      const auto s = gen_cohort(cfg.effective_cohort(), out, cfg.workers);
      std::cout << "wrote " << s.dir.string() << ": CN-train " << s.cn_train << ", CN-test " << s.cn_test << ", MCI "
                << s.mci << ", AD " << s.ad << ", order " << cfg.mesh_order << ", seed " << cfg.seed << '\n';
    } else if (*train) {
      if (epochs) cfg.optimizer.epochs = *epochs;
      const fs::path out = or_default(common.out, run / (no_mask ? "model_nomask.ickp" : "model.ickp"));
      const fs::path log_file = or_default(log_path, fs::path(out).replace_extension(".log"));
      ensure_parent(out);
      ensure_parent(log_file);
      std::ofstream log(log_file);
      if (!log) throw std::runtime_error("cannot open " + log_file.string() + " for writing");
      TeeBuf tee(std::cout.rdbuf(), log.rdbuf());
      std::ostream both(&tee);
      const auto outcome = train_model(cfg, data, no_mask, &both);
      write_checkpoint(out, outcome.checkpoint);
      const auto& first = outcome.epochs.front();
      const auto& last = outcome.epochs.back();
      std::cout << "wrote " << out.string() << " (" << (no_mask ? "no mask" : "mask-conditioned") << "), loss "
                << first.mean_loss << " -> " << last.mean_loss << '\n';
    } else if (*recon) {
      const auto ckpt = read_checkpoint(or_default(ckpt_path, run / "model.ickp"));
      SamplerConfig sc = cfg.sampler;
      if (n_samples) sc.n_samples = *n_samples;
      if (t_noise) sc.t_noise = *t_noise;
      if (deterministic) sc.stochastic = false;
      sc.validate(cosine_schedule(ckpt.steps, ckpt.cosine_offset));
      const fs::path out = or_default(common.out, run / "samples");
      const auto done = reconstruct_dataset(ckpt, data, subjects, sc, cfg.seed, out, cfg.workers);
      std::cout << "wrote " << sc.n_samples << " samples for each of " << done.size() << " subjects to "
                << out.string() << '\n';
    } else if (*score) {
      const fs::path out = or_default(common.out, run / (template_baseline ? "scores_template.tsv" : "scores.tsv"));
      const auto rep = score_dataset(data, or_default(samples_dir, run / "samples"),
                                     template_baseline ? cfg.template_k : 0);
      ensure_parent(out);
      write_score_table(out, rep.rows);
      print_score_report(std::cout, rep);
      std::cout << "wrote " << out.string() << '\n';
    } else if (*classify) {
      const auto rows = read_score_table(or_default(scores_path, run / "scores.tsv"));
      const auto reports = classify_scores(rows, read_manifest(data), cfg.classify, cfg.seed);
      print_contrast_reports(std::cout, reports);
      if (!common.out.empty()) {
        ensure_parent(common.out);
        std::ofstream os(common.out);
        print_contrast_reports(os, reports);
      }
    } else if (*eval) {
      const auto s = evaluate_reconstructions(data, or_default(samples_dir, run / "samples"), subjects);
      print_eval_summary(std::cout, s);
      if (!common.out.empty()) {
        ensure_parent(common.out);
        std::ofstream os(common.out);
        print_eval_summary(os, s);
      }
    } else if (*mesh) {
      const int k = order.value_or(cfg.mesh_order);
      const auto& m = cached_mesh(k);
      std::size_t pentagons = 0;
      for (std::size_t v = 0; v < m.vertex_count(); ++v) pentagons += m.degree(v) == 5;
      std::cout << "order " << k << " vertices " << m.vertex_count() << " edges " << m.edge_count() << " faces "
                << m.face_count() << " pentagons " << pentagons << '\n';
      std::cout << "prefix counts";
      for (auto c : m.prefix_counts()) std::cout << ' ' << c;
      std::cout << '\n';
    }
  } catch (const NumericalFault& e) {
    std::cerr << "numerical fault: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return 0;
}
