#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "icodiff/checkpoint.hpp"
#include "icodiff/classifier.hpp"
#include "icodiff/config.hpp"
#include "icodiff/dataset.hpp"
#include "icodiff/training.hpp"

// Stages of the end-to-end run: train, reconstruct, score, classify, eval.
// The CLI is a thin layer over these.
namespace icodiff {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- training

struct TrainOutcome {
  Checkpoint checkpoint;
  std::vector<EpochStats> epochs;
};

// One log line per epoch: "epoch <n> loss <mean> time <seconds>s".
std::string epoch_log_line(const EpochStats& s);

/// Trains on the CN-train subjects of `data`. With `no_mask` the model sees
/// zeros in place of the segmentation (unconditional ablation). Each epoch's
/// line goes to `log` when given.
TrainOutcome train_model(const RunConfig& cfg, const fs::path& data, bool no_mask, std::ostream* log = nullptr);

// ----------------------------------------------------------- reconstruction

// Sampler seed of one subject, derived from the master seed and its id.
std::uint64_t subject_sampler_seed(std::uint64_t master, const std::string& id);

// <dir>/<id>/sample_<k>.icsf, k zero-padded to 2 digits.
fs::path sample_path(const fs::path& dir, const std::string& id, int k);

/// Reconstructions of one subject in native units (thickness mm, shape index).
std::vector<FeatureMap> reconstruct_subject(const Checkpoint& ckpt, const SubjectRecord& subject,
                                            const SamplerConfig& sampler, std::uint64_t master_seed, int workers = 1);

/// Reconstructs `ids` (all test-split subjects when empty) and writes
/// n_samples ICSF files per subject. Throws std::invalid_argument naming an
/// unknown id and FormatError when the checkpoint order differs from the data.
std::vector<std::string> reconstruct_dataset(const Checkpoint& ckpt, const fs::path& data,
                                             const std::vector<std::string>& ids, const SamplerConfig& sampler,
                                             std::uint64_t master_seed, const fs::path& out, int workers = 1);

// All sample_<k>.icsf files of one subject, k = 0, 1, ... until the first gap.
std::vector<FeatureMap> load_samples(const fs::path& dir, const std::string& id);

// ------------------------------------------------------------------ scoring

struct ScoreRow {
  std::string id;
  std::vector<double> z;  // one per ROI
};

struct GroupSummary {
  Group group = Group::kCN;
  int count = 0;
  double mean = 0.0;  // mean over subjects of the per-subject mean Z
  double sd = 0.0;
};

struct ScoreReport {
  std::vector<ScoreRow> rows;          // manifest order
  std::vector<std::string> excluded;   // degenerate reference sets
  std::vector<GroupSummary> groups;    // CN, MCI, AD (groups with members only)
  std::optional<double> p_cn_mci;      // Welch, on per-subject mean Z
  std::optional<double> p_cn_ad;
};

/// Thickness abnormal scores of every test-split subject against its own
/// reconstructions in `samples`, or with `template_k` > 0 against the
/// template_k CN-train subjects closest in age.
ScoreReport score_dataset(const fs::path& data, const fs::path& samples, int template_k = 0);

double mean_score(const ScoreRow& row);

// Tab-separated: header "subject_id roi_0 ... roi_<R-1>", one row per subject.
void write_score_table(const fs::path& path, const std::vector<ScoreRow>& rows);
// Throws FormatError naming the line on malformed input.
std::vector<ScoreRow> read_score_table(const fs::path& path);

void print_score_report(std::ostream& os, const ScoreReport& report);

// ----------------------------------------------------------- classification

struct ContrastReport {
  std::string name;  // "CN-vs-AD"
  int positives = 0;
  int negatives = 0;
  ClassifierReport report;
};

/// 10-fold (cfg.folds) CV for CN-vs-MCI and CN-vs-AD on score vectors; the
/// disease group is the positive class. Groups come from the manifest.
std::vector<ContrastReport> classify_scores(const std::vector<ScoreRow>& rows, const std::vector<ManifestRow>& manifest,
                                            const ClassifyConfig& cfg, std::uint64_t seed);

void print_contrast_reports(std::ostream& os, const std::vector<ContrastReport>& reports);

// --------------------------------------------------------------- evaluation

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

struct EvalSummary {
  int subjects = 0;
  int samples = 0;
  MeanSd ssim_si;  // shape index, data range 2
  MeanSd ssim_ct;  // normalized thickness, data range 2
  MeanSd mse_ct;   // thickness in mm^2
  // Mean of the two SSIM channels.
  double ssim_mean() const noexcept { return 0.5 * (ssim_si.mean + ssim_ct.mean); }
};

/// Compares every sample of every subject in `samples` with the original.
/// `ids` restricts the subjects; empty means every subject with samples.
EvalSummary evaluate_reconstructions(const fs::path& data, const fs::path& samples,
                                     const std::vector<std::string>& ids = {});

void print_eval_summary(std::ostream& os, const EvalSummary& s);

}  // namespace icodiff
