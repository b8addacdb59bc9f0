#include "icodiff/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "icodiff/normative.hpp"
#include "icodiff/rng.hpp"
#include "icodiff/sampler.hpp"

namespace icodiff {
namespace {

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kTrainStream = 0x7a1;
constexpr std::uint64_t kSampleStream = 0x5a3;
constexpr std::uint64_t kClassifyStream = 0xc1a5;

MeanSd mean_sd(const std::vector<double>& v) {
  MeanSd out;
  if (v.empty()) return out;
  for (double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return out;
}

const ManifestRow& find_row(const std::vector<ManifestRow>& rows, const std::string& id) {
  for (const auto& r : rows)
    if (r.id == id) return r;
  throw std::invalid_argument("unknown subject id '" + id + "'");
}

std::string fixed(double x, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << x;
  return os.str();
}

std::string p_text(const std::optional<double>& p) {
  if (!p) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", *p);
  return buf;
}

}  // namespace

std::string epoch_log_line(const EpochStats& s) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "epoch %d loss %.6f time %.2fs", s.epoch, s.mean_loss, s.seconds);
  return buf;
}

TrainOutcome train_model(const RunConfig& cfg, const fs::path& data, bool no_mask, std::ostream* log) {
  cfg.validate();
  const auto rows = read_manifest(data);
  std::vector<TrainingItem> items;
  std::size_t clamped = 0;
  for (const auto& r : rows) {
    if (r.split != Split::kTrain || r.group != Group::kCN) continue;
    auto rec = load_subject(data, r);
    if (rec.features.order() != cfg.mesh_order)
      throw FormatError("subject " + r.id + " is on order " + std::to_string(rec.features.order()) +
                        ", config mesh_order is " + std::to_string(cfg.mesh_order));
    items.push_back({to_model_space(rec.features, &clamped), std::move(rec.mask), normalize_age(r.age), r.gender});
  }
  if (items.empty()) throw std::invalid_argument("dataset " + data.string() + " has no CN training subjects");
  if (clamped > 0 && log) *log << "warning: " << clamped << " thickness values clamped to [0, 5] mm\n";

  DenoiserConfig dc = cfg.effective_denoiser();
  dc.use_mask = !no_mask;
  TrainOutcome out;
  out.checkpoint.params = init_params(dc, mix_ids({cfg.seed, kInitStream}));
  out.checkpoint.steps = cfg.steps;
  out.checkpoint.cosine_offset = cfg.cosine_offset;
  const auto sched = cosine_schedule(cfg.steps, cfg.cosine_offset);
  out.epochs = train(out.checkpoint.params, items, sched, cfg.optimizer, mix_ids({cfg.seed, kTrainStream}), cfg.workers,
                     [log](const EpochStats& s) {
                       if (log) *log << epoch_log_line(s) << std::endl;
                     });
  out.checkpoint.epochs = static_cast<int>(out.epochs.size());
  return out;
}

std::uint64_t subject_sampler_seed(std::uint64_t master, const std::string& id) {
  return mix_ids({master, kSampleStream, hash_string(id)});
}

fs::path sample_path(const fs::path& dir, const std::string& id, int k) {
  char name[32];
  std::snprintf(name, sizeof name, "sample_%02d.icsf", k);
  return dir / id / name;
}

std::vector<FeatureMap> reconstruct_subject(const Checkpoint& ckpt, const SubjectRecord& subject,
                                            const SamplerConfig& sampler, std::uint64_t master_seed, int workers) {
  if (subject.features.order() != ckpt.params.config().base_order)
    throw FormatError("checkpoint is for order " + std::to_string(ckpt.params.config().base_order) + ", subject " +
                      subject.id + " is on order " + std::to_string(subject.features.order()));
  SamplerConfig sc = sampler;
  sc.rng_seed = subject_sampler_seed(master_seed, subject.id);
  const auto sched = cosine_schedule(ckpt.steps, ckpt.cosine_offset);
  const Conditioning cond{subject.mask, normalize_age(subject.age), subject.gender};
  auto out = reconstruct(to_model_space(subject.features), cond, ckpt.params, sched, sc, workers);
  for (auto& m : out) m = to_native_space(m);
  return out;
}

std::vector<std::string> reconstruct_dataset(const Checkpoint& ckpt, const fs::path& data,
                                             const std::vector<std::string>& ids, const SamplerConfig& sampler,
                                             std::uint64_t master_seed, const fs::path& out, int workers) {
  const auto rows = read_manifest(data);
  std::vector<const ManifestRow*> todo;
  if (ids.empty()) {
    for (const auto& r : rows)
      if (r.split == Split::kTest) todo.push_back(&r);
  } else {
    for (const auto& id : ids) todo.push_back(&find_row(rows, id));
  }
  std::vector<std::string> done;
  for (const auto* r : todo) {
    const auto rec = load_subject(data, *r);
    const auto samples = reconstruct_subject(ckpt, rec, sampler, master_seed, workers);
    fs::create_directories(out / r->id);
    for (std::size_t k = 0; k < samples.size(); ++k)
      write_feature_map(sample_path(out, r->id, static_cast<int>(k)), samples[k]);
    done.push_back(r->id);
  }
  return done;
}

std::vector<FeatureMap> load_samples(const fs::path& dir, const std::string& id) {
  std::vector<FeatureMap> out;
  for (int k = 0;; ++k) {
    const auto p = sample_path(dir, id, k);
    if (!fs::exists(p)) break;
    out.push_back(read_feature_map(p));
  }
  return out;
}

double mean_score(const ScoreRow& row) {
  double s = 0.0;
  for (double z : row.z) s += z;
  return row.z.empty() ? 0.0 : s / static_cast<double>(row.z.size());
}

ScoreReport score_dataset(const fs::path& data, const fs::path& samples, int template_k) {
  const auto rows = read_manifest(data);
  const auto atlas = read_atlas(atlas_path(data));

  // Template references: ROI means of every CN-train subject, loaded once.
  std::vector<std::pair<const ManifestRow*, std::vector<double>>> train_rois;
  if (template_k > 0) {
    for (const auto& r : rows)
      if (r.split == Split::kTrain && r.group == Group::kCN)
        train_rois.emplace_back(&r, roi_means(load_subject(data, r).features, atlas, 0));
    if (static_cast<int>(train_rois.size()) < template_k)
      throw std::invalid_argument("template baseline needs " + std::to_string(template_k) +
                                  " CN training subjects, dataset has " + std::to_string(train_rois.size()));
  }

  ScoreReport rep;
  std::map<Group, std::vector<double>> by_group;
  for (const auto& r : rows) {
    if (r.split != Split::kTest) continue;
    const auto subject = roi_means(load_subject(data, r).features, atlas, 0);
    std::vector<std::vector<double>> reference;
    if (template_k > 0) {
      std::vector<std::size_t> order(train_rois.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(train_rois[a].first->age - r.age) < std::abs(train_rois[b].first->age - r.age);
      });
      for (int i = 0; i < template_k; ++i) reference.push_back(train_rois[order[static_cast<std::size_t>(i)]].second);
    } else {
      const auto maps = load_samples(samples, r.id);
      if (maps.empty()) throw std::invalid_argument("no samples for subject '" + r.id + "' under " + samples.string());
      for (const auto& m : maps) reference.push_back(roi_means(m, atlas, 0));
    }
    try {
      auto z = abnormal_score(subject, reference, r.id);
      rep.rows.push_back({r.id, std::move(z.scores)});
      by_group[r.group].push_back(mean_score(rep.rows.back()));
    } catch (const DegenerateReference& e) {
      rep.excluded.push_back(r.id + ": " + e.what());
    }
  }

  for (Group g : {Group::kCN, Group::kMCI, Group::kAD}) {
    const auto it = by_group.find(g);
    if (it == by_group.end()) continue;
    const auto ms = mean_sd(it->second);
    rep.groups.push_back({g, static_cast<int>(it->second.size()), ms.mean, ms.sd});
  }
  auto welch = [&](Group a, Group b) -> std::optional<double> {
    if (!by_group.count(a) || !by_group.count(b)) return std::nullopt;
    try {
      return welch_p_value(by_group[a], by_group[b]);
    } catch (const std::invalid_argument&) {
      return std::nullopt;
    }
  };
  rep.p_cn_mci = welch(Group::kCN, Group::kMCI);
  rep.p_cn_ad = welch(Group::kCN, Group::kAD);
  return rep;
}

void write_score_table(const fs::path& path, const std::vector<ScoreRow>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::size_t r = rows.empty() ? 0 : rows.front().z.size();
  os << "subject_id";
  for (std::size_t i = 0; i < r; ++i) os << "\troi_" << i;
  os << '\n';
  os << std::setprecision(10);
  for (const auto& row : rows) {
    if (row.z.size() != r) throw std::invalid_argument("score rows have different ROI counts");
    os << row.id;
    for (double z : row.z) os << '\t' << z;
    os << '\n';
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

std::vector<ScoreRow> read_score_table(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open score table " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw FormatError(path.string() + ": empty score table");
  std::istringstream hs(line);
  std::string tok;
  hs >> tok;
  if (tok != "subject_id") throw FormatError(path.string() + ": line 1: header must start with subject_id");
  std::size_t cols = 0;
  while (hs >> tok) {
    if (tok != "roi_" + std::to_string(cols)) throw FormatError(path.string() + ": line 1: unexpected column " + tok);
    ++cols;
  }
  std::vector<ScoreRow> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    ScoreRow row;
    ls >> row.id;
    double z;
    while (ls >> z) row.z.push_back(z);
    if (!ls.eof() || row.z.size() != cols)
      throw FormatError(path.string() + ": line " + std::to_string(lineno) + ": expected " + std::to_string(cols) +
                        " numeric scores");
    rows.push_back(std::move(row));
  }
  return rows;
}

void print_score_report(std::ostream& os, const ScoreReport& rep) {
  os << "scored " << rep.rows.size() << " subjects, excluded " << rep.excluded.size() << '\n';
  for (const auto& e : rep.excluded) os << "warning: excluded " << e << '\n';
  for (const auto& g : rep.groups)
    os << "group " << to_string(g.group) << " n=" << g.count << " mean_z " << fixed(g.mean, 4) << " sd "
       << fixed(g.sd, 4) << '\n';
  os << "welch p CN-vs-MCI " << p_text(rep.p_cn_mci) << '\n';
  os << "welch p CN-vs-AD " << p_text(rep.p_cn_ad) << '\n';
}

std::vector<ContrastReport> classify_scores(const std::vector<ScoreRow>& rows, const std::vector<ManifestRow>& manifest,
                                            const ClassifyConfig& cfg, std::uint64_t seed) {
  std::map<std::string, Group> group_of;
  for (const auto& m : manifest) group_of[m.id] = m.group;
  std::vector<ContrastReport> out;
  int index = 0;
  for (Group disease : {Group::kMCI, Group::kAD}) {
    ContrastReport c;
    c.name = "CN-vs-" + to_string(disease);
    FeatureMatrix x;
    std::vector<int> y;
    for (const auto& r : rows) {
      const auto it = group_of.find(r.id);
      if (it == group_of.end()) throw std::invalid_argument("score table subject '" + r.id + "' is not in the manifest");
      if (it->second != Group::kCN && it->second != disease) continue;
      x.push_back(r.z);
      y.push_back(it->second == disease ? 1 : -1);
      (y.back() > 0 ? c.positives : c.negatives) += 1;
    }
    SvmOptions opts = cfg.svm;
    opts.seed = mix_ids({seed, kClassifyStream, static_cast<std::uint64_t>(index++)});
    c.report = kfold_cv(x, y, cfg.folds, opts.seed, cfg.inverted, opts);
    out.push_back(std::move(c));
  }
  return out;
}

void print_contrast_reports(std::ostream& os, const std::vector<ContrastReport>& reports) {
  for (const auto& c : reports) {
    const auto& r = c.report;
    os << c.name << " n=" << c.positives << "+" << c.negatives << " accuracy " << fixed(r.accuracy, 4) << " precision "
       << fixed(r.precision, 4) << " recall " << fixed(r.recall, 4) << " tp " << r.confusion.tp << " fp "
       << r.confusion.fp << " tn " << r.confusion.tn << " fn " << r.confusion.fn << '\n';
  }
}

EvalSummary evaluate_reconstructions(const fs::path& data, const fs::path& samples, const std::vector<std::string>& ids) {
  const auto rows = read_manifest(data);
  std::vector<const ManifestRow*> todo;
  if (ids.empty()) {
    for (const auto& r : rows)
      if (fs::exists(sample_path(samples, r.id, 0))) todo.push_back(&r);
  } else {
    for (const auto& id : ids) todo.push_back(&find_row(rows, id));
  }
  std::vector<double> si, ct, err;
  EvalSummary s;
  for (const auto* r : todo) {
    const auto rec = load_subject(data, *r);
    const auto maps = load_samples(samples, r->id);
    if (maps.empty()) throw std::invalid_argument("no samples for subject '" + r->id + "' under " + samples.string());
    const auto& mesh = cached_mesh(rec.features.order());
    const auto orig_model = to_model_space(rec.features);
    const auto orig_ct = rec.features.slice_channels(0, 1);
    for (const auto& m : maps) {
      require_same_shape(m, rec.features, "evaluate_reconstructions");
      si.push_back(ssim_sphere(m, rec.features, mesh, 2.0, 1));
      ct.push_back(ssim_sphere(to_model_space(m), orig_model, mesh, 2.0, 0));
      err.push_back(mse(m.slice_channels(0, 1), orig_ct));
    }
    ++s.subjects;
  }
  s.samples = static_cast<int>(si.size());
  s.ssim_si = mean_sd(si);
  s.ssim_ct = mean_sd(ct);
  s.mse_ct = mean_sd(err);
  return s;
}

void print_eval_summary(std::ostream& os, const EvalSummary& s) {
  os << "subjects " << s.subjects << " samples " << s.samples << '\n';
  os << "SI SSIM " << fixed(s.ssim_si.mean, 4) << " +- " << fixed(s.ssim_si.sd, 4) << '\n';
  os << "CT SSIM " << fixed(s.ssim_ct.mean, 4) << " +- " << fixed(s.ssim_ct.sd, 4) << '\n';
  os << "CT MSE(mm) " << fixed(s.mse_ct.mean, 4) << " +- " << fixed(s.mse_ct.sd, 4) << '\n';
}

}  // namespace icodiff
