// Acceptance suite: one pass/fail line per criterion, nonzero exit if any
// criterion fails. Heavier training-based checks share artifacts, so the
// suite runs end to end in roughly a quarter hour on one core.

#include "bseg/commands.hpp"
#include "bseg/gradcheck.hpp"
#include "bseg/losses.hpp"
#include "bseg/metrics.hpp"
#include "bseg/network.hpp"
#include "bseg/rng.hpp"
#include "bseg/runio.hpp"
#include "bseg/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace bseg;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  std::printf("criterion %d [%s] %s: %s\n", id, o.pass ? "PASS" : "FAIL", name.c_str(),
              o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++g_failures;
}

double now_seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

fs::path work_dir() {
  fs::path d = fs::temp_directory_path() / "bseg_acceptance";
  fs::create_directories(d);
  return d;
}

// ---------------------------------------------------------------- criterion 1

Outcome criterion_gradients() {
  auto t0 = std::chrono::steady_clock::now();
  std::vector<GradCheckReport> reports = gradcheck_suite(1);
  double elapsed = now_seconds(t0);
  double worst = 0;
  bool all = true;
  std::string failed;
  for (const auto& r : reports) {
    worst = std::max(worst, r.max_rel_err);
    if (!r.pass) {
      all = false;
      failed += " " + r.name;
    }
  }
  bool in_time = elapsed < 120.0;
  Outcome o;
  o.pass = all && in_time;
  o.detail = std::to_string(reports.size()) + " checks, worst rel err " + fmt(worst) + ", " +
             fmt(elapsed) + " s";
  if (!failed.empty()) o.detail += "; failed:" + failed;
  if (!in_time) o.detail += "; exceeded 120 s";
  return o;
}

// ---------------------------------------------------------------- criterion 2

double oracle_sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

double oracle_dice(const std::vector<double>& p, const std::vector<double>& t, double eps) {
  double tp = 0, pp = 0, tt = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    tp += t[i] * p[i];
    pp += p[i] * p[i];
    tt += t[i] * t[i];
  }
  return 1.0 - 2.0 * tp / (tt + pp + eps);
}

void oracle_edge_target(const Tensor& mask, std::vector<double>* edge, double* beta) {
  const int N = mask.dim(0), H = mask.dim(2), W = mask.dim(3);
  edge->assign(static_cast<size_t>(mask.size()), 0.0);
  int edges = 0;
  for (int n = 0; n < N; ++n)
    for (int h = 0; h < H; ++h)
      for (int w = 0; w < W; ++w) {
        if (mask.at4(n, 0, h, w) != 1.0) continue;
        auto bg = [&](int hh, int ww) {
          return hh < 0 || hh >= H || ww < 0 || ww >= W || mask.at4(n, 0, hh, ww) == 0.0;
        };
        if (bg(h - 1, w) || bg(h + 1, w) || bg(h, w - 1) || bg(h, w + 1)) {
          (*edge)[static_cast<size_t>((n * H + h) * W + w)] = 1.0;
          ++edges;
        }
      }
  *beta = 1.0 - static_cast<double>(edges) / static_cast<double>(mask.size());
}

double oracle_edge_loss(const std::vector<double>& p, const std::vector<double>& e, double beta) {
  double pos = 0, neg = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    double q = std::min(std::max(p[i], 1e-7), 1.0 - 1e-7);
    if (e[i] == 1.0)
      pos += std::log(q);
    else
      neg += std::log(1.0 - q);
  }
  return -beta * pos - (1.0 - beta) * neg;
}

Outcome criterion_loss_oracles() {
  Rng rng(20240211);
  double worst = 0;
  int instances = 24;
  for (int trial = 0; trial < instances; ++trial) {
    int h = 4 + rng.uniform_int(0, 4), w = 4 + rng.uniform_int(0, 4);
    Tensor y_logits({1, 1, h, w}), s_logits({1, 1, h, w}), y_true({1, 1, h, w});
    for (Eigen::Index i = 0; i < y_logits.size(); ++i) {
      y_logits[i] = rng.uniform(-4, 4);
      s_logits[i] = rng.uniform(-4, 4);
      y_true[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
    }
    LossWeights wts{rng.uniform(0.5, 1.5), rng.uniform(0.1, 1.0), rng.uniform(0.05, 0.3), 1e-5};

    Tape tape;
    ForwardOutput out;
    out.y_logits = tape.leaf(y_logits);
    out.s_logits = tape.leaf(s_logits);
    TotalLoss got = total_loss(out, y_true, wts);

    std::vector<double> yp, sp, yt;
    for (Eigen::Index i = 0; i < y_logits.size(); ++i) {
      yp.push_back(oracle_sigmoid(y_logits[i]));
      sp.push_back(oracle_sigmoid(s_logits[i]));
      yt.push_back(y_true[i]);
    }
    std::vector<double> edge;
    double beta;
    oracle_edge_target(y_true, &edge, &beta);

    EdgeTarget target = extract_edge_target(y_true);
    for (Eigen::Index i = 0; i < y_true.size(); ++i)
      if (target.s_true[i] != edge[static_cast<size_t>(i)])
        return {false, "edge-target mismatch against the counting oracle"};
    worst = std::max(worst, std::abs(target.beta - beta));

    double d1 = oracle_dice(yp, yt, wts.epsilon);
    double d2 = oracle_dice(sp, edge, wts.epsilon);
    double el = oracle_edge_loss(sp, edge, beta);
    double want = wts.lambda1 * d1 + wts.lambda2 * d2 + wts.lambda3 * el;
    worst = std::max({worst, std::abs(got.dice_main - d1), std::abs(got.dice_shape - d2),
                      std::abs(got.edge - el), std::abs(got.total.tensor()[0] - want)});
  }

  // bit-exact collapse of the weighted sum when the shape terms are off
  Rng rng2(7);
  Tensor y_logits({1, 1, 8, 8}), s_logits({1, 1, 8, 8}), y_true({1, 1, 8, 8});
  for (Eigen::Index i = 0; i < y_logits.size(); ++i) {
    y_logits[i] = rng2.uniform(-3, 3);
    s_logits[i] = rng2.uniform(-3, 3);
    y_true[i] = rng2.uniform() < 0.5 ? 1.0 : 0.0;
  }
  Tape tape;
  ForwardOutput out;
  out.y_logits = tape.leaf(y_logits);
  out.s_logits = tape.leaf(s_logits);
  double collapsed = total_loss(out, y_true, LossWeights{1.0, 0.0, 0.0, 1e-5}).total.tensor()[0];
  double plain = dice_loss(sigmoid(out.y_logits), y_true, 1e-5).tensor()[0];
  bool exact = collapsed == plain;

  Outcome o;
  o.pass = worst < 1e-12 && exact;
  o.detail = std::to_string(instances) + " instances, worst abs diff " + fmt(worst) +
             (exact ? ", zero-weight collapse bit-exact" : ", collapse NOT bit-exact");
  return o;
}

// ---------------------------------------------------------------- criterion 3

double brute_hausdorff(const BinaryMask& a, const BinaryMask& b) {
  std::vector<std::pair<int, int>> pa, pb;
  for (int r = 0; r < a.height; ++r)
    for (int c = 0; c < a.width; ++c) {
      if (a.at(r, c)) pa.emplace_back(r, c);
      if (b.at(r, c)) pb.emplace_back(r, c);
    }
  double worst = 0;
  auto directed = [&](const auto& from, const auto& to) {
    for (auto [r0, c0] : from) {
      double best = std::numeric_limits<double>::infinity();
      for (auto [r1, c1] : to)
        best = std::min(best, std::sqrt(double((r0 - r1) * (r0 - r1) + (c0 - c1) * (c0 - c1))));
      worst = std::max(worst, best);
    }
  };
  directed(pa, pb);
  directed(pb, pa);
  return worst;
}

Outcome criterion_metric_oracles() {
  Rng rng(31337);
  double worst_identity = 0;
  for (int trial = 0; trial < 50; ++trial) {
    double fg = rng.uniform(0.05, 0.5);
    auto draw = [&]() {
      BinaryMask m{16, 16, std::vector<uint8_t>(256, 0)};
      do {
        for (auto& v : m.values) v = rng.uniform() < fg ? 1 : 0;
      } while (m.empty_mask());
      return m;
    };
    BinaryMask a = draw(), b = draw();

    int64_t na = 0, nb = 0, ni = 0;
    for (size_t i = 0; i < a.values.size(); ++i) {
      na += a.values[i];
      nb += b.values[i];
      ni += a.values[i] & b.values[i];
    }
    double d = dice_score(a, b), j = jaccard(a, b);
    if (d != 2.0 * double(ni) / double(na + nb)) return {false, "dice differs from counting"};
    if (j != double(ni) / double(na + nb - ni)) return {false, "jaccard differs from counting"};
    if (hausdorff(a, b) != brute_hausdorff(a, b))
      return {false, "hausdorff differs from the brute-force loop"};
    worst_identity = std::max(worst_identity, std::abs(d - 2.0 * j / (1.0 + j)));
  }
  Outcome o;
  o.pass = worst_identity < 1e-12;
  o.detail = "50 pairs exact, D=2J/(1+J) worst dev " + fmt(worst_identity);
  return o;
}

// ---------------------------------------------------------------- criterion 4

Outcome criterion_schedule() {
  TrainConfig cfg;
  cfg.alpha0 = 1e-3;
  cfg.total_epochs = 300;
  bool ends = lr_schedule(0, cfg) == 1e-3 && lr_schedule(300, cfg) == 0.0;
  double worst = 0;
  for (int e = 0; e <= 300; ++e) {
    double want = 1e-3 * std::pow(1.0 - e / 300.0, 0.9);
    double got = lr_schedule(e, cfg);
    double rel = std::abs(got - want) / std::max(want, 1e-300);
    if (e < 300) worst = std::max(worst, rel);
  }
  Outcome o;
  o.pass = ends && worst < 1e-15;
  o.detail = std::string("alpha(0)=1e-3 ") + (ends ? "exact" : "WRONG") +
             ", closed-form worst rel dev " + fmt(worst);
  return o;
}

// ------------------------------------------------------- criteria 5, 7 shared

struct OverfitArtifacts {
  std::vector<Sample> samples;
  ParameterStore params;
  double final_dice = 0;
  double seconds = 0;
};

OverfitArtifacts run_overfit() {
  OverfitArtifacts art;
  SynthConfig synth;  // defaults: 64x64, jittered blobs
  synth.seed = 1;
  art.samples = generate(synth, 8);

  NetworkSpec spec;  // defaults: levels 4, base 16
  TrainConfig cfg;   // defaults: 300 epochs, batch 8, lr 1e-3
  cfg.seed = 1;
  cfg.eval_every = 100;

  auto t0 = std::chrono::steady_clock::now();
  TrainResult result = train(art.samples, {}, cfg, spec);
  art.seconds = now_seconds(t0);
  art.final_dice = result.log.back().dice;
  art.params = std::move(result.params);
  return art;
}

Outcome criterion_overfit(const OverfitArtifacts& art) {
  Outcome o;
  o.pass = art.final_dice >= 0.95 && art.seconds < 600.0;
  o.detail = "train-set mean dice " + fmt(art.final_dice) + " after 300 epochs in " +
             fmt(art.seconds) + " s";
  return o;
}

// ---------------------------------------------------------------- criterion 6

struct AblationLeg {
  double dice = 0;
  double hausdorff_dist = 0;
};

AblationLeg run_ablation_leg(const std::vector<Sample>& train_set,
                             const std::vector<Sample>& eval_set, uint64_t seed,
                             bool edge_supervision) {
  NetworkSpec spec;
  spec.levels = 3;
  spec.base_channels = 8;

  TrainConfig cfg;
  cfg.total_epochs = 200;
  cfg.eval_every = 200;
  cfg.seed = seed;
  if (!edge_supervision) {
    cfg.weights.lambda2 = 0.0;
    cfg.weights.lambda3 = 0.0;
  }
  TrainResult result = train(train_set, eval_set, cfg, spec);
  return {result.log.back().dice, result.log.back().hausdorff_dist};
}

Outcome criterion_ablation() {
  SynthConfig eval_synth;
  eval_synth.boundary_jitter = 0.8;
  eval_synth.noise_sigma = 0.05;
  eval_synth.seed = 8888;
  std::vector<Sample> eval_set = generate(eval_synth, 64);

  double full_dice = 0, full_hd = 0, ablated_dice = 0, ablated_hd = 0;
  const uint64_t seeds[] = {201, 202, 203};
  for (uint64_t s : seeds) {
    SynthConfig train_synth = eval_synth;
    train_synth.seed = s;
    std::vector<Sample> train_set = generate(train_synth, 16);
    AblationLeg full = run_ablation_leg(train_set, eval_set, s, true);
    AblationLeg ablated = run_ablation_leg(train_set, eval_set, s, false);
    full_dice += full.dice / 3;
    full_hd += full.hausdorff_dist / 3;
    ablated_dice += ablated.dice / 3;
    ablated_hd += ablated.hausdorff_dist / 3;
  }

  Outcome o;
  o.pass = full_hd <= ablated_hd && full_dice >= ablated_dice;
  o.detail = "full: dice " + fmt(full_dice) + ", hd " + fmt(full_hd) + "; no-edge: dice " +
             fmt(ablated_dice) + ", hd " + fmt(ablated_hd) + " (3-seed means, 64 held-out)";
  return o;
}

// ---------------------------------------------------------------- criterion 7

double pearson(const Tensor& a, const Tensor& b) {
  double ma = a.array().mean(), mb = b.array().mean();
  auto da = a.array() - ma, db = b.array() - mb;
  double sa = std::sqrt(da.square().mean()), sb = std::sqrt(db.square().mean());
  if (sa == 0 || sb == 0) return 0;
  return (da * db).mean() / (sa * sb);
}

Outcome criterion_attention(const OverfitArtifacts& art) {
  NetworkSpec spec;
  int satisfied = 0;
  std::string per_sample;
  for (int i = 0; i < 8; ++i) {
    Tape tape;
    ForwardOutput out = forward(tape, stack_images(art.samples, {i}), spec, art.params);
    EdgeTarget target = extract_edge_target(stack_masks(art.samples, {i}));
    double corr[3];
    for (int g = 0; g < 3; ++g) {
      Tape rt;
      Tensor resized = resize_bilinear(rt.leaf(out.alphas[static_cast<size_t>(g)].tensor()),
                                       target.s_true.dim(2), target.s_true.dim(3))
                           .tensor();
      corr[g] = pearson(resized, target.s_true);
    }
    bool ok = corr[2] > 0 && corr[0] <= corr[1] && corr[1] <= corr[2];
    satisfied += ok;
    per_sample += ok ? "+" : "-";
  }
  Outcome o;
  o.pass = satisfied >= 6;
  o.detail = std::to_string(satisfied) + "/8 samples satisfy positive gate-3 and non-decreasing "
             "progression [" + per_sample + "]";
  return o;
}

// ---------------------------------------------------------------- criterion 8

Outcome criterion_determinism_formats() {
  fs::path dir = work_dir();
  std::string notes;
  bool ok = true;
  auto expect = [&](bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      notes += (notes.empty() ? "" : "; ") + what;
    }
  };

  // deterministic training: two identical runs, bit-identical parameters
  SynthConfig synth;
  synth.size = 16;
  synth.seed = 5;
  std::vector<Sample> ds = generate(synth, 4);
  NetworkSpec spec;
  spec.levels = 3;
  spec.base_channels = 8;
  spec.shape_channels = 4;
  TrainConfig cfg;
  cfg.total_epochs = 3;
  cfg.eval_every = 3;
  cfg.batch_size = 2;
  cfg.seed = 5;
  TrainResult a = train(ds, {}, cfg, spec);
  TrainResult b = train(ds, {}, cfg, spec);
  bool same = a.params.size() == b.params.size();
  for (size_t i = 0; same && i < a.params.size(); ++i)
    for (Eigen::Index j = 0; same && j < a.params.entry(i).value.size(); ++j)
      same = a.params.entry(i).value[j] == b.params.entry(i).value[j];
  expect(same, "training not bit-deterministic");

  // checkpoint round trip, bit-exact
  AdamState state = AdamState::init(a.params);
  fs::path ck = dir / "c8.bckp";
  save_checkpoint(ck, a.params, state, 3);
  Checkpoint loaded = load_checkpoint(ck, spec);
  bool ck_same = loaded.epoch == 3;
  for (size_t i = 0; ck_same && i < a.params.size(); ++i)
    for (Eigen::Index j = 0; ck_same && j < a.params.entry(i).value.size(); ++j)
      ck_same = loaded.params.entry(i).value[j] == a.params.entry(i).value[j];
  expect(ck_same, "checkpoint round trip not bit-exact");

  // sample round trip, bit-exact
  fs::path sp = dir / "c8.bseg";
  save_sample(ds[0], sp);
  Sample back = load_sample(sp);
  bool s_same = back.image.same_shape(ds[0].image);
  for (Eigen::Index j = 0; s_same && j < back.image.size(); ++j)
    s_same = back.image[j] == ds[0].image[j] && back.mask[j] == ds[0].mask[j];
  expect(s_same, "sample round trip not bit-exact");

  // corrupt fixtures produce the specified errors
  {
    std::fstream f(sp, std::ios::in | std::ios::out | std::ios::binary);
    f.put('X');
  }
  bool magic_err = false;
  try {
    load_sample(sp);
  } catch (const std::runtime_error& e) {
    magic_err = std::string(e.what()).find("bad magic") != std::string::npos;
  }
  expect(magic_err, "corrupt sample magic not reported");

  save_checkpoint(ck, a.params, state, 3);
  const std::string& first = a.params.entry(0).name;
  fs::resize_file(ck, 16 + 2 + first.size() + 1 + 4 +
                          static_cast<uintmax_t>(a.params.entry(0).value.size()) * 8 - 4);
  bool trunc_err = false;
  try {
    load_checkpoint(ck);
  } catch (const std::runtime_error& e) {
    trunc_err = std::string(e.what()).find(first) != std::string::npos;
  }
  expect(trunc_err, "checkpoint truncation does not name the tensor");

  // evaluating predictions identical to the labels scores perfectly
  fs::path pred_dir = dir / "perfect_preds";
  fs::path data_dir = dir / "perfect_data";
  fs::create_directories(pred_dir);
  save_dataset(ds, data_dir);
  for (size_t i = 0; i < ds.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "pred_%05zu.pgm", i);
    write_mask_pgm(pred_dir / name, mask_from_tensor(stack_masks(ds, {static_cast<int>(i)}), 0));
  }
  CliOptions opts;
  opts.data_dir = data_dir.string();
  opts.pred_dir = pred_dir.string();
  std::ostringstream captured;
  std::streambuf* old = std::cout.rdbuf(captured.rdbuf());
  int rc = run_eval(opts);
  std::cout.rdbuf(old);
  std::string text = captured.str();
  expect(rc == 0 && text.find("Dice 1.000+-0.000") != std::string::npos &&
             text.find("Jaccard 1.000+-0.000") != std::string::npos &&
             text.find("Hausdorff 0.000+-0.000") != std::string::npos,
         "perfect-prediction eval did not print 1.000+-0.000 rows");

  Outcome o;
  o.pass = ok;
  o.detail = ok ? "training, checkpoints, sample files bit-exact; fixtures report errors"
              : notes;
  return o;
}

}  // namespace

int main() {
  std::printf("bseg acceptance suite\n");

  report(1, "gradient suite", criterion_gradients());
  report(2, "loss oracles", criterion_loss_oracles());
  report(3, "metric oracles", criterion_metric_oracles());
  report(4, "learning-rate schedule", criterion_schedule());

  OverfitArtifacts art = run_overfit();
  report(5, "overfit run", criterion_overfit(art));
  report(6, "ablation direction", criterion_ablation());
  report(7, "attention progression", criterion_attention(art));
  report(8, "determinism and formats", criterion_determinism_formats());

  if (g_failures > 0) {
    std::printf("acceptance: %d criterion(s) FAILED\n", g_failures);
    return 1;
  }
  std::printf("acceptance: all 8 criteria PASS\n");
  return 0;
}
