#include "bseg/commands.hpp"

#include "bseg/gradcheck.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <stdexcept>

namespace bseg {

namespace fs = std::filesystem;

namespace {

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

void require_path(const std::string& p, const char* what) {
  if (p.empty()) throw std::runtime_error(std::string(what) + " is required");
  if (!fs::exists(p)) throw std::runtime_error(std::string(what) + " not found: " + p);
}

std::vector<std::pair<std::string, std::string>> effective_config(const CliOptions& o,
                                                                  const std::string& cmd) {
  std::vector<std::pair<std::string, std::string>> c;
  c.emplace_back("command", cmd);
  c.emplace_back("seed", std::to_string(o.seed));
  c.emplace_back("size", std::to_string(o.size));
  c.emplace_back("levels", std::to_string(o.levels));
  c.emplace_back("base-channels", std::to_string(o.base_channels));
  c.emplace_back("shape-channels", std::to_string(o.shape_channels));
  c.emplace_back("lambda1", format_double(o.lambda1));
  c.emplace_back("lambda2", format_double(o.lambda2));
  c.emplace_back("lambda3", format_double(o.lambda3));
  c.emplace_back("epochs", std::to_string(o.epochs));
  c.emplace_back("batch-size", std::to_string(o.batch_size));
  c.emplace_back("lr", format_double(o.lr));
  c.emplace_back("eval-every", std::to_string(o.eval_every));
  c.emplace_back("per-image-beta", o.per_image_beta ? "1" : "0");
  c.emplace_back("hd95", o.hd95 ? "1" : "0");
  c.emplace_back("n", std::to_string(o.n));
  c.emplace_back("contrast", format_double(o.contrast));
  c.emplace_back("noise-sigma", format_double(o.noise_sigma));
  c.emplace_back("jitter", format_double(o.jitter));
  c.emplace_back("blobs-min", std::to_string(o.blobs_min));
  c.emplace_back("blobs-max", std::to_string(o.blobs_max));
  c.emplace_back("data-dir", o.data_dir);
  c.emplace_back("val-dir", o.val_dir);
  return c;
}

}  // namespace

void apply_config_file(CliOptions& o, const std::string& path) {
  for (const auto& [key, value] : parse_config_file(path)) {
    if (key == "seed") o.seed = std::stoull(value);
    else if (key == "out-dir") o.out_dir = value;
    else if (key == "size") o.size = std::stoi(value);
    else if (key == "levels") o.levels = std::stoi(value);
    else if (key == "base-channels") o.base_channels = std::stoi(value);
    else if (key == "shape-channels") o.shape_channels = std::stoi(value);
    else if (key == "lambda1") o.lambda1 = std::stod(value);
    else if (key == "lambda2") o.lambda2 = std::stod(value);
    else if (key == "lambda3") o.lambda3 = std::stod(value);
    else if (key == "epochs") o.epochs = std::stoi(value);
    else if (key == "batch-size") o.batch_size = std::stoi(value);
    else if (key == "lr") o.lr = std::stod(value);
    else if (key == "eval-every") o.eval_every = std::stoi(value);
    else if (key == "stop-epoch") o.stop_epoch = std::stoi(value);
    else if (key == "per-image-beta") o.per_image_beta = value != "0";
    else if (key == "hd95") o.hd95 = value != "0";
    else if (key == "n") o.n = std::stoi(value);
    else if (key == "contrast") o.contrast = std::stod(value);
    else if (key == "noise-sigma") o.noise_sigma = std::stod(value);
    else if (key == "jitter") o.jitter = std::stod(value);
    else if (key == "blobs-min") o.blobs_min = std::stoi(value);
    else if (key == "blobs-max") o.blobs_max = std::stoi(value);
    else if (key == "data-dir") o.data_dir = value;
    else if (key == "val-dir") o.val_dir = value;
    else if (key == "checkpoint") o.checkpoint = value;
    else if (key == "pred-dir") o.pred_dir = value;
    else if (key == "input") o.input_file = value;
    else if (key == "resume") o.resume = value;
    else throw std::runtime_error("config: unknown key '" + key + "' in " + path);
  }
}

NetworkSpec network_spec_from(const CliOptions& o) {
  NetworkSpec spec;
  spec.levels = o.levels;
  spec.base_channels = o.base_channels;
  spec.shape_channels = o.shape_channels;
  return spec;
}

SynthConfig synth_config_from(const CliOptions& o) {
  SynthConfig cfg;
  cfg.size = o.size;
  cfg.blob_count_min = o.blobs_min;
  cfg.blob_count_max = o.blobs_max;
  cfg.contrast = o.contrast;
  cfg.noise_sigma = o.noise_sigma;
  cfg.boundary_jitter = o.jitter;
  cfg.seed = o.seed;
  return cfg;
}

TrainConfig train_config_from(const CliOptions& o) {
  TrainConfig cfg;
  cfg.alpha0 = o.lr;
  cfg.total_epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.weights = LossWeights{o.lambda1, o.lambda2, o.lambda3, 1e-5};
  cfg.seed = o.seed;
  cfg.eval_every = o.eval_every;
  cfg.stop_epoch = o.stop_epoch;
  cfg.per_image_beta = o.per_image_beta;
  cfg.use_hd95 = o.hd95;
  if (!o.resume.empty()) cfg.resume_path = o.resume;
  return cfg;
}

int run_gen(const CliOptions& opts) {
  std::vector<Sample> samples = generate(synth_config_from(opts), opts.n);
  save_dataset(samples, opts.out_dir);
  std::cout << "wrote " << samples.size() << " samples to " << opts.out_dir << "\n";
  return 0;
}

int run_train(const CliOptions& opts) {
  require_path(opts.data_dir, "--data-dir");
  std::vector<Sample> train_set = load_dataset(opts.data_dir);
  std::vector<Sample> val_set;
  if (!opts.val_dir.empty()) {
    require_path(opts.val_dir, "--val-dir");
    val_set = load_dataset(opts.val_dir);
  }

  fs::create_directories(opts.out_dir);
  TrainConfig cfg = train_config_from(opts);
  cfg.checkpoint_path =
      opts.checkpoint.empty() ? fs::path(opts.out_dir) / "model.bckp" : fs::path(opts.checkpoint);
  NetworkSpec spec = network_spec_from(opts);

  TrainResult result = train(train_set, val_set, cfg, spec);

  RunManifest manifest;
  manifest.config = effective_config(opts, "train");
  manifest.config.emplace_back("checkpoint", cfg.checkpoint_path.string());
  manifest.config.emplace_back("eval-set", opts.val_dir.empty() ? "train" : "val");
  manifest.rows = result.log;
  manifest.write(fs::path(opts.out_dir) / "run_manifest.txt");

  const EvalRow& last = result.log.back();
  std::cout << "trained " << cfg.total_epochs << " epochs; final loss "
            << format_double(last.loss_total) << ", dice " << fmt3(last.dice) << "\n";
  std::cout << "checkpoint: " << cfg.checkpoint_path.string() << "\n";
  return 0;
}

int run_eval(const CliOptions& opts) {
  require_path(opts.data_dir, "--data-dir");
  std::vector<Sample> samples = load_dataset(opts.data_dir);

  EvalSummary s;
  if (!opts.pred_dir.empty()) {
    // Compare stored prediction masks against the dataset labels.
    require_path(opts.pred_dir, "--pred-dir");
    std::vector<double> dice, jacc, hd;
    int undefined = 0;
    for (size_t i = 0; i < samples.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "pred_%05zu.pgm", i);
      BinaryMask pred = mask_from_pgm(fs::path(opts.pred_dir) / name);
      BinaryMask truth = mask_from_tensor(stack_masks(samples, {static_cast<int>(i)}), 0);
      dice.push_back(dice_score(pred, truth));
      jacc.push_back(jaccard(pred, truth));
      try {
        hd.push_back(opts.hd95 ? hausdorff95(pred, truth) : hausdorff(pred, truth));
      } catch (const HausdorffUndefined&) {
        ++undefined;
      }
    }
    auto stats = [](const std::vector<double>& v) {
      double m = 0;
      for (double x : v) m += x;
      m /= v.empty() ? 1 : static_cast<double>(v.size());
      double sd = 0;
      for (double x : v) sd += (x - m) * (x - m);
      sd = v.empty() ? 0 : std::sqrt(sd / static_cast<double>(v.size()));
      return std::pair<double, double>(m, sd);
    };
    std::tie(s.dice_mean, s.dice_std) = stats(dice);
    std::tie(s.jaccard_mean, s.jaccard_std) = stats(jacc);
    std::tie(s.hausdorff_mean, s.hausdorff_std) = stats(hd);
    s.hd_undefined = undefined;
    s.samples = static_cast<int>(samples.size());
  } else {
    require_path(opts.checkpoint, "--checkpoint");
    NetworkSpec spec = network_spec_from(opts);
    Checkpoint ckpt = load_checkpoint(opts.checkpoint, spec);
    s = evaluate(ckpt.params, spec, samples, opts.batch_size, opts.hd95);
  }

  std::cout << "samples " << s.samples << "\n";
  std::cout << "Dice " << fmt3(s.dice_mean) << "+-" << fmt3(s.dice_std) << "\n";
  std::cout << "Jaccard " << fmt3(s.jaccard_mean) << "+-" << fmt3(s.jaccard_std) << "\n";
  std::cout << (opts.hd95 ? "Hausdorff95 " : "Hausdorff ") << fmt3(s.hausdorff_mean) << "+-"
            << fmt3(s.hausdorff_std) << "\n";
  if (s.hd_undefined > 0)
    std::cout << "hausdorff undefined for " << s.hd_undefined << " samples\n";
  return 0;
}

int run_predict(const CliOptions& opts) {
  require_path(opts.data_dir, "--data-dir");
  require_path(opts.checkpoint, "--checkpoint");
  std::vector<Sample> samples = load_dataset(opts.data_dir);
  NetworkSpec spec = network_spec_from(opts);
  Checkpoint ckpt = load_checkpoint(opts.checkpoint, spec);
  fs::create_directories(opts.out_dir);

  const int n = static_cast<int>(samples.size());
  for (int begin = 0; begin < n; begin += opts.batch_size) {
    std::vector<int> chunk;
    for (int i = begin; i < std::min(begin + opts.batch_size, n); ++i) chunk.push_back(i);
    Tape tape;
    ForwardOutput out = forward(tape, stack_images(samples, chunk), spec, ckpt.params);
    Tape sig_tape;
    Tensor probs = sigmoid(sig_tape.leaf(out.y_logits.tensor())).tensor();
    for (size_t j = 0; j < chunk.size(); ++j) {
      char name[32];
      std::snprintf(name, sizeof(name), "pred_%05d.pgm", chunk[j]);
      write_mask_pgm(fs::path(opts.out_dir) / name,
                     threshold_mask(probs, static_cast<int>(j)));
    }
  }
  std::cout << "wrote " << n << " prediction masks to " << opts.out_dir << "\n";
  return 0;
}

int run_attn(const CliOptions& opts) {
  require_path(opts.input_file, "--input");
  require_path(opts.checkpoint, "--checkpoint");
  Sample sample = load_sample(opts.input_file);
  NetworkSpec spec = network_spec_from(opts);
  Checkpoint ckpt = load_checkpoint(opts.checkpoint, spec);
  fs::create_directories(opts.out_dir);

  Tensor x({1, 1, sample.image.dim(1), sample.image.dim(2)});
  std::copy_n(sample.image.data(), sample.image.size(), x.data());
  Tape tape;
  ForwardOutput out = forward(tape, x, spec, ckpt.params);

  write_gray_pgm(fs::path(opts.out_dir) / "input.pgm", x, 0);
  for (size_t g = 0; g < out.alphas.size(); ++g) {
    std::string name = "attn_gate" + std::to_string(g + 1) + ".pgm";
    write_gray_pgm(fs::path(opts.out_dir) / name, out.alphas[g].tensor(), 0);
  }
  std::cout << "wrote " << out.alphas.size() << " attention maps to " << opts.out_dir << "\n";
  return 0;
}

int run_gradcheck(const CliOptions& opts) {
  std::vector<GradCheckReport> reports = gradcheck_suite(opts.seed);
  bool all_pass = true;
  double worst = 0;
  for (const GradCheckReport& r : reports) {
    all_pass = all_pass && r.pass;
    worst = std::max(worst, r.max_rel_err);
    std::printf("%-28s %s  max_rel_err %.3e (tol %.0e)\n", r.name.c_str(),
                r.pass ? "PASS" : "FAIL", r.max_rel_err, r.tolerance);
  }
  std::printf("gradcheck %s: %zu checks, worst %.3e\n", all_pass ? "PASS" : "FAIL",
              reports.size(), worst);
  return all_pass ? 0 : 1;
}

}  // namespace bseg
