#pragma once

#include "bseg/runio.hpp"

#include <cstdint>
#include <string>

namespace bseg {

// One flat options bag shared by every subcommand; precedence is
// defaults < config file < command-line flags.
struct CliOptions {
  uint64_t seed = 0;
  std::string config_file;
  std::string out_dir = "out";

  // network
  int size = 64;
  int levels = 4;
  int base_channels = 16;
  int shape_channels = 8;

  // loss / schedule
  double lambda1 = 1.0;
  double lambda2 = 0.5;
  double lambda3 = 0.1;
  int epochs = 300;
  int batch_size = 8;
  double lr = 1e-3;
  int eval_every = 25;
  int stop_epoch = INT32_MAX;
  bool per_image_beta = false;
  bool hd95 = false;

  // synthetic data
  int n = 64;
  double contrast = 0.6;
  double noise_sigma = 0.03;
  double jitter = 0.3;
  int blobs_min = 1;
  int blobs_max = 3;

  // paths
  std::string data_dir;
  std::string val_dir;
  std::string checkpoint;
  std::string pred_dir;
  std::string input_file;
  std::string resume;
};

// Applies a key=value config file; keys mirror the long flag names.
void apply_config_file(CliOptions& opts, const std::string& path);

NetworkSpec network_spec_from(const CliOptions& opts);
SynthConfig synth_config_from(const CliOptions& opts);
TrainConfig train_config_from(const CliOptions& opts);

int run_gen(const CliOptions& opts);
int run_train(const CliOptions& opts);
int run_eval(const CliOptions& opts);
int run_predict(const CliOptions& opts);
int run_attn(const CliOptions& opts);
int run_gradcheck(const CliOptions& opts);

}  // namespace bseg
