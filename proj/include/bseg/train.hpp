#pragma once

#include "bseg/dataset.hpp"
#include "bseg/losses.hpp"
#include "bseg/network.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace bseg {

struct TrainConfig {
  double alpha0 = 1e-3;  // initial learning rate
  int total_epochs = 300;
  int batch_size = 8;
  LossWeights weights{};
  uint64_t seed = 0;
  int eval_every = 25;
  std::filesystem::path checkpoint_path;  // empty: no checkpoints written
  std::filesystem::path resume_path;      // empty: fresh start
  bool per_image_beta = false;
  bool use_hd95 = false;
  // Staged runs: stop (with a checkpoint) after this epoch while keeping the
  // schedule anchored to total_epochs; resume continues bit-exactly.
  int stop_epoch = INT32_MAX;
};

// Polynomial decay: alpha0 * (1 - e/Ne)^0.9, defined on 0 <= e <= Ne.
double lr_schedule(int epoch, const TrainConfig& config);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step = 0;
  std::vector<Tensor> m;  // parallel to the parameter store
  std::vector<Tensor> v;

  static AdamState init(const ParameterStore& params);
};

// Bias-corrected Adam update from the gradients currently in the store.
// A non-finite gradient aborts the step, naming the parameter.
void adam_step(ParameterStore& params, AdamState& state, double lr);

struct EvalRow {
  int epoch = 0;
  double lr = 0;
  double loss_total = 0, loss_dice_main = 0, loss_dice_shape = 0, loss_edge = 0;
  double dice = 0, jaccard_index = 0, hausdorff_dist = 0;
  int hd_undefined = 0;  // samples where the distance was undefined
  double seconds = 0;
};

struct TrainResult {
  ParameterStore params;
  std::vector<EvalRow> log;
};

struct EvalSummary {
  double dice_mean = 0, dice_std = 0;
  double jaccard_mean = 0, jaccard_std = 0;
  double hausdorff_mean = 0, hausdorff_std = 0;
  int hd_undefined = 0;
  int samples = 0;
};

EvalSummary evaluate(const ParameterStore& params, const NetworkSpec& spec,
                     const std::vector<Sample>& samples, int batch_size, bool use_hd95);

// Epochs of seeded shuffled mini-batches; per-epoch learning rate; metric
// rows at every eval point. Deterministic given (datasets, config, spec).
TrainResult train(const std::vector<Sample>& train_set, const std::vector<Sample>& eval_set,
                  const TrainConfig& config, const NetworkSpec& spec);

// Checkpoint container: "BCKP" magic, u32 version, u32 epoch, u32 tensor
// count, then per tensor: u16 name length, name, u8 rank, u32 dims, float64
// payload. Adam moments ride along as "<param>.m" / "<param>.v".
void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params,
                     const AdamState& state, int epoch);

struct Checkpoint {
  ParameterStore params;
  AdamState state;
  int epoch = 0;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

// Loads and validates names/shapes against a freshly registered store.
Checkpoint load_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec);

}  // namespace bseg
