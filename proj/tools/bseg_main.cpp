#include "bseg/commands.hpp"

#include <CLI11.hpp>

#include <exception>
#include <iostream>

namespace {

using bseg::CliOptions;

void add_common_flags(CLI::App* cmd, CliOptions& o) {
  cmd->add_option("--seed", o.seed, "Master seed for all randomness");
  cmd->add_option("--config", o.config_file, "key=value config file (flags override it)");
  cmd->add_option("--out-dir", o.out_dir, "Output directory");
  cmd->add_option("--size", o.size, "Image size");
  cmd->add_option("--levels", o.levels, "Encoder resolution levels");
  cmd->add_option("--base-channels", o.base_channels, "Channels at the first level");
  cmd->add_option("--shape-channels", o.shape_channels, "Shape-stream width");
  cmd->add_option("--lambda1", o.lambda1, "Main-stream Dice weight");
  cmd->add_option("--lambda2", o.lambda2, "Shape-stream Dice weight");
  cmd->add_option("--lambda3", o.lambda3, "Boundary cross-entropy weight");
  cmd->add_option("--epochs", o.epochs, "Total training epochs");
  cmd->add_option("--batch-size", o.batch_size, "Mini-batch size");
  cmd->add_option("--lr", o.lr, "Initial learning rate");
  cmd->add_flag("--hd95", o.hd95, "Report 95th-percentile Hausdorff distance");
}

}  // namespace

int main(int argc, char** argv) {
  CliOptions opts;

  // Config-file precedence: defaults, then file, then flags. The file path
  // is picked out first so the flag parse below can override its values.
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      try {
        bseg::apply_config_file(opts, argv[i + 1]);
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
      }
    }
  }

  CLI::App app{"bseg: boundary-aware segmentation at desk scale"};
  app.require_subcommand(1);

  CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic dataset");
  add_common_flags(gen, opts);
  gen->add_option("--n", opts.n, "Number of samples");
  gen->add_option("--contrast", opts.contrast, "Blob intensity contrast");
  gen->add_option("--noise-sigma", opts.noise_sigma, "Additive Gaussian noise sigma");
  gen->add_option("--jitter", opts.jitter, "Boundary perturbation strength");
  gen->add_option("--blobs-min", opts.blobs_min, "Minimum blob count");
  gen->add_option("--blobs-max", opts.blobs_max, "Maximum blob count");

  CLI::App* train = app.add_subcommand("train", "Train on a dataset directory");
  add_common_flags(train, opts);
  train->add_option("--data-dir", opts.data_dir, "Training dataset directory");
  train->add_option("--val-dir", opts.val_dir, "Held-out dataset for metric rows");
  train->add_option("--checkpoint", opts.checkpoint, "Checkpoint path to write");
  train->add_option("--resume", opts.resume, "Checkpoint to resume from");
  train->add_option("--eval-every", opts.eval_every, "Epochs between metric rows");
  train->add_option("--stop-epoch", opts.stop_epoch,
                    "Checkpoint and stop after this epoch (resumable staged runs)");
  train->add_flag("--per-image-beta", opts.per_image_beta,
                  "Class-balance the edge loss per image instead of per batch");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint or stored predictions");
  add_common_flags(eval, opts);
  eval->add_option("--data-dir", opts.data_dir, "Dataset with reference masks");
  eval->add_option("--checkpoint", opts.checkpoint, "Checkpoint to evaluate");
  eval->add_option("--pred-dir", opts.pred_dir, "Prediction masks to score instead");

  CLI::App* predict = app.add_subcommand("predict", "Write predicted masks as PGM");
  add_common_flags(predict, opts);
  predict->add_option("--data-dir", opts.data_dir, "Dataset to predict on");
  predict->add_option("--checkpoint", opts.checkpoint, "Checkpoint to load");

  CLI::App* attn = app.add_subcommand("attn", "Write per-gate attention maps as PGM");
  add_common_flags(attn, opts);
  attn->add_option("--input", opts.input_file, "Sample file to inspect");
  attn->add_option("--checkpoint", opts.checkpoint, "Checkpoint to load");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient report");
  add_common_flags(gradcheck, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "error: " << e.what() << "\n";
    return e.get_exit_code();
  }

  try {
    if (gen->parsed()) return bseg::run_gen(opts);
    if (train->parsed()) return bseg::run_train(opts);
    if (eval->parsed()) return bseg::run_eval(opts);
    if (predict->parsed()) return bseg::run_predict(opts);
    if (attn->parsed()) return bseg::run_attn(opts);
    if (gradcheck->parsed()) return bseg::run_gradcheck(opts);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
