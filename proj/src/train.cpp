#include "bseg/train.hpp"

#include "bseg/metrics.hpp"
#include "bseg/rng.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

static_assert(std::endian::native == std::endian::little,
              "checkpoint and sample containers are little-endian");

namespace bseg {

namespace {

constexpr uint64_t kShuffleStream = 0x73687566;  // data order, independent of init
constexpr char kMagic[4] = {'B', 'C', 'K', 'P'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

void write_u16(std::ostream& os, uint16_t v) {
  os.write(reinterpret_cast<const char*>(&v), 2);
}

uint32_t read_u32(std::istream& is, const std::string& what) {
  uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4))
    throw std::runtime_error("checkpoint truncated while reading " + what);
  return v;
}

uint16_t read_u16(std::istream& is, const std::string& what) {
  uint16_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 2))
    throw std::runtime_error("checkpoint truncated while reading " + what);
  return v;
}

void write_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  if (name.size() > UINT16_MAX) throw std::invalid_argument("tensor name too long: " + name);
  write_u16(os, static_cast<uint16_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  uint8_t rank = static_cast<uint8_t>(t.rank());
  os.write(reinterpret_cast<const char*>(&rank), 1);
  for (int d : t.shape()) write_u32(os, static_cast<uint32_t>(d));
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
}

std::pair<std::string, Tensor> read_tensor(std::istream& is, size_t index) {
  std::string slot = "tensor " + std::to_string(index);
  uint16_t name_len = read_u16(is, "name length of " + slot);
  std::string name(name_len, '\0');
  if (!is.read(name.data(), name_len))
    throw std::runtime_error("checkpoint truncated while reading name of " + slot);
  uint8_t rank = 0;
  if (!is.read(reinterpret_cast<char*>(&rank), 1))
    throw std::runtime_error("checkpoint truncated while reading tensor '" + name + "'");
  std::vector<int> shape(rank);
  for (auto& d : shape) d = static_cast<int>(read_u32(is, "dims of tensor '" + name + "'"));
  Tensor t(shape);
  if (!is.read(reinterpret_cast<char*>(t.data()),
               static_cast<std::streamsize>(t.size() * sizeof(double))))
    throw std::runtime_error("checkpoint truncated while reading tensor '" + name + "'");
  return {std::move(name), std::move(t)};
}

struct MetricAccumulator {
  std::vector<double> dice, jacc, hd;
  int hd_undefined = 0;

  void add(const BinaryMask& pred, const BinaryMask& truth, bool use_hd95) {
    dice.push_back(dice_score(pred, truth));
    jacc.push_back(jaccard(pred, truth));
    try {
      hd.push_back(use_hd95 ? hausdorff95(pred, truth) : hausdorff(pred, truth));
    } catch (const HausdorffUndefined&) {
      ++hd_undefined;
    }
  }
};

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(),
                         std::numeric_limits<double>::quiet_NaN()};
  double m = 0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  s = std::sqrt(s / static_cast<double>(v.size()));
  return {m, s};
}

}  // namespace

double lr_schedule(int epoch, const TrainConfig& config) {
  if (epoch < 0 || epoch > config.total_epochs)
    throw std::invalid_argument("lr_schedule: epoch " + std::to_string(epoch) +
                                " outside [0, " + std::to_string(config.total_epochs) + "]");
  double frac = 1.0 - static_cast<double>(epoch) / static_cast<double>(config.total_epochs);
  return config.alpha0 * std::pow(frac, 0.9);
}

AdamState AdamState::init(const ParameterStore& params) {
  AdamState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    s.m.push_back(Tensor::zeros(params.entry(i).value.shape()));
    s.v.push_back(Tensor::zeros(params.entry(i).value.shape()));
  }
  return s;
}

void adam_step(ParameterStore& params, AdamState& state, double lr) {
  if (state.m.size() != params.size())
    throw std::logic_error("adam_step: state does not match parameter store");
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params.entry(i).grad.all_finite())
      throw std::runtime_error("adam_step: non-finite gradient for parameter '" +
                               params.entry(i).name + "'");
  }
  state.step += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    const Array& g = params.entry(i).grad.array();
    Array& m = state.m[i].array();
    Array& v = state.v[i].array();
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.square();
    params.entry(i).value.array() -= lr * (m / bc1) / ((v / bc2).sqrt() + state.eps);
  }
}

EvalSummary evaluate(const ParameterStore& params, const NetworkSpec& spec,
                     const std::vector<Sample>& samples, int batch_size, bool use_hd95) {
  if (samples.empty()) throw std::invalid_argument("evaluate: empty sample set");
  MetricAccumulator acc;
  const int n = static_cast<int>(samples.size());
  for (int begin = 0; begin < n; begin += batch_size) {
    std::vector<int> chunk;
    for (int i = begin; i < std::min(begin + batch_size, n); ++i) chunk.push_back(i);
    Tensor x = stack_images(samples, chunk);
    Tape tape;
    ForwardOutput out = forward(tape, x, spec, params);
    Tape prob_tape;  // cheap: sigmoid only
    Tensor probs = sigmoid(prob_tape.leaf(out.y_logits.tensor())).tensor();
    for (size_t j = 0; j < chunk.size(); ++j) {
      BinaryMask pred = threshold_mask(probs, static_cast<int>(j));
      BinaryMask truth =
          mask_from_tensor(stack_masks(samples, {chunk[j]}), 0);
      acc.add(pred, truth, use_hd95);
    }
  }
  EvalSummary s;
  s.samples = n;
  s.hd_undefined = acc.hd_undefined;
  std::tie(s.dice_mean, s.dice_std) = mean_std(acc.dice);
  std::tie(s.jaccard_mean, s.jaccard_std) = mean_std(acc.jacc);
  std::tie(s.hausdorff_mean, s.hausdorff_std) = mean_std(acc.hd);
  return s;
}

TrainResult train(const std::vector<Sample>& train_set, const std::vector<Sample>& eval_set,
                  const TrainConfig& config, const NetworkSpec& spec) {
  if (train_set.empty()) throw std::invalid_argument("train: empty dataset");
  if (config.alpha0 <= 0 || config.total_epochs < 1 || config.batch_size < 1 ||
      config.eval_every < 1)
    throw std::invalid_argument("train: invalid configuration");

  ParameterStore params;
  AdamState state;
  int start_epoch = 0;
  if (!config.resume_path.empty()) {
    Checkpoint ckpt = load_checkpoint(config.resume_path, spec);
    params = std::move(ckpt.params);
    state = std::move(ckpt.state);
    start_epoch = ckpt.epoch;
  } else {
    params = init_parameters(spec, config.seed);
    state = AdamState::init(params);
  }

  const uint64_t shuffle_seed = mix_seed(config.seed, kShuffleStream);
  const int n = static_cast<int>(train_set.size());
  auto t0 = std::chrono::steady_clock::now();

  TrainResult result;
  const int end_epoch = std::min(config.total_epochs, config.stop_epoch);
  for (int epoch = start_epoch; epoch < end_epoch; ++epoch) {
    double lr = lr_schedule(epoch, config);

    std::vector<int> order(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng shuffle_rng(mix_seed(shuffle_seed, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());

    double sum_total = 0, sum_main = 0, sum_shape = 0, sum_edge = 0;
    int steps = 0;
    for (int begin = 0; begin < n; begin += config.batch_size) {
      std::vector<int> chunk(order.begin() + begin,
                             order.begin() + std::min(begin + config.batch_size, n));
      Tensor x = stack_images(train_set, chunk);
      Tensor y = stack_masks(train_set, chunk);

      Tape tape;
      BoundParams bound(tape, params);
      ForwardOutput out = forward(tape, x, spec, bound);
      TotalLoss loss = total_loss(out, y, config.weights, config.per_image_beta);
      double loss_value = loss.total.tensor()[0];
      if (!std::isfinite(loss_value))
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                 "; last checkpoint retained");
      tape.backward(loss.total);
      bound.write_grads(params);
      adam_step(params, state, lr);

      sum_total += loss_value;
      sum_main += loss.dice_main;
      sum_shape += loss.dice_shape;
      sum_edge += loss.edge;
      ++steps;
    }

    bool at_eval = (epoch + 1) % config.eval_every == 0 || epoch + 1 == end_epoch;
    if (at_eval) {
      EvalRow row;
      row.epoch = epoch;
      row.lr = lr;
      row.loss_total = sum_total / steps;
      row.loss_dice_main = sum_main / steps;
      row.loss_dice_shape = sum_shape / steps;
      row.loss_edge = sum_edge / steps;
      const std::vector<Sample>& eval_samples = eval_set.empty() ? train_set : eval_set;
      EvalSummary summary = evaluate(params, spec, eval_samples, config.batch_size, config.use_hd95);
      row.dice = summary.dice_mean;
      row.jaccard_index = summary.jaccard_mean;
      row.hausdorff_dist = summary.hausdorff_mean;
      row.hd_undefined = summary.hd_undefined;
      row.seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      result.log.push_back(row);
      if (!config.checkpoint_path.empty())
        save_checkpoint(config.checkpoint_path, params, state, epoch + 1);
    }
  }

  result.params = std::move(params);
  return result;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params,
                     const AdamState& state, int epoch) {
  if (state.m.size() != params.size())
    throw std::logic_error("save_checkpoint: state does not match parameter store");
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + tmp.string());
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    write_u32(os, static_cast<uint32_t>(epoch));
    write_u32(os, static_cast<uint32_t>(params.size() * 3 + 1));
    for (size_t i = 0; i < params.size(); ++i)
      write_tensor(os, params.entry(i).name, params.entry(i).value);
    for (size_t i = 0; i < params.size(); ++i) {
      write_tensor(os, params.entry(i).name + ".m", state.m[i]);
      write_tensor(os, params.entry(i).name + ".v", state.v[i]);
    }
    write_tensor(os, "adam.step", Tensor::scalar(static_cast<double>(state.step)));
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path.string());
  uint32_t version = read_u32(is, "version");
  if (version != kVersion)
    throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.epoch = static_cast<int>(read_u32(is, "epoch"));
  uint32_t count = read_u32(is, "tensor count");

  std::vector<std::pair<std::string, Tensor>> tensors;
  tensors.reserve(count);
  for (uint32_t i = 0; i < count; ++i) tensors.push_back(read_tensor(is, i));

  std::unordered_map<std::string, Tensor*> by_name;
  for (auto& [name, t] : tensors) by_name[name] = &t;

  auto is_moment = [](const std::string& name) {
    return name.size() > 2 &&
           (name.compare(name.size() - 2, 2, ".m") == 0 ||
            name.compare(name.size() - 2, 2, ".v") == 0);
  };
  for (auto& [name, t] : tensors) {
    if (name == "adam.step" || is_moment(name)) continue;
    ckpt.params.add(name, t);
  }
  for (size_t i = 0; i < ckpt.params.size(); ++i) {
    const std::string& name = ckpt.params.entry(i).name;
    for (const char* suffix : {".m", ".v"}) {
      auto it = by_name.find(name + suffix);
      if (it == by_name.end())
        throw std::runtime_error("load_checkpoint: missing tensor '" + name + suffix + "'");
      if (!it->second->same_shape(ckpt.params.entry(i).value))
        throw std::runtime_error("load_checkpoint: shape mismatch for tensor '" + name + suffix +
                                 "'");
      (suffix[1] == 'm' ? ckpt.state.m : ckpt.state.v).push_back(*it->second);
    }
  }
  auto step_it = by_name.find("adam.step");
  if (step_it == by_name.end())
    throw std::runtime_error("load_checkpoint: missing tensor 'adam.step'");
  ckpt.state.step = static_cast<int64_t>((*step_it->second)[0]);
  return ckpt;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const NetworkSpec& spec) {
  Checkpoint ckpt = load_checkpoint(path);
  ParameterStore expected = init_parameters(spec, 0);
  if (expected.size() != ckpt.params.size())
    throw std::runtime_error("load_checkpoint: parameter count mismatch against network spec");
  for (size_t i = 0; i < expected.size(); ++i) {
    const auto& want = expected.entry(i);
    const auto& got = ckpt.params.entry(i);
    if (want.name != got.name)
      throw std::runtime_error("load_checkpoint: parameter order mismatch at '" + got.name +
                               "', expected '" + want.name + "'");
    if (!want.value.same_shape(got.value))
      throw std::runtime_error("load_checkpoint: shape mismatch for parameter '" + got.name +
                               "': file has " + got.value.shape_str() + ", spec needs " +
                               want.value.shape_str());
  }
  return ckpt;
}

}  // namespace bseg
