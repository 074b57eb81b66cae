// Copyright 2026 The Countnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// countnet: train, evaluate and stream counter networks.
//
// Exit codes: 0 success, 1 usage or runtime error, 2 check failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "countnet/countnet.hpp"

namespace {

using namespace countnet;

constexpr int kExitUsage = 1;
constexpr int kExitCheckFailed = 2;

struct TrainFlags {
  std::string data_dir;
  std::string arch = "784-300-100-10";
  std::string activation = "drelu";
  int32_t lambda = 64;
  std::optional<double> lr;
  int32_t batch = 200;
  int32_t epochs = 40;
  double target_val_error = 0;
  int32_t patience = 0;
  double sigmoid_steepness = TrainConfig{}.sigmoid_steepness;
  double logit_scale = TrainConfig{}.logit_scale;
  double bias_penalty = TrainConfig{}.bias_penalty_weight;
  size_t train_count = 50000;
  uint64_t seed = 1;
  std::string out = "model.json";
  std::string checkpoint;
};

ActivationKind parse_activation(const std::string& name, int32_t lambda) {
  if (name == "binary") return ActivationKind::binary();
  if (name == "drelu") {
    ActivationKind a = ActivationKind::drelu(lambda);
    a.validate();
    return a;
  }
  throw CLI::ValidationError("--activation", "expected binary or drelu");
}

int cmd_train(const TrainFlags& f) {
  const NetworkSpec spec = parse_arch(f.arch, parse_activation(f.activation, f.lambda));
  TrainConfig cfg;
  cfg.learning_rate = f.lr.value_or(default_learning_rate(spec));
  cfg.batch_size = f.batch;
  cfg.epochs = f.epochs;
  cfg.target_val_error = f.target_val_error;
  cfg.patience = f.patience;
  cfg.sigmoid_steepness = f.sigmoid_steepness;
  cfg.logit_scale = f.logit_scale;
  cfg.bias_penalty_weight = f.bias_penalty;
  cfg.seed = f.seed;
  cfg.validate();
  const MnistSplits data = load_mnist(resolve_data_dir(f.data_dir), f.train_count);
  std::cout << "seed " << f.seed << " arch " << f.arch << " activation "
            << f.activation << " lr " << cfg.learning_rate << " train "
            << data.train.size() << " val " << data.validation.size() << "\n";
  auto res = fit<float>(spec, cfg, data.train, data.validation,
                        [](const EpochStats& s) {
                          std::printf("epoch %d loss %.4f train_err %.4f val_err %.4f\n",
                                      s.epoch, s.mean_loss, s.train_error,
                                      s.val_error);
                          std::fflush(stdout);
                        });
  save_model(res.best_model, f.out);
  if (!f.checkpoint.empty()) {
    write_text_file(f.checkpoint, checkpoint_to_string(res.checkpoint));
  }
  std::printf("best epoch %d val_err %.4f -> %s\n", res.best_epoch,
              res.best_val_error, f.out.c_str());
  if (res.diverged) {
    std::printf("validation error did not improve for %d epochs; best model saved\n",
                cfg.patience);
  }
  return 0;
}

std::vector<LabeledImage> pick_split(const MnistSplits& d, const std::string& split) {
  if (split == "test") return d.test;
  if (split == "validation") return d.validation;
  if (split == "train") return d.train;
  throw CLI::ValidationError("--split", "expected test, validation or train");
}

int cmd_eval(const std::string& model_path, const std::string& data_dir,
             const std::string& split, size_t limit) {
  const Model m = load_model(model_path);
  auto images = pick_split(load_mnist(resolve_data_dir(data_dir)), split);
  if (limit > 0 && limit < images.size()) images.resize(limit);
  const double err = frame_error(m, images);
  std::printf("%s error %.4f (%zu images)\n", split.c_str(), err, images.size());
  return 0;
}

int cmd_stream(const std::string& model_path, const std::string& data_dir,
               const std::string& split, std::optional<size_t> index,
               const std::string& stream_file, uint64_t seed,
               const std::string& trace_path, const std::string& timeline_path) {
  const LoweredNetwork net = lower(load_model(model_path));
  EventStream stream;
  std::optional<int32_t> label;
  std::optional<int32_t> frame_class;
  if (!stream_file.empty()) {
    stream = load_stream(stream_file);
    const auto counts = stream.net_counts();
    frame_class = predict(net.model, counts);
  } else {
    const auto images = pick_split(load_mnist(resolve_data_dir(data_dir)), split);
    const size_t i = index.value_or(0);
    if (i >= images.size()) {
      throw CLI::ValidationError("--index", "out of range (" +
                                                std::to_string(images.size()) +
                                                " images)");
    }
    const auto enc = binarize(images[i]);
    stream = stream_pixels(enc, derive_seed(seed, "order", i));
    label = images[i].label;
    frame_class = predict(net.model, enc);
  }
  stream.validate();
  EventRuntime rt(net, {!trace_path.empty()});
  std::vector<std::optional<int32_t>> timeline;
  timeline.push_back(readout(rt.accumulators()));
  stream.for_each_step([&](std::span<const InputEvent> step) {
    rt.deliver_step(step);
    timeline.push_back(readout(rt.accumulators()));
  });
  if (!trace_path.empty()) {
    std::ofstream os(trace_path);
    if (!os) throw IoError("cannot open " + trace_path);
    write_trace_csv(os, rt.trace());
  }
  const int32_t target = label.value_or(frame_class.value_or(-1));
  if (!timeline_path.empty()) {
    std::ofstream os(timeline_path);
    if (!os) throw IoError("cannot open " + timeline_path);
    os << "step,readout,cum_adds\n";
    uint64_t cum = 0;
    for (size_t k = 0; k < timeline.size(); ++k) {
      if (k > 0) cum += rt.ledger().per_input_event_additions[k - 1];
      os << k << ',' << (timeline[k] ? std::to_string(*timeline[k]) : "undecided")
         << ',' << cum << '\n';
    }
  }
  std::optional<size_t> stable;
  for (size_t k = timeline.size(); k-- > 0;) {
    if (!(timeline[k] && *timeline[k] == target)) break;
    stable = k;
  }
  std::printf("seed %llu steps %zu additions %llu events %llu multiplications %llu\n",
              static_cast<unsigned long long>(seed), rt.steps(),
              static_cast<unsigned long long>(rt.ledger().additions),
              static_cast<unsigned long long>(rt.ledger().events_emitted),
              static_cast<unsigned long long>(rt.ledger().multiplications));
  std::printf("accumulators:");
  for (int32_t v : rt.accumulators()) std::printf(" %d", v);
  const auto final_readout = readout(rt.accumulators());
  std::printf("\nreadout %s frame_class %d%s\n",
              final_readout ? std::to_string(*final_readout).c_str() : "undecided",
              frame_class.value_or(-1),
              label ? (" label " + std::to_string(*label)).c_str() : "");
  if (stable) {
    std::printf("readout correct from step %zu of %zu\n", *stable, rt.steps());
  } else {
    std::printf("readout never settled on class %d\n", target);
  }
  return 0;
}

int cmd_bench(const std::string& model_path, const std::string& data_dir,
              size_t count, bool full, uint64_t seed, const std::string& csv_path,
              const std::string& summary_path, size_t bin) {
  const LoweredNetwork net = lower(load_model(model_path));
  const auto data = load_mnist(resolve_data_dir(data_dir));
  const auto subset = full ? data.test : seeded_subset(data.test, count, seed);
  const CurveSet cs = curve_for_model(net, subset, seed);
  const EfficiencySummary s = efficiency_summary(cs);
  if (!csv_path.empty()) {
    std::ofstream os(csv_path);
    if (!os) throw IoError("cannot open " + csv_path);
    write_curves_csv(os, cs, bin);
  }
  const auto j = summary_json(cs, s);
  if (!summary_path.empty()) write_text_file(summary_path, j.dump(2) + "\n");
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_equiv(size_t cases, size_t orderings, uint64_t seed,
              const std::string& model_name, const std::string& report_dir,
              const SizeLimits& limits) {
  NeuronModel which = NeuronModel::kAny;
  if (model_name == "basic") which = NeuronModel::kBasic;
  if (model_name == "extended") which = NeuronModel::kExtended;
  const SuiteResult r = run_equivalence_suite(cases, orderings, seed, which, limits);
  std::printf("seed %llu cases %zu (basic %zu, extended %zu) orderings %zu failures %zu\n",
              static_cast<unsigned long long>(seed), r.cases, r.basic_cases,
              r.extended_cases, orderings, r.failures);
  if (r.failures == 0) return 0;
  if (!report_dir.empty()) {
    for (size_t i = 0; i < r.failing.size(); ++i) {
      const DiffCase shrunk = shrink_case(r.failing[i], [&](const DiffCase& c) {
        return !check_case(c, orderings, seed).pass;
      });
      const std::string dir = report_dir + "/failure_" + std::to_string(i);
      write_failure_report(dir, shrunk, check_case(shrunk, orderings, seed));
      std::printf("minimized failure written to %s\n", dir.c_str());
    }
  }
  return kExitCheckFailed;
}

int cmd_export(const std::string& in, const std::string& out, int version) {
  if (version != kModelFormatVersion) {
    throw CLI::ValidationError("--format-version",
                               "only version " + std::to_string(kModelFormatVersion) +
                                   " is supported");
  }
  save_model(load_model(in), out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"countnet: integer counter networks, frame and event based"};
  app.require_subcommand(1);

  TrainFlags tf;
  auto* train = app.add_subcommand("train", "train a network on MNIST");
  train->add_option("--data-dir", tf.data_dir, "MNIST directory (or COUNTNET_DATA_DIR)");
  train->add_option("--arch", tf.arch, "architecture, e.g. 784-300-100-10 or 784-12c5-12c7-10");
  train->add_option("--activation", tf.activation, "binary or drelu")
      ->check(CLI::IsMember({"binary", "drelu"}));
  train->add_option("--lambda", tf.lambda, "drelu step")->check(CLI::PositiveNumber);
  train->add_option("--lr", tf.lr, "learning rate (default 0.05 dense, 0.1 conv)");
  train->add_option("--batch", tf.batch, "batch size")->check(CLI::PositiveNumber);
  train->add_option("--epochs", tf.epochs, "epoch cap")->check(CLI::NonNegativeNumber);
  train->add_option("--target-val-error", tf.target_val_error, "stop at this validation error");
  train->add_option("--patience", tf.patience, "epochs without improvement before stopping");
  train->add_option("--sigmoid-steepness", tf.sigmoid_steepness, "binary surrogate steepness");
  train->add_option("--logit-scale", tf.logit_scale, "scale of final drives fed to softmax");
  train->add_option("--bias-penalty", tf.bias_penalty, "weight of the negative-threshold penalty");
  train->add_option("--train-count", tf.train_count, "training images (rest is validation)");
  train->add_option("--seed", tf.seed, "master seed");
  train->add_option("--out", tf.out, "model output path");
  train->add_option("--checkpoint", tf.checkpoint, "trainer checkpoint output path");

  std::string model_path, data_dir, split = "test";
  size_t limit = 0;
  auto* eval = app.add_subcommand("eval", "frame-based classification error");
  eval->add_option("--model", model_path, "model file")->required();
  eval->add_option("--data-dir", data_dir, "MNIST directory");
  eval->add_option("--split", split, "test, validation or train");
  eval->add_option("--limit", limit, "evaluate only the first N images");

  std::optional<size_t> index;
  std::string stream_file, trace_path, timeline_path;
  uint64_t seed = 1;
  auto* stream = app.add_subcommand("stream", "stream one input through the event network");
  stream->add_option("--model", model_path, "model file")->required();
  stream->add_option("--data-dir", data_dir, "MNIST directory");
  stream->add_option("--split", split, "test, validation or train");
  stream->add_option("--index", index, "image index");
  stream->add_option("--stream-file", stream_file, "replay an event stream file instead");
  stream->add_option("--seed", seed, "pixel order seed");
  stream->add_option("--trace", trace_path, "write event trace CSV");
  stream->add_option("--timeline", timeline_path, "write per-step readout CSV");

  size_t count = 1000, bin = 1;
  bool full = false;
  std::string csv_path, summary_path;
  auto* bench = app.add_subcommand("bench", "fraction-classified and additions curves");
  bench->add_option("--model", model_path, "model file")->required();
  bench->add_option("--data-dir", data_dir, "MNIST directory");
  bench->add_option("--count", count, "test subset size");
  bench->add_flag("--full", full, "use the full test set");
  bench->add_option("--seed", seed, "subset and pixel order seed");
  bench->add_option("--csv", csv_path, "curve CSV output");
  bench->add_option("--summary", summary_path, "summary JSON output");
  bench->add_option("--bin", bin, "keep every n-th CSV row");

  size_t cases = 1000, orderings = 3;
  std::string neuron_model = "any", report_dir;
  SizeLimits limits;
  auto* equiv = app.add_subcommand("equiv", "randomized frame/event equivalence check");
  equiv->add_option("--cases", cases, "number of random networks");
  equiv->add_option("--orderings", orderings, "event orderings per network");
  equiv->add_option("--seed", seed, "master seed");
  equiv->add_option("--model", neuron_model, "any, basic or extended")
      ->check(CLI::IsMember({"any", "basic", "extended"}));
  equiv->add_option("--max-layers", limits.max_layers, "layers per network")
      ->check(CLI::Range(1, 4));
  equiv->add_option("--max-width", limits.max_width, "units per layer")
      ->check(CLI::Range(1, 32));
  equiv->add_option("--report-dir", report_dir, "write minimized failures here");

  std::string out_path;
  int format_version = kModelFormatVersion;
  auto* exp = app.add_subcommand("export", "re-serialize a model file");
  exp->add_option("--model", model_path, "input model")->required();
  exp->add_option("--out", out_path, "output path")->required();
  exp->add_option("--format-version", format_version, "target format version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (limits.min_layers > limits.max_layers) limits.min_layers = limits.max_layers;
    if (*train) return cmd_train(tf);
    if (*eval) return cmd_eval(model_path, data_dir, split, limit);
    if (*stream) {
      return cmd_stream(model_path, data_dir, split, index, stream_file, seed,
                        trace_path, timeline_path);
    }
    if (*bench) {
      return cmd_bench(model_path, data_dir, count, full, seed, csv_path,
                       summary_path, bin);
    }
    if (*equiv) return cmd_equiv(cases, orderings, seed, neuron_model, report_dir, limits);
    if (*exp) return cmd_export(model_path, out_path, format_version);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
