// Command-line front end: train, attack, detect, eval.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rpfgsm/rpfgsm.hpp"

using namespace rpfgsm;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// Loads a dataset argument: "synthetic:<seed>:<count>" or a CIFAR-10 binary
/// file or directory.
std::vector<DatasetRecord> load_input(const std::string& arg) {
  if (arg.rfind("synthetic", 0) == 0) {
    eval::SyntheticSpec s;
    std::stringstream ss(arg);
    std::string field;
    std::getline(ss, field, ':');
    if (std::getline(ss, field, ':') && !field.empty()) s.seed = std::stoull(field);
    if (std::getline(ss, field, ':') && !field.empty()) s.count = std::stoull(field);
    return generate_synthetic(s.seed, s.count, s.classes);
  }
  return eval::load_cifar_path(arg);
}

struct TrainOptions {
  std::string config;
  std::string out;
};

int run_train(const TrainOptions& o) {
  const json j = eval::read_json_file(o.config);
  const fs::path base = fs::path(o.config).parent_path();
  const auto arch_name = eval::detail::get_or<std::string>(j, "arch", "cnn-a");
  const auto format = eval::detail::get_or<std::string>(j, "format", "cifar10-bin");
  eval::SyntheticSpec syn;
  if (j.contains("synthetic")) {
    syn.count = eval::detail::get_or<std::size_t>(j["synthetic"], "count", syn.count);
    syn.classes = eval::detail::get_or<std::size_t>(j["synthetic"], "classes", syn.classes);
    syn.seed = eval::detail::get_or<std::uint64_t>(j["synthetic"], "seed", syn.seed);
  }
  const auto dataset = eval::detail::resolve(eval::detail::get_or<std::string>(j, "dataset", ""), base);
  models::TrainHyper hyper;
  hyper.epochs = eval::detail::get_or(j, "epochs", hyper.epochs);
  hyper.learning_rate = eval::detail::get_or(j, "learning_rate", hyper.learning_rate);
  hyper.momentum = eval::detail::get_or(j, "momentum", hyper.momentum);
  hyper.batch_size = eval::detail::get_or(j, "batch_size", hyper.batch_size);
  hyper.seed = eval::detail::get_or(j, "seed", hyper.seed);

  const auto data = eval::load_dataset(format, dataset, syn);
  const auto splits = eval::split_dataset(data);
  std::size_t classes = eval::detail::get_or<std::size_t>(j, "classes", 10);
  const auto model = models::train_classifier(models::zoo_architecture(arch_name, classes), splits.train, hyper);
  models::save_model(model, o.out);
  std::printf("%s: trained on %zu images, test accuracy %.3f -> %s\n", arch_name.c_str(), splits.train.size(),
              models::accuracy(model, splits.test), o.out.c_str());
  return 0;
}

struct AttackOptions {
  std::string variant = "rp-fgsm";
  std::string mode;
  std::string models;
  double eps = 16;
  double delta = 1;
  double gamma = 0.99;
  std::size_t iterations = 0;
  std::string selection = "random";
  std::uint64_t seed = 0;
  std::string in;
  std::string out;
  std::size_t max_images = 0;
  std::size_t workers = 1;
};

int run_attack(const AttackOptions& o) {
  attacks::AttackConfig c;
  c.variant = attacks::parse_variant(o.variant);
  c.mode = o.mode.empty() ? attacks::default_mode(c.variant)
                          : (o.mode == "targeted" ? attacks::Mode::targeted : attacks::Mode::untargeted);
  if (!o.mode.empty() && o.mode != "targeted" && o.mode != "untargeted") throw Error("--mode must be targeted or untargeted");
  c.epsilon = o.eps;
  c.delta = o.delta;
  c.gamma = o.gamma;
  c.iterations = o.iterations;
  c.seed = o.seed;
  if (o.selection != "random" && o.selection != "ensemble") throw Error("--selection must be random or ensemble");
  c.selection = o.selection == "random" ? attacks::Selection::random : attacks::Selection::ensemble;
  for (const auto& path : split_list(o.models)) c.classifiers.push_back(eval::load_model_artifact(path, "attack"));

  auto records = load_input(o.in);
  if (o.max_images && o.max_images < records.size()) records.resize(o.max_images);
  std::vector<Tensor> images;
  for (const auto& r : records) images.push_back(r.image);
  const auto batch = eval::attack_all(c, images, o.workers);

  std::vector<DatasetRecord> adversarial;
  std::vector<double> psnrs;
  std::size_t failed = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!batch.results[i]) {
      std::fprintf(stderr, "image %zu: %s\n", i, batch.errors[i].c_str());
      ++failed;
      continue;
    }
    adversarial.push_back({records[i].label, batch.results[i]->image});
    psnrs.push_back(eval::psnr(images[i], batch.results[i]->image));
  }
  fs::create_directories(o.out);
  const auto path = fs::path(o.out) / (o.variant + "_adversarial.bin");
  save_cifar_binary(path.string(), adversarial);
  const auto q = eval::mean_std(psnrs);
  std::printf("%s: %zu images attacked, %zu failed, PSNR %.2f +- %.2f dB -> %s\n", o.variant.c_str(),
              adversarial.size(), failed, q.mean, q.stddev, path.string().c_str());
  return 0;
}

struct DetectOptions {
  std::string model;
  std::string defense = "median:3";
  double fpr = 0.05;
  std::string in;
  std::string calibrate;
  std::string scores;
};

int run_detect(const DetectOptions& o) {
  const auto model = eval::load_model_artifact(o.model, "detector");
  const auto spec = transforms::parse_spec(o.defense);
  const auto input = load_input(o.in);
  std::vector<Tensor> calibration, judged;
  if (o.calibrate.empty()) {
    // no separate clean set: calibrate on the calibration split, judge the test split
    const auto s = eval::split_dataset(input);
    for (const auto& r : s.calibrate) calibration.push_back(r.image);
    for (const auto& r : s.test) judged.push_back(r.image);
  } else {
    for (const auto& r : load_input(o.calibrate)) calibration.push_back(r.image);
    for (const auto& r : input) judged.push_back(r.image);
  }
  const auto det = detector::Detector::calibrate(model, spec, calibration, o.fpr);
  const auto scores = detector::detection_scores(*model, spec, judged);
  std::size_t flagged = 0;
  for (double s : scores) flagged += s > det.threshold();
  if (!o.scores.empty()) {
    std::ofstream out(o.scores, std::ios::binary);
    out << "image,score,flagged\n";
    char buf[64];
    for (std::size_t i = 0; i < scores.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.6f", scores[i]);
      out << i << "," << buf << "," << (scores[i] > det.threshold()) << "\n";
    }
  }
  std::printf("%s: threshold %.6f from %zu clean images; flagged %zu of %zu (%.1f%%)\n",
              transforms::to_string(spec).c_str(), det.threshold(), calibration.size(), flagged, judged.size(),
              judged.empty() ? 0.0 : 100.0 * static_cast<double>(flagged) / static_cast<double>(judged.size()));
  return 0;
}

struct EvalOptions {
  std::string config;
  std::string out;
  std::size_t workers = 0;
};

int run_eval(const EvalOptions& o) {
  auto config = eval::load_run_config(o.config);
  if (!o.out.empty()) config.output_dir = o.out;
  if (o.workers) config.workers = o.workers;
  const auto report = eval::run_experiment(config);
  const auto path = fs::path(config.output_dir) / "report.csv";
  eval::write_report(report, path);
  for (const auto& f : report.failures) {
    std::fprintf(stderr, "%s, image %zu: %s\n", f.attack.c_str(), f.image, f.message.c_str());
  }
  std::printf("%zu rows, %zu attack failures -> %s\n", report.rows.size(), report.failures.size(),
              path.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transferable adversarial attacks against transformation defenses"};
  app.require_subcommand(1);

  TrainOptions train;
  auto* t = app.add_subcommand("train", "train a zoo classifier from a JSON config");
  t->add_option("--config", train.config, "training config (arch, dataset, format, epochs, ...)")->required();
  t->add_option("--out", train.out, "output weight file")->required();

  AttackOptions attack;
  auto* a = app.add_subcommand("attack", "attack every image of a dataset");
  a->add_option("--variant", attack.variant, "u-fgsm, r-fgsm, l-fgsm, p-fgsm, e-fgsm, di-fgsm, eot, rp-fgsm")
      ->capture_default_str();
  a->add_option("--mode", attack.mode, "targeted or untargeted (default: the variant's own)");
  a->add_option("--models", attack.models, "comma-separated weight files")->required();
  a->add_option("--eps", attack.eps, "L-infinity budget in intensity units")->capture_default_str();
  a->add_option("--delta", attack.delta, "step size")->capture_default_str();
  a->add_option("--gamma", attack.gamma, "target confidence threshold")->capture_default_str();
  a->add_option("--iterations", attack.iterations, "0: derived from eps and the model count");
  a->add_option("--selection", attack.selection, "random or ensemble")->capture_default_str();
  a->add_option("--seed", attack.seed)->capture_default_str();
  a->add_option("--in", attack.in, "CIFAR-10 binary file or directory, or synthetic:<seed>:<count>")->required();
  a->add_option("--out", attack.out, "output directory")->required();
  a->add_option("--max-images", attack.max_images, "attack only the first N images");
  a->add_option("--workers", attack.workers)->capture_default_str();

  DetectOptions detect;
  auto* d = app.add_subcommand("detect", "calibrate a squeezing detector and flag images");
  d->add_option("--model", detect.model, "detector classifier weights")->required();
  d->add_option("--defense", detect.defense, "kind:param, e.g. median:3 or jpeg:50")->capture_default_str();
  d->add_option("--fpr", detect.fpr, "false-positive target on clean images")->capture_default_str();
  d->add_option("--in", detect.in, "images to judge")->required();
  d->add_option("--calibrate", detect.calibrate, "clean images for the threshold (default: split of --in)");
  d->add_option("--scores", detect.scores, "write per-image scores to this CSV");

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "run an experiment and write report.csv");
  e->add_option("--config", ev.config, "run config JSON")->required();
  e->add_option("--out", ev.out, "output directory (overrides output_dir)");
  e->add_option("--workers", ev.workers, "attack worker threads (overrides the config)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*t) return run_train(train);
    if (*a) return run_attack(attack);
    if (*d) return run_detect(detect);
    if (*e) return run_eval(ev);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
  return 0;
}
