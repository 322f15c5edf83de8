#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "rpfgsm/attacks/fgsm.hpp"
#include "rpfgsm/detector/detector.hpp"
#include "rpfgsm/eval/config.hpp"
#include "rpfgsm/eval/metrics.hpp"
#include "rpfgsm/eval/report.hpp"
#include "rpfgsm/models/serialize.hpp"

namespace rpfgsm::eval {

/// Runs fn(i) for i in [0, n) on `workers` threads. fn must only write to
/// slot i of its outputs; the first exception is rethrown after all threads
/// finish.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

/// Attack outcome per image: a result or the error message.
struct AttackBatch {
  std::vector<std::optional<attacks::AdversarialResult>> results;
  std::vector<std::string> errors;
};

/// Attacks every image; image i uses the random stream derived from
/// (config.seed, i). Attack errors are recorded per image.
inline AttackBatch attack_all(const attacks::AttackConfig& config, std::span<const Tensor> images,
                              std::size_t workers) {
  attacks::validate(config);
  AttackBatch out;
  out.results.resize(images.size());
  out.errors.resize(images.size());
  parallel_for(images.size(), workers, [&](std::size_t i) {
    try {
      out.results[i] = attacks::run_fgsm_attack(config, images[i], i);
    } catch (const attacks::AttackError& e) {
      out.errors[i] = e.what();
    }
  });
  return out;
}

inline std::shared_ptr<const models::ModelParams> load_model_artifact(const std::string& path,
                                                                      const char* role) {
  try {
    return std::make_shared<const models::ModelParams>(models::load_model(path));
  } catch (const std::exception& e) {
    throw Error(std::string("cannot load ") + role + " model '" + path + "': " + e.what());
  }
}

/// Calibrates one detector per defense kind on clean images (the unseen
/// classifier is the detector's model) and returns them with their kinds.
inline std::vector<std::pair<std::string, detector::Detector>> calibrate_detectors(
    const std::shared_ptr<const models::ModelParams>& model, const std::vector<std::string>& kinds,
    std::span<const Tensor> clean, double fpr) {
  std::vector<std::pair<std::string, detector::Detector>> out;
  for (const auto& k : kinds) {
    out.emplace_back(k, detector::Detector::calibrate(
                            model, detector::mid_strength(transforms::parse_kind(k)), clean, fpr));
  }
  return out;
}

/// Evaluation defenses: none, each kind at mid strength, and with `breakdown`
/// every legal parameter of every kind.
inline std::vector<std::pair<std::string, transforms::TransformSpec>> evaluation_defenses(
    const std::vector<std::string>& kinds, bool breakdown) {
  std::vector<std::pair<std::string, transforms::TransformSpec>> out{
      {"none", transforms::TransformSpec::identity()}};
  for (const auto& k : kinds) out.emplace_back(k, detector::mid_strength(transforms::parse_kind(k)));
  if (breakdown) {
    for (const auto& k : kinds) {
      const auto domain = transforms::full_domain(transforms::parse_kind(k));
      for (double v : domain.values) {
        transforms::TransformSpec s{domain.kind, v};
        out.emplace_back(transforms::to_string(s), s);
      }
    }
  }
  return out;
}

inline EvalReport run_experiment(const RunConfig& config) {
  using models::ModelParams;
  std::vector<std::shared_ptr<const ModelParams>> seen;
  std::vector<std::string> seen_names;
  for (const auto& p : config.seen_models) {
    seen.push_back(load_model_artifact(p, "seen"));
    seen_names.push_back(model_name(p));
  }
  const auto unseen = load_model_artifact(config.unseen_model, "unseen");
  const std::string unseen_name = model_name(config.unseen_model);

  std::vector<DatasetRecord> data;
  try {
    data = load_dataset(config.format, config.dataset, config.synthetic);
  } catch (const std::exception& e) {
    throw Error("cannot load dataset '" + config.dataset + "': " + e.what());
  }
  const Splits splits = split_dataset(data);
  auto test = splits.test;
  if (config.max_images && config.max_images < test.size()) test = test.first(config.max_images);

  std::vector<Tensor> clean_calibration;
  for (const auto& r : splits.calibrate) clean_calibration.push_back(r.image);
  std::vector<Tensor> test_images;
  std::vector<int> test_labels;
  for (const auto& r : test) {
    test_images.push_back(r.image);
    test_labels.push_back(r.label);
  }

  EvalReport report;
  report.seed = config.seed;
  report.config = config.raw;
  const auto detectors = clean_calibration.empty()
                             ? std::vector<std::pair<std::string, detector::Detector>>{}
                             : calibrate_detectors(unseen, config.defenses, clean_calibration, config.fpr);
  for (const auto& [kind, det] : detectors) report.thresholds[kind] = det.threshold();
  report.notes["detector_model"] = unseen_name;
  for (const auto& [kind, det] : detectors) {
    report.notes["detector_parameters"][kind] = transforms::to_string(det.config().spec);
  }
  report.notes["test_images"] = test_images.size();

  std::vector<std::pair<std::string, std::shared_ptr<const ModelParams>>> evaluators;
  for (std::size_t i = 0; i < seen.size(); ++i) evaluators.emplace_back(seen_names[i], seen[i]);
  evaluators.emplace_back(unseen_name, unseen);
  const auto defenses = evaluation_defenses(config.defenses, config.breakdown);

  for (const auto& entry : config.attacks) {
    attacks::AttackConfig ac = entry.config;
    std::vector<std::string> used;
    if (!entry.models.empty()) {
      for (const auto& name : entry.models) {
        const auto it = std::find(seen_names.begin(), seen_names.end(), name);
        if (it == seen_names.end()) throw ConfigError("attack '" + entry.name + "' names unknown seen model '" + name + "'");
        ac.classifiers.push_back(seen[static_cast<std::size_t>(it - seen_names.begin())]);
        used.push_back(name);
      }
    } else if (attacks::single_classifier(ac.variant)) {
      ac.classifiers = {seen[0]};
      used = {seen_names[0]};
    } else {
      ac.classifiers = seen;
      used = seen_names;
    }
    std::string seen_set;
    for (const auto& u : used) seen_set += (seen_set.empty() ? "" : "+") + u;

    const AttackBatch batch = attack_all(ac, test_images, config.workers);
    std::vector<Tensor> adversarial;
    std::vector<int> labels;
    std::vector<double> psnrs;
    for (std::size_t i = 0; i < batch.results.size(); ++i) {
      if (!batch.results[i]) {
        report.failures.push_back({entry.name, i, batch.errors[i]});
        continue;
      }
      const Tensor& adv = batch.results[i]->image;
      // re-check the perturbation contract instead of trusting the attack
      if (!is_valid_pixel_image(adv) || linf_distance(adv, test_images[i]) > ac.epsilon) {
        throw Error("attack '" + entry.name + "' broke the perturbation bound on image " + std::to_string(i));
      }
      adversarial.push_back(adv);
      labels.push_back(test_labels[i]);
      psnrs.push_back(psnr(test_images[i], adv));
    }
    const MeanStd q = mean_std(psnrs);

    double detectability = 0;
    if (!adversarial.empty() && !detectors.empty()) {
      std::vector<char> any(adversarial.size(), 0);
      for (const auto& [kind, det] : detectors) {
        const auto f = det.flags(adversarial);
        for (std::size_t i = 0; i < f.size(); ++i) any[i] |= f[i];
      }
      detectability = 100.0 * static_cast<double>(std::count(any.begin(), any.end(), 1)) /
                      static_cast<double>(adversarial.size());
    }

    for (const auto& [eval_name, model] : evaluators) {
      for (const auto& [defense_name, spec] : defenses) {
        const auto preds = detector::defended_predict_batch(*model, spec, adversarial);
        ReportRow row{entry.name, attacks::mode_name(ac.mode), seen_set, eval_name, defense_name};
        row.top1_misleading = misleading_rate(preds, labels, 1);
        row.top5_misleading = misleading_rate(preds, labels, 5);
        row.detectability = detectability;
        row.psnr_mean = q.mean;
        row.psnr_std = q.stddev;
        report.rows.push_back(std::move(row));
      }
    }

    if (config.save_images) {
      std::vector<DatasetRecord> records;
      for (std::size_t i = 0; i < adversarial.size(); ++i) records.push_back({labels[i], adversarial[i]});
      fs::create_directories(config.output_dir);
      save_cifar_binary((fs::path(config.output_dir) / (entry.name + "_adversarial.bin")).string(), records);
    }
  }
  return report;
}

}  // namespace rpfgsm::eval
