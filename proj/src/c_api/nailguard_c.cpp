#include "nailguard/nailguard.h"

#include <cstring>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nailguard/dataset.hpp"
#include "nailguard/digest.hpp"
#include "nailguard/errors.hpp"
#include "nailguard/evaluation.hpp"
#include "nailguard/explain.hpp"
#include "nailguard/image_io.hpp"
#include "nailguard/models.hpp"
#include "nailguard/pipeline.hpp"
#include "nailguard/plots.hpp"
#include "nailguard/service.hpp"
#include "nailguard/service_http.hpp"
#include "nailguard/synthdata.hpp"
#include "nailguard/training.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
namespace ng = nailguard;

struct ng_manifest {
  ng::DatasetManifest manifest;
};

struct ng_split {
  ng::SplitAssignment split;
};

struct ng_classifier {
  ng::Classifier classifier;
  ng::CheckpointMetadata metadata;
};

struct ng_service {
  std::unique_ptr<ng::NailService> service;
  std::unique_ptr<ng::HttpServer> http;
};

namespace {

thread_local std::string g_last_error;

ng_status fail(ng_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <class Fn>
ng_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return NG_OK;
  } catch (const ng::InvalidArgument& e) {
    return fail(NG_ERR_INVALID_ARGUMENT, e.what());
  } catch (const ng::IoError& e) {
    return fail(NG_ERR_IO, e.what());
  } catch (const ng::NotFound& e) {
    return fail(NG_ERR_NOT_FOUND, e.what());
  } catch (const ng::DecodeError& e) {
    return fail(NG_ERR_DECODE, e.what());
  } catch (const ng::NumericError& e) {
    return fail(NG_ERR_NUMERIC, e.what());
  } catch (const ng::ConfigError& e) {
    return fail(NG_ERR_CONFIG, e.what());
  } catch (const ng::Conflict& e) {
    return fail(NG_ERR_CONFLICT, e.what());
  } catch (const ng::Unavailable& e) {
    return fail(NG_ERR_UNAVAILABLE, e.what());
  } catch (const ng::Error& e) {
    return fail(NG_ERR_INTERNAL, e.what());
  } catch (const json::exception& e) {
    return fail(NG_ERR_INVALID_ARGUMENT, std::string("malformed JSON: ") + e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(NG_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(NG_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(NG_ERR_INTERNAL, e.what());
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw ng::InvalidArgument(std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** out, const json& j) {
  if (out != nullptr) *out = dup_string(j.dump(2));
}

json parse_optional(const char* text) {
  if (text == nullptr || *text == '\0') return json::object();
  return json::parse(text);
}

/// Relative artifact path -> written file, collected for the summary.
class Artifacts {
 public:
  explicit Artifacts(const char* out_dir) {
    require(out_dir, "out_dir");
    dir_ = out_dir;
    fs::create_directories(dir_);
  }

  void text(const std::string& name, const std::string& content) {
    ng::write_text_file(dir_ / name, content);
    names_.push_back(name);
  }
  void json_file(const std::string& name, const json& j) {
    ng::write_json_file(dir_ / name, j);
    names_.push_back(name);
  }
  void bytes(const std::string& name, const std::vector<std::uint8_t>& data) {
    ng::write_file_bytes(dir_ / name, data);
    names_.push_back(name);
  }
  void note(const std::string& name) { names_.push_back(name); }

  const fs::path& dir() const noexcept { return dir_; }
  json list() const { return names_; }

 private:
  fs::path dir_;
  std::vector<std::string> names_;
};

struct DataBundle {
  std::unique_ptr<ng::DatasetImageSource> source;
  ng::TrainingData data;
};

DataBundle training_data(const ng_manifest* m, const ng_split* s) {
  require(m, "manifest");
  require(s, "split");
  DataBundle b;
  b.source = std::make_unique<ng::DatasetImageSource>(m->manifest);
  b.data.train = ng::labeled_partition(m->manifest, s->split, ng::Partition::train);
  b.data.val = ng::labeled_partition(m->manifest, s->split, ng::Partition::val);
  b.data.source = b.source.get();
  if (b.data.train.empty()) throw ng::InvalidArgument("training partition is empty");
  if (b.data.val.empty()) throw ng::InvalidArgument("validation partition is empty");
  return b;
}

ng::CheckpointMetadata fresh_metadata(const ng::Classifier& c) {
  ng::CheckpointMetadata meta;
  meta.backbone_id = c.spec().id;
  meta.taxonomy = c.taxonomy().names();
  meta.preprocess = {{"input_size", {ng::kInputSize, ng::kInputSize, ng::kInputChannels}},
                     {"scale", "unit_interval"},
                     {"resize", "bilinear"}};
  return meta;
}

void progress_event(ng_progress_fn fn, void* user, const json& event) {
  if (fn) fn(event.dump().c_str(), user);
}

}  // namespace

extern "C" {

const char* ng_last_error(void) { return g_last_error.c_str(); }

const char* ng_status_name(ng_status status) {
  switch (status) {
    case NG_OK: return "ok";
    case NG_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case NG_ERR_IO: return "io_error";
    case NG_ERR_NOT_FOUND: return "not_found";
    case NG_ERR_DECODE: return "decode_error";
    case NG_ERR_NUMERIC: return "numeric_error";
    case NG_ERR_CONFIG: return "config_error";
    case NG_ERR_CONFLICT: return "conflict";
    case NG_ERR_UNAVAILABLE: return "unavailable";
    case NG_ERR_INTERNAL: return "internal_error";
  }
  return "unknown";
}

const char* ng_version(void) { return "0.1.0"; }

void ng_string_free(char* s) { std::free(s); }

ng_status ng_sha256_file(const char* path, char out_hex[65]) {
  return guarded([&] {
    require(path, "path");
    require(out_hex, "out_hex");
    const std::string h = ng::sha256_file(path);
    std::memcpy(out_hex, h.c_str(), 65);
  });
}

ng_status ng_ingest(const char* root, ng_manifest** out, char** skipped_json) {
  return guarded([&] {
    require(root, "root");
    require(out, "out");
    ng::IngestResult r = ng::ingest(root);
    json skipped = json::array();
    for (const auto& s : r.skipped) skipped.push_back({{"path", s.path}, {"reason", s.reason}});
    *out = new ng_manifest{std::move(r.manifest)};
    emit(skipped_json, skipped);
  });
}

ng_status ng_manifest_load(const char* path, ng_manifest** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new ng_manifest{ng::load_manifest(path)};
  });
}

ng_status ng_manifest_save(const ng_manifest* m, const char* path) {
  return guarded([&] {
    require(m, "manifest");
    require(path, "path");
    ng::save_manifest(m->manifest, path);
  });
}

ng_status ng_manifest_json(const ng_manifest* m, char** out) {
  return guarded([&] {
    require(m, "manifest");
    require(out, "out");
    emit(out, ng::to_json(m->manifest));
  });
}

size_t ng_manifest_count(const ng_manifest* m) { return m ? m->manifest.total() : 0; }

void ng_manifest_free(ng_manifest* m) { delete m; }

ng_status ng_split_create(const ng_manifest* m, uint64_t seed, ng_split** out) {
  return guarded([&] {
    require(m, "manifest");
    require(out, "out");
    *out = new ng_split{ng::split(m->manifest, seed)};
  });
}

ng_status ng_split_load(const char* path, ng_split** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new ng_split{ng::load_split(path)};
  });
}

ng_status ng_split_save(const ng_split* s, const char* path) {
  return guarded([&] {
    require(s, "split");
    require(path, "path");
    ng::save_split(s->split, path);
  });
}

ng_status ng_split_summary_json(const ng_split* s, char** out) {
  return guarded([&] {
    require(s, "split");
    require(out, "out");
    emit(out, {{"seed", s->split.seed},
               {"counts",
                {{"train", s->split.count(ng::Partition::train)},
                 {"val", s->split.count(ng::Partition::val)},
                 {"test", s->split.count(ng::Partition::test)}}},
               {"warnings", s->split.warnings}});
  });
}

void ng_split_free(ng_split* s) { delete s; }

ng_status ng_classifier_create(const char* backbone_id, uint64_t init_seed, ng_classifier** out) {
  return guarded([&] {
    require(backbone_id, "backbone_id");
    require(out, "out");
    ng::Classifier c = ng::build_classifier(backbone_id, init_seed);
    ng::CheckpointMetadata meta = fresh_metadata(c);
    *out = new ng_classifier{std::move(c), std::move(meta)};
  });
}

ng_status ng_classifier_load(const char* dir, ng_classifier** out) {
  return guarded([&] {
    require(dir, "dir");
    require(out, "out");
    ng::LoadedCheckpoint loaded = ng::load_checkpoint(dir);
    *out = new ng_classifier{std::move(loaded.classifier), std::move(loaded.metadata)};
  });
}

ng_status ng_classifier_save(const ng_classifier* c, const char* dir) {
  return guarded([&] {
    require(c, "classifier");
    require(dir, "dir");
    ng::save_checkpoint(c->classifier, c->metadata, dir);
  });
}

ng_status ng_classifier_info_json(const ng_classifier* c, char** out) {
  return guarded([&] {
    require(c, "classifier");
    require(out, "out");
    emit(out, {{"backbone_id", c->classifier.spec().id},
               {"parameter_count", c->classifier.parameter_count()},
               {"taxonomy", c->classifier.taxonomy().names()},
               {"metadata", ng::to_json(c->metadata)}});
  });
}

ng_status ng_classifier_predict_file(const ng_classifier* c, const char* image_path, double probs[NG_NUM_CATEGORIES]) {
  return guarded([&] {
    require(c, "classifier");
    require(image_path, "image_path");
    require(probs, "probs");
    const ng::PreprocessedImage img = ng::load_and_resize(ng::read_file_bytes(image_path), image_path);
    const ng::ProbRow p = c->classifier.predict(img.pixels);
    std::copy(p.begin(), p.end(), probs);
  });
}

void ng_classifier_free(ng_classifier* c) { delete c; }

ng_status ng_train(const ng_manifest* m, const ng_split* s, const char* backbone_id, uint64_t init_seed,
                   const char* config_json, const char* out_dir, ng_progress_fn progress, void* user,
                   ng_classifier** best, char** summary_json) {
  return guarded([&] {
    require(backbone_id, "backbone_id");
    const ng::TrainingConfig cfg = ng::training_config_from_json(parse_optional(config_json));
    DataBundle bundle = training_data(m, s);
    Artifacts art(out_dir);
    ng::Classifier initial = ng::build_classifier(backbone_id, init_seed);
    auto on_epoch = [&](const ng::EpochRecord& e) {
      progress_event(progress, user,
                     {{"event", "epoch"},
                      {"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"train_acc", e.train_acc},
                      {"val_loss", e.val_loss},
                      {"val_acc", e.val_acc}});
    };
    ng::FitResult r = cfg.adversarial ? ng::adversarial_fit(std::move(initial), bundle.data, cfg, on_epoch)
                                      : ng::fit(std::move(initial), bundle.data, cfg, on_epoch);
    r.metadata.metrics["init_seed"] = init_seed;
    ng::save_checkpoint(r.best, r.metadata, art.dir() / "checkpoint");
    art.note("checkpoint/weights.bin");
    art.note("checkpoint/metadata.json");
    art.json_file("history.json", ng::to_json(r.history));
    art.text("history.csv", ng::history_csv(r.history));
    art.bytes("training_curves.png", ng::plot_training_curves(r.history));
    const ng::EpochRecord& b = r.history.best();
    emit(summary_json, {{"artifacts", art.list()},
                        {"best_epoch", r.history.best_epoch},
                        {"stopped_epoch", r.history.stopped_epoch},
                        {"best_val_loss", b.val_loss},
                        {"best_val_accuracy", b.val_acc},
                        {"train_accuracy", b.train_acc}});
    if (best != nullptr) *best = new ng_classifier{std::move(r.best), std::move(r.metadata)};
  });
}

ng_status ng_epsilon_sweep(const ng_manifest* m, const ng_split* s, const char* backbone_id, uint64_t init_seed,
                           const char* config_json, const double* epsilons, size_t n_epsilons, const char* out_dir,
                           ng_progress_fn progress, void* user, char** summary_json) {
  return guarded([&] {
    require(backbone_id, "backbone_id");
    if (n_epsilons > 0) require(epsilons, "epsilons");
    const ng::TrainingConfig cfg = ng::training_config_from_json(parse_optional(config_json));
    std::vector<double> eps = n_epsilons == 0 ? ng::kDefaultEpsilons
                                              : std::vector<double>(epsilons, epsilons + n_epsilons);
    DataBundle bundle = training_data(m, s);
    Artifacts art(out_dir);
    const std::string id = backbone_id;
    auto factory = [&] { return ng::build_classifier(id, init_seed); };
    const auto rows = ng::epsilon_sweep(factory, bundle.data, cfg, eps, [&](const ng::SweepRow& r) {
      progress_event(progress, user,
                     {{"event", "sweep_row"},
                      {"epsilon", r.epsilon},
                      {"val_loss", r.val_loss},
                      {"val_accuracy", r.val_accuracy},
                      {"optimal_epochs", r.optimal_epochs},
                      {"error", r.error}});
    });
    art.text("epsilon_sweep.csv", ng::sweep_csv(rows));
    const json table = ng::to_json(rows);
    art.json_file("epsilon_sweep.json", table);
    emit(summary_json, {{"artifacts", art.list()}, {"sweep", table}});
  });
}

ng_status ng_hyperparameter_sweep(const ng_manifest* m, const ng_split* s, const char* backbone_id, uint64_t init_seed,
                                  const char* config_json, const char* grid_json, const char* out_dir,
                                  ng_progress_fn progress, void* user, char** summary_json) {
  return guarded([&] {
    require(backbone_id, "backbone_id");
    const ng::TrainingConfig base = ng::training_config_from_json(parse_optional(config_json));
    const json g = parse_optional(grid_json);
    ng::HyperparameterGrid grid;
    if (g.contains("learning_rates")) grid.learning_rates = g.at("learning_rates").get<std::vector<double>>();
    if (g.contains("batch_sizes")) grid.batch_sizes = g.at("batch_sizes").get<std::vector<std::size_t>>();
    DataBundle bundle = training_data(m, s);
    Artifacts art(out_dir);
    const std::string id = backbone_id;
    auto factory = [&] { return ng::build_classifier(id, init_seed); };
    auto on_row = [&](const ng::LeaderboardRow& r) {
      progress_event(progress, user,
                     {{"event", "leaderboard_row"},
                      {"learning_rate", r.learning_rate},
                      {"batch_size", r.batch_size},
                      {"best_val_accuracy", r.best_val_accuracy},
                      {"error", r.error}});
    };
    try {
      const ng::HyperparameterSearchResult result = ng::hyperparameter_sweep(factory, bundle.data, base, grid, on_row);
      art.text("leaderboard.csv", ng::leaderboard_csv(result.leaderboard));
      art.json_file("leaderboard.json", ng::to_json(result.leaderboard));
      emit(summary_json, {{"artifacts", art.list()},
                          {"best", {{"learning_rate", result.best.learning_rate},
                                    {"batch_size", result.best.batch_size}}},
                          {"leaderboard", ng::to_json(result.leaderboard)}});
    } catch (const ng::SweepFailed& e) {
      art.text("leaderboard.csv", ng::leaderboard_csv(e.leaderboard()));
      art.json_file("leaderboard.json", ng::to_json(e.leaderboard()));
      throw ng::NumericError(e.what());
    }
  });
}

ng_status ng_evaluate(const ng_classifier* c, const ng_manifest* m, const ng_split* s, const char* partition,
                      const char* out_dir, char** summary_json) {
  return guarded([&] {
    require(c, "classifier");
    require(m, "manifest");
    require(s, "split");
    const ng::Partition part = ng::parse_partition(partition ? partition : "test");
    if (c->classifier.taxonomy() != m->manifest.taxonomy) {
      throw ng::ConfigError("checkpoint taxonomy does not match the dataset taxonomy");
    }
    const ng::LabeledSet set = ng::labeled_partition(m->manifest, s->split, part);
    const ng::DatasetImageSource source(m->manifest, {}, false);
    Artifacts art(out_dir);
    const ng::EvaluationRun run = ng::evaluate(c->classifier, set, source);
    json report = ng::to_json(run.report);
    report["partition"] = ng::partition_name(part);
    art.json_file("report.json", report);
    art.text("report.csv", ng::report_csv(run.report));
    art.text("confusion_matrix.csv", ng::confusion_csv(run.report));
    art.bytes("confusion_matrix.png", ng::plot_confusion_matrix(run.report));
    json preds = ng::to_json(run)["predictions"];
    art.json_file("predictions.json", preds);
    emit(summary_json, {{"artifacts", art.list()},
                        {"partition", ng::partition_name(part)},
                        {"accuracy", run.report.accuracy},
                        {"macro_f1", run.report.macro_f1},
                        {"samples", run.report.matrix.total()}});
  });
}

ng_status ng_compare(const char* models_json, int include_reference, const char* out_dir, char** summary_json) {
  return guarded([&] {
    require(models_json, "models_json");
    const json models = json::parse(models_json);
    if (!models.is_array()) throw ng::InvalidArgument("models_json must be an array");
    std::vector<ng::ModelSummary> rows;
    for (const auto& entry : models) {
      ng::ModelSummary row;
      row.name = entry.at("name").get<std::string>();
      const json& report = entry.at("report");
      row.test_accuracy = report.at("accuracy").get<double>();
      if (report.contains("macro_f1")) row.macro_f1 = report.at("macro_f1").get<double>();
      if (entry.contains("train_accuracy") && entry.at("train_accuracy").is_number()) {
        row.train_accuracy = entry.at("train_accuracy").get<double>();
      }
      if (entry.contains("val_accuracy") && entry.at("val_accuracy").is_number()) {
        row.val_accuracy = entry.at("val_accuracy").get<double>();
      }
      rows.push_back(std::move(row));
    }
    const auto table = ng::compare_models(std::move(rows), include_reference != 0);
    Artifacts art(out_dir);
    art.text("comparison.csv", ng::comparison_csv(table));
    art.json_file("comparison.json", ng::to_json(table));
    emit(summary_json, {{"artifacts", art.list()}, {"table", ng::to_json(table)}});
  });
}

ng_status ng_explain(const ng_classifier* c, const char* image_path, const char* method, int target,
                     const char* options_json, const char* out_dir, char** summary_json) {
  return guarded([&] {
    require(c, "classifier");
    require(image_path, "image_path");
    const ng::AttributionMethod m = ng::parse_method(method ? method : "gradcam");
    const json opts = parse_optional(options_json);
    if (target >= ng::kNumCategories) throw ng::InvalidArgument("target category outside 0..5");
    const ng::PreprocessedImage img = ng::load_and_resize(ng::read_file_bytes(image_path), image_path);
    const ng::ProbRow probs = c->classifier.predict(img.pixels);
    const int tgt = target < 0 ? ng::argmax(probs) : target;
    const double alpha = opts.value("alpha", 0.4);
    Artifacts art(out_dir);
    ng::Grid map;
    json attribution;
    if (m == ng::AttributionMethod::gradcam) {
      ng::AttributionMap a = ng::grad_cam(c->classifier, img.pixels, tgt);
      attribution = ng::to_json(a);
      map = std::move(a.values);
    } else {
      const ng::Segmentation seg =
          ng::segment_grid(img.pixels.height, img.pixels.width, opts.value("rows", 2), opts.value("cols", 4));
      ng::ShapleyOptions so;
      so.exact = opts.value("exact", seg.count <= ng::kMaxExactSegments);
      so.samples = opts.value("samples", so.samples);
      so.seed = opts.value("seed", so.seed);
      so.baseline = ng::parse_baseline(opts.value("baseline", std::string("blur")));
      const ng::ShapleyResult r = ng::shapley_attribution(c->classifier, img.pixels, seg, tgt, so);
      attribution = ng::to_json(r, seg, tgt);
      attribution["mode"] = so.exact ? "exact" : "sampled";
      attribution["baseline"] = ng::baseline_name(so.baseline);
      map = ng::to_pixel_map(r, seg);
    }
    attribution["image"] = image_path;
    attribution["target_name"] = c->classifier.taxonomy().name(tgt);
    attribution["probs"] = probs;
    art.json_file("attribution.json", attribution);
    art.bytes("overlay.png", ng::overlay(ng::to_rgb(img.pixels), map, alpha));
    emit(summary_json, {{"artifacts", art.list()},
                        {"method", ng::method_name(m)},
                        {"target", c->classifier.taxonomy().name(tgt)},
                        {"predicted", c->classifier.taxonomy().name(ng::argmax(probs))}});
  });
}

ng_status ng_synth_generate(const char* root, size_t per_category, uint64_t seed, char** summary_json) {
  return guarded([&] {
    require(root, "root");
    if (per_category == 0) throw ng::InvalidArgument("per_category must be >= 1");
    const auto files = ng::generate_synthetic_dataset({per_category, seed, ng::kInputSize}, root);
    emit(summary_json, {{"root", root}, {"files", files.size()}, {"per_category", per_category}, {"seed", seed}});
  });
}

ng_status ng_service_create(const char* config_json, ng_service** out) {
  return guarded([&] {
    require(out, "out");
    const json cfg = parse_optional(config_json);
    ng::ServiceConfig sc;
    sc.store_dir = cfg.value("store_dir", std::string("nailguard_store"));
    sc.models_dir = cfg.value("models_dir", std::string());
    if (cfg.contains("severity_weights")) sc.weights = ng::SeverityWeights::from_json(cfg.at("severity_weights"));
    auto svc = std::make_unique<ng_service>();
    svc->service = std::make_unique<ng::NailService>(std::move(sc));
    if (cfg.contains("active_model") && cfg.at("active_model").is_string()) {
      svc->service->activate_model(cfg.at("active_model").get<std::string>());
    }
    *out = svc.release();
  });
}

ng_status ng_service_bind(ng_service* s, const char* host, int port, const char* token, int* bound_port) {
  return guarded([&] {
    require(s, "service");
    std::optional<std::string> tok;
    if (token != nullptr && *token != '\0') tok = token;
    s->http = std::make_unique<ng::HttpServer>(*s->service, tok);
    const int p = s->http->bind(host ? host : "127.0.0.1", port);
    if (bound_port) *bound_port = p;
  });
}

ng_status ng_service_run(ng_service* s) {
  return guarded([&] {
    require(s, "service");
    if (!s->http) throw ng::InvalidArgument("service is not bound; call ng_service_bind first");
    s->http->serve();
  });
}

void ng_service_stop(ng_service* s) {
  if (s && s->http) s->http->stop();
}

void ng_service_free(ng_service* s) {
  if (s == nullptr) return;
  ng_service_stop(s);
  delete s;
}

}  // extern "C"
