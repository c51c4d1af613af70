// nailguard command-line tool. Every subcommand writes into --out and
// finishes with <out>/manifest.json indexing the artifacts by sha256.

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nailguard/nailguard.h"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

const std::vector<std::string> kCategories = {"acral_lentiginous_melanoma", "healthy_nail", "onychogryphosis",
                                              "blue_finger",                "clubbing",     "pitting"};

class CommandFailed : public std::runtime_error {
 public:
  explicit CommandFailed(ng_status s) : std::runtime_error(ng_last_error()), status(s) {}
  ng_status status;
};

void check(ng_status s) {
  if (s != NG_OK) throw CommandFailed(s);
}

/// Owns a string returned by the C API.
struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { ng_string_free(p); }
  json parse() const { return p ? json::parse(p) : json(); }
};

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
};

using Manifest = Handle<ng_manifest, ng_manifest_free>;
using Split = Handle<ng_split, ng_split_free>;
using Model = Handle<ng_classifier, ng_classifier_free>;

struct Common {
  std::string out = "nailguard_run";
};

struct DataFlags {
  std::string data;
  std::string manifest;
  std::string split;
  std::uint64_t split_seed = 42;
};

struct TrainFlags {
  std::string arch = "tiny_test";
  double lr = 1e-4;
  std::size_t batch_size = 32;
  int max_epochs = 200;
  int patience = 10;
  double min_delta = 1e-4;
  std::uint64_t seed = 0;
  std::uint64_t init_seed = 0;
  bool no_augment = false;
};

void add_data_flags(CLI::App* sub, DataFlags& d) {
  sub->add_option("--data", d.data, "dataset root (default: $NAILGUARD_DATA)");
  sub->add_option("--manifest", d.manifest, "dataset_manifest.json from a previous ingest");
  sub->add_option("--split", d.split, "split.json from a previous split");
  sub->add_option("--split-seed", d.split_seed, "seed for an on-the-fly split");
}

void add_train_flags(CLI::App* sub, TrainFlags& t) {
  sub->add_option("--arch", t.arch, "backbone id")
      ->check(CLI::IsMember({"tiny_test", "inception_v3", "densenet201", "efficientnet_v2", "resnet50"}));
  sub->add_option("--lr", t.lr, "learning rate")->check(CLI::PositiveNumber);
  sub->add_option("--batch-size", t.batch_size, "batch size")->check(CLI::PositiveNumber);
  sub->add_option("--max-epochs", t.max_epochs, "epoch limit")->check(CLI::PositiveNumber);
  sub->add_option("--patience", t.patience, "early-stopping patience")->check(CLI::PositiveNumber);
  sub->add_option("--min-delta", t.min_delta, "minimum val-loss improvement")->check(CLI::NonNegativeNumber);
  sub->add_option("--seed", t.seed, "shuffle/augmentation seed");
  sub->add_option("--init-seed", t.init_seed, "weight initialisation seed");
  sub->add_flag("--no-augment", t.no_augment, "disable training augmentation");
}

json training_config(const TrainFlags& t, std::optional<std::pair<double, double>> adversarial) {
  json cfg = {{"learning_rate", t.lr},
              {"batch_size", t.batch_size},
              {"max_epochs", t.max_epochs},
              {"patience", t.patience},
              {"min_delta", t.min_delta},
              {"seed", t.seed}};
  if (t.no_augment) cfg["augmentation"] = {{"enabled", false}};
  if (adversarial) cfg["adversarial"] = {{"epsilon", adversarial->first}, {"mix_ratio", adversarial->second}};
  return cfg;
}

std::string data_root(const DataFlags& d) {
  if (!d.data.empty()) return d.data;
  if (const char* env = std::getenv("NAILGUARD_DATA"); env && *env) return env;
  return {};
}

/// Resolves manifest and split from flags, ingesting/splitting on the fly
/// when needed. Freshly created files are written into `out`.
void load_data(const DataFlags& d, const fs::path& out, Manifest& m, Split& s) {
  if (!d.manifest.empty()) {
    check(ng_manifest_load(d.manifest.c_str(), &m.p));
  } else {
    const std::string root = data_root(d);
    if (root.empty()) {
      throw CLI::ValidationError("--data", "no dataset given: pass --data, --manifest or set NAILGUARD_DATA");
    }
    OwnedString skipped;
    check(ng_ingest(root.c_str(), &m.p, &skipped.p));
    check(ng_manifest_save(m.p, (out / "dataset_manifest.json").string().c_str()));
  }
  if (!d.split.empty()) {
    check(ng_split_load(d.split.c_str(), &s.p));
  } else {
    check(ng_split_create(m.p, d.split_seed, &s.p));
    check(ng_split_save(s.p, (out / "split.json").string().c_str()));
  }
}

void print_progress(const char* event_json, void*) {
  const json e = json::parse(event_json);
  const std::string kind = e.value("event", "");
  if (kind == "epoch") {
    std::fprintf(stderr, "epoch %3d  train_loss %.4f  train_acc %.4f  val_loss %.4f  val_acc %.4f\n",
                 e["epoch"].get<int>(), e["train_loss"].get<double>(), e["train_acc"].get<double>(),
                 e["val_loss"].get<double>(), e["val_acc"].get<double>());
  } else {
    std::fprintf(stderr, "%s\n", event_json);
  }
}

std::vector<double> parse_number_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw CLI::ValidationError(flag, "not a number: '" + item + "'");
    }
  }
  if (out.empty()) throw CLI::ValidationError(flag, "empty list");
  return out;
}

int parse_category(const std::string& name) {
  for (std::size_t i = 0; i < kCategories.size(); ++i) {
    if (kCategories[i] == name) return static_cast<int>(i);
  }
  throw CLI::ValidationError("--target", "unknown category '" + name + "'");
}

/// Every option of `sub`: given value or recorded default.
json flag_record(const CLI::App* sub) {
  json flags = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_name(false, true);
    if (name == "--help" || name == "-h" || name.empty()) continue;
    const std::string key = opt->get_lnames().empty() ? name : opt->get_lnames().front();
    if (opt->count() > 0) {
      const auto& r = opt->results();
      flags[key] = opt->get_type_size() == 0 ? json(true) : (r.size() == 1 ? json(r.front()) : json(r));
    } else {
      flags[key] = opt->get_type_size() == 0 ? json(false) : json(opt->get_default_str());
    }
  }
  return flags;
}

void write_run_index(const fs::path& out, const std::string& subcommand, const json& flags) {
  json artifacts = json::array();
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(out)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path() == out / "manifest.json") continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    char hex[65];
    check(ng_sha256_file(f.string().c_str(), hex));
    artifacts.push_back({{"path", fs::relative(f, out).generic_string()}, {"sha256", hex}, {"bytes", fs::file_size(f)}});
  }
  const json index = {{"tool", "nailguard"},
                      {"version", ng_version()},
                      {"subcommand", subcommand},
                      {"flags", flags},
                      {"artifacts", artifacts}};
  std::ofstream(out / "manifest.json") << index.dump(2) << '\n';
}

void write_json(const fs::path& path, const json& j) { std::ofstream(path) << j.dump(2) << '\n'; }

ng_service* g_service = nullptr;

void handle_signal(int) {
  if (g_service) ng_service_stop(g_service);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nailguard: nail-disease image classification toolkit"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough(false);

  Common common;
  auto out_opt = [&](CLI::App* sub) { sub->add_option("--out", common.out, "run output directory"); };

  // synth-data
  std::size_t per_category = 100;
  std::uint64_t synth_seed = 0;
  CLI::App* synth = app.add_subcommand("synth-data", "generate the synthetic six-category dataset");
  out_opt(synth);
  synth->add_option("--per-category", per_category, "images per category")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "generator seed");

  // ingest
  std::string ingest_root;
  CLI::App* ingest = app.add_subcommand("ingest", "index a category-per-directory image tree");
  out_opt(ingest);
  ingest->add_option("--data", ingest_root, "dataset root (default: $NAILGUARD_DATA)");

  // split
  std::string split_manifest;
  std::uint64_t split_seed = 42;
  CLI::App* split = app.add_subcommand("split", "stratified 70/20/10 train/val/test split");
  out_opt(split);
  split->add_option("--manifest", split_manifest, "dataset_manifest.json")->required()->check(CLI::ExistingFile);
  split->add_option("--seed", split_seed, "split seed");

  // train / adv-train
  DataFlags train_data;
  TrainFlags train_flags;
  CLI::App* train = app.add_subcommand("train", "fine-tune a classifier with early stopping");
  out_opt(train);
  add_data_flags(train, train_data);
  add_train_flags(train, train_flags);

  DataFlags adv_data;
  TrainFlags adv_flags;
  double adv_epsilon = 0.1;
  double adv_mix = 0.5;
  CLI::App* adv_train = app.add_subcommand("adv-train", "train with FGSM-perturbed batches mixed in");
  out_opt(adv_train);
  add_data_flags(adv_train, adv_data);
  add_train_flags(adv_train, adv_flags);
  adv_train->add_option("--epsilon", adv_epsilon, "FGSM budget")->check(CLI::Range(0.0, 1.0));
  adv_train->add_option("--mix-ratio", adv_mix, "weight of the FGSM half")->check(CLI::Range(0.0, 1.0));

  // sweep
  DataFlags sweep_data;
  TrainFlags sweep_flags;
  std::string sweep_lrs = "0.1,0.01,0.001,0.0001";
  std::string sweep_batches = "16,32,64";
  CLI::App* sweep = app.add_subcommand("sweep", "learning-rate x batch-size grid search");
  out_opt(sweep);
  add_data_flags(sweep, sweep_data);
  add_train_flags(sweep, sweep_flags);
  sweep->add_option("--lrs", sweep_lrs, "comma-separated learning rates");
  sweep->add_option("--batch-sizes", sweep_batches, "comma-separated batch sizes");

  // adv-sweep
  DataFlags advs_data;
  TrainFlags advs_flags;
  std::string advs_eps = "0,0.1,0.12,0.14,0.16,0.18,0.2";
  double advs_mix = 0.5;
  CLI::App* adv_sweep = app.add_subcommand("adv-sweep", "adversarial training over a list of epsilons");
  out_opt(adv_sweep);
  add_data_flags(adv_sweep, advs_data);
  add_train_flags(adv_sweep, advs_flags);
  adv_sweep->add_option("--epsilons", advs_eps, "comma-separated FGSM budgets");
  adv_sweep->add_option("--mix-ratio", advs_mix, "weight of the FGSM half")->check(CLI::Range(0.0, 1.0));

  // evaluate
  DataFlags eval_data;
  std::string eval_checkpoint;
  std::string eval_partition = "test";
  CLI::App* evaluate = app.add_subcommand("evaluate", "confusion matrix and classification report");
  out_opt(evaluate);
  add_data_flags(evaluate, eval_data);
  evaluate->add_option("--checkpoint", eval_checkpoint, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--partition", eval_partition, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));

  // compare
  std::vector<std::string> compare_models;
  bool compare_reference = false;
  CLI::App* compare = app.add_subcommand("compare", "rank evaluated models by test accuracy");
  out_opt(compare);
  compare->add_option("--model", compare_models, "NAME=path/to/report.json (repeatable)")->required();
  compare->add_flag("--include-reference", compare_reference, "append published reference accuracies");

  // explain
  std::string ex_checkpoint;
  std::string ex_image;
  std::string ex_method = "gradcam";
  std::string ex_target;
  std::string ex_grid = "2x4";
  bool ex_sampled = false;
  int ex_samples = 2000;
  std::uint64_t ex_seed = 0;
  std::string ex_baseline = "blur";
  double ex_alpha = 0.4;
  CLI::App* explain = app.add_subcommand("explain", "Grad-CAM or Shapley attribution for one image");
  out_opt(explain);
  explain->add_option("--checkpoint", ex_checkpoint, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
  explain->add_option("--image", ex_image, "image file")->required()->check(CLI::ExistingFile);
  explain->add_option("--method", ex_method, "gradcam or shapley")->check(CLI::IsMember({"gradcam", "shapley"}));
  explain->add_option("--target", ex_target, "category to explain (default: predicted)");
  explain->add_option("--grid", ex_grid, "Shapley segment grid ROWSxCOLS");
  explain->add_flag("--sampled", ex_sampled, "permutation sampling instead of exact enumeration");
  explain->add_option("--samples", ex_samples, "permutations in sampled mode")->check(CLI::PositiveNumber);
  explain->add_option("--seed", ex_seed, "sampling seed");
  explain->add_option("--baseline", ex_baseline, "masking baseline")->check(CLI::IsMember({"blur", "gray"}));
  explain->add_option("--alpha", ex_alpha, "overlay opacity")->check(CLI::Range(0.0, 1.0));

  // serve
  std::string serve_store;
  std::string serve_models;
  std::string serve_model;
  std::string serve_host = "127.0.0.1";
  int serve_port = 8080;
  std::string serve_weights;
  CLI::App* serve = app.add_subcommand("serve", "HTTP triage service");
  out_opt(serve);
  serve->add_option("--store", serve_store, "case store directory (default: <out>/store)");
  serve->add_option("--models", serve_models, "directory of checkpoints, one per subdirectory")
      ->check(CLI::ExistingDirectory);
  serve->add_option("--model", serve_model, "model id to activate at start");
  serve->add_option("--host", serve_host, "bind address");
  serve->add_option("--port", serve_port, "bind port (0 = any free port)")->check(CLI::Range(0, 65535));
  serve->add_option("--severity-weights", serve_weights, "JSON file mapping category to weight")
      ->check(CLI::ExistingFile);

  if (argc <= 1) {
    std::cerr << app.help();
    return kExitUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  const fs::path out = common.out;
  try {
    fs::create_directories(out);
    json summary;
    if (sub == synth) {
      OwnedString s;
      check(ng_synth_generate((out / "dataset").string().c_str(), per_category, synth_seed, &s.p));
      summary = s.parse();
    } else if (sub == ingest) {
      std::string root = ingest_root;
      if (root.empty()) {
        if (const char* env = std::getenv("NAILGUARD_DATA"); env && *env) root = env;
      }
      if (root.empty()) throw CLI::ValidationError("--data", "pass --data or set NAILGUARD_DATA");
      Manifest m;
      OwnedString skipped;
      check(ng_ingest(root.c_str(), &m.p, &skipped.p));
      check(ng_manifest_save(m.p, (out / "dataset_manifest.json").string().c_str()));
      write_json(out / "skipped.json", skipped.parse());
      summary = {{"entries", ng_manifest_count(m.p)}, {"skipped", skipped.parse().size()}};
    } else if (sub == split) {
      Manifest m;
      Split s;
      check(ng_manifest_load(split_manifest.c_str(), &m.p));
      check(ng_split_create(m.p, split_seed, &s.p));
      check(ng_split_save(s.p, (out / "split.json").string().c_str()));
      OwnedString info;
      check(ng_split_summary_json(s.p, &info.p));
      summary = info.parse();
      for (const auto& w : summary["warnings"]) std::cerr << "warning: " << w.get<std::string>() << '\n';
    } else if (sub == train || sub == adv_train) {
      const bool adv = sub == adv_train;
      const DataFlags& d = adv ? adv_data : train_data;
      const TrainFlags& t = adv ? adv_flags : train_flags;
      Manifest m;
      Split s;
      load_data(d, out, m, s);
      const json cfg = training_config(t, adv ? std::optional(std::pair(adv_epsilon, adv_mix)) : std::nullopt);
      OwnedString res;
      check(ng_train(m.p, s.p, t.arch.c_str(), t.init_seed, cfg.dump().c_str(), out.string().c_str(), print_progress,
                     nullptr, nullptr, &res.p));
      summary = res.parse();
    } else if (sub == sweep) {
      Manifest m;
      Split s;
      load_data(sweep_data, out, m, s);
      json grid = {{"learning_rates", parse_number_list(sweep_lrs, "--lrs")}, {"batch_sizes", json::array()}};
      for (double b : parse_number_list(sweep_batches, "--batch-sizes")) {
        if (b < 1 || b != static_cast<double>(static_cast<std::size_t>(b))) {
          throw CLI::ValidationError("--batch-sizes", "batch sizes must be positive integers");
        }
        grid["batch_sizes"].push_back(static_cast<std::size_t>(b));
      }
      OwnedString res;
      check(ng_hyperparameter_sweep(m.p, s.p, sweep_flags.arch.c_str(), sweep_flags.init_seed,
                                    training_config(sweep_flags, std::nullopt).dump().c_str(), grid.dump().c_str(),
                                    out.string().c_str(), print_progress, nullptr, &res.p));
      summary = res.parse();
    } else if (sub == adv_sweep) {
      Manifest m;
      Split s;
      load_data(advs_data, out, m, s);
      const auto eps = parse_number_list(advs_eps, "--epsilons");
      const json cfg = training_config(advs_flags, std::pair(0.0, advs_mix));
      OwnedString res;
      check(ng_epsilon_sweep(m.p, s.p, advs_flags.arch.c_str(), advs_flags.init_seed, cfg.dump().c_str(), eps.data(),
                             eps.size(), out.string().c_str(), print_progress, nullptr, &res.p));
      summary = res.parse();
    } else if (sub == evaluate) {
      Manifest m;
      Split s;
      Model c;
      load_data(eval_data, out, m, s);
      check(ng_classifier_load(eval_checkpoint.c_str(), &c.p));
      OwnedString res;
      check(ng_evaluate(c.p, m.p, s.p, eval_partition.c_str(), out.string().c_str(), &res.p));
      summary = res.parse();
    } else if (sub == compare) {
      json models = json::array();
      for (const auto& spec : compare_models) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--model", "expected NAME=path, got '" + spec + "'");
        const fs::path path = spec.substr(eq + 1);
        std::ifstream in(path);
        if (!in) throw CLI::ValidationError("--model", "cannot read " + path.string());
        models.push_back({{"name", spec.substr(0, eq)}, {"report", json::parse(in)}});
      }
      OwnedString res;
      check(ng_compare(models.dump().c_str(), compare_reference ? 1 : 0, out.string().c_str(), &res.p));
      summary = res.parse();
    } else if (sub == explain) {
      Model c;
      check(ng_classifier_load(ex_checkpoint.c_str(), &c.p));
      int rows = 0;
      int cols = 0;
      char sep = 0;
      std::istringstream grid(ex_grid);
      if (!(grid >> rows >> sep >> cols) || (sep != 'x' && sep != 'X') || rows < 1 || cols < 1) {
        throw CLI::ValidationError("--grid", "expected ROWSxCOLS, got '" + ex_grid + "'");
      }
      const json opts = {{"rows", rows},       {"cols", cols},       {"exact", !ex_sampled}, {"samples", ex_samples},
                         {"seed", ex_seed},    {"baseline", ex_baseline}, {"alpha", ex_alpha}};
      const int target = ex_target.empty() ? -1 : parse_category(ex_target);
      OwnedString res;
      check(ng_explain(c.p, ex_image.c_str(), ex_method.c_str(), target, opts.dump().c_str(), out.string().c_str(),
                       &res.p));
      summary = res.parse();
    } else if (sub == serve) {
      json cfg = {{"store_dir", serve_store.empty() ? (out / "store").string() : serve_store},
                  {"models_dir", serve_models}};
      if (!serve_weights.empty()) cfg["severity_weights"] = json::parse(std::ifstream(serve_weights));
      if (!serve_model.empty()) cfg["active_model"] = serve_model;
      Handle<ng_service, ng_service_free> svc;
      check(ng_service_create(cfg.dump().c_str(), &svc.p));
      const char* token = std::getenv("NAILGUARD_TOKEN");
      int port = 0;
      check(ng_service_bind(svc.p, serve_host.c_str(), serve_port, token, &port));
      write_run_index(out, sub->get_name(), flag_record(sub));
      std::cerr << "listening on http://" << serve_host << ':' << port
                << (token && *token ? " (bearer token required)" : "") << '\n';
      g_service = svc.p;
      std::signal(SIGINT, handle_signal);
      std::signal(SIGTERM, handle_signal);
      check(ng_service_run(svc.p));
      g_service = nullptr;
      return 0;
    }
    write_json(out / "summary.json", summary);
    write_run_index(out, sub->get_name(), flag_record(sub));
    std::cout << summary.dump(2) << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << sub->help();
    return kExitUsage;
  } catch (const CommandFailed& e) {
    std::cerr << "error [" << ng_status_name(e.status) << "]: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}
