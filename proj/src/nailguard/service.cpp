#include "nailguard/service.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "nailguard/digest.hpp"
#include "nailguard/errors.hpp"
#include "nailguard/image_io.hpp"
#include "nailguard/pipeline.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace nailguard {

SeverityWeights SeverityWeights::defaults() {
  SeverityWeights s;
  const LabelTaxonomy& t = LabelTaxonomy::canonical();
  auto set = [&](const char* name, double w) { s.w_[static_cast<std::size_t>(*t.index_of(name))] = w; };
  set("acral_lentiginous_melanoma", 1.0);
  set("blue_finger", 0.8);
  set("clubbing", 0.6);
  set("onychogryphosis", 0.4);
  set("pitting", 0.3);
  set("healthy_nail", 0.0);
  return s;
}

SeverityWeights SeverityWeights::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("severity weights must be a JSON object");
  SeverityWeights s = defaults();
  const LabelTaxonomy& t = LabelTaxonomy::canonical();
  for (const auto& [key, value] : j.items()) {
    const auto idx = t.resolve(key);
    if (!idx) throw ConfigError("unknown category in severity weights: " + key);
    if (!value.is_number()) throw ConfigError("severity weight for " + key + " is not a number");
    const double w = value.get<double>();
    if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("severity weight for " + key + " must be in [0, 1]");
    s.w_[static_cast<std::size_t>(*idx)] = w;
  }
  if (s.w_[static_cast<std::size_t>(*t.index_of("healthy_nail"))] != 0.0) {
    throw ConfigError("healthy_nail must have severity weight 0");
  }
  return s;
}

json SeverityWeights::to_json() const {
  json j = json::object();
  const LabelTaxonomy& t = LabelTaxonomy::canonical();
  for (int i = 0; i < kNumCategories; ++i) j[t.name(i)] = w_[static_cast<std::size_t>(i)];
  return j;
}

double priority_score(const ProbRow& probs, const SeverityWeights& weights) {
  const int top = argmax(probs);
  return weights.weight(top) * probs[static_cast<std::size_t>(top)];
}

namespace {

std::string status_name(CaseStatus s) { return s == CaseStatus::pending ? "pending" : "reviewed"; }
std::string decision_name(ReviewDecision d) { return d == ReviewDecision::confirm ? "confirm" : "override"; }

json review_json(const Review& r, const LabelTaxonomy& taxonomy) {
  json j = {{"decision", decision_name(r.decision)}, {"note", r.note}, {"reviewed_at", r.reviewed_at}};
  j["override_category"] = r.override_category ? json(taxonomy.name(*r.override_category)) : json(nullptr);
  return j;
}

Review review_from_json(const json& j, const LabelTaxonomy& taxonomy) {
  Review r;
  r.decision = j.at("decision").get<std::string>() == "override" ? ReviewDecision::override : ReviewDecision::confirm;
  if (j.contains("override_category") && j.at("override_category").is_string()) {
    r.override_category = taxonomy.index_of(j.at("override_category").get<std::string>());
  }
  r.note = j.value("note", "");
  r.reviewed_at = j.value("reviewed_at", "");
  return r;
}

Case case_from_json(const json& j, const LabelTaxonomy& taxonomy) {
  Case c;
  c.case_id = j.at("case_id").get<std::string>();
  c.image_ref = j.at("image_ref").get<std::string>();
  c.submitted_at = j.at("submitted_at").get<std::string>();
  c.sequence = j.at("sequence").get<std::uint64_t>();
  const json& p = j.at("prediction");
  const auto idx = taxonomy.index_of(p.at("category").get<std::string>());
  if (!idx) throw ConfigError("case " + c.case_id + " has an unknown predicted category");
  c.prediction.category = *idx;
  const auto probs = p.at("probs").get<std::vector<double>>();
  if (probs.size() != kNumCategories) throw ConfigError("case " + c.case_id + " does not carry six probabilities");
  std::copy(probs.begin(), probs.end(), c.prediction.probs.begin());
  c.prediction.model_id = p.value("model_id", "");
  c.priority_score = j.at("priority_score").get<double>();
  c.status = j.at("status").get<std::string>() == "reviewed" ? CaseStatus::reviewed : CaseStatus::pending;
  if (j.contains("review") && j.at("review").is_object()) c.review = review_from_json(j.at("review"), taxonomy);
  return c;
}

}  // namespace

json to_json(const Case& c, const LabelTaxonomy& taxonomy) {
  json j = {{"case_id", c.case_id},
            {"image_ref", c.image_ref},
            {"submitted_at", c.submitted_at},
            {"sequence", c.sequence},
            {"prediction",
             {{"category", taxonomy.name(c.prediction.category)},
              {"probs", c.prediction.probs},
              {"model_id", c.prediction.model_id}}},
            {"priority_score", c.priority_score},
            {"status", status_name(c.status)}};
  j["review"] = c.review ? review_json(*c.review, taxonomy) : json(nullptr);
  return j;
}

bool queue_before(const Case& a, const Case& b) {
  if (a.priority_score != b.priority_score) return a.priority_score > b.priority_score;
  if (a.submitted_at != b.submitted_at) return a.submitted_at < b.submitted_at;
  return a.case_id < b.case_id;
}

CaseStore::CaseStore(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_ / "images", ec);
  if (ec) throw IoError("cannot create case store at " + root_.string() + ": " + ec.message());
  std::ifstream in(root_ / "events.jsonl");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      apply(json::parse(line));
    } catch (const json::exception& e) {
      throw ConfigError("corrupt event log line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void CaseStore::apply(const json& event) {
  const LabelTaxonomy& t = LabelTaxonomy::canonical();
  const std::string type = event.at("type").get<std::string>();
  if (type == "case_submitted") {
    Case c = case_from_json(event.at("case"), t);
    next_sequence_ = std::max(next_sequence_, c.sequence + 1);
    cases_[c.case_id] = std::move(c);
  } else if (type == "case_reviewed") {
    auto it = cases_.find(event.at("case_id").get<std::string>());
    if (it == cases_.end()) throw ConfigError("review event for an unknown case");
    it->second.status = CaseStatus::reviewed;
    it->second.review = review_from_json(event.at("review"), t);
  } else if (type == "model_activated") {
    last_active_ = event.at("model_id").get<std::string>();
  } else {
    throw ConfigError("unknown event type '" + type + "'");
  }
}

void CaseStore::append(const json& event) {
  std::ofstream out(root_ / "events.jsonl", std::ios::app | std::ios::binary);
  out << event.dump() << '\n';
  out.flush();
  if (!out) throw IoError("cannot append to " + (root_ / "events.jsonl").string());
  apply(event);
}

std::string CaseStore::put_image(std::span<const std::uint8_t> bytes) {
  const std::string ref = sha256_hex(bytes);
  const fs::path path = root_ / "images" / ref;
  if (!fs::exists(path)) {
    const fs::path tmp = path.string() + ".tmp";
    write_file_bytes(tmp, bytes);
    fs::rename(tmp, path);
  }
  return ref;
}

std::vector<std::uint8_t> CaseStore::image(const std::string& image_ref) const {
  return read_file_bytes(root_ / "images" / image_ref);
}

void CaseStore::add(const Case& c) {
  append({{"type", "case_submitted"}, {"case", to_json(c, LabelTaxonomy::canonical())}});
}

void CaseStore::set_review(const std::string& case_id, const Review& review) {
  append({{"type", "case_reviewed"}, {"case_id", case_id}, {"review", review_json(review, LabelTaxonomy::canonical())}});
}

void CaseStore::record_activation(const std::string& model_id) {
  append({{"type", "model_activated"}, {"model_id", model_id}});
}

const Case* CaseStore::find(const std::string& case_id) const {
  auto it = cases_.find(case_id);
  return it == cases_.end() ? nullptr : &it->second;
}

std::vector<Case> CaseStore::all() const {
  std::vector<Case> out;
  for (const auto& [id, c] : cases_) out.push_back(c);
  std::sort(out.begin(), out.end(), [](const Case& a, const Case& b) { return a.sequence < b.sequence; });
  return out;
}

std::vector<Case> CaseStore::pending() const {
  std::vector<Case> out;
  for (const auto& [id, c] : cases_) {
    if (c.status == CaseStatus::pending) out.push_back(c);
  }
  std::sort(out.begin(), out.end(), queue_before);
  return out;
}

json to_json(const Explanation& e) {
  return {{"case_id", e.case_id},
          {"method", method_name(e.method)},
          {"target", LabelTaxonomy::canonical().name(e.target)},
          {"model_id", e.model_id},
          {"attribution", e.attribution},
          {"overlay_png_base64", base64_encode(e.overlay_png)}};
}

std::string utc_timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
  const std::time_t secs = static_cast<std::time_t>(ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms % 1000));
  return buf;
}

NailService::NailService(ServiceConfig config) : config_(std::move(config)), store_(config_.store_dir) {
  if (!config_.clock) config_.clock = utc_timestamp_now;
  if (const auto& last = store_.last_active_model()) {
    try {
      active_ = load_model(*last);
      active_id_ = *last;
    } catch (const Error&) {
      // The model directory may have been removed since; start inactive.
    }
  }
}

std::shared_ptr<const Classifier> NailService::load_model(const std::string& model_id) const {
  if (auto it = installed_.find(model_id); it != installed_.end()) return it->second;
  if (model_id.empty() || model_id.find('/') != std::string::npos || model_id.find("..") != std::string::npos) {
    throw NotFound("unknown model '" + model_id + "'");
  }
  const fs::path dir = config_.models_dir / model_id;
  if (config_.models_dir.empty() || !fs::exists(dir / "metadata.json")) {
    throw NotFound("unknown model '" + model_id + "'");
  }
  return std::make_shared<const Classifier>(load_checkpoint(dir, taxonomy_).classifier);
}

std::vector<ModelInfo> NailService::models() const {
  std::lock_guard lock(mutex_);
  std::map<std::string, ModelInfo> found;
  if (!config_.models_dir.empty() && fs::is_directory(config_.models_dir)) {
    for (const auto& entry : fs::directory_iterator(config_.models_dir)) {
      if (!entry.is_directory() || !fs::exists(entry.path() / "metadata.json")) continue;
      ModelInfo info;
      info.id = entry.path().filename().string();
      try {
        const json meta = json::parse(std::ifstream(entry.path() / "metadata.json"));
        info.backbone_id = meta.value("backbone_id", "");
        info.metrics = meta.value("metrics", json::object());
      } catch (const json::exception&) {
        continue;
      }
      found[info.id] = std::move(info);
    }
  }
  for (const auto& [id, clf] : installed_) found[id] = ModelInfo{id, clf->spec().id, false, json::object()};
  std::vector<ModelInfo> out;
  for (auto& [id, info] : found) {
    info.active = id == active_id_;
    out.push_back(std::move(info));
  }
  return out;
}

void NailService::activate_model(const std::string& model_id) {
  std::shared_ptr<const Classifier> clf;
  {
    std::lock_guard lock(mutex_);
    clf = load_model(model_id);
  }
  std::lock_guard lock(mutex_);
  store_.record_activation(model_id);
  active_ = std::move(clf);
  active_id_ = model_id;
}

void NailService::install_model(const std::string& model_id, Classifier classifier) {
  if (classifier.taxonomy() != taxonomy_) throw ConfigError("model taxonomy differs from the service taxonomy");
  auto clf = std::make_shared<const Classifier>(std::move(classifier));
  std::lock_guard lock(mutex_);
  installed_[model_id] = clf;
  store_.record_activation(model_id);
  active_ = std::move(clf);
  active_id_ = model_id;
}

std::optional<std::string> NailService::active_model() const {
  std::lock_guard lock(mutex_);
  if (!active_) return std::nullopt;
  return active_id_;
}

std::shared_ptr<const Classifier> NailService::active_classifier(std::string* model_id) const {
  std::lock_guard lock(mutex_);
  if (!active_) throw Unavailable("no active model; activate one via POST /models/{id}/activate");
  if (model_id) *model_id = active_id_;
  return active_;
}

Case NailService::submit_case(std::span<const std::uint8_t> image_bytes) {
  std::string model_id;
  const auto clf = active_classifier(&model_id);
  const RgbImage decoded = decode_image(image_bytes, "upload");
  const PreprocessedImage pre = preprocess(decoded, "upload");
  const ProbRow probs = clf->predict(pre.pixels);

  std::lock_guard lock(mutex_);
  Case c;
  c.sequence = store_.next_sequence();
  char id[32];
  std::snprintf(id, sizeof id, "case-%06llu", static_cast<unsigned long long>(c.sequence));
  c.case_id = id;
  c.image_ref = store_.put_image(image_bytes);
  c.submitted_at = config_.clock();
  c.prediction = {argmax(probs), probs, model_id};
  c.priority_score = priority_score(probs, config_.weights);
  store_.add(c);
  return c;
}

std::vector<Case> NailService::pending_queue() const {
  std::lock_guard lock(mutex_);
  return store_.pending();
}

std::vector<Case> NailService::cases() const {
  std::lock_guard lock(mutex_);
  return store_.all();
}

Case NailService::get_case(const std::string& case_id) const {
  std::lock_guard lock(mutex_);
  const Case* c = store_.find(case_id);
  if (!c) throw NotFound("unknown case '" + case_id + "'");
  return *c;
}

Case NailService::review_case(const std::string& case_id, const ReviewRequest& request) {
  Review review;
  if (request.decision == "confirm") {
    review.decision = ReviewDecision::confirm;
    if (request.override_category) throw InvalidArgument("override_category is only valid with decision 'override'");
  } else if (request.decision == "override") {
    review.decision = ReviewDecision::override;
    if (!request.override_category) throw InvalidArgument("decision 'override' requires override_category");
    review.override_category = taxonomy_.resolve(*request.override_category);
    if (!review.override_category) {
      throw InvalidArgument("unknown override_category '" + *request.override_category + "'");
    }
  } else {
    throw InvalidArgument("decision must be 'confirm' or 'override'");
  }
  review.note = request.note;

  std::lock_guard lock(mutex_);
  const Case* c = store_.find(case_id);
  if (!c) throw NotFound("unknown case '" + case_id + "'");
  if (c->status == CaseStatus::reviewed) throw Conflict("case '" + case_id + "' has already been reviewed");
  review.reviewed_at = config_.clock();
  store_.set_review(case_id, review);
  return *store_.find(case_id);
}

std::shared_ptr<const Explanation> NailService::explanation(const std::string& case_id, std::string_view method,
                                                            std::optional<std::string> target) {
  const AttributionMethod m = parse_method(method);
  const Case c = get_case(case_id);
  int target_index = c.prediction.category;
  if (target && !target->empty()) {
    std::optional<int> resolved = taxonomy_.resolve(*target);
    if (!resolved && target->size() <= 2 &&
        std::all_of(target->begin(), target->end(), [](char ch) { return ch >= '0' && ch <= '9'; })) {
      const int index = std::stoi(*target);
      if (index < taxonomy_.size()) resolved = index;
    }
    if (!resolved) throw InvalidArgument("unknown target category '" + *target + "'");
    target_index = *resolved;
  }
  std::string model_id;
  const auto clf = active_classifier(&model_id);
  const std::string key = case_id + '\n' + method_name(m) + '\n' + std::to_string(target_index) + '\n' + model_id;
  {
    std::lock_guard lock(mutex_);
    if (auto it = explanation_cache_.find(key); it != explanation_cache_.end()) return it->second;
  }

  std::vector<std::uint8_t> bytes;
  {
    std::lock_guard lock(mutex_);
    bytes = store_.image(c.image_ref);
  }
  const PreprocessedImage pre = preprocess(decode_image(bytes, case_id), case_id);
  auto e = std::make_shared<Explanation>();
  e->case_id = case_id;
  e->method = m;
  e->target = target_index;
  e->model_id = model_id;
  Grid map;
  if (m == AttributionMethod::gradcam) {
    AttributionMap a = grad_cam(*clf, pre.pixels, target_index);
    e->attribution = to_json(a);
    map = std::move(a.values);
  } else {
    const Segmentation seg = segment_grid(pre.pixels.height, pre.pixels.width, config_.shapley_rows, config_.shapley_cols);
    ShapleyOptions opts;
    opts.exact = seg.count <= kMaxExactSegments;
    opts.baseline = config_.shapley_baseline;
    const ShapleyResult r = shapley_attribution(*clf, pre.pixels, seg, target_index, opts);
    e->attribution = to_json(r, seg, target_index);
    e->attribution["baseline"] = baseline_name(opts.baseline);
    map = to_pixel_map(r, seg);
  }
  e->overlay_png = overlay(to_rgb(pre.pixels), map, config_.overlay_alpha);

  std::lock_guard lock(mutex_);
  auto [it, inserted] = explanation_cache_.emplace(key, std::move(e));
  return it->second;
}

}  // namespace nailguard
