#include "paramshift/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>

#include <httplib.h>

#include "paramshift/checkpoint.hpp"
#include "paramshift/evaluation.hpp"
#include "paramshift/png.hpp"

namespace paramshift {

using nlohmann::json;

namespace {

HttpResponse json_response(int status, const json& j) { return {status, "application/json", j.dump()}; }
HttpResponse error_response(int status, const std::string& message) {
  return json_response(status, {{"error", message}});
}

struct BadRequest {
  int status;
  std::string message;
};

const std::string& need(const std::map<std::string, std::string>& q, const std::string& key) {
  auto it = q.find(key);
  if (it == q.end() || it->second.empty()) throw BadRequest{400, "missing query parameter '" + key + "'"};
  return it->second;
}

double parse_real(const std::string& s, const std::string& key) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || !std::isfinite(v)) throw BadRequest{400, "'" + key + "' must be a finite number"};
  return v;
}

std::uint64_t parse_uint(const std::string& s, const std::string& key) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw BadRequest{400, "'" + key + "' must be a non-negative integer"};
  }
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw BadRequest{400, "'" + key + "' is out of range"};
  }
}

std::string now_iso8601() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

long long quantize(double t) { return std::llround(t * 1000.0); }

}  // namespace

std::size_t FrameCache::KeyHash::operator()(const Key& k) const {
  std::uint64_t h = splitmix64(std::get<0>(k));
  h = splitmix64(h ^ static_cast<std::uint64_t>(std::get<1>(k)));
  return static_cast<std::size_t>(splitmix64(h ^ std::get<2>(k)));
}

bool FrameCache::get(const Key& key, std::string& out) {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = index_.find(key);
  if (it == index_.end()) return false;
  order_.splice(order_.begin(), order_, it->second);
  out = it->second->second;
  return true;
}

void FrameCache::put(const Key& key, std::string value) {
  std::lock_guard<std::mutex> lock(mu_);
  if (capacity_ == 0) return;
  auto it = index_.find(key);
  if (it != index_.end()) {
    it->second->second = std::move(value);
    order_.splice(order_.begin(), order_, it->second);
    return;
  }
  order_.emplace_front(key, std::move(value));
  index_[key] = order_.begin();
  if (order_.size() > capacity_) {
    index_.erase(order_.back().first);
    order_.pop_back();
  }
}

std::size_t FrameCache::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return order_.size();
}

InspectionService::InspectionService(GeneratorModel model, DirectionSet dirs, std::filesystem::path annotations,
                                     json source)
    : InspectionService(std::make_shared<LayerView>(std::move(model), dirs.layer), std::move(dirs),
                        std::move(annotations), std::move(source)) {}

InspectionService::InspectionService(std::shared_ptr<const ShiftableGenerator> gen, DirectionSet dirs,
                                     std::filesystem::path annotations, json source)
    : gen_(std::move(gen)), dirs_(std::move(dirs)), annotations_(std::move(annotations)), source_(std::move(source)) {
  dirs_.validate();
  if (dirs_.raw_dim() != gen_->shift_dim()) throw ValueError("direction set does not match the generator layer");
}

json InspectionService::meta() const {
  const Shape img = gen_->image_shape();
  return {{"layer", dirs_.layer >= 0 ? layer_name(dirs_.layer) : std::string("harness")},
          {"parametrization", parametrization_name(dirs_.kind)},
          {"count", dirs_.count()},
          {"T", dirs_.T},
          {"t_bound", 2.0 * dirs_.T},
          {"latent_dim", gen_->latent_dim()},
          {"image_shape", img},
          {"t_quantum", 1e-3},
          {"source", source_}};
}

json InspectionService::directions() const {
  json out = json::array();
  for (std::size_t k = 0; k < dirs_.count(); ++k) {
    const DirectionInfo info = k < dirs_.info.size() ? dirs_.info[k] : DirectionInfo{};
    out.push_back({{"id", k},
                   {"label", info.label},
                   {"method", info.method},
                   {"score", info.score},
                   {"eigenvalue", info.eigenvalue},
                   {"T", dirs_.T}});
  }
  return out;
}

std::string InspectionService::render_png(std::size_t dir, double t, std::uint64_t seed) const {
  const Tensor<float> z = latent_for_seed(seed, gen_->latent_dim());
  Tensor<float> img;
  if (t == 0.0) {
    img = gen_->render(z);
  } else {
    const Tensor<float> shift = dirs_.raw_shift(dir, t);
    img = gen_->render(z, &shift);
  }
  return encode_png(to_gray(img));
}

HttpResponse InspectionService::render(const std::map<std::string, std::string>& query) {
  const std::uint64_t dir = parse_uint(need(query, "dir"), "dir");
  const double t = parse_real(need(query, "t"), "t");
  const std::uint64_t seed = parse_uint(need(query, "seed"), "seed");
  if (dir >= dirs_.count()) throw BadRequest{404, "unknown direction " + std::to_string(dir)};
  if (std::abs(t) > 2.0 * dirs_.T) throw BadRequest{400, "|t| exceeds 2T = " + std::to_string(2.0 * dirs_.T)};
  const FrameCache::Key key{dir, quantize(t), seed};
  std::string png;
  if (!cache_.get(key, png)) {
    png = render_png(dir, static_cast<double>(std::get<1>(key)) / 1000.0, seed);
    cache_.put(key, png);
  }
  return {200, "image/png", std::move(png)};
}

HttpResponse InspectionService::strip(const std::map<std::string, std::string>& query) const {
  const std::uint64_t dir = parse_uint(need(query, "dir"), "dir");
  const std::uint64_t seed = parse_uint(need(query, "seed"), "seed");
  const std::uint64_t steps = query.count("steps") ? parse_uint(query.at("steps"), "steps") : 7;
  const double tmax = query.count("tmax") ? parse_real(query.at("tmax"), "tmax") : dirs_.T;
  if (dir >= dirs_.count()) throw BadRequest{404, "unknown direction " + std::to_string(dir)};
  if (!(tmax > 0) || tmax > 2.0 * dirs_.T) throw BadRequest{400, "tmax must lie in (0, 2T]"};
  if (steps < 2 || steps > 64) throw BadRequest{400, "steps must lie in [2, 64]"};
  StripSpec spec;
  spec.k = dir;
  spec.t_min = -tmax;
  spec.t_max = tmax;
  spec.steps = steps;
  spec.seeds = {seed};
  try {
    return {200, "image/png", encode_png(render_strip(*gen_, dirs_, spec).grid)};
  } catch (const ValueError& e) {
    throw BadRequest{400, e.what()};
  }
}

std::map<std::string, std::string> InspectionService::validate_annotation(const json& r) const {
  std::map<std::string, std::string> errors;
  if (!r.is_object()) {
    errors["body"] = "must be a JSON object";
    return errors;
  }
  if (!r.contains("direction_id") || !r["direction_id"].is_number_integer()) {
    errors["direction_id"] = "required integer";
  } else if (r["direction_id"].get<long long>() < 0 ||
             static_cast<std::size_t>(r["direction_id"].get<long long>()) >= dirs_.count()) {
    errors["direction_id"] = "unknown direction";
  }
  if (r.contains("method") && !r["method"].is_string()) errors["method"] = "must be a string";
  if (!r.contains("label") || !r["label"].is_string()) errors["label"] = "required string";
  if (!r.contains("interpretable") || !r["interpretable"].is_boolean()) errors["interpretable"] = "required boolean";
  if (!r.contains("quality") || !r["quality"].is_number_integer()) {
    errors["quality"] = "required integer";
  } else if (r["quality"].get<long long>() < 1 || r["quality"].get<long long>() > 5) {
    errors["quality"] = "must be between 1 and 5";
  }
  for (const char* f : {"safe_t_min", "safe_t_max"}) {
    if (!r.contains(f) || !r[f].is_number()) errors[f] = "required number";
  }
  if (!errors.count("safe_t_min") && !errors.count("safe_t_max") &&
      r["safe_t_min"].get<double>() > r["safe_t_max"].get<double>()) {
    errors["safe_t_max"] = "must not be below safe_t_min";
  }
  if (!r.contains("annotator") || !r["annotator"].is_string() || r["annotator"].get<std::string>().empty()) {
    errors["annotator"] = "required non-empty string";
  }
  if (r.contains("timestamp") && !r["timestamp"].is_string()) errors["timestamp"] = "must be a string";
  static const std::vector<std::string> known = {"direction_id", "method",     "label",     "interpretable", "quality",
                                                 "safe_t_min",   "safe_t_max", "annotator", "timestamp"};
  for (const auto& [key, value] : r.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) errors[key] = "unknown field";
  }
  return errors;
}

HttpResponse InspectionService::submit_annotation(const std::string& body) {
  json record;
  try {
    record = json::parse(body);
  } catch (const json::exception&) {
    return json_response(422, {{"errors", {{"body", "invalid JSON"}}}});
  }
  const auto errors = validate_annotation(record);
  if (!errors.empty()) return json_response(422, {{"errors", errors}});
  const auto id = record["direction_id"].get<std::size_t>();
  if (!record.contains("method")) record["method"] = id < dirs_.info.size() ? dirs_.info[id].method : "";
  if (!record.contains("timestamp")) record["timestamp"] = now_iso8601();
  const std::string line = record.dump() + "\n";
  {
    std::lock_guard<std::mutex> lock(write_mu_);
    const int fd = ::open(annotations_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) return error_response(500, "cannot open annotation store");
    const ssize_t n = ::write(fd, line.data(), line.size());
    ::fsync(fd);
    ::close(fd);
    if (n != static_cast<ssize_t>(line.size())) return error_response(500, "short write to annotation store");
  }
  return json_response(201, record);
}

json InspectionService::list_annotations() const {
  json out = json::array();
  std::lock_guard<std::mutex> lock(write_mu_);
  std::ifstream in(annotations_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception&) {
      // an unterminated final line from an interrupted writer is skipped
    }
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

HttpResponse InspectionService::export_annotations(const std::map<std::string, std::string>& query) const {
  const auto it = query.find("format");
  if (it != query.end() && it->second != "csv") throw BadRequest{400, "unsupported export format '" + it->second + "'"};
  json records = list_annotations();
  std::vector<json> rows(records.begin(), records.end());
  std::stable_sort(rows.begin(), rows.end(), [](const json& a, const json& b) {
    return a.value("method", "") < b.value("method", "");
  });
  std::ostringstream out;
  out << "method,direction_id,label,interpretable,quality,safe_t_min,safe_t_max,annotator,timestamp\n";
  for (const auto& r : rows) {
    out << csv_field(r.value("method", "")) << ',' << r.value("direction_id", 0) << ','
        << csv_field(r.value("label", "")) << ',' << (r.value("interpretable", false) ? "true" : "false") << ','
        << r.value("quality", 0) << ',' << r["safe_t_min"].dump() << ',' << r["safe_t_max"].dump() << ','
        << csv_field(r.value("annotator", "")) << ',' << csv_field(r.value("timestamp", "")) << '\n';
  }
  return {200, "text/csv", out.str()};
}

HttpResponse InspectionService::handle(const std::string& method, const std::string& path,
                                       const std::map<std::string, std::string>& query, const std::string& body) {
  try {
    if (method == "GET" && path == "/api/meta") return json_response(200, meta());
    if (method == "GET" && path == "/api/directions") return json_response(200, directions());
    if (method == "GET" && path == "/api/render") return render(query);
    if (method == "GET" && path == "/api/strip") return strip(query);
    if (method == "POST" && path == "/api/annotations") return submit_annotation(body);
    if (method == "GET" && path == "/api/annotations") return json_response(200, list_annotations());
    if (method == "GET" && path == "/api/annotations/export") return export_annotations(query);
    return error_response(404, "no route for " + method + " " + path);
  } catch (const BadRequest& e) {
    return error_response(e.status, e.message);
  } catch (const Error& e) {
    return error_response(500, e.what());
  }
}

struct HttpServer::Impl {
  InspectionService& service;
  httplib::Server server;
  explicit Impl(InspectionService& s) : service(s) {}
};

HttpServer::HttpServer(InspectionService& service, std::filesystem::path web_dir)
    : impl_(std::make_unique<Impl>(service)) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    const HttpResponse r = impl_->service.handle(req.method, req.path, query, req.body);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  for (const char* route : {"/api/meta", "/api/directions", "/api/render", "/api/strip", "/api/annotations",
                            "/api/annotations/export"}) {
    impl_->server.Get(route, handler);
  }
  impl_->server.Post("/api/annotations", handler);
  if (!web_dir.empty() && std::filesystem::is_directory(web_dir)) impl_->server.set_mount_point("/", web_dir.string());
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpServer::run() { return impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
}

std::filesystem::path default_web_dir() { return PARAMSHIFT_WEB_DIR; }

}  // namespace paramshift
