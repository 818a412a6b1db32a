#pragma once

#include <filesystem>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <tuple>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "paramshift/directions.hpp"
#include "paramshift/shiftable.hpp"

namespace paramshift {

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Fixed-capacity least-recently-used map from render keys to PNG bytes.
class FrameCache {
 public:
  using Key = std::tuple<std::size_t, long long, std::uint64_t>;  // (dir, t in 1e-3 units, seed)

  explicit FrameCache(std::size_t capacity = 256) : capacity_(capacity) {}

  bool get(const Key& key, std::string& out);
  void put(const Key& key, std::string value);
  std::size_t size() const;

 private:
  struct KeyHash {
    std::size_t operator()(const Key& k) const;
  };
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::list<std::pair<Key, std::string>> order_;
  std::unordered_map<Key, std::list<std::pair<Key, std::string>>::iterator, KeyHash> index_;
};

/// Inspection API over one generator and one direction set.
///
///   GET  /api/meta                      model and direction-set summary
///   GET  /api/directions                per-direction metadata
///   GET  /api/render?dir&t&seed         image/png of G_{t xi_dir}(z(seed))
///   GET  /api/strip?dir&seed&steps&tmax horizontal PNG strip over [-tmax, tmax]
///   POST /api/annotations               append one annotation record
///   GET  /api/annotations               all records in arrival order
///   GET  /api/annotations/export?format=csv
///
/// t is quantized to multiples of 1e-3 before rendering, and |t| <= 2T.
/// Annotations are appended to a JSON-lines file, one write per record.
class InspectionService {
 public:
  InspectionService(GeneratorModel model, DirectionSet dirs, std::filesystem::path annotations,
                    nlohmann::json source = nlohmann::json::object());
  InspectionService(std::shared_ptr<const ShiftableGenerator> gen, DirectionSet dirs,
                    std::filesystem::path annotations, nlohmann::json source = nlohmann::json::object());

  HttpResponse handle(const std::string& method, const std::string& path,
                      const std::map<std::string, std::string>& query, const std::string& body);

  nlohmann::json meta() const;
  nlohmann::json directions() const;
  HttpResponse render(const std::map<std::string, std::string>& query);
  HttpResponse strip(const std::map<std::string, std::string>& query) const;
  HttpResponse submit_annotation(const std::string& body);
  nlohmann::json list_annotations() const;
  HttpResponse export_annotations(const std::map<std::string, std::string>& query) const;

  /// Field name -> problem, empty when the record is valid.
  std::map<std::string, std::string> validate_annotation(const nlohmann::json& record) const;

  /// PNG of one frame, no cache.
  std::string render_png(std::size_t dir, double t, std::uint64_t seed) const;

  const FrameCache& cache() const { return cache_; }

 private:
  std::shared_ptr<const ShiftableGenerator> gen_;
  DirectionSet dirs_;
  std::filesystem::path annotations_;
  nlohmann::json source_;
  FrameCache cache_;
  mutable std::mutex write_mu_;
};

/// HTTP front end: API routes plus static files from `web_dir` at /.
class HttpServer {
 public:
  HttpServer(InspectionService& service, std::filesystem::path web_dir);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds `host`:`port` (0 picks a free port) and returns the bound port,
  /// or -1 on failure.
  int bind(const std::string& host, int port);
  /// Serves until stop(); call after bind().
  bool run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Minimal CSV quoting (RFC 4180).
std::string csv_field(const std::string& s);

/// Default directory with the bundled web client.
std::filesystem::path default_web_dir();

}  // namespace paramshift
