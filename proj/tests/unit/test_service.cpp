#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include <unistd.h>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "paramshift/evaluation.hpp"
#include "paramshift/harness.hpp"
#include "paramshift/png.hpp"
#include "paramshift/service.hpp"

using namespace paramshift;
using nlohmann::json;

namespace {

struct Fixture {
  std::filesystem::path dir;
  std::unique_ptr<InspectionService> service;

  Fixture() {
    dir = std::filesystem::temp_directory_path() / ("paramshift_service_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    DirectionSet d;
    d.layer = -1;
    d.kind = Parametrization::raw_kernel;
    d.coeffs = Tensor<float>({2, 4}, std::vector<float>{1, 0, 0, 0, 0, 0, 1, 0});
    d.T = 1.5;
    d.info = {{"top-left", "spectrum", 0.9, 0.05}, {"bottom-left", "optimization", 0.8, 0.0}};
    service = std::make_unique<InspectionService>(std::make_shared<BlobHarness>(), d, dir / "ann.jsonl",
                                                  json{{"model", "harness"}});
  }
  ~Fixture() { std::filesystem::remove_all(dir); }
};

json good_record() {
  return {{"direction_id", 1}, {"label", "lower blob, brighter"}, {"interpretable", true}, {"quality", 4},
          {"safe_t_min", -1.0}, {"safe_t_max", 1.25}, {"annotator", "ak"}};
}

}  // namespace

TEST_CASE("meta and directions") {
  Fixture f;
  const auto r = f.service->handle("GET", "/api/meta", {}, "");
  CHECK(r.status == 200);
  const auto meta = json::parse(r.body);
  CHECK(meta.at("count") == 2);
  CHECK(meta.at("T") == 1.5);
  CHECK(meta.at("t_bound") == 3.0);
  CHECK(meta.at("latent_dim") == 4);
  CHECK(meta.at("source").at("model") == "harness");
  const auto dirs = json::parse(f.service->handle("GET", "/api/directions", {}, "").body);
  CHECK(dirs.size() == 2);
  CHECK(dirs[1].at("method") == "optimization");
  CHECK(dirs[0].at("label") == "top-left");
  CHECK(f.service->handle("GET", "/api/nothing", {}, "").status == 404);
}

TEST_CASE("render: quantized t, cache, bounds") {
  Fixture f;
  const auto a = f.service->handle("GET", "/api/render", {{"dir", "0"}, {"t", "0.5"}, {"seed", "3"}}, "");
  CHECK(a.status == 200);
  CHECK(a.content_type == "image/png");
  const auto b = f.service->handle("GET", "/api/render", {{"dir", "0"}, {"t", "0.50004"}, {"seed", "3"}}, "");
  CHECK(b.body == a.body);
  CHECK(f.service->cache().size() == 1);
  CHECK(a.body == f.service->render_png(0, 0.5, 3));

  const auto zero = f.service->handle("GET", "/api/render", {{"dir", "1"}, {"t", "0.0002"}, {"seed", "3"}}, "");
  CHECK(zero.body == encode_png(to_gray(BlobHarness().render(latent_for_seed(3, 4)))));

  CHECK(f.service->handle("GET", "/api/render", {{"dir", "0"}, {"t", "3.01"}, {"seed", "3"}}, "").status == 400);
  CHECK(f.service->handle("GET", "/api/render", {{"dir", "0"}, {"t", "-3.0"}, {"seed", "3"}}, "").status == 200);
  CHECK(f.service->handle("GET", "/api/render", {{"dir", "9"}, {"t", "0"}, {"seed", "3"}}, "").status == 404);
  CHECK(f.service->handle("GET", "/api/render", {{"dir", "0"}, {"seed", "3"}}, "").status == 400);
  CHECK(f.service->handle("GET", "/api/render", {{"dir", "x"}, {"t", "0"}, {"seed", "3"}}, "").status == 400);
  CHECK(f.service->handle("GET", "/api/render", {{"dir", "0"}, {"t", "nan"}, {"seed", "3"}}, "").status == 400);
}

TEST_CASE("strip endpoint") {
  Fixture f;
  const auto r = f.service->handle("GET", "/api/strip", {{"dir", "0"}, {"seed", "1"}, {"steps", "5"}}, "");
  CHECK(r.status == 200);
  const auto img = decode_png(r.body);
  CHECK(img.width == 5 * 32 + 4);
  CHECK(img.height == 32);
  CHECK(f.service->handle("GET", "/api/strip", {{"dir", "0"}, {"seed", "1"}, {"steps", "1"}}, "").status == 400);
  CHECK(f.service->handle("GET", "/api/strip", {{"dir", "0"}, {"seed", "1"}, {"tmax", "4"}}, "").status == 400);
  CHECK(f.service->handle("GET", "/api/strip", {{"dir", "0"}, {"seed", "1"}, {"steps", "4"}}, "").status == 400);
}

TEST_CASE("annotation validation") {
  Fixture f;
  CHECK(f.service->validate_annotation(good_record()).empty());
  auto r = good_record();
  r["quality"] = 6;
  r["safe_t_min"] = 2.0;
  r["extra"] = 1;
  r.erase("annotator");
  const auto errors = f.service->validate_annotation(r);
  CHECK(errors.count("quality"));
  CHECK(errors.count("safe_t_max"));
  CHECK(errors.count("extra"));
  CHECK(errors.count("annotator"));
  const auto resp = f.service->handle("POST", "/api/annotations", {}, r.dump());
  CHECK(resp.status == 422);
  CHECK(json::parse(resp.body).at("errors").contains("quality"));
  CHECK(f.service->handle("POST", "/api/annotations", {}, "{oops").status == 422);
  auto bad_dir = good_record();
  bad_dir["direction_id"] = 2;
  CHECK(f.service->validate_annotation(bad_dir).count("direction_id"));
  CHECK(f.service->list_annotations().empty());
}

TEST_CASE("annotations append, list and export") {
  Fixture f;
  auto a = good_record();
  auto b = good_record();
  b["direction_id"] = 0;
  b["label"] = "comma, \"quoted\"";
  b["timestamp"] = "2024-01-01T00:00:00Z";
  CHECK(f.service->handle("POST", "/api/annotations", {}, a.dump()).status == 201);
  CHECK(f.service->handle("POST", "/api/annotations", {}, b.dump()).status == 201);
  const auto list = f.service->list_annotations();
  REQUIRE(list.size() == 2);
  CHECK(list[0].at("method") == "optimization");
  CHECK(list[1].at("method") == "spectrum");
  CHECK(list[0].at("timestamp").get<std::string>().back() == 'Z');

  std::ifstream in(f.dir / "ann.jsonl");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    CHECK(json::accept(line));
    ++lines;
  }
  CHECK(lines == 2);

  const auto csv = f.service->handle("GET", "/api/annotations/export", {{"format", "csv"}}, "");
  CHECK(csv.status == 200);
  CHECK(csv.content_type == "text/csv");
  const std::string header = "method,direction_id,label,interpretable,quality,safe_t_min,safe_t_max,annotator,timestamp\n";
  CHECK(csv.body.substr(0, header.size()) == header);
  const auto first = csv.body.substr(header.size(), csv.body.find('\n', header.size()) - header.size());
  CHECK(first.rfind("optimization,1,", 0) == 0);
  CHECK(csv.body.find("\"comma, \"\"quoted\"\"\"") != std::string::npos);
  CHECK(f.service->handle("GET", "/api/annotations/export", {{"format", "xml"}}, "").status == 400);
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("a\nb") == "\"a\nb\"");
}

TEST_CASE("concurrent submissions produce whole lines") {
  Fixture f;
  std::vector<std::thread> threads;
  for (int i = 0; i < 4; ++i) {
    threads.emplace_back([&f, i] {
      for (int j = 0; j < 10; ++j) {
        auto r = good_record();
        r["annotator"] = "t" + std::to_string(i);
        f.service->handle("POST", "/api/annotations", {}, r.dump());
      }
    });
  }
  for (auto& t : threads) t.join();
  CHECK(f.service->list_annotations().size() == 40);
}

TEST_CASE("frame cache evicts least recently used") {
  FrameCache c(2);
  c.put({0, 1, 0}, "a");
  c.put({0, 2, 0}, "b");
  std::string out;
  CHECK(c.get({0, 1, 0}, out));
  c.put({0, 3, 0}, "c");
  CHECK_FALSE(c.get({0, 2, 0}, out));
  CHECK(c.get({0, 1, 0}, out));
  CHECK(out == "a");
  CHECK(c.size() == 2);
}

TEST_CASE("http server routes api calls and static files") {
  Fixture f;
  const auto web = f.dir / "web";
  std::filesystem::create_directories(web);
  std::ofstream(web / "index.html") << "<html>ok</html>";
  HttpServer server(*f.service, web);
  const int port = server.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread t([&] { server.run(); });
  httplib::Client cli("127.0.0.1", port);
  auto meta = cli.Get("/api/meta");
  REQUIRE(meta);
  CHECK(meta->status == 200);
  CHECK(json::parse(meta->body).at("count") == 2);
  auto png = cli.Get("/api/render?dir=0&t=0.25&seed=1");
  REQUIRE(png);
  CHECK(png->get_header_value("Content-Type") == "image/png");
  auto post = cli.Post("/api/annotations", good_record().dump(), "application/json");
  REQUIRE(post);
  CHECK(post->status == 201);
  auto page = cli.Get("/index.html");
  REQUIRE(page);
  CHECK(page->body == "<html>ok</html>");
  server.stop();
  t.join();
}
