#include <doctest.h>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "kcrl/kcrl.h"

namespace {

std::string config_path(const char* name) { return std::string(KCRL_CONFIG_DIR) + "/" + name; }

}  // namespace

TEST_CASE("status strings and version") {
  CHECK(std::strlen(kcrl_version()) > 0);
  CHECK(std::string(kcrl_status_string(KCRL_OK)).size() > 0);
  CHECK(std::string(kcrl_status_string(KCRL_INFEASIBLE_BATCH)) !=
        std::string(kcrl_status_string(KCRL_INFEASIBLE_MARGIN)));
}

TEST_CASE("feature map through the C interface") {
  kcrl_feature_map* map = nullptr;
  REQUIRE(kcrl_feature_map_create(2, 16, 1.0, 0, &map) == KCRL_OK);
  const double phi[2] = {0.0, 0.0};
  double z[16];
  CHECK(kcrl_feature_map_featurize(map, phi, 2, z, 16) == KCRL_OK);
  for (double v : z) CHECK(std::abs(v) <= std::sqrt(2.0 / 16.0) + 1e-15);
  CHECK(kcrl_feature_map_featurize(map, phi, 3, z, 16) == KCRL_INVALID_ARGUMENT);
  CHECK(std::strlen(kcrl_last_error()) > 0);
  kcrl_feature_map_free(map);

  kcrl_feature_map* bad = nullptr;
  CHECK(kcrl_feature_map_create(2, 0, 1.0, 0, &bad) == KCRL_INVALID_ARGUMENT);
  CHECK(bad == nullptr);
  kcrl_feature_map_free(nullptr);
}

TEST_CASE("model learns a single transition") {
  kcrl_feature_map* map = nullptr;
  REQUIRE(kcrl_feature_map_create(2, 8, 1.0, 5, &map) == KCRL_OK);
  kcrl_model* model = nullptr;
  REQUIRE(kcrl_model_create(map, 1, 1e-6, &model) == KCRL_OK);
  kcrl_feature_map_free(map);  // the model holds its own copy
  const double x = 0.4, u = -0.7, next = 1.3;
  CHECK(kcrl_model_absorb(model, &x, &u, &next) == KCRL_OK);
  double pred = 0.0;
  CHECK(kcrl_model_predict(model, &x, &u, &pred) == KCRL_OK);
  CHECK(pred == doctest::Approx(1.3).epsilon(1e-4));
  int64_t count = 0;
  CHECK(kcrl_model_sample_count(model, &count) == KCRL_OK);
  CHECK(count == 1);
  const double nan = NAN;
  CHECK(kcrl_model_absorb(model, &nan, &u, &next) == KCRL_DATA_QUALITY);
  kcrl_model_free(model);
  CHECK(kcrl_model_create(nullptr, 1, 1e-3, &model) == KCRL_INVALID_ARGUMENT);
}

TEST_CASE("margins through the C interface") {
  const double metric[4] = {1, 0, 0, 1};
  kcrl_margin_inputs in{};
  in.lipschitz_policy = 1.0;
  in.lipschitz_dynamics = 1.0;
  in.jacobian_error = 0.1;
  in.metric = metric;
  in.metric_dim = 2;
  in.g_grad_bound = 1.0;
  in.fill_distance = 0.2;
  in.margin_assumed = 2.0;
  in.mode = KCRL_MARGIN_MODEL_ERROR;
  in.batch_margin_override = -1.0;
  kcrl_margins out{};
  REQUIRE(kcrl_compute_margins(&in, &out) == KCRL_OK);
  CHECK(out.margin_model == doctest::Approx(0.92).epsilon(1e-14));
  CHECK(out.margin_batch == doctest::Approx(0.88).epsilon(1e-14));
  CHECK(out.feasible == 1);
  in.margin_assumed = 0.5;
  CHECK(kcrl_compute_margins(&in, &out) == KCRL_INFEASIBLE_BATCH);
  in.margin_assumed = 2.0;
  in.jacobian_error = 1.5;
  CHECK(kcrl_compute_margins(&in, &out) == KCRL_INFEASIBLE_MARGIN);
}

TEST_CASE("config parse, dump and errors") {
  kcrl_config* cfg = nullptr;
  REQUIRE(kcrl_config_parse(R"({"plant": "P3"})", &cfg) == KCRL_OK);
  size_t needed = 0;
  CHECK(kcrl_config_dump(cfg, nullptr, 0, &needed) == KCRL_BUFFER_TOO_SMALL);
  REQUIRE(needed > 1);
  std::vector<char> buf(needed);
  CHECK(kcrl_config_dump(cfg, buf.data(), buf.size(), &needed) == KCRL_OK);
  CHECK(std::string(buf.data()).find("\"plant\": \"P3\"") != std::string::npos);
  kcrl_config_free(cfg);

  kcrl_config* bad = nullptr;
  CHECK(kcrl_config_parse(R"({"plant": "P3", "epoch": {"tau": 0}})", &bad) == KCRL_INVALID_CONFIG);
  CHECK(std::string(kcrl_last_error()).find("epoch.tau") != std::string::npos);
  CHECK(kcrl_config_load("/nonexistent.json", &bad) == KCRL_IO);
}

TEST_CASE("margin preview of the shipped P1 config") {
  kcrl_config* cfg = nullptr;
  REQUIRE(kcrl_config_load(config_path("p1_sample_complexity.json").c_str(), &cfg) == KCRL_OK);
  int feasible = 0;
  size_t needed = 0;
  kcrl_config_margins(cfg, &feasible, nullptr, 0, &needed);
  std::vector<char> buf(needed);
  CHECK(kcrl_config_margins(cfg, &feasible, buf.data(), buf.size(), &needed) == KCRL_OK);
  CHECK(feasible == 1);
  CHECK(std::string(buf.data()).find("eps_pd") != std::string::npos);
  kcrl_config_free(cfg);
}

TEST_CASE("plant listing and checkpoint verification errors") {
  size_t needed = 0;
  CHECK(kcrl_plants_describe(nullptr, 0, &needed) == KCRL_BUFFER_TOO_SMALL);
  std::vector<char> buf(needed);
  CHECK(kcrl_plants_describe(buf.data(), buf.size(), &needed) == KCRL_OK);
  const std::string text(buf.data());
  for (const char* name : {"P1", "P2", "P3"}) CHECK(text.find(name) != std::string::npos);

  int passed = 1;
  std::vector<char> report(4096);
  CHECK(kcrl_verify_checkpoint("/nonexistent.ckpt", &passed, report.data(), report.size(), &needed) ==
        KCRL_OK);
  CHECK(passed == 0);
}

TEST_CASE("run options defaults") {
  kcrl_run_options opt;
  kcrl_run_options_init(&opt);
  CHECK(opt.resume_path == nullptr);
  CHECK(opt.stop_after_epoch < 0);
  CHECK(opt.output_directory == nullptr);
}
