// Copyright 2026 The Corporea Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "corporea/errors.hpp"
#include "corporea/harness.hpp"
#include "corporea/io.hpp"

#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>

using namespace corporea;
namespace fs = std::filesystem;
using nlohmann::json;

namespace
{

fs::path scratch(const std::string & name)
{
  const fs::path p = fs::temp_directory_path() / ("corporea_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

harness::RunConfig small_config()
{
  harness::RunConfig c;
  c.dataset_size = 60;
  c.heldout = 5;
  c.gp_visual.lengthscale_grid = {1.0, 2.0};
  c.gp_tactile.lengthscale_grid = {};
  c.rhi.schedule.n_steps = 200;
  c.scene.frames = 40;
  return c;
}

}  // namespace

TEST_CASE("format_double round-trips")
{
  Rng rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 100; ++i) {
    const double x = u(rng);
    CHECK(std::stod(io::format_double(x)) == x);
  }
  CHECK(io::format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("dataset CSV round trip and validation")
{
  const Dataset d = acquire_dataset(ArmConfig{}, 25, 3, OtherObject{{0.35, 0.35}});
  const std::string csv = io::dataset_to_csv(d);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 26);
  CHECK(csv.rfind("theta0,theta1,theta2,proprio0,proprio1,proprio2,u_self,v_self,u_other,v_other,taxel0", 0) == 0);
  const Dataset back = io::dataset_from_csv(csv);
  CHECK(back.inputs == d.inputs);
  CHECK(back.proprio == d.proprio);
  CHECK(back.tactile == d.tactile);
  CHECK(io::dataset_to_csv(back) == csv);

  std::string missing = csv;
  missing.replace(missing.find("u_self"), 6, "u_slf");
  try {
    io::dataset_from_csv(missing);
    FAIL("expected DomainError");
  } catch (const DomainError & e) {
    CHECK(std::string(e.what()).find("u_self") != std::string::npos);
  }

  std::string bad = csv;
  const auto line3 = bad.find('\n', bad.find('\n', bad.find('\n') + 1) + 1) + 1;
  bad.replace(line3, 3, "abc");
  try {
    io::dataset_from_csv(bad);
    FAIL("expected DomainError");
  } catch (const DomainError & e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
}

TEST_CASE("model JSON round trip")
{
  const Dataset d = acquire_dataset(ArmConfig{}, 40, 8);
  const auto model = GpSensoryModel::fit(d.inputs, d.visual_self, KernelParams{}, OutputTransform::identity);
  const json j = io::model_to_json(model, Modality::visual);
  const auto back = io::model_from_json(json::parse(j.dump()));
  const Eigen::Vector3d q(0.1, -0.2, 0.3);
  CHECK((back.predict(q) - model.predict(q)).norm() == 0.0);
  CHECK(io::model_to_json(back, Modality::visual).dump() == j.dump());
}

TEST_CASE("arm config JSON rejects unknown keys")
{
  json j = io::arm_config_to_json(ArmConfig{});
  CHECK(io::arm_config_to_json(io::arm_config_from_json(j)) == j);
  j["elbow_colour"] = "red";
  CHECK_THROWS_AS(io::arm_config_from_json(j), DomainError);
}

TEST_CASE("run config round trip and validation")
{
  const harness::RunConfig c;
  const json j = harness::config_to_json(c);
  CHECK(harness::config_to_json(harness::config_from_json(j)) == j);

  json bad = j;
  bad["estimator"]["momentum"] = 0.9;
  CHECK_THROWS_AS(harness::config_from_json(bad), DomainError);
  bad = j;
  bad["frobnicate"] = true;
  CHECK_THROWS_AS(harness::config_from_json(bad), DomainError);
  bad = j;
  bad["rhi"]["precision_gain"] = 0.5;
  CHECK_THROWS_AS(harness::config_from_json(bad), DomainError);
  bad = j;
  bad["grid"]["window"] = 1;
  CHECK_THROWS_AS(harness::config_from_json(bad), DomainError);
  bad = j;
  bad["arm"]["link_lengths"] = {0.3, -0.25, 0.15};
  CHECK_THROWS_AS(harness::config_from_json(bad), DomainError);

  // Missing sections fall back to defaults.
  const harness::RunConfig partial = harness::config_from_json(json{{"seed", 7}});
  CHECK(partial.seed == 7);
  CHECK(partial.dataset_size == c.dataset_size);

  json nulls = j;
  nulls["scene"]["other_position"] = nullptr;
  CHECK_FALSE(harness::config_from_json(nulls).other);
}

TEST_CASE("grid images")
{
  BeliefGrid g = BeliefGrid::uniform(2, 3, 1);
  g.log_odds(0, 1) = kLogOddsMax;
  const std::string pgm = io::grid_to_pgm(g);
  CHECK(pgm.rfind("P5\n3 2\n255\n", 0) == 0);
  CHECK(pgm.size() == std::string("P5\n3 2\n255\n").size() + 6);
  CHECK(static_cast<unsigned char>(pgm[std::string("P5\n3 2\n255\n").size()]) == 128);

  Mask m = Mask::Constant(2, 10, false);
  m(0, 0) = true;
  m(1, 9) = true;
  const std::string pbm = io::mask_to_pbm(m);
  const std::string head = "P4\n10 2\n";
  REQUIRE(pbm.size() == head.size() + 4);
  CHECK(static_cast<unsigned char>(pbm[head.size()]) == 0x80);
  CHECK(static_cast<unsigned char>(pbm[head.size() + 3]) == 0x40);
}

TEST_CASE("commands write what the manifest lists")
{
  const fs::path out = scratch("manifest");
  const harness::RunConfig c = small_config();
  auto acquired = harness::cmd_acquire(c, out);
  harness::write_manifest(out, c, "acquire", acquired, 0.1);
  auto trained = harness::cmd_train(c, out, out / "dataset.csv");
  harness::write_manifest(out, c, "train", trained, 0.1);
  CHECK(harness::verify_manifest(out).empty());
  for (const auto & f : trained.files) CHECK(fs::exists(out / f));

  const json manifest = json::parse(io::read_text(out / "manifest.json"));
  CHECK(manifest.at("tool_version") == harness::kToolVersion);
  CHECK(manifest.at("stages").contains("acquire"));
  CHECK(manifest.at("stages").contains("train"));

  io::write_text(out / "dataset.csv", io::read_text(out / "dataset.csv") + "\n");
  CHECK_FALSE(harness::verify_manifest(out).empty());
}

TEST_CASE("null perturbation and identity-toy summaries")
{
  const fs::path out = scratch("rhi");
  harness::RunConfig c = small_config();
  harness::cmd_acquire(c, out);
  harness::cmd_train(c, out, out / "dataset.csv");

  c.rhi.schedule.visual_offset = {0.0, 0.0};
  const auto zero = harness::cmd_rhi(c, out, out, false);
  for (const auto & [name, drift] : zero.summary.at("drift_px").items()) {
    CHECK(std::abs(drift.get<double>()) < 1e-9);
  }

  c = small_config();
  c.rhi.schedule.n_steps = 3000;
  const auto toy = harness::cmd_rhi(c, out, out, true);
  for (const auto & [name, cond] : toy.summary.at("conditions").items()) {
    CHECK(cond.at("abs_error_px").get<double>() < 1e-6);
  }
  CHECK(toy.summary.at("ordering_sync_gt_async_gt_none").get<bool>());
}

TEST_CASE("reconstruction reports")
{
  const fs::path out = scratch("reconstruct");
  harness::RunConfig c = small_config();
  c.arm.sigma_proprio = 0.0;
  c.arm.sigma_visual = 0.0;
  c.other.reset();
  c.dataset_size = 150;
  harness::cmd_acquire(c, out);
  harness::cmd_train(c, out, out / "dataset.csv");

  const auto proprio = harness::cmd_reconstruct(c, out, out, Modality::proprio);
  CHECK(proprio.summary.at("mean_error").get<double>() <= proprio.summary.at("mean_inference_error").get<double>() + 1e-12);

  const auto tactile = harness::cmd_reconstruct(c, out, out, Modality::tactile);
  CHECK(tactile.summary.at("max_error").get<double>() < 1e-3);
}
