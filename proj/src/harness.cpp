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

#include "corporea/harness.hpp"

#include "corporea/errors.hpp"
#include "corporea/io.hpp"
#include "corporea/rng.hpp"

#include <fmt/core.h>

#include <cmath>
#include <set>

namespace corporea::harness
{

namespace
{

constexpr std::array<const char *, kModalityCount> kPrecisionKeys{"proprio", "visual", "tactile"};

void reject_unknown(const json & j, std::initializer_list<const char *> allowed, std::string_view where)
{
  if (!j.is_object()) {
    throw DomainError(fmt::format("{} must be a JSON object", where));
  }
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto & item : j.items()) {
    if (!keys.count(item.key())) {
      throw DomainError(fmt::format("unknown key '{}' in {}", item.key(), where));
    }
  }
}

template<class T>
void read_opt(const json & j, const char * key, T & out, std::string_view where)
{
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception & e) {
    throw DomainError(fmt::format("invalid value for '{}' in {}: {}", key, where, e.what()));
  }
}

json gp_to_json(const GpConfig & g)
{
  json j = io::kernel_params_to_json(g.params);
  j["lengthscale_grid"] = g.lengthscale_grid;
  return j;
}

GpConfig gp_from_json(const json & j, std::string_view where)
{
  reject_unknown(j, {"lengthscale", "signal_variance", "noise_variance", "lengthscale_grid"}, where);
  GpConfig g;
  read_opt(j, "lengthscale", g.params.lengthscale, where);
  read_opt(j, "signal_variance", g.params.signal_variance, where);
  read_opt(j, "noise_variance", g.params.noise_variance, where);
  read_opt(j, "lengthscale_grid", g.lengthscale_grid, where);
  return g;
}

std::string_view to_string(PrecisionMode m)
{
  return m == PrecisionMode::constant ? "constant" : "predictive_variance";
}

std::string_view to_string(VelocityMode m) { return m == VelocityMode::global ? "global" : "per_cell"; }

}  // namespace

void RunConfig::validate() const
{
  arm.validate();
  if (other && !other->position.allFinite()) {
    throw DomainError("scene.other_position must be finite");
  }
  if (dataset_size < 1) {
    throw DomainError("acquire.n must be at least 1");
  }
  for (const GpConfig * g : {&gp_visual, &gp_tactile}) {
    g->params.validate();
    for (double l : g->lengthscale_grid) {
      if (!(l > 0.0)) throw DomainError("lengthscale_grid entries must be positive");
    }
  }
  if (!(proprio_noise_variance > 0.0)) {
    throw DomainError("gp.proprio_noise_variance must be positive");
  }
  for (std::size_t m = 0; m < kModalityCount; ++m) {
    if (estimator.precisions[m] && !(*estimator.precisions[m] > 0.0)) {
      throw DomainError(fmt::format("estimator.precisions.{} must be positive", kPrecisionKeys[m]));
    }
  }
  if (!(estimator.prior_precision >= 0.0)) throw DomainError("estimator.prior_precision must be >= 0");
  if (!(estimator.step_size > 0.0)) throw DomainError("estimator.step_size must be positive");
  if (!(estimator.tolerance > 0.0)) throw DomainError("estimator.tolerance must be positive");
  if (estimator.max_steps < 1) throw DomainError("estimator.max_steps must be at least 1");
  rhi.schedule.validate();
  if (rhi.schedule.stimulated_taxel >= arm.taxel_count()) {
    throw DomainError("rhi.stimulated_taxel is out of range for the taxel layout");
  }
  for (std::size_t k = 0; k < kJointCount; ++k) {
    if (!arm.joint_limits[k].contains(rhi.true_theta[static_cast<Eigen::Index>(k)])) {
      throw DomainError(fmt::format("rhi.true_theta[{}] is outside the joint limits", k));
    }
  }
  if (!(rhi.toy_proprio_precision > 0.0) || !(rhi.toy_visual_precision > 0.0)) {
    throw DomainError("rhi.toy precisions must be positive");
  }
  grid.validate();
  scene.validate(grid);
  if (heldout < 1) throw DomainError("reconstruct.heldout must be at least 1");
}

json config_to_json(const RunConfig & c)
{
  json precisions = json::object();
  for (std::size_t m = 0; m < kModalityCount; ++m) {
    precisions[kPrecisionKeys[m]] = c.estimator.precisions[m] ? json(*c.estimator.precisions[m]) : json(nullptr);
  }
  json rhi = io::schedule_to_json(c.rhi.schedule);
  rhi["true_theta"] = {c.rhi.true_theta[0], c.rhi.true_theta[1], c.rhi.true_theta[2]};
  rhi["toy"] = {{"proprio_precision", c.rhi.toy_proprio_precision}, {"visual_precision", c.rhi.toy_visual_precision}};
  const SceneParams & s = c.scene;
  return {
    {"seed", c.seed},
    {"output_dir", c.output_dir},
    {"arm", io::arm_config_to_json(c.arm)},
    {"scene", {{"other_position", c.other ? json{c.other->position.x(), c.other->position.y()} : json(nullptr)}}},
    {"acquire", {{"n", c.dataset_size}}},
    {"gp",
     {{"visual", gp_to_json(c.gp_visual)},
      {"tactile", gp_to_json(c.gp_tactile)},
      {"proprio_noise_variance", c.proprio_noise_variance}}},
    {"estimator",
     {{"precisions", precisions},
      {"prior_precision", c.estimator.prior_precision},
      {"step_size", c.estimator.step_size},
      {"tolerance", c.estimator.tolerance},
      {"max_steps", c.estimator.max_steps},
      {"precision_mode", std::string(to_string(c.estimator.precision_mode))}}},
    {"rhi", rhi},
    {"grid",
     {{"width", c.grid.width},
      {"height", c.grid.height},
      {"decimation", c.grid.decimation},
      {"window", c.grid.window},
      {"beta", c.grid.beta},
      {"ema_rate", c.grid.ema_rate},
      {"threshold", c.grid.threshold},
      {"prior", c.grid.prior},
      {"velocity_mode", std::string(to_string(c.grid.velocity_mode))},
      {"snapshot_every", c.snapshot_every},
      {"scene",
       {{"frames", s.frames},
        {"arm_pose", {s.arm_pose[0], s.arm_pose[1], s.arm_pose[2]}},
        {"arm_radius", s.arm_radius},
        {"distractor", {s.distractor_row, s.distractor_col, s.distractor_height, s.distractor_width}},
        {"switch_probability", s.switch_probability},
        {"background_level", s.background_level},
        {"background_noise", s.background_noise},
        {"normalization", s.normalization},
        {"semi_saturation", s.semi_saturation},
        {"zero_motion", s.zero_motion}}}}},
    {"reconstruct", {{"heldout", c.heldout}}},
  };
}

RunConfig config_from_json(const json & j)
{
  reject_unknown(
    j, {"seed", "output_dir", "arm", "scene", "acquire", "gp", "estimator", "rhi", "grid", "reconstruct"}, "config");
  RunConfig c;
  read_opt(j, "seed", c.seed, "config");
  read_opt(j, "output_dir", c.output_dir, "config");
  if (j.contains("arm")) c.arm = io::arm_config_from_json(j.at("arm"));
  if (j.contains("scene")) {
    const json & s = j.at("scene");
    reject_unknown(s, {"other_position"}, "scene");
    if (s.contains("other_position")) {
      if (s.at("other_position").is_null()) {
        c.other.reset();
      } else {
        std::array<double, 2> p{};
        read_opt(s, "other_position", p, "scene");
        c.other = OtherObject{{p[0], p[1]}};
      }
    }
  }
  if (j.contains("acquire")) {
    reject_unknown(j.at("acquire"), {"n"}, "acquire");
    read_opt(j.at("acquire"), "n", c.dataset_size, "acquire");
  }
  if (j.contains("gp")) {
    const json & g = j.at("gp");
    reject_unknown(g, {"visual", "tactile", "proprio_noise_variance"}, "gp");
    if (g.contains("visual")) c.gp_visual = gp_from_json(g.at("visual"), "gp.visual");
    if (g.contains("tactile")) c.gp_tactile = gp_from_json(g.at("tactile"), "gp.tactile");
    read_opt(g, "proprio_noise_variance", c.proprio_noise_variance, "gp");
  }
  if (j.contains("estimator")) {
    const json & e = j.at("estimator");
    reject_unknown(
      e, {"precisions", "prior_precision", "step_size", "tolerance", "max_steps", "precision_mode"}, "estimator");
    if (e.contains("precisions")) {
      const json & p = e.at("precisions");
      reject_unknown(p, {"proprio", "visual", "tactile"}, "estimator.precisions");
      for (std::size_t m = 0; m < kModalityCount; ++m) {
        if (!p.contains(kPrecisionKeys[m])) continue;
        const json & v = p.at(kPrecisionKeys[m]);
        if (v.is_null()) {
          c.estimator.precisions[m].reset();
        } else if (v.is_number()) {
          c.estimator.precisions[m] = v.get<double>();
        } else {
          throw DomainError(fmt::format("estimator.precisions.{} must be a number or null", kPrecisionKeys[m]));
        }
      }
    }
    read_opt(e, "prior_precision", c.estimator.prior_precision, "estimator");
    read_opt(e, "step_size", c.estimator.step_size, "estimator");
    read_opt(e, "tolerance", c.estimator.tolerance, "estimator");
    read_opt(e, "max_steps", c.estimator.max_steps, "estimator");
    if (e.contains("precision_mode")) {
      const std::string mode = e.at("precision_mode").get<std::string>();
      if (mode == "constant") {
        c.estimator.precision_mode = PrecisionMode::constant;
      } else if (mode == "predictive_variance") {
        c.estimator.precision_mode = PrecisionMode::predictive_variance;
      } else {
        throw DomainError(fmt::format("unknown precision_mode '{}'", mode));
      }
    }
  }
  if (j.contains("rhi")) {
    json r = j.at("rhi");
    if (!r.is_object()) throw DomainError("rhi must be a JSON object");
    if (r.contains("true_theta")) {
      std::array<double, 3> t{};
      read_opt(r, "true_theta", t, "rhi");
      c.rhi.true_theta = {t[0], t[1], t[2]};
      r.erase("true_theta");
    }
    if (r.contains("toy")) {
      const json & toy = r.at("toy");
      reject_unknown(toy, {"proprio_precision", "visual_precision"}, "rhi.toy");
      read_opt(toy, "proprio_precision", c.rhi.toy_proprio_precision, "rhi.toy");
      read_opt(toy, "visual_precision", c.rhi.toy_visual_precision, "rhi.toy");
      r.erase("toy");
    }
    c.rhi.schedule = io::schedule_from_json(r, c.rhi.schedule);
  }
  if (j.contains("grid")) {
    const json & g = j.at("grid");
    reject_unknown(
      g,
      {"width", "height", "decimation", "window", "beta", "ema_rate", "threshold", "prior", "velocity_mode",
       "snapshot_every", "scene"},
      "grid");
    read_opt(g, "width", c.grid.width, "grid");
    read_opt(g, "height", c.grid.height, "grid");
    read_opt(g, "decimation", c.grid.decimation, "grid");
    read_opt(g, "window", c.grid.window, "grid");
    read_opt(g, "beta", c.grid.beta, "grid");
    read_opt(g, "ema_rate", c.grid.ema_rate, "grid");
    read_opt(g, "threshold", c.grid.threshold, "grid");
    read_opt(g, "prior", c.grid.prior, "grid");
    read_opt(g, "snapshot_every", c.snapshot_every, "grid");
    if (g.contains("velocity_mode")) {
      const std::string mode = g.at("velocity_mode").get<std::string>();
      if (mode == "global") {
        c.grid.velocity_mode = VelocityMode::global;
      } else if (mode == "per_cell") {
        c.grid.velocity_mode = VelocityMode::per_cell;
      } else {
        throw DomainError(fmt::format("unknown velocity_mode '{}'", mode));
      }
    }
    if (g.contains("scene")) {
      const json & s = g.at("scene");
      reject_unknown(
        s,
        {"frames", "arm_pose", "arm_radius", "distractor", "switch_probability", "background_level", "background_noise",
         "normalization", "semi_saturation", "zero_motion"},
        "grid.scene");
      read_opt(s, "frames", c.scene.frames, "grid.scene");
      if (s.contains("arm_pose")) {
        std::array<double, 3> p{};
        read_opt(s, "arm_pose", p, "grid.scene");
        c.scene.arm_pose = {p[0], p[1], p[2]};
      }
      read_opt(s, "arm_radius", c.scene.arm_radius, "grid.scene");
      if (s.contains("distractor")) {
        std::array<Eigen::Index, 4> d{};
        read_opt(s, "distractor", d, "grid.scene");
        c.scene.distractor_row = d[0];
        c.scene.distractor_col = d[1];
        c.scene.distractor_height = d[2];
        c.scene.distractor_width = d[3];
      }
      read_opt(s, "switch_probability", c.scene.switch_probability, "grid.scene");
      read_opt(s, "background_level", c.scene.background_level, "grid.scene");
      read_opt(s, "background_noise", c.scene.background_noise, "grid.scene");
      read_opt(s, "normalization", c.scene.normalization, "grid.scene");
      read_opt(s, "semi_saturation", c.scene.semi_saturation, "grid.scene");
      read_opt(s, "zero_motion", c.scene.zero_motion, "grid.scene");
    }
  }
  if (j.contains("reconstruct")) {
    reject_unknown(j.at("reconstruct"), {"heldout"}, "reconstruct");
    read_opt(j.at("reconstruct"), "heldout", c.heldout, "reconstruct");
  }
  c.validate();
  return c;
}

RunConfig load_config(const fs::path & path)
{
  const std::string text = io::read_text(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error & e) {
    throw DomainError(fmt::format("config {} is not valid JSON: {}", path.string(), e.what()));
  }
  return config_from_json(j);
}

std::string fnv1a_hex(const std::string & bytes)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

namespace
{

void emit(const fs::path & out, CommandOutput & result, const std::string & name, const std::string & content)
{
  io::write_text(out / name, content);
  result.files.push_back(name);
}

std::string dump(const json & j) { return j.dump(2) + "\n"; }

std::string model_file(Modality m) { return fmt::format("model_{}.json", to_string(m)); }

/// sqrt(mean_i |g(x_i) - y_i|^2) over rows with finite targets.
double training_rmse(const SensoryModel & model, const Eigen::MatrixXd & inputs, const Eigen::MatrixXd & targets)
{
  double total = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    if (!targets.row(i).allFinite()) continue;
    total += (model.predict(inputs.row(i).transpose()) - targets.row(i).transpose()).squaredNorm();
    ++count;
  }
  return count ? std::sqrt(total / static_cast<double>(count)) : 0.0;
}

}  // namespace

CommandOutput cmd_acquire(const RunConfig & config, const fs::path & out)
{
  config.validate();
  CommandOutput result;
  const Dataset data = acquire_dataset(config.arm, config.dataset_size, config.seed, config.other);
  emit(out, result, "dataset.csv", io::dataset_to_csv(data));
  json sidecar = {
    {"arm", io::arm_config_to_json(config.arm)},
    {"seed", config.seed},
    {"n", config.dataset_size},
    {"other_position", config.other ? json{config.other->position.x(), config.other->position.y()} : json(nullptr)},
  };
  emit(out, result, "dataset.json", dump(sidecar));
  result.summary = {{"rows", data.rows()}, {"taxels", data.tactile.cols()}};
  return result;
}

CommandOutput cmd_train(const RunConfig & config, const fs::path & out, const fs::path & dataset)
{
  config.validate();
  const Dataset data = io::dataset_from_csv(io::read_text(dataset));
  CommandOutput result;

  const auto visual = GpSensoryModel::fit(
    data.inputs, data.visual_self, config.gp_visual.params, OutputTransform::identity,
    config.gp_visual.lengthscale_grid);
  const auto tactile = GpSensoryModel::fit(
    data.inputs, data.tactile, config.gp_tactile.params, OutputTransform::logistic,
    config.gp_tactile.lengthscale_grid);
  const IdentityModel proprio(3, config.proprio_noise_variance);

  emit(out, result, model_file(Modality::proprio),
       dump({{"modality", "proprio"}, {"identity", {{"dim", 3}, {"noise_variance", config.proprio_noise_variance}}}}));
  emit(out, result, model_file(Modality::visual), dump(io::model_to_json(visual, Modality::visual)));
  emit(out, result, model_file(Modality::tactile), dump(io::model_to_json(tactile, Modality::tactile)));

  result.summary = {
    {"rows", data.rows()},
    {"rmse",
     {{"proprio", training_rmse(proprio, data.inputs, data.proprio)},
      {"visual", training_rmse(visual, data.inputs, data.visual_self)},
      {"tactile", training_rmse(tactile, data.inputs, data.tactile)}}},
    {"lengthscale", {{"visual", visual.gp().params().lengthscale}, {"tactile", tactile.gp().params().lengthscale}}},
    {"log_marginal_likelihood",
     {{"visual", visual.gp().log_marginal_likelihood()}, {"tactile", tactile.gp().log_marginal_likelihood()}}},
  };
  emit(out, result, "train_summary.json", dump(result.summary));
  return result;
}

ForwardModelSet load_models(const fs::path & dir)
{
  ForwardModelSet models;
  for (Modality m : kAllModalities) {
    const fs::path path = dir / model_file(m);
    json j;
    try {
      j = json::parse(io::read_text(path));
    } catch (const json::parse_error & e) {
      throw DomainError(fmt::format("{} is not valid JSON: {}", path.string(), e.what()));
    }
    if (j.contains("identity")) {
      const json & id = j.at("identity");
      models.set(m, std::make_shared<IdentityModel>(id.at("dim").get<Eigen::Index>(), id.at("noise_variance").get<double>()));
    } else {
      models.set(m, std::make_shared<GpSensoryModel>(io::model_from_json(j)));
    }
  }
  return models;
}

std::array<double, kModalityCount> resolve_precisions(const EstimatorConfig & config, const ForwardModelSet & models)
{
  auto p = default_precisions(models);
  for (std::size_t m = 0; m < kModalityCount; ++m) {
    if (config.precisions[m]) p[m] = *config.precisions[m];
  }
  return p;
}

namespace
{

const char * kRhiPlotScript = R"py(# Generated by corporea rhi. Requires matplotlib.
import csv, json, sys
import matplotlib.pyplot as plt

prefix = sys.argv[1] if len(sys.argv) > 1 else "rhi"
fig, ax = plt.subplots()
for cond in ("synchronous", "asynchronous", "none"):
    with open(f"{prefix}_{cond}.csv") as f:
        rows = list(csv.DictReader(f))
    u0 = float(rows[0]["ee_u"])
    ax.plot([int(r["step"]) for r in rows], [float(r["ee_u"]) - u0 for r in rows], label=cond)
ax.set_xlabel("step")
ax.set_ylabel("estimated end-effector shift [px]")
ax.legend()
fig.savefig(f"{prefix}_drift.png", dpi=120)
)py";

const char * kSelfPlotScript = R"py(# Generated by corporea selfdetect. Requires matplotlib.
import csv
import matplotlib.pyplot as plt

with open("selfdetect_metrics.csv") as f:
    rows = list(csv.DictReader(f))
t = [int(r["frame"]) for r in rows]
fig, ax = plt.subplots()
ax.plot(t, [float(r["mean_inbody_P"]) for r in rows], label="inbody")
ax.plot(t, [float(r["mean_outbody_P"]) for r in rows], label="outbody")
ax.set_xlabel("frame")
ax.set_ylabel("mean P(body)")
ax.legend()
fig.savefig("selfdetect_metrics.png", dpi=120)
)py";

}  // namespace

CommandOutput cmd_rhi(const RunConfig & config, const fs::path & out, const fs::path & models_dir, bool toy)
{
  config.validate();
  CommandOutput result;
  const std::string prefix = toy ? "rhi_toy" : "rhi";
  constexpr std::array<Stimulation, 3> conditions{Stimulation::synchronous, Stimulation::asynchronous, Stimulation::none};

  std::optional<ForwardModelSet> models;
  BodyBelief belief_template;
  if (!toy) {
    models = load_models(models_dir);
    belief_template = BodyBelief::at(config.rhi.true_theta, resolve_precisions(config.estimator, *models));
    belief_template.prior_precision = config.estimator.prior_precision;
  }

  json summary = {{"mode", toy ? "toy" : "arm"}, {"conditions", json::object()}};
  std::array<double, 3> drift{};
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    PerturbationSchedule schedule = config.rhi.schedule;
    schedule.stimulation = conditions[i];
    DriftReport report;
    try {
      if (toy) {
        report = run_rhi_linear(config.rhi.toy_proprio_precision, config.rhi.toy_visual_precision, schedule);
      } else {
        Rng rng = make_rng(config.seed, Stream::rhi);
        report = run_rhi(*models, schedule, config.arm, config.rhi.true_theta, belief_template, rng,
                         config.estimator.tolerance);
      }
    } catch (const NumericalError & e) {
      throw NumericalError(fmt::format("{} condition: {}", to_string(conditions[i]), e.what()));
    } catch (const DomainError & e) {
      throw DomainError(fmt::format("{} condition: {}", to_string(conditions[i]), e.what()));
    }
    drift[i] = report.drift;
    const std::string name = fmt::format("{}_{}", prefix, to_string(conditions[i]));
    emit(out, result, name + ".csv", io::drift_to_csv(report));
    json cond = io::drift_summary(report, schedule);
    if (toy) {
      const double gain = conditions[i] == Stimulation::synchronous ? schedule.precision_gain : 1.0;
      const double pv = conditions[i] == Stimulation::none ? 0.0 : gain * config.rhi.toy_visual_precision;
      const double expected = schedule.visual_offset.x() * pv / (config.rhi.toy_proprio_precision + pv);
      const double signed_expected = schedule.visual_offset.x() < 0.0 ? -expected : expected;
      cond["closed_form_px"] = signed_expected;
      cond["abs_error_px"] = std::abs(report.drift - signed_expected);
    }
    emit(out, result, name + ".json", dump(cond));
    summary["conditions"][std::string(to_string(conditions[i]))] = cond;
  }
  summary["drift_px"] = {{"synchronous", drift[0]}, {"asynchronous", drift[1]}, {"none", drift[2]}};
  summary["ordering_sync_gt_async_gt_none"] = drift[0] > drift[1] && drift[1] > drift[2];
  emit(out, result, prefix + "_summary.json", dump(summary));
  emit(out, result, "plot_" + prefix + ".py", kRhiPlotScript);
  result.summary = summary;
  return result;
}

CommandOutput cmd_selfdetect(const RunConfig & config, const fs::path & out)
{
  config.validate();
  CommandOutput result;
  const SyntheticScene scene = make_contingency_scene(config.grid, config.scene, config.arm, config.seed);
  const Mask outbody = !scene.inbody;
  const double n_in = static_cast<double>(scene.inbody.count());
  const double n_out = static_cast<double>(outbody.count());

  std::string metrics = "frame,mean_inbody_P,mean_outbody_P\n";
  std::vector<std::pair<std::string, std::string>> snapshots;
  auto on_frame = [&](std::size_t t, const BeliefGrid & grid) {
    const Eigen::ArrayXXd p = grid.probabilities().array();
    const double in = n_in > 0 ? scene.inbody.select(p, 0.0).sum() / n_in : 0.0;
    const double outb = n_out > 0 ? outbody.select(p, 0.0).sum() / n_out : 0.0;
    metrics += fmt::format("{},{},{}\n", t, io::format_double(in), io::format_double(outb));
    if (config.snapshot_every > 0 && (t + 1) % config.snapshot_every == 0) {
      snapshots.emplace_back(fmt::format("selfdetect_frame_{:04d}.pgm", t + 1), io::grid_to_pgm(grid));
    }
  };
  const SequenceResult run = run_sequence(scene.frames, scene.motion, config.grid, on_frame);

  emit(out, result, "selfdetect_metrics.csv", metrics);
  for (const auto & [name, content] : snapshots) {
    emit(out, result, name, content);
  }
  emit(out, result, "selfdetect_final.pgm", io::grid_to_pgm(run.grid));
  emit(out, result, "selfdetect_mask.pbm", io::mask_to_pbm(run.mask));

  const Eigen::ArrayXXd p = run.grid.probabilities().array();
  const double in_high = n_in > 0 ? static_cast<double>((scene.inbody && (p > 0.9)).count()) / n_in : 0.0;
  const double out_low = n_out > 0 ? static_cast<double>((outbody && (p < 0.1)).count()) / n_out : 0.0;
  result.summary = {
    {"frames", scene.frames.size()},
    {"inbody_cells", scene.inbody.count()},
    {"outbody_cells", outbody.count()},
    {"inbody_fraction_P_gt_0.9", in_high},
    {"outbody_fraction_P_lt_0.1", out_low},
    {"mask_agreement", static_cast<double>((run.mask == scene.inbody).count()) / static_cast<double>(p.size())},
    {"velocity", {{"up", run.velocity.at(Direction::up, 0, 0)},
                  {"down", run.velocity.at(Direction::down, 0, 0)},
                  {"left", run.velocity.at(Direction::left, 0, 0)},
                  {"right", run.velocity.at(Direction::right, 0, 0)}}},
  };
  emit(out, result, "selfdetect_summary.json", dump(result.summary));
  emit(out, result, "plot_selfdetect.py", kSelfPlotScript);
  return result;
}

CommandOutput cmd_reconstruct(
  const RunConfig & config, const fs::path & out, const fs::path & models_dir, Modality drop)
{
  config.validate();
  const ForwardModelSet models = load_models(models_dir);
  const auto precisions = resolve_precisions(config.estimator, models);
  const Dataset heldout =
    acquire_dataset(config.arm, config.heldout, derive_seed(config.seed, static_cast<std::uint64_t>(Stream::reconstruct)),
                    config.other);

  CommandOutput result;
  std::string csv = "sample,reconstruction_error,inference_error,steps,converged\n";
  double total = 0.0;
  double worst = 0.0;
  double total_inference = 0.0;
  for (Eigen::Index i = 0; i < heldout.rows(); ++i) {
    const Eigen::Vector3d theta = heldout.inputs.row(i).transpose();
    Observation obs;
    obs.readings[static_cast<std::size_t>(Modality::proprio)] = Eigen::VectorXd(heldout.proprio.row(i).transpose());
    if (heldout.visual_self.row(i).allFinite()) {
      obs.readings[static_cast<std::size_t>(Modality::visual)] = Eigen::VectorXd(heldout.visual_self.row(i).transpose());
    }
    obs.readings[static_cast<std::size_t>(Modality::tactile)] = Eigen::VectorXd(heldout.tactile.row(i).transpose());

    const Eigen::VectorXd init = drop == Modality::proprio ? Eigen::VectorXd(Eigen::VectorXd::Zero(3))
                                                           : *obs[Modality::proprio];
    BodyBelief belief = BodyBelief::at(init, precisions);
    belief.prior_precision = config.estimator.prior_precision;
    belief.enabled[static_cast<std::size_t>(drop)] = false;

    InferOptions options;
    options.step_size = stable_step_size(belief, std::span(&obs, 1), models, config.estimator.step_size);
    options.tolerance = config.estimator.tolerance;
    options.max_steps = config.estimator.max_steps;
    options.precision_mode = config.estimator.precision_mode;
    const InferenceResult run = infer(belief, std::span(&obs, 1), models, options);

    const Eigen::VectorXd predicted = reconstruct_modality(run.belief, models, drop);
    Eigen::VectorXd truth;
    switch (drop) {
      case Modality::proprio:
        truth = theta;
        break;
      case Modality::visual: {
        const Eigen::Vector2d ee = chain_positions(theta, config.arm.link_lengths).back();
        truth = Eigen::Vector2d(config.arm.camera.center.x() + config.arm.camera.scale * ee.x(),
                                config.arm.camera.center.y() - config.arm.camera.scale * ee.y());
        break;
      }
      case Modality::tactile:
        truth = config.other ? tactile_contact(JointState{theta}, *config.other, config.arm)
                             : Eigen::VectorXd(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(config.arm.taxel_count())));
        break;
    }
    const double error = (predicted - truth).norm();
    const double inference_error = (run.belief.mu - theta).norm();
    total += error;
    total_inference += inference_error;
    worst = std::max(worst, error);
    csv += fmt::format("{},{},{},{},{}\n", i, io::format_double(error), io::format_double(inference_error), run.steps,
                       run.converged ? 1 : 0);
  }
  const double n = static_cast<double>(heldout.rows());
  const std::string name = fmt::format("reconstruct_{}", to_string(drop));
  emit(out, result, name + ".csv", csv);

  json summary = {
    {"dropped", std::string(to_string(drop))},
    {"samples", heldout.rows()},
    {"mean_error", total / n},
    {"max_error", worst},
    {"mean_inference_error", total_inference / n},
  };
  if (drop != Modality::proprio) {
    const auto & gp = dynamic_cast<const GpSensoryModel &>(models.at(drop));
    const Eigen::MatrixXd & targets = gp.raw_targets();
    const double rmse = training_rmse(gp, gp.gp().inputs(), targets);
    summary["training_rmse"] = rmse;
    summary["error_over_training_rmse"] = rmse > 0.0 ? (total / n) / rmse : 0.0;
  }
  emit(out, result, name + ".json", dump(summary));
  result.summary = summary;
  return result;
}

void write_manifest(
  const fs::path & out, const RunConfig & config, const std::string & stage, const CommandOutput & output,
  double wall_clock_s)
{
  const fs::path path = out / "manifest.json";
  json manifest = json::object();
  if (fs::exists(path)) {
    try {
      manifest = json::parse(io::read_text(path));
    } catch (const json::parse_error &) {
      manifest = json::object();
    }
  }
  json files = json::array();
  for (const auto & f : output.files) {
    files.push_back({{"path", f}, {"fnv1a", fnv1a_hex(io::read_text(out / f))}});
  }
  manifest["tool_version"] = kToolVersion;
  manifest["stages"][stage] = {
    {"config_hash", fnv1a_hex(config_to_json(config).dump())},
    {"seed", config.seed},
    {"files", files},
    {"wall_clock_s", wall_clock_s},
  };
  io::write_text(path, dump(manifest));
}

std::string verify_manifest(const fs::path & out)
{
  const fs::path path = out / "manifest.json";
  json manifest;
  try {
    manifest = json::parse(io::read_text(path));
  } catch (const json::parse_error & e) {
    return fmt::format("manifest is not valid JSON: {}", e.what());
  }
  if (!manifest.contains("stages")) {
    return "manifest has no stages";
  }
  for (const auto & [stage, entry] : manifest.at("stages").items()) {
    for (const auto & f : entry.at("files")) {
      const fs::path file = out / f.at("path").get<std::string>();
      if (!fs::exists(file)) {
        return fmt::format("{}: listed file {} does not exist", stage, file.string());
      }
      if (fnv1a_hex(io::read_text(file)) != f.at("fnv1a").get<std::string>()) {
        return fmt::format("{}: hash mismatch for {}", stage, file.string());
      }
    }
  }
  return {};
}

}  // namespace corporea::harness
