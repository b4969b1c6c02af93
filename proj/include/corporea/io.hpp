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

#ifndef CORPOREA__IO_HPP_
#define CORPOREA__IO_HPP_

#include "corporea/arm_sim.hpp"
#include "corporea/gp_forward.hpp"
#include "corporea/pc_estimator.hpp"
#include "corporea/self_grid.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>

namespace corporea::io
{

namespace fs = std::filesystem;
using nlohmann::json;

/// Shortest decimal string that round-trips the double.
std::string format_double(double x);

std::string read_text(const fs::path & path);
/// Creates parent directories. Throws IoError on failure.
void write_text(const fs::path & path, const std::string & content);

/// Header: theta0..2, proprio0..2, u_self, v_self, u_other, v_other,
/// taxel0..taxel{T-1}. Absent visual values are empty cells.
std::string dataset_to_csv(const Dataset & data);
/// Throws DomainError naming the 1-based line of the first malformed row.
Dataset dataset_from_csv(const std::string & text);

json arm_config_to_json(const ArmConfig & config);
/// Rejects unknown keys; missing keys take defaults.
ArmConfig arm_config_from_json(const json & j);

json kernel_params_to_json(const KernelParams & p);
KernelParams kernel_params_from_json(const json & j);

json model_to_json(const GpSensoryModel & model, Modality modality);
GpSensoryModel model_from_json(const json & j);

/// P5 with gray = round(255 P), one pixel per cell.
std::string grid_to_pgm(const BeliefGrid & grid);
/// P4 with 1 = inbody.
std::string mask_to_pbm(const Mask & mask);

/// Columns: step, mu0.., free_energy, ee_u, ee_v.
std::string drift_to_csv(const DriftReport & report);
json schedule_to_json(const PerturbationSchedule & schedule);
PerturbationSchedule schedule_from_json(const json & j, PerturbationSchedule defaults = {});
/// drift_px, converged, step_size, final_mu and the schedule.
json drift_summary(const DriftReport & report, const PerturbationSchedule & schedule);

}  // namespace corporea::io

#endif  // CORPOREA__IO_HPP_
