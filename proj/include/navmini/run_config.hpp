#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

#include "navmini/dataset.hpp"
#include "navmini/dreamer.hpp"
#include "navmini/env.hpp"
#include "navmini/policy.hpp"
#include "navmini/probe.hpp"
#include "navmini/world_model.hpp"

namespace navmini {

// Full run configuration: every field optional in the file, defaults below.
// Unknown keys anywhere in the tree are rejected.
nlohmann::json default_run_config();

// Parse + validate a user config against the defaults; returns the merged
// effective config. Throws ConfigError on unknown keys or type mismatches.
nlohmann::json merge_run_config(const nlohmann::json& user);

// Apply one dotted-path override ("wm.kappa=0.001") onto a user config.
void apply_override(nlohmann::json& config, const std::string& assignment);

nlohmann::json load_config_file(const std::string& path);

// ----- typed views over the effective config -----
SimConfig sim_config_from(const nlohmann::json& effective);
CameraModel camera_from(const nlohmann::json& effective);
EnvConfig env_config_from(const nlohmann::json& effective);
CollectConfig collect_config_from(const nlohmann::json& effective);
WorldModelConfig wm_config_from(const nlohmann::json& effective);
TrainWmConfig train_wm_config_from(const nlohmann::json& effective);
TrainPpoConfig train_ppo_config_from(const nlohmann::json& effective);
DreamerConfig dreamer_config_from(const nlohmann::json& effective);
ProbeTrainConfig probe_train_config_from(const nlohmann::json& effective);

} // namespace navmini
