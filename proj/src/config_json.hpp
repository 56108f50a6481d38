// Copyright 2026 The TANO Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include <string>

#include "tano/training.hpp"

// JSON forms of the configuration structs, shared by checkpoints, reports
// and the C API.
namespace tano {

nlohmann::json to_json_value(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json_value(const PretrainConfig& c);
PretrainConfig pretrain_config_from_json(const nlohmann::json& j);

/// Canonical compact dump, used for equality checks and hashing.
std::string train_config_json(const TrainConfig& c);

}  // namespace tano
