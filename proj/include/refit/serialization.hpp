#pragma once

// JSON mappings for configuration types shared by model files, plan files and
// the CLI.

#include <json.hpp>

#include "refit/corpus.hpp"
#include "refit/update.hpp"

namespace refit {

nlohmann::json featurizer_to_json(const FeaturizerConfig& cfg);
// Missing keys keep their defaults; the result is validated.
FeaturizerConfig featurizer_from_json(const nlohmann::json& j);

nlohmann::ordered_json update_config_to_json(const UpdateConfig& cfg);
// Keys absent from `j` are taken from `base`; "c" holds the constraint
// threshold and "hidden" the hidden widths.
UpdateConfig update_config_from_json(const nlohmann::json& j, const UpdateConfig& base = {});

}  // namespace refit
