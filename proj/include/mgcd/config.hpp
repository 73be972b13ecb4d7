#pragma once

#include <string>
#include <vector>

#include "mgcd/trainer.hpp"

namespace mgcd {

// Flat key=value run configuration: training knobs plus dataset/output
// paths. Unknown keys are rejected; numeric ranges are validated.
struct RunConfig {
  TrainConfig train;
  std::string dataset_path;
  std::string out_dir = "out";
  long checkpoint_every = 100;
  int image_size = 64;
  int channels = 3;

  void validate() const;
};

// Parses "key=value" lines; '#' starts a comment.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

// Applies one "key=value" override (the CLI's --set).
void apply_override(RunConfig& config, const std::string& assignment);

// Canonical serialization; parse(serialize(c)) == c.
std::string serialize_config(const RunConfig& config);

}  // namespace mgcd
