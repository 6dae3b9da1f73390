#pragma once

// A seconds-scale experiment config for pipeline tests.

#include <filesystem>
#include <fstream>
#include <string>

namespace tiny {

inline constexpr const char* kConfig = R"({
  "seed": 5,
  "synthetic": {
    "projection_dim": 16,
    "train_samples": 200,
    "test_samples": 100,
    "compound": {"train_per_class": 5}
  },
  "network": {"width": 16, "blocks": 1},
  "train": {"total_steps": 60, "batch_size": 16, "decay_every_steps": 30},
  "compound_train": {"total_steps": 40, "batch_size": 16, "decay_every_steps": 20}
})";

inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("smtl_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::filesystem::path write_config(const std::filesystem::path& dir, const std::string& text = kConfig,
                                          const std::string& file = "config.json") {
  const auto p = dir / file;
  std::ofstream(p) << text;
  return p;
}

}  // namespace tiny
