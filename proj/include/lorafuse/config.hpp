#pragma once

#include <cstdint>
#include <string>

namespace lorafuse {

/// Run configuration. Every field except `seed` has a documented default;
/// see README.md and default_config().
struct DomainSpec {
  std::size_t d_out = 40;
  std::size_t d_in = 24;
  std::size_t teacher_rank = 2;
  double overlap = 0.8;        // 0 = disjoint left subspaces, 1 = shared
  double noise_sigma = 0.5;
  std::size_t train_samples = 28;
  std::size_t test_samples = 256;
};

struct PruneConfig {
  double ratio = 0.6;
  std::size_t calibration_size = 32;  // 0 = magnitude fallback
};

struct LoraConfig {
  std::size_t rank = 8;
  double alpha = 16.0;
};

struct TrainKnobs {
  double lr = 0.08;
  std::size_t steps = 800;
};

struct FusionConfig {
  std::string method = "fedavg";  // fedavg | ffa | fedsa
  bool factor_avg = false;        // fedavg variant: mean-B * mean-A
};

struct CrConfig {
  bool enabled = true;
  std::size_t max_dirs = 8;
  double tol = 1e-9;
};

struct EvalConfig {
  double hardness_floor = 1e-3;
};

struct Config {
  std::uint64_t seed = 0;
  std::size_t num_clients = 2;
  DomainSpec domains;
  PruneConfig prune;
  LoraConfig lora;
  TrainKnobs train;
  FusionConfig fusion;
  CrConfig cr;
  EvalConfig eval;
  std::string output_dir = "out";
};

/// All defaults with the given seed.
Config default_config(std::uint64_t seed);

/// Parses and validates a JSON config file. Unknown keys, duplicate keys
/// and range violations are all collected and reported in one ConfigError.
Config load_config(const std::string& path);

/// Validation shared by load_config and programmatic configs.
void validate_config(const Config& cfg);

}  // namespace lorafuse
