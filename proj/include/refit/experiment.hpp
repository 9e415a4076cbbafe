#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "refit/analysis.hpp"
#include "refit/behavior.hpp"
#include "refit/corpus.hpp"
#include "refit/update.hpp"

namespace refit {

struct SyntheticSpec {
  std::size_t n = 5000;
  double noise = 0.1;
  std::uint64_t seed = 0;
};

struct Variant {
  std::string name;
  UpdateConfig config;  // seed is overwritten per cell
};

struct ExperimentPlan {
  // Exactly one of the two corpus sources.
  std::optional<std::filesystem::path> corpus_path;
  std::optional<SyntheticSpec> synthetic;
  double dev_fraction = 0.2;
  std::uint64_t split_seed = 0;
  FeaturizerConfig featurizer;

  std::size_t n_old_seeds = 1;
  std::size_t n_new_seeds = 1;
  UpdateConfig old_config;
  // Variants with alpha = 0 train one new model per new seed; penalised
  // variants train one per (old, new) seed pair against that old model.
  std::vector<Variant> variants;

  // Disabled when count == 0. Singles are the reference pool for the
  // ensemble comparison and the centric candidates.
  std::size_t ensemble_count = 0;
  std::size_t ensemble_size = 5;
  std::size_t n_singles = 0;
  UpdateConfig single_config;
  bool centric = false;

  std::size_t behavior_n_per_test = 0;  // 0 disables the suite
  bool write_predictions = true;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";

  // Throws on counts < 1, empty variants or an ambiguous corpus source.
  void validate() const;
};

// Relative paths in the plan file resolve against `base_dir`.
ExperimentPlan parse_plan(const std::string& json_text, const std::filesystem::path& base_dir = {});
ExperimentPlan load_plan(const std::filesystem::path& path);

// Seed of model `index` in the role's family.
inline constexpr std::uint64_t kOldModelRole = 0x4f4c'444d'4f44'454cULL;
inline constexpr std::uint64_t kNewModelRole = 0x4e45'574d'4f44'454cULL;
inline constexpr std::uint64_t kSingleModelRole = 0x5349'4e47'4c45'3031ULL;
inline constexpr std::uint64_t kEnsembleMemberRole = 0x454e'5345'4d42'4c45ULL;
inline constexpr std::uint64_t kBehaviorSuiteRole = 0x4245'4841'5653'5545ULL;

struct RowSummary {
  std::string name;
  std::size_t n_models = 0;
  std::vector<double> accuracies;  // per new model (or per cell)
  std::vector<double> nfrs;        // per (old, new) pair
  double acc_mean = 0.0;
  double acc_std = 0.0;
  double nfr_mean = 0.0;
  double nfr_std = 0.0;
};

struct CentricSummary {
  std::size_t index = 0;
  std::string id;
  std::vector<double> first_half_avg;
  std::vector<double> second_half_avg;
  double centric_second_half = 0.0;
  double median_second_half = 0.0;
};

struct ExperimentResult {
  std::size_t train_size = 0;
  std::size_t dev_size = 0;
  double old_acc_mean = 0.0;
  double old_acc_std = 0.0;
  std::vector<RowSummary> rows;
  std::optional<std::size_t> singles_row;
  std::optional<std::size_t> ensemble_row;
  std::optional<CentricSummary> centric;
  std::optional<Scatter> scatter;
  std::vector<std::pair<std::string, BehaviorReport>> behavior;
  std::vector<std::string> warnings;
};

// Trains the whole grid, writes summary.md, summary.json, pairwise.csv,
// hist.csv, scatter.csv/svg, behavior.md/csv and prediction dumps into the
// output directory. Independent trainings run concurrently; results are
// merged in index order.
ExperimentResult run_experiment(const ExperimentPlan& plan);

}  // namespace refit
