#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "patchlab/cli/config.hpp"
#include "patchlab/error.hpp"

namespace patchlab::cli {

// 0 success, 2 config / input, 3 lock discipline, 4 training failure,
// 5 numeric domain, 1 anything else.
int exit_code(ErrorCode code);

struct TrainedModel {
  std::uint64_t seed = 0;
  std::string checkpoint;
  Weights weights;
};

// Checkpoint path for one seed; the name carries a digest of everything
// that shapes training.
std::string checkpoint_path(const RunConfig& cfg, Family family, std::uint64_t seed);

// Trains every seed of the configured family and writes a checkpoint and a
// JSON log per seed. Existing checkpoints are reused. Raises
// kTrainingFailure when a routing model misses its accuracy targets.
std::vector<TrainedModel> cmd_train(const RunConfig& cfg, std::ostream& log);

// Loads every seed's checkpoint; raises kIo when one is missing.
std::vector<TrainedModel> load_models(const RunConfig& cfg, Family family);

struct BranchOutcome {
  std::string branch_id;
  std::string manifest_path;
  std::string report_dir;
  std::string classification;
};

// Support search, freeze, query evaluation and reports. A CONSUMED branch
// is refused unless new_branch is set, which opens "<branch>-b<k>".
BranchOutcome cmd_branch(const RunConfig& cfg, bool new_branch, std::ostream& log);

// Query evaluation of an existing manifest on disk.
BranchOutcome cmd_evaluate(const RunConfig& cfg, std::ostream& log);

// Returns the output directory.
std::string cmd_copyn(const RunConfig& cfg, std::ostream& log);
std::string cmd_relocate(const RunConfig& cfg, std::ostream& log);

// Entry point of the patchlab binary.
int run(int argc, char** argv);

}  // namespace patchlab::cli
