#pragma once

#include <map>
#include <memory>
#include <string>

#include "dv/config.hpp"
#include "dv/extractor.hpp"
#include "dv/model.hpp"

namespace dv {

// Single-file container: versioned header, kind tag, step counter, embedded
// config snapshot, then a name -> tensor table with a CRC32 per tensor.
struct TensorContainer {
    std::string kind;
    uint64_t step = 0;
    std::string config_text;
    std::map<std::string, Tensor> tensors;
};

inline constexpr uint32_t kContainerVersion = 1;

void write_container(const std::string& path, const TensorContainer& c);
TensorContainer read_container(const std::string& path);

void save_checkpoint(const std::string& path, const DreamVideoModel& model, const RunConfig& cfg, uint64_t step);

struct LoadedCheckpoint {
    RunConfig config;
    uint64_t step = 0;
};

// Verifies that the file holds exactly the model's parameter set and copies
// values in. The model must have been built from the same configuration.
LoadedCheckpoint load_checkpoint(const std::string& path, DreamVideoModel& model);

// Reads only the embedded config, for constructing the model first.
RunConfig peek_checkpoint_config(const std::string& path);

// Builds the model from the file's embedded config and loads the weights.
std::unique_ptr<DreamVideoModel> load_model(const std::string& path, RunConfig* out_cfg = nullptr,
                                            uint64_t* out_step = nullptr);

void save_extractor(const std::string& path, ToyExtractor& extractor);
std::unique_ptr<ToyExtractor> load_extractor(const std::string& path);

}  // namespace dv
