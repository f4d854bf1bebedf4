#pragma once

#include <optional>
#include <string>

#include "dv/config.hpp"
#include "dv/dataset.hpp"

namespace dv {

struct SampleFlags {
    std::string checkpoint;
    std::optional<std::string> image_path;
    std::optional<std::string> prompt;   // whitespace-separated tokens
    std::optional<std::string> prompt2;  // two-stage second prompt
    std::optional<double> scale_text;
    std::optional<double> scale_image;
    std::optional<int> steps;
    std::optional<std::pair<int, int>> resolution;  // HxW override
    std::optional<std::string> decomposition;
    std::string mode = "text_image";
    bool export_frames = false;
};

struct EvalFlags {
    std::string real_dir;
    std::string generated_dir;
    std::string metrics = "fvd,is,clip_sim,fff_ssim,fff_clip";
    std::string extractor_path;  // reuse a trained extractor
    std::string dataset_dir;     // train one from this dataset when empty path
};

int cmd_dataset(const RunConfig& cfg, const std::string& out_dir);
int cmd_train(const RunConfig& cfg, const std::string& dataset_dir, const std::string& out_dir);
int cmd_sample(const RunConfig& cfg, const SampleFlags& flags, const std::string& out_dir);
int cmd_twostage(const RunConfig& cfg, const SampleFlags& flags, const std::string& out_dir);
int cmd_eval(const RunConfig& cfg, const EvalFlags& flags, const std::string& out_dir);

// Dataset cache layout: NNNNN.dvid files plus index.tsv (id, caption,
// shape, color, motion).
void write_dataset_dir(const std::string& dir, const std::vector<DatasetItem>& items);
std::vector<DatasetItem> read_dataset_dir(const std::string& dir);

}  // namespace dv
