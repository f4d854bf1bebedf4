#pragma once

#include <string>
#include <vector>

#include "dv/codec.hpp"
#include "dv/random.hpp"

namespace dv {

// Procedural moving-shapes corpus. Each video shows one colored shape on a
// mid-gray background executing one motion; the caption is generated from
// the same parameters, so caption faithfulness holds by construction.
// Translation speed is integer pixels per frame and shapes are placed so
// they never touch the border, which keeps the rendered mask an exact
// translate of frame 0.
struct DatasetSpec {
    int num_videos = 500;
    int frames_per_video = 8;
    int resolution = 32;  // H = W
    int velocity = 2;     // pixels per frame for the four translation motions
    uint64_t seed = 0;
};

struct DatasetItem {
    VideoTensor video;
    std::vector<std::string> caption;
    int shape_id = 0;
    int color_id = 0;
    int motion_id = 0;
};

const std::vector<std::string>& shape_names();   // circle, square, triangle
const std::vector<std::string>& color_names();   // red, green, blue, white, black
const std::vector<std::string>& motion_names();  // moves_right, ..., grows, shrinks, rotates
std::vector<std::string> motion_caption_words(int motion_id);

std::vector<DatasetItem> synth_dataset(const DatasetSpec& spec);

}  // namespace dv
