#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>

#include "dv/commands.hpp"
#include "dv/parallel.hpp"

namespace {

struct GlobalFlags {
    std::string config_path;
    std::string out_dir = "out";
    int64_t seed = -1;
};

dv::RunConfig resolve_config(const GlobalFlags& g) {
    dv::RunConfig cfg;
    if (!g.config_path.empty()) cfg = dv::load_config_file(g.config_path);
    if (g.seed >= 0) cfg.seed = static_cast<uint64_t>(g.seed);
    return cfg;
}

bool parse_resolution(const std::string& s, std::pair<int, int>& out) {
    int h = 0, w = 0;
    char x = 0;
    if (std::sscanf(s.c_str(), "%d%c%d", &h, &x, &w) != 3 || x != 'x' || h <= 0 || w <= 0) return false;
    out = {h, w};
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dreamvideo: image-to-video latent diffusion at desk scale"};
    app.require_subcommand(1);

    GlobalFlags g;
    app.add_option("--config", g.config_path, "config file (key=value lines)");
    app.add_option("--seed", g.seed, "seed override");
    app.add_option("--out", g.out_dir, "output directory");

    auto* c_dataset = app.add_subcommand("dataset", "synthesize the moving-shapes corpus");

    std::string dataset_dir;
    auto* c_train = app.add_subcommand("train", "train the model on a dataset directory");
    c_train->add_option("--dataset", dataset_dir, "dataset directory (from the dataset command)")->required();

    dv::SampleFlags sf;
    std::string resolution_str;
    auto add_sample_flags = [&](CLI::App* cmd, bool with_mode) {
        cmd->add_option("--checkpoint", sf.checkpoint, "model checkpoint (.dvck)")->required();
        cmd->add_option("--image", sf.image_path, "condition image (.png or .dvid)");
        cmd->add_option("--prompt", sf.prompt, "text prompt (vocabulary words)");
        cmd->add_option("--scale-text", sf.scale_text, "text guidance scale");
        cmd->add_option("--scale-image", sf.scale_image, "image guidance scale");
        cmd->add_option("--steps", sf.steps, "sampling steps");
        cmd->add_option("--resolution", resolution_str, "output resolution HxW (>= training resolution)");
        cmd->add_option("--decomposition", sf.decomposition, "text_first|image_first");
        if (with_mode) cmd->add_option("--mode", sf.mode, "text_only|image_only|text_image");
        cmd->add_flag("--frames-png", sf.export_frames, "also export per-frame PNGs");
    };
    auto* c_sample = app.add_subcommand("sample", "generate a video from image and/or text");
    add_sample_flags(c_sample, true);
    auto* c_twostage = app.add_subcommand("twostage", "chain two generations via the final frame");
    add_sample_flags(c_twostage, false);
    c_twostage->add_option("--prompt2", sf.prompt2, "text prompt for stage 2");

    dv::EvalFlags ef;
    auto* c_eval = app.add_subcommand("eval", "compute metrics for a generated set");
    c_eval->add_option("--real", ef.real_dir, "reference set (dataset dir or .dvid dir)")->required();
    c_eval->add_option("--generated", ef.generated_dir, "generated .dvid dir")->required();
    c_eval->add_option("--metrics", ef.metrics, "comma list: fvd,is,clip_sim,fff_ssim,fff_clip");
    c_eval->add_option("--extractor", ef.extractor_path, "reuse a trained extractor checkpoint");
    c_eval->add_option("--dataset", ef.dataset_dir, "dataset dir for extractor training");

    CLI11_PARSE(app, argc, argv);

    try {
        dv::RunConfig cfg = resolve_config(g);
        if (!resolution_str.empty()) {
            std::pair<int, int> res;
            if (!parse_resolution(resolution_str, res))
                throw dv::invalid_argument("bad --resolution, expected HxW: " + resolution_str);
            sf.resolution = res;
        }
        if (c_dataset->parsed()) return dv::cmd_dataset(cfg, g.out_dir);
        if (c_train->parsed()) return dv::cmd_train(cfg, dataset_dir, g.out_dir);
        if (c_sample->parsed()) return dv::cmd_sample(cfg, sf, g.out_dir);
        if (c_twostage->parsed()) return dv::cmd_twostage(cfg, sf, g.out_dir);
        if (c_eval->parsed()) return dv::cmd_eval(cfg, ef, g.out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
