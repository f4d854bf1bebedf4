#include "dv/commands.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "dv/checkpoint.hpp"
#include "dv/inference.hpp"
#include "dv/metrics.hpp"
#include "dv/parallel.hpp"
#include "dv/video_io.hpp"

namespace fs = std::filesystem;

namespace dv {

namespace {

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += " ";
        out += tokens[i];
    }
    return out;
}

std::vector<std::string> split_tokens(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

void echo_config(const char* command, const RunConfig& cfg) {
    std::cout << "command: " << command << "\n";
    std::cout << "seed: " << cfg.seed << "\n";
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016" PRIx64, config_hash(cfg));
    std::cout << "config_hash: " << hash << "\n";
    std::cout << "--- resolved config ---\n" << serialize_config(cfg) << "-----------------------\n";
}

void write_manifest(const std::string& out_dir, const char* command, const RunConfig& cfg,
                    const std::vector<std::string>& artifacts) {
    std::ofstream os(fs::path(out_dir) / "manifest.txt");
    if (!os) throw io_error("cannot write manifest in " + out_dir);
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016" PRIx64, config_hash(cfg));
    os << "command=" << command << "\n";
    os << "config_hash=" << hash << "\n";
    os << "seed=" << cfg.seed << "\n";
    for (const auto& a : artifacts) os << "artifact=" << a << "\n";
}

std::string item_id(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05d", i);
    return buf;
}

GuidanceScales scales_from(const RunConfig& cfg, const SampleFlags& flags) {
    GuidanceScales s = cfg.guidance_scales();
    if (flags.scale_text) s.text = *flags.scale_text;
    if (flags.scale_image) s.image = *flags.scale_image;
    if (flags.decomposition) s.decomposition = parse_decomposition(*flags.decomposition);
    return s;
}

struct LoadedModel {
    std::unique_ptr<DreamVideoModel> model;
    RunConfig train_cfg;
    Codec codec;
    NoiseSchedule sched;
};

LoadedModel load_for_sampling(const std::string& checkpoint) {
    if (checkpoint.empty()) throw invalid_argument("a --checkpoint file is required");
    RunConfig tc;
    auto model = load_model(checkpoint, &tc);
    Codec codec(tc.codec_config(), tc.seed);
    if (tc.codec_mode == CodecMode::LearnedAe) {
        // learned codec weights ride along in the model checkpoint directory
        TensorContainer c = read_container(checkpoint);
        for (auto& [name, var] : codec.params().all()) {
            auto it = c.tensors.find(name);
            if (it == c.tensors.end()) throw io_error("checkpoint missing codec tensor " + name);
            Var v = var;
            v.mutable_value() = it->second.clone();
        }
    }
    NoiseSchedule sched = make_schedule(tc.schedule_num_steps, tc.schedule_kind);
    return {std::move(model), tc, std::move(codec), std::move(sched)};
}

SampleRequest request_from(const RunConfig& cfg, const SampleFlags& flags, const RunConfig& train_cfg) {
    SampleRequest req;
    int res = train_cfg.dataset_resolution;
    if (flags.image_path) {
        Tensor img = read_image_any(*flags.image_path);
        req.image = ConditionImage::from_pixels(std::move(img));
    } else {
        req.image = ConditionImage::white(res, res);
    }
    if (flags.prompt) {
        auto toks = split_tokens(*flags.prompt);
        req.prompt = toks.empty() ? std::nullopt : std::make_optional(toks);
    }
    req.scales = scales_from(cfg, flags);
    req.steps = flags.steps.value_or(cfg.inference_steps);
    req.frames = cfg.inference_frames;
    req.seed = cfg.seed;
    req.eta = cfg.inference_eta;
    if (flags.resolution) {
        auto [h, w] = *flags.resolution;
        req = resolution_override(req, h, w, train_cfg.codec_spatial_factor, res);
    } else if (req.image.height() != res || req.image.width() != res) {
        // incoming image at a non-training resolution: treat as an override
        req = resolution_override(req, static_cast<int>(req.image.height()), static_cast<int>(req.image.width()),
                                  train_cfg.codec_spatial_factor, res);
    }
    return req;
}

GenerationMode parse_mode(const std::string& s) {
    if (s == "text_only") return GenerationMode::TextOnly;
    if (s == "image_only") return GenerationMode::ImageOnly;
    if (s == "text_image") return GenerationMode::TextImage;
    throw invalid_argument("unknown mode: " + s + " (expected text_only|image_only|text_image)");
}

}  // namespace

void write_dataset_dir(const std::string& dir, const std::vector<DatasetItem>& items) {
    fs::create_directories(dir);
    std::ofstream index(fs::path(dir) / "index.tsv");
    if (!index) throw io_error("cannot write dataset index in " + dir);
    for (size_t i = 0; i < items.size(); ++i) {
        std::string id = item_id(static_cast<int>(i));
        write_dvid((fs::path(dir) / (id + ".dvid")).string(), items[i].video);
        index << id << "\t" << join_tokens(items[i].caption) << "\t" << items[i].shape_id << "\t" << items[i].color_id
              << "\t" << items[i].motion_id << "\n";
    }
}

std::vector<DatasetItem> read_dataset_dir(const std::string& dir) {
    std::ifstream index(fs::path(dir) / "index.tsv");
    if (!index) throw io_error("no dataset index at " + dir + "/index.tsv");
    std::vector<DatasetItem> items;
    std::string line;
    while (std::getline(index, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string id, caption, shape, color, motion;
        if (!std::getline(is, id, '\t') || !std::getline(is, caption, '\t') || !std::getline(is, shape, '\t') ||
            !std::getline(is, color, '\t') || !std::getline(is, motion, '\t'))
            throw io_error("malformed dataset index line: " + line);
        DatasetItem item;
        item.video = read_dvid((fs::path(dir) / (id + ".dvid")).string());
        item.caption = split_tokens(caption);
        item.shape_id = std::stoi(shape);
        item.color_id = std::stoi(color);
        item.motion_id = std::stoi(motion);
        items.push_back(std::move(item));
    }
    if (items.empty()) throw io_error("dataset at " + dir + " is empty");
    return items;
}

int cmd_dataset(const RunConfig& cfg, const std::string& out_dir) {
    echo_config("dataset", cfg);
    auto items = synth_dataset(cfg.dataset_spec());
    write_dataset_dir(out_dir, items);
    std::vector<std::string> artifacts = {"index.tsv"};
    artifacts.push_back(item_id(0) + ".dvid .. " + item_id(static_cast<int>(items.size()) - 1) + ".dvid");
    write_manifest(out_dir, "dataset", cfg, artifacts);
    std::cout << "wrote " << items.size() << " videos to " << out_dir << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& dataset_dir, const std::string& out_dir) {
    echo_config("train", cfg);
    auto dataset = read_dataset_dir(dataset_dir);
    fs::create_directories(out_dir);

    Codec codec(cfg.codec_config(), cfg.seed);
    if (cfg.codec_mode == CodecMode::LearnedAe) {
        std::vector<VideoTensor> vids;
        vids.reserve(dataset.size());
        for (const auto& d : dataset) vids.push_back(VideoTensor{d.video.data.clone()});
        std::cout << "training learned autoencoder codec...\n";
        auto curve = codec.train_autoencoder(vids, 5, cfg.seed);
        std::cout << "codec held-out mse: " << curve.front() << " -> " << curve.back() << "\n";
    }
    NoiseSchedule sched = make_schedule(cfg.schedule_num_steps, cfg.schedule_kind);
    DreamVideoModel model(cfg.model_config());

    std::ofstream curve(fs::path(out_dir) / "loss_curve.tsv");
    curve << "epoch\tmean_loss\n";
    std::vector<std::string> artifacts = {"loss_curve.tsv"};
    auto save_with_codec = [&](const std::string& path, uint64_t steps) {
        TensorContainer c;
        c.kind = "model";
        c.step = steps;
        c.config_text = serialize_config(cfg);
        for (const auto& [name, var] : model.params().all()) c.tensors.emplace(name, var.value().clone());
        for (const auto& [name, var] : codec.params().all()) c.tensors.emplace(name, var.value().clone());
        write_container(path, c);
    };
    auto on_epoch = [&](int epoch, double mean_loss, int64_t steps) {
        char name[48];
        std::snprintf(name, sizeof(name), "ckpt_epoch_%03d.dvck", epoch + 1);
        save_with_codec((fs::path(out_dir) / name).string(), static_cast<uint64_t>(steps));
        curve << epoch << "\t" << mean_loss << "\n";
        curve.flush();
        artifacts.push_back(name);
        std::cout << "epoch " << epoch << " mean_loss " << mean_loss << "\n";
        std::cout.flush();
    };

    TrainResult result = train(model, codec, sched, dataset, cfg.train_config(), on_epoch);
    if (result.diverged) {
        write_manifest(out_dir, "train", cfg, artifacts);
        std::cerr << "error: training diverged (non-finite loss); last good checkpoint retained\n";
        return 1;
    }
    save_with_codec((fs::path(out_dir) / "ckpt_final.dvck").string(), static_cast<uint64_t>(result.steps));
    artifacts.push_back("ckpt_final.dvck");
    write_manifest(out_dir, "train", cfg, artifacts);
    std::cout << "trained " << result.steps << " steps; final epoch loss " << result.epoch_loss.back() << "\n";
    return 0;
}

int cmd_sample(const RunConfig& cfg, const SampleFlags& flags, const std::string& out_dir) {
    echo_config("sample", cfg);
    LoadedModel lm = load_for_sampling(flags.checkpoint);
    SampleRequest req = request_from(cfg, flags, lm.train_cfg);
    GenerationMode mode = parse_mode(flags.mode);
    GenerateResult result = generate_multi(*lm.model, lm.codec, lm.sched, mode, req);

    fs::create_directories(out_dir);
    write_dvid((fs::path(out_dir) / "video.dvid").string(), result.video);
    write_frame_grid_png((fs::path(out_dir) / "grid.png").string(), result.video);
    std::vector<std::string> artifacts = {"video.dvid", "grid.png"};
    if (flags.export_frames) {
        fs::create_directories(fs::path(out_dir) / "frames");
        for (int64_t t = 0; t < result.video.frames(); ++t) {
            char name[48];
            std::snprintf(name, sizeof(name), "frames/frame_%03d.png", static_cast<int>(t));
            write_png((fs::path(out_dir) / name).string(), video_frame(result.video, t));
            artifacts.push_back(name);
        }
    }
    std::ofstream meta(fs::path(out_dir) / "sample.txt");
    meta << "mode=" << mode_name(result.mode) << "\n";
    meta << "prompt=" << (flags.prompt ? *flags.prompt : "") << "\n";
    meta << "steps=" << req.steps << "\n";
    meta << "scale_text=" << req.scales.text << "\nscale_image=" << req.scales.image << "\n";
    meta << "decomposition=" << decomposition_name(req.scales.decomposition) << "\n";
    artifacts.push_back("sample.txt");
    write_manifest(out_dir, "sample", cfg, artifacts);
    std::cout << "wrote " << out_dir << "/video.dvid (" << result.video.frames() << " frames, "
              << result.video.height() << "x" << result.video.width() << ")\n";
    return 0;
}

int cmd_twostage(const RunConfig& cfg, const SampleFlags& flags, const std::string& out_dir) {
    echo_config("twostage", cfg);
    LoadedModel lm = load_for_sampling(flags.checkpoint);
    SampleRequest defaults = request_from(cfg, flags, lm.train_cfg);
    std::optional<std::vector<std::string>> p1, p2;
    if (flags.prompt) {
        auto toks = split_tokens(*flags.prompt);
        if (!toks.empty()) p1 = toks;
    }
    if (flags.prompt2) {
        auto toks = split_tokens(*flags.prompt2);
        if (!toks.empty()) p2 = toks;
    }
    TwoStageResult ts = two_stage(*lm.model, lm.codec, lm.sched, defaults.image, p1, p2, defaults);
    fs::create_directories(out_dir);
    write_dvid((fs::path(out_dir) / "stage1.dvid").string(), ts.stage1);
    write_dvid((fs::path(out_dir) / "stage2.dvid").string(), ts.stage2);
    write_dvid((fs::path(out_dir) / "combined.dvid").string(), ts.combined);
    write_frame_grid_png((fs::path(out_dir) / "grid.png").string(), ts.combined);
    write_manifest(out_dir, "twostage", cfg, {"stage1.dvid", "stage2.dvid", "combined.dvid", "grid.png"});
    std::cout << "wrote two-stage result (" << ts.combined.frames() << " frames) to " << out_dir << "\n";
    return 0;
}

namespace {

std::vector<VideoTensor> read_video_dir(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".dvid") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw io_error("no .dvid files in " + dir);
    std::vector<VideoTensor> out;
    out.reserve(files.size());
    for (const auto& f : files) out.push_back(read_dvid(f));
    return out;
}

}  // namespace

int cmd_eval(const RunConfig& cfg, const EvalFlags& flags, const std::string& out_dir) {
    echo_config("eval", cfg);
    if (flags.real_dir.empty() || flags.generated_dir.empty())
        throw invalid_argument("eval requires --real and --generated directories");
    std::vector<VideoTensor> generated = read_video_dir(flags.generated_dir);

    // the real side may be a dataset dir (with captions) or a plain video dir
    std::vector<VideoTensor> real;
    std::vector<std::vector<std::string>> captions;
    if (fs::exists(fs::path(flags.real_dir) / "index.tsv")) {
        auto items = read_dataset_dir(flags.real_dir);
        for (auto& it : items) {
            real.push_back(std::move(it.video));
            captions.push_back(it.caption);
        }
    } else {
        real = read_video_dir(flags.real_dir);
    }

    fs::create_directories(out_dir);
    std::unique_ptr<ToyExtractor> extractor;
    std::vector<std::string> artifacts;
    std::vector<std::string> wanted = split_tokens([&] {
        std::string m = flags.metrics;
        std::replace(m.begin(), m.end(), ',', ' ');
        return m;
    }());
    auto needs = [&](const std::string& name) {
        return std::find(wanted.begin(), wanted.end(), name) != wanted.end();
    };
    if (needs("fvd") || needs("is") || needs("clip_sim") || needs("fff_clip")) {
        if (!flags.extractor_path.empty()) {
            extractor = load_extractor(flags.extractor_path);
        } else {
            std::string ds = flags.dataset_dir.empty() ? flags.real_dir : flags.dataset_dir;
            auto items = read_dataset_dir(ds);
            std::cout << "training toy extractor on " << items.size() << " videos...\n";
            extractor = train_toy_extractor(items, cfg.seed);
            std::cout << "extractor held-out motion accuracy: " << extractor->holdout_accuracy() << "\n";
            save_extractor((fs::path(out_dir) / "extractor.dvck").string(), *extractor);
            artifacts.push_back("extractor.dvck");
        }
    }

    std::string set_name = fs::path(flags.generated_dir).filename().string();
    if (set_name.empty()) set_name = flags.generated_dir;
    std::ofstream tsv(fs::path(out_dir) / "metrics.tsv");
    tsv << "metric\tinput_set\tvalue\n";
    char buf[64];
    auto record = [&](const std::string& metric, double value) {
        std::snprintf(buf, sizeof(buf), "%.17g", value);
        tsv << metric << "\t" << set_name << "\t" << buf << "\n";
        std::cout << metric << " (" << set_name << "): " << value << "\n";
    };

    size_t paired = std::min(real.size(), generated.size());
    if (needs("fvd")) record("fvd", fvd(real, generated, *extractor));
    if (needs("is")) record("is", inception_score(generated, *extractor));
    if (needs("clip_sim")) {
        if (captions.empty()) {
            std::cout << "clip_sim skipped: real set has no captions\n";
        } else {
            double total = 0.0;
            for (size_t i = 0; i < paired; ++i) total += clip_sim(captions[i], generated[i], *extractor);
            record("clip_sim", total / static_cast<double>(paired));
        }
    }
    if (needs("fff_ssim")) {
        double total = 0.0;
        for (size_t i = 0; i < paired; ++i) total += fff_ssim(video_frame(real[i], 0), generated[i]);
        record("fff_ssim", total / static_cast<double>(paired));
    }
    if (needs("fff_clip")) {
        double total = 0.0;
        for (size_t i = 0; i < paired; ++i) total += fff_clip(video_frame(real[i], 0), generated[i], *extractor);
        record("fff_clip", total / static_cast<double>(paired));
    }
    artifacts.push_back("metrics.tsv");
    write_manifest(out_dir, "eval", cfg, artifacts);
    return 0;
}

}  // namespace dv
