#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dv/checkpoint.hpp"
#include "dv/commands.hpp"
#include "dv/video_io.hpp"
#include "helpers.hpp"

using namespace dv;
using namespace dvtest;
namespace fs = std::filesystem;

namespace {

std::string temp_dir() {
    static int counter = 0;
    fs::path p = fs::temp_directory_path() / ("dv_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(p);
    return p.string();
}

std::string read_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace

TEST_SUITE_BEGIN("persistence");

TEST_CASE("config round-trips losslessly and rejects unknown keys") {
    RunConfig c;
    c.seed = 1234567;
    c.schedule_kind = ScheduleKind::Cosine;
    c.codec_mode = CodecMode::LearnedAe;
    c.codec_latent_channels = 8;
    c.backbone_channel_multipliers = {1, 2, 2, 4};
    c.backbone_num_levels = 4;
    c.training_learning_rate = 3.0e-4;
    c.inference_scale_image = 2.25;
    c.inference_decomposition = Decomposition::ImageFirst;
    RunConfig back = parse_config(serialize_config(c));
    CHECK(back == c);
    CHECK(config_hash(back) == config_hash(c));
    RunConfig other;
    CHECK(config_hash(other) != config_hash(c));

    CHECK_THROWS_AS(parse_config("schedule.numsteps=10\n"), invalid_argument);
    CHECK_THROWS_AS(parse_config("bogus line without equals\n"), invalid_argument);
    CHECK_THROWS_AS(parse_config("schedule.num_steps=ten\n"), invalid_argument);
    // comments and blank lines are fine
    CHECK_NOTHROW(parse_config("# comment\n\nseed=3\n"));
}

TEST_CASE("checkpoint: bit-exact round trip and byte-identical re-save") {
    std::string dir = temp_dir();
    ModelConfig mc = tiny_model_config(61);
    DreamVideoModel model(mc);
    randomize_params(model.params(), 5);
    RunConfig rc;
    rc.seed = 61;

    std::string p1 = dir + "/a.dvck";
    std::string p2 = dir + "/b.dvck";
    save_checkpoint(p1, model, rc, 123);

    DreamVideoModel loaded(mc);
    LoadedCheckpoint lc = load_checkpoint(p1, loaded);
    CHECK(lc.step == 123);
    CHECK(lc.config == rc);
    for (const auto& [name, var] : model.params().all())
        CHECK(loaded.params().get(name).value().bitwise_equal(var.value()));

    save_checkpoint(p2, loaded, rc, 123);
    CHECK(read_bytes(p1) == read_bytes(p2));
}

TEST_CASE("checkpoint: corruption and truncation are refused, no partial load") {
    std::string dir = temp_dir();
    ModelConfig mc = tiny_model_config(62);
    DreamVideoModel model(mc);
    randomize_params(model.params(), 6);
    RunConfig rc;
    std::string path = dir + "/m.dvck";
    save_checkpoint(path, model, rc, 7);

    std::string bytes = read_bytes(path);
    // flip one payload byte: checksum error
    std::string corrupt = bytes;
    corrupt[corrupt.size() / 2] ^= 0x40;
    std::ofstream(dir + "/corrupt.dvck", std::ios::binary).write(corrupt.data(), static_cast<std::streamsize>(corrupt.size()));
    DreamVideoModel victim(mc);
    Tensor before = victim.params().get("unet.conv_in.w").value().clone();
    CHECK_THROWS_AS(load_checkpoint(dir + "/corrupt.dvck", victim), io_error);

    // truncated file: error and the model is untouched
    std::ofstream(dir + "/trunc.dvck", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 3));
    CHECK_THROWS_AS(load_checkpoint(dir + "/trunc.dvck", victim), io_error);
    CHECK(victim.params().get("unet.conv_in.w").value().bitwise_equal(before));

    // version mismatch is refused
    std::string vbad = bytes;
    vbad[4] = 99;
    std::ofstream(dir + "/vbad.dvck", std::ios::binary).write(vbad.data(), static_cast<std::streamsize>(vbad.size()));
    CHECK_THROWS_AS(load_checkpoint(dir + "/vbad.dvck", victim), io_error);

    CHECK_THROWS_AS(read_container(dir + "/missing.dvck"), io_error);
}

TEST_CASE("parameter count matches the layer-shape enumeration oracle") {
    // default toy configuration
    ModelConfig mc;
    mc.init_seed = 0;
    DreamVideoModel model(mc);

    const int64_t V = 18, D = 64, base = 32, tdim = 4 * base, latent = 48;
    auto gn = [](int64_t c) { return 2 * c; };
    auto conv = [](int64_t cin, int64_t cout, int64_t k) { return cout * cin * k * k + cout; };
    auto lin = [](int64_t in, int64_t out, bool bias) { return out * in + (bias ? out : 0); };
    auto attn_self = [&](int64_t c) { return gn(c) + 3 * lin(c, c, false) + lin(c, c, true); };
    auto attn_cross = [&](int64_t c) { return gn(c) + lin(c, c, false) + 2 * lin(D, c, false) + lin(c, c, true); };
    auto res = [&](int64_t cin, int64_t cout) {
        int64_t n = gn(cin) + conv(cin, cout, 3) + lin(tdim, 2 * cout, true) + gn(cout) + conv(cout, cout, 3);
        if (cin != cout) n += conv(cin, cout, 1);
        return n;
    };
    auto tconv = [&](int64_t c) { return c * c * 3 + c; };
    auto block = [&](int64_t cin, int64_t cout) {
        return res(cin, cout) + attn_self(cout) + attn_cross(cout) + tconv(cout) + attn_self(cout) /* tattn */;
    };

    int64_t expected = 0;
    expected += V * D + D;  // text table + null row
    // unet
    expected += lin(base, tdim, true) + lin(tdim, tdim, true);  // time mlp
    expected += conv(latent, base, 3);                          // conv_in
    expected += block(32, 32) + block(32, 64) + block(64, 128);
    expected += conv(32, 32, 3) + conv(64, 64, 3);  // downsamples
    expected += block(128, 128);                    // mid
    expected += block(256, 128) + block(192, 64) + block(96, 32);
    expected += conv(128, 128, 3) + conv(64, 64, 3);  // upconvs
    expected += gn(base) + conv(base, latent, 3);     // out norm + conv_out
    // retention
    expected += conv(latent, base, 3) + conv(3, base, 3);  // conv_d, conv_s
    expected += block(32, 32) + block(32, 64) + block(64, 128);
    expected += conv(32, 32, 3) + conv(64, 64, 3);
    expected += block(128, 128);
    expected += conv(32, 32, 1) + conv(64, 64, 1) + conv(128, 128, 1) + conv(128, 128, 1);  // zero convs

    CHECK(model.params().total_elements() == expected);
}

TEST_CASE("video io: dvid round trip and png quantization") {
    std::string dir = temp_dir();
    RandomStream rng(7);
    // f32-exact values round-trip bitwise through the DVID file
    Tensor v({3, 6, 5, 3});
    for (int64_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(rng.uniform_int(1025)) / 1024.0;
    VideoTensor video{std::move(v)};
    write_dvid(dir + "/v.dvid", video);
    VideoTensor back = read_dvid(dir + "/v.dvid");
    CHECK(back.data.bitwise_equal(video.data));

    // identical writes produce identical bytes
    write_dvid(dir + "/v2.dvid", video);
    CHECK(read_bytes(dir + "/v.dvid") == read_bytes(dir + "/v2.dvid"));

    CHECK_THROWS_AS(read_dvid(dir + "/missing.dvid"), io_error);
    std::ofstream(dir + "/garbage.dvid", std::ios::binary).write("XXXXYYYY", 8);
    CHECK_THROWS_AS(read_dvid(dir + "/garbage.dvid"), io_error);

    // png: 8-bit grid values survive exactly
    Tensor img({9, 7, 3});
    for (int64_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(rng.uniform_int(256)) / 255.0;
    write_png(dir + "/i.png", img);
    Tensor img_back = read_png(dir + "/i.png");
    CHECK(img_back.bitwise_equal(img));

    write_frame_grid_png(dir + "/grid.png", video);
    Tensor grid = read_png(dir + "/grid.png");
    CHECK(grid.dim(0) == 6);
    CHECK(grid.dim(1) == 3 * 5 + 2 * 2);
}

TEST_CASE("dataset directory cache round trip") {
    std::string dir = temp_dir();
    DatasetSpec spec;
    spec.num_videos = 4;
    spec.resolution = 16;
    spec.frames_per_video = 3;
    spec.velocity = 1;
    spec.seed = 8;
    auto items = synth_dataset(spec);
    write_dataset_dir(dir, items);
    auto back = read_dataset_dir(dir);
    REQUIRE(back.size() == items.size());
    for (size_t i = 0; i < items.size(); ++i) {
        CHECK(back[i].caption == items[i].caption);
        CHECK(back[i].shape_id == items[i].shape_id);
        CHECK(back[i].color_id == items[i].color_id);
        CHECK(back[i].motion_id == items[i].motion_id);
        // pixel payload survives the f32 cast exactly (palette is dyadic)
        CHECK(back[i].video.data.bitwise_equal(items[i].video.data));
    }
}

TEST_CASE("extractor save/load round trip") {
    std::string dir = temp_dir();
    DatasetSpec spec;
    spec.num_videos = 30;
    spec.resolution = 16;
    spec.frames_per_video = 3;
    spec.velocity = 1;
    spec.seed = 9;
    auto corpus = synth_dataset(spec);
    ToyExtractorConfig cfg;
    cfg.epochs = 2;
    auto ex = train_toy_extractor(corpus, 3, cfg);
    save_extractor(dir + "/ex.dvck", *ex);
    auto back = load_extractor(dir + "/ex.dvck");
    CHECK(back->holdout_accuracy() == ex->holdout_accuracy());
    CHECK(back->embed_video(corpus[0].video) == ex->embed_video(corpus[0].video));
    CHECK(back->embed_text({"red", "grows"}) == ex->embed_text({"red", "grows"}));
    CHECK(back->classify(corpus[1].video) == ex->classify(corpus[1].video));
}

TEST_SUITE_END();
