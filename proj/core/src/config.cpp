#include "dv/config.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace dv {

UNetConfig RunConfig::unet_config() const {
    UNetConfig u;
    u.num_levels = backbone_num_levels;
    u.base_channels = backbone_base_channels;
    u.channel_multipliers = backbone_channel_multipliers;
    u.attention_heads = backbone_attention_heads;
    u.temporal_kernel = backbone_temporal_kernel;
    u.text_dim = backbone_text_dim;
    u.norm_groups = backbone_norm_groups;
    u.latent_channels = codec_latent_channels;
    return u;
}

ModelConfig RunConfig::model_config() const {
    ModelConfig m;
    m.unet = unet_config();
    m.spatial_factor = codec_spatial_factor;
    m.max_step = schedule_num_steps;
    m.init_seed = seed;
    return m;
}

CodecConfig RunConfig::codec_config() const {
    CodecConfig c;
    c.mode = codec_mode;
    c.spatial_factor = codec_spatial_factor;
    c.latent_channels = codec_latent_channels;
    return c;
}

DatasetSpec RunConfig::dataset_spec() const {
    DatasetSpec d;
    d.num_videos = dataset_num_videos;
    d.frames_per_video = dataset_frames_per_video;
    d.resolution = dataset_resolution;
    d.velocity = dataset_velocity;
    d.seed = dataset_seed;
    return d;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t;
    t.epochs = training_epochs;
    t.batch_size = training_batch_size;
    t.learning_rate = training_learning_rate;
    t.text_dropout_p = training_text_dropout_p;
    t.image_dropout_p = training_image_dropout_p;
    t.sample_rate = training_sample_rate;
    t.seed = seed;
    return t;
}

GuidanceScales RunConfig::guidance_scales() const {
    return GuidanceScales{inference_scale_text, inference_scale_image, inference_decomposition};
}

std::string schedule_kind_name(ScheduleKind k) {
    return k == ScheduleKind::LinearBeta ? "linear_beta" : "cosine";
}
ScheduleKind parse_schedule_kind(const std::string& s) {
    if (s == "linear_beta") return ScheduleKind::LinearBeta;
    if (s == "cosine") return ScheduleKind::Cosine;
    throw invalid_argument("unknown schedule kind: " + s);
}
std::string codec_mode_name(CodecMode m) {
    return m == CodecMode::SpaceToDepth ? "space_to_depth" : "learned_ae";
}
CodecMode parse_codec_mode(const std::string& s) {
    if (s == "space_to_depth") return CodecMode::SpaceToDepth;
    if (s == "learned_ae") return CodecMode::LearnedAe;
    throw invalid_argument("unknown codec mode: " + s);
}
std::string decomposition_name(Decomposition d) {
    return d == Decomposition::TextFirst ? "text_first" : "image_first";
}
Decomposition parse_decomposition(const std::string& s) {
    if (s == "text_first") return Decomposition::TextFirst;
    if (s == "image_first") return Decomposition::ImageFirst;
    throw invalid_argument("unknown decomposition: " + s);
}

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_ints(const std::vector<int>& v) {
    std::ostringstream os;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) os << ",";
        os << v[i];
    }
    return os.str();
}

std::vector<int> parse_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) throw invalid_argument("bad int list: " + s);
        out.push_back(std::stoi(tok));
    }
    if (out.empty()) throw invalid_argument("empty int list");
    return out;
}

int64_t parse_i64(const std::string& s) {
    size_t pos = 0;
    long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw invalid_argument("bad integer: " + s);
    return v;
}

uint64_t parse_u64(const std::string& s) {
    size_t pos = 0;
    unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw invalid_argument("bad unsigned integer: " + s);
    return v;
}

double parse_f64(const std::string& s) {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw invalid_argument("bad real: " + s);
    return v;
}

}  // namespace

std::string serialize_config(const RunConfig& c) {
    std::ostringstream os;
    os << "seed=" << c.seed << "\n";
    os << "schedule.num_steps=" << c.schedule_num_steps << "\n";
    os << "schedule.kind=" << schedule_kind_name(c.schedule_kind) << "\n";
    os << "codec.mode=" << codec_mode_name(c.codec_mode) << "\n";
    os << "codec.spatial_factor=" << c.codec_spatial_factor << "\n";
    os << "codec.latent_channels=" << c.codec_latent_channels << "\n";
    os << "backbone.num_levels=" << c.backbone_num_levels << "\n";
    os << "backbone.base_channels=" << c.backbone_base_channels << "\n";
    os << "backbone.channel_multipliers=" << fmt_ints(c.backbone_channel_multipliers) << "\n";
    os << "backbone.attention_heads=" << c.backbone_attention_heads << "\n";
    os << "backbone.temporal_kernel=" << c.backbone_temporal_kernel << "\n";
    os << "backbone.text_dim=" << c.backbone_text_dim << "\n";
    os << "backbone.norm_groups=" << c.backbone_norm_groups << "\n";
    os << "dataset.num_videos=" << c.dataset_num_videos << "\n";
    os << "dataset.frames_per_video=" << c.dataset_frames_per_video << "\n";
    os << "dataset.resolution=" << c.dataset_resolution << "\n";
    os << "dataset.velocity=" << c.dataset_velocity << "\n";
    os << "dataset.seed=" << c.dataset_seed << "\n";
    os << "training.epochs=" << c.training_epochs << "\n";
    os << "training.batch_size=" << c.training_batch_size << "\n";
    os << "training.learning_rate=" << fmt_double(c.training_learning_rate) << "\n";
    os << "training.text_dropout_p=" << fmt_double(c.training_text_dropout_p) << "\n";
    os << "training.image_dropout_p=" << fmt_double(c.training_image_dropout_p) << "\n";
    os << "training.sample_rate=" << c.training_sample_rate << "\n";
    os << "inference.frames=" << c.inference_frames << "\n";
    os << "inference.steps=" << c.inference_steps << "\n";
    os << "inference.scale_text=" << fmt_double(c.inference_scale_text) << "\n";
    os << "inference.scale_image=" << fmt_double(c.inference_scale_image) << "\n";
    os << "inference.decomposition=" << decomposition_name(c.inference_decomposition) << "\n";
    os << "inference.eta=" << fmt_double(c.inference_eta) << "\n";
    return os.str();
}

RunConfig parse_config(const std::string& text) {
    RunConfig c;
    std::map<std::string, std::function<void(const std::string&)>> setters = {
        {"seed", [&](const std::string& v) { c.seed = parse_u64(v); }},
        {"schedule.num_steps", [&](const std::string& v) { c.schedule_num_steps = static_cast<int>(parse_i64(v)); }},
        {"schedule.kind", [&](const std::string& v) { c.schedule_kind = parse_schedule_kind(v); }},
        {"codec.mode", [&](const std::string& v) { c.codec_mode = parse_codec_mode(v); }},
        {"codec.spatial_factor", [&](const std::string& v) { c.codec_spatial_factor = static_cast<int>(parse_i64(v)); }},
        {"codec.latent_channels", [&](const std::string& v) { c.codec_latent_channels = static_cast<int>(parse_i64(v)); }},
        {"backbone.num_levels", [&](const std::string& v) { c.backbone_num_levels = static_cast<int>(parse_i64(v)); }},
        {"backbone.base_channels", [&](const std::string& v) { c.backbone_base_channels = static_cast<int>(parse_i64(v)); }},
        {"backbone.channel_multipliers", [&](const std::string& v) { c.backbone_channel_multipliers = parse_ints(v); }},
        {"backbone.attention_heads", [&](const std::string& v) { c.backbone_attention_heads = static_cast<int>(parse_i64(v)); }},
        {"backbone.temporal_kernel", [&](const std::string& v) { c.backbone_temporal_kernel = static_cast<int>(parse_i64(v)); }},
        {"backbone.text_dim", [&](const std::string& v) { c.backbone_text_dim = static_cast<int>(parse_i64(v)); }},
        {"backbone.norm_groups", [&](const std::string& v) { c.backbone_norm_groups = static_cast<int>(parse_i64(v)); }},
        {"dataset.num_videos", [&](const std::string& v) { c.dataset_num_videos = static_cast<int>(parse_i64(v)); }},
        {"dataset.frames_per_video", [&](const std::string& v) { c.dataset_frames_per_video = static_cast<int>(parse_i64(v)); }},
        {"dataset.resolution", [&](const std::string& v) { c.dataset_resolution = static_cast<int>(parse_i64(v)); }},
        {"dataset.velocity", [&](const std::string& v) { c.dataset_velocity = static_cast<int>(parse_i64(v)); }},
        {"dataset.seed", [&](const std::string& v) { c.dataset_seed = parse_u64(v); }},
        {"training.epochs", [&](const std::string& v) { c.training_epochs = static_cast<int>(parse_i64(v)); }},
        {"training.batch_size", [&](const std::string& v) { c.training_batch_size = static_cast<int>(parse_i64(v)); }},
        {"training.learning_rate", [&](const std::string& v) { c.training_learning_rate = parse_f64(v); }},
        {"training.text_dropout_p", [&](const std::string& v) { c.training_text_dropout_p = parse_f64(v); }},
        {"training.image_dropout_p", [&](const std::string& v) { c.training_image_dropout_p = parse_f64(v); }},
        {"training.sample_rate", [&](const std::string& v) { c.training_sample_rate = static_cast<int>(parse_i64(v)); }},
        {"inference.frames", [&](const std::string& v) { c.inference_frames = static_cast<int>(parse_i64(v)); }},
        {"inference.steps", [&](const std::string& v) { c.inference_steps = static_cast<int>(parse_i64(v)); }},
        {"inference.scale_text", [&](const std::string& v) { c.inference_scale_text = parse_f64(v); }},
        {"inference.scale_image", [&](const std::string& v) { c.inference_scale_image = parse_f64(v); }},
        {"inference.decomposition", [&](const std::string& v) { c.inference_decomposition = parse_decomposition(v); }},
        {"inference.eta", [&](const std::string& v) { c.inference_eta = parse_f64(v); }},
    };

    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        size_t first = line.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        if (line[first] == '#') continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw invalid_argument("config line " + std::to_string(lineno) + ": expected key=value, got \"" + line + "\"");
        std::string key = line.substr(first, eq - first);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
        std::string value = line.substr(eq + 1);
        size_t vs = value.find_first_not_of(" \t");
        value = vs == std::string::npos ? "" : value.substr(vs);
        while (!value.empty() && (value.back() == ' ' || value.back() == '\t')) value.pop_back();
        auto it = setters.find(key);
        if (it == setters.end()) throw invalid_argument("config line " + std::to_string(lineno) + ": unknown key \"" + key + "\"");
        try {
            it->second(value);
        } catch (const std::exception& e) {
            throw invalid_argument("config line " + std::to_string(lineno) + " (" + key + "): " + e.what());
        }
    }
    return c;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

void save_config_file(const std::string& path, const RunConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot write config file: " + path);
    out << serialize_config(cfg);
}

uint64_t config_hash(const RunConfig& cfg) {
    std::string s = serialize_config(cfg);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace dv
