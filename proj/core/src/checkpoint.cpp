#include "dv/checkpoint.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <sstream>

namespace dv {

namespace {

constexpr char kMagic[4] = {'D', 'V', 'C', 'K'};

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw io_error(std::string("checkpoint truncated while reading ") + what);
    return v;
}

void put_string(std::ostream& os, const std::string& s) {
    put<uint32_t>(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is, const char* what) {
    uint32_t len = get<uint32_t>(is, what);
    if (len > (1u << 28)) throw io_error(std::string("checkpoint: implausible length for ") + what);
    std::string s(len, '\0');
    is.read(s.data(), len);
    if (!is) throw io_error(std::string("checkpoint truncated while reading ") + what);
    return s;
}

uint32_t tensor_crc(const Tensor& t) {
    return static_cast<uint32_t>(
        crc32(0, reinterpret_cast<const Bytef*>(t.data()), static_cast<uInt>(t.size() * sizeof(double))));
}

}  // namespace

void write_container(const std::string& path, const TensorContainer& c) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot write checkpoint: " + path);
    os.write(kMagic, 4);
    put<uint32_t>(os, kContainerVersion);
    put_string(os, c.kind);
    put<uint64_t>(os, c.step);
    put_string(os, c.config_text);
    put<uint32_t>(os, static_cast<uint32_t>(c.tensors.size()));
    for (const auto& [name, tensor] : c.tensors) {
        put_string(os, name);
        put<uint8_t>(os, 0);  // dtype: f64
        put<uint8_t>(os, static_cast<uint8_t>(tensor.ndim()));
        for (int64_t d : tensor.dims()) put<int64_t>(os, d);
        put<uint64_t>(os, static_cast<uint64_t>(tensor.size()) * sizeof(double));
        os.write(reinterpret_cast<const char*>(tensor.data()),
                 static_cast<std::streamsize>(tensor.size() * sizeof(double)));
        put<uint32_t>(os, tensor_crc(tensor));
    }
    if (!os) throw io_error("write failed: " + path);
}

TensorContainer read_container(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw io_error("not a checkpoint file: " + path);
    uint32_t version = get<uint32_t>(is, "version");
    if (version != kContainerVersion)
        throw io_error("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                       std::to_string(kContainerVersion) + "): " + path);
    TensorContainer c;
    c.kind = get_string(is, "kind");
    c.step = get<uint64_t>(is, "step");
    c.config_text = get_string(is, "config");
    uint32_t count = get<uint32_t>(is, "tensor count");
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = get_string(is, "tensor name");
        uint8_t dtype = get<uint8_t>(is, "dtype");
        if (dtype != 0) throw io_error("checkpoint: unsupported dtype for " + name);
        uint8_t ndim = get<uint8_t>(is, "ndim");
        Shape dims(ndim);
        for (auto& d : dims) d = get<int64_t>(is, "dims");
        uint64_t nbytes = get<uint64_t>(is, "payload size");
        if (nbytes != static_cast<uint64_t>(shape_numel(dims)) * sizeof(double))
            throw io_error("checkpoint: payload size mismatch for " + name);
        Tensor t(dims);
        is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(nbytes));
        if (!is) throw io_error("checkpoint truncated in tensor " + name);
        uint32_t crc = get<uint32_t>(is, "crc");
        if (crc != tensor_crc(t)) throw io_error("checkpoint: checksum error in tensor " + name);
        c.tensors.emplace(std::move(name), std::move(t));
    }
    return c;
}

void save_checkpoint(const std::string& path, const DreamVideoModel& model, const RunConfig& cfg, uint64_t step) {
    TensorContainer c;
    c.kind = "model";
    c.step = step;
    c.config_text = serialize_config(cfg);
    for (const auto& [name, var] : model.params().all()) c.tensors.emplace(name, var.value().clone());
    write_container(path, c);
}

RunConfig peek_checkpoint_config(const std::string& path) {
    TensorContainer c = read_container(path);
    return parse_config(c.config_text);
}

LoadedCheckpoint load_checkpoint(const std::string& path, DreamVideoModel& model) {
    TensorContainer c = read_container(path);
    if (c.kind != "model") throw io_error("checkpoint kind \"" + c.kind + "\" is not a model: " + path);
    const auto& params = model.params().all();
    if (params.size() != c.tensors.size())
        throw io_error("checkpoint parameter count " + std::to_string(c.tensors.size()) +
                       " does not match model (" + std::to_string(params.size()) + ")");
    // verify everything first so a bad file cannot leave a partial model
    for (const auto& [name, var] : params) {
        auto it = c.tensors.find(name);
        if (it == c.tensors.end()) throw io_error("checkpoint missing parameter " + name);
        if (!it->second.same_shape(var.value()))
            throw io_error("checkpoint shape mismatch for " + name + ": file " + shape_str(it->second.dims()) +
                           " vs model " + shape_str(var.value().dims()));
    }
    for (auto& [name, var] : params) {
        Var v = var;
        v.mutable_value() = c.tensors.at(name).clone();
    }
    return {parse_config(c.config_text), c.step};
}

std::unique_ptr<DreamVideoModel> load_model(const std::string& path, RunConfig* out_cfg, uint64_t* out_step) {
    RunConfig cfg = peek_checkpoint_config(path);
    auto model = std::make_unique<DreamVideoModel>(cfg.model_config());
    LoadedCheckpoint lc = load_checkpoint(path, *model);
    if (out_cfg) *out_cfg = lc.config;
    if (out_step) *out_step = lc.step;
    return model;
}

void save_extractor(const std::string& path, ToyExtractor& extractor) {
    TensorContainer c;
    c.kind = "extractor";
    c.step = 0;
    std::ostringstream cfg;
    cfg.precision(17);
    cfg << "embed_dim=" << extractor.config().embed_dim << "\n";
    cfg << "holdout_accuracy=" << extractor.holdout_accuracy() << "\n";
    c.config_text = cfg.str();
    for (const auto& [name, var] : extractor.params().all()) c.tensors.emplace(name, var.value().clone());
    for (const auto& [word, proto] : extractor.prototypes()) {
        Tensor t({static_cast<int64_t>(proto.size())});
        std::copy(proto.begin(), proto.end(), t.data());
        c.tensors.emplace("proto." + word, std::move(t));
    }
    write_container(path, c);
}

std::unique_ptr<ToyExtractor> load_extractor(const std::string& path) {
    TensorContainer c = read_container(path);
    if (c.kind != "extractor") throw io_error("checkpoint kind \"" + c.kind + "\" is not an extractor: " + path);
    ToyExtractorConfig cfg;
    std::istringstream is(c.config_text);
    std::string line;
    double holdout = 0.0;
    while (std::getline(is, line)) {
        size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        if (key == "embed_dim") cfg.embed_dim = std::stoi(value);
        if (key == "holdout_accuracy") holdout = std::stod(value);
    }
    auto ex = std::make_unique<ToyExtractor>(cfg, 0);
    for (auto& [name, var] : ex->params().all()) {
        auto it = c.tensors.find(name);
        if (it == c.tensors.end()) throw io_error("extractor checkpoint missing " + name);
        Var v = var;
        v.mutable_value() = it->second.clone();
    }
    for (const auto& [name, tensor] : c.tensors) {
        if (name.rfind("proto.", 0) != 0) continue;
        std::vector<double> proto(tensor.data(), tensor.data() + tensor.size());
        ex->prototypes()[name.substr(6)] = std::move(proto);
    }
    ex->set_holdout_accuracy(holdout);
    return ex;
}

}  // namespace dv
