#include "sdmae/config.hpp"

#include <cctype>
#include <cerrno>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace sdmae::config {

namespace {

// One config key: how to read it into a RunConfig and how to print it back.
struct Field {
    std::string key;
    bool hashed;  // participates in the trajectory hash
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
    throw_config("config key '" + key + "': cannot parse '" + value + "' as " + want);
}

long long to_int(const std::string& key, const std::string& v) {
    errno = 0;
    char* end = nullptr;
    const long long n = std::strtoll(v.c_str(), &end, 10);
    if (errno != 0 || end != v.c_str() + v.size() || v.empty()) bad_value(key, v, "an integer");
    return n;
}

Field make_int(const std::string& key, std::function<int&(RunConfig&)> ref, bool hashed = true) {
    return {key, hashed,
            [key, ref](RunConfig& c, const std::string& v) {
                ref(c) = static_cast<int>(to_int(key, v));
            },
            [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); }};
}

Field make_u64(const std::string& key, std::function<std::uint64_t&(RunConfig&)> ref) {
    return {key, true,
            [key, ref](RunConfig& c, const std::string& v) {
                errno = 0;
                char* end = nullptr;
                const unsigned long long n = std::strtoull(v.c_str(), &end, 10);
                if (errno != 0 || end != v.c_str() + v.size() || v.empty() || v[0] == '-') {
                    bad_value(key, v, "an unsigned integer");
                }
                ref(c) = n;
            },
            [ref](const RunConfig& c) {
                return std::to_string(ref(const_cast<RunConfig&>(c)));
            }};
}

Field make_double(const std::string& key, std::function<double&(RunConfig&)> ref) {
    return {key, true,
            [key, ref](RunConfig& c, const std::string& v) {
                errno = 0;
                char* end = nullptr;
                const double d = std::strtod(v.c_str(), &end);
                if (errno != 0 || end != v.c_str() + v.size() || v.empty()) {
                    bad_value(key, v, "a number");
                }
                ref(c) = d;
            },
            [ref](const RunConfig& c) {
                char buf[40];
                std::snprintf(buf, sizeof buf, "%.17g", ref(const_cast<RunConfig&>(c)));
                return std::string(buf);
            }};
}

Field make_bool(const std::string& key, std::function<bool&(RunConfig&)> ref) {
    return {key, true,
            [key, ref](RunConfig& c, const std::string& v) {
                if (v == "true" || v == "1") {
                    ref(c) = true;
                } else if (v == "false" || v == "0") {
                    ref(c) = false;
                } else {
                    bad_value(key, v, "a boolean (true/false)");
                }
            },
            [ref](const RunConfig& c) {
                return ref(const_cast<RunConfig&>(c)) ? "true" : "false";
            }};
}

Field make_str(const std::string& key, std::function<std::string&(RunConfig&)> ref,
               bool hashed = true) {
    return {key, hashed, [ref](RunConfig& c, const std::string& v) { ref(c) = v; },
            [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back(make_u64("seed", [](RunConfig& c) -> std::uint64_t& { return c.seed; }));
        f.push_back(make_str("out_dir", [](RunConfig& c) -> std::string& { return c.out_dir; },
                             /*hashed=*/false));
        f.push_back(make_str("data.source",
                             [](RunConfig& c) -> std::string& { return c.data_source; }));
        f.push_back(make_str("data.path", [](RunConfig& c) -> std::string& { return c.data_path; }));
        f.push_back(make_int("data.classes", [](RunConfig& c) -> int& { return c.data_classes; }));
        f.push_back(
            make_int("data.per_class", [](RunConfig& c) -> int& { return c.data_per_class; }));
        f.push_back(
            make_int("data.resolution", [](RunConfig& c) -> int& { return c.data_resolution; }));
        f.push_back(make_double("augment.scale",
                                [](RunConfig& c) -> double& { return c.augment_scale; }));
        f.push_back(make_int("encoder.depth", [](RunConfig& c) -> int& { return c.encoder.depth; }));
        f.push_back(make_int("encoder.dim", [](RunConfig& c) -> int& { return c.encoder.dim; }));
        f.push_back(make_int("encoder.heads", [](RunConfig& c) -> int& { return c.encoder.heads; }));
        f.push_back(make_double("encoder.mlp_ratio",
                                [](RunConfig& c) -> double& { return c.encoder.mlp_ratio; }));
        f.push_back(make_int("encoder.patch_size",
                             [](RunConfig& c) -> int& { return c.encoder.patch_size; }));
        f.push_back(make_double("encoder.drop_path",
                                [](RunConfig& c) -> double& { return c.encoder.drop_path; }));
        f.push_back(make_int("decoder.depth", [](RunConfig& c) -> int& { return c.decoder.depth; }));
        f.push_back(make_int("decoder.dim", [](RunConfig& c) -> int& { return c.decoder.dim; }));
        f.push_back(make_int("decoder.heads", [](RunConfig& c) -> int& { return c.decoder.heads; }));
        f.push_back(make_bool("strong_query_via_momentum", [](RunConfig& c) -> bool& {
            return c.strong_query_via_momentum;
        }));
        f.push_back(make_double("base_lr", [](RunConfig& c) -> double& { return c.base_lr; }));
        f.push_back(
            make_int("warmup_epochs", [](RunConfig& c) -> int& { return c.warmup_epochs; }));
        f.push_back(make_int("total_epochs", [](RunConfig& c) -> int& { return c.total_epochs; }));
        f.push_back(make_int("batch_size", [](RunConfig& c) -> int& { return c.batch_size; }));
        f.push_back(
            make_double("weight_decay", [](RunConfig& c) -> double& { return c.weight_decay; }));
        f.push_back(
            make_double("mask_ratio", [](RunConfig& c) -> double& { return c.mask_ratio; }));
        f.push_back(make_double("lambda_l", [](RunConfig& c) -> double& { return c.lambda_l; }));
        f.push_back(make_double("lambda_c", [](RunConfig& c) -> double& { return c.lambda_c; }));
        f.push_back(make_double("tau", [](RunConfig& c) -> double& { return c.tau; }));
        f.push_back(
            make_double("momentum_a", [](RunConfig& c) -> double& { return c.momentum_a; }));
        f.push_back(make_int("stop_after_epochs",
                             [](RunConfig& c) -> int& { return c.stop_after_epochs; },
                             /*hashed=*/false));
        f.push_back(make_str("finetune.init",
                             [](RunConfig& c) -> std::string& { return c.finetune_init; }));
        f.push_back(make_str("sweep.depths",
                             [](RunConfig& c) -> std::string& { return c.sweep_depths; },
                             /*hashed=*/false));
        f.push_back(make_str("sweep.dims",
                             [](RunConfig& c) -> std::string& { return c.sweep_dims; },
                             /*hashed=*/false));
        f.push_back(make_int("recon.count", [](RunConfig& c) -> int& { return c.recon_count; },
                             /*hashed=*/false));
        f.push_back(make_str("recon.format",
                             [](RunConfig& c) -> std::string& { return c.recon_format; },
                             /*hashed=*/false));
        return f;
    }();
    return table;
}

const Field* find_field(const std::string& key) {
    for (const auto& f : fields()) {
        if (f.key == key) return &f;
    }
    return nullptr;
}

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

void apply_line(RunConfig& cfg, const std::string& raw, const std::string& where) {
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') return;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
        throw_config(where + ": expected key=value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* f = find_field(key);
    if (!f) throw_config(where + ": unknown config key '" + key + "'");
    f->set(cfg, value);
}

}  // namespace

void RunConfig::validate() const {
    if (data_source != "synthetic" && data_source != "cifar") {
        throw_config("data.source must be 'synthetic' or 'cifar', got '" + data_source + "'");
    }
    if (data_source == "cifar" && data_path.empty()) {
        throw_config("data.path is required when data.source=cifar");
    }
    if (data_classes < 2) throw_config("data.classes must be >= 2");
    if (data_per_class < 1) throw_config("data.per_class must be >= 1");
    if (data_resolution < 2) throw_config("data.resolution must be >= 2");
    if (data_resolution % encoder.patch_size != 0) {
        throw_config("data.resolution " + std::to_string(data_resolution) +
                     " is not a multiple of encoder.patch_size " +
                     std::to_string(encoder.patch_size));
    }
    if (!(augment_scale >= 0.0 && augment_scale <= 1.0)) {
        throw_config("augment.scale must lie in [0,1], got " + std::to_string(augment_scale));
    }
    model_config().validate();  // covers encoder/decoder internals and grid
    if (!(base_lr > 0.0)) throw_config("base_lr must be positive");
    if (warmup_epochs < 0 || total_epochs < 0) throw_config("epoch counts must be >= 0");
    if (total_epochs > 0 && warmup_epochs >= total_epochs) {
        throw_config("warmup_epochs must be smaller than total_epochs");
    }
    if (total_epochs == 0 && warmup_epochs != 0) {
        throw_config("warmup_epochs must be 0 when total_epochs is 0");
    }
    if (batch_size < 1) throw_config("batch_size must be >= 1");
    if (!(weight_decay >= 0.0)) throw_config("weight_decay must be >= 0");
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) {
        throw_config("mask_ratio must lie strictly between 0 and 1, got " +
                     std::to_string(mask_ratio));
    }
    if (!(lambda_l >= 0.0 && lambda_c >= 0.0)) throw_config("loss weights must be >= 0");
    if (!(tau > 0.0)) throw_config("tau must be positive");
    if (!(momentum_a >= 0.0 && momentum_a <= 1.0)) throw_config("momentum_a must lie in [0,1]");
    if (stop_after_epochs < 0) throw_config("stop_after_epochs must be >= 0");
    parse_int_list(sweep_depths, "sweep.depths");
    parse_int_list(sweep_dims, "sweep.dims");
    if (recon_count < 1) throw_config("recon.count must be >= 1");
    if (recon_format != "ppm" && recon_format != "png") {
        throw_config("recon.format must be 'ppm' or 'png', got '" + recon_format + "'");
    }
}

model::ModelConfig RunConfig::model_config() const {
    model::ModelConfig mc;
    mc.encoder = encoder;
    mc.decoder = decoder;
    const int grid = data_resolution / encoder.patch_size;
    mc.patch_dim = encoder.patch_size * encoder.patch_size * 3;
    mc.grid_h = grid;
    mc.grid_w = grid;
    mc.n_tokens = grid * grid;
    mc.momentum_a = momentum_a;
    mc.strong_query_via_momentum = strong_query_via_momentum;
    return mc;
}

std::string RunConfig::echo() const {
    std::ostringstream out;
    out << "# resolved run configuration\n";
    for (const auto& f : fields()) out << f.key << "=" << f.get(*this) << "\n";
    return out.str();
}

std::uint64_t RunConfig::hash() const {
    std::string sig;
    for (const auto& f : fields()) {
        if (!f.hashed) continue;
        sig += f.key;
        sig += '=';
        sig += f.get(*this);
        sig += '\n';
    }
    return fnv1a64(sig);
}

RunConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        apply_line(cfg, line, "config line " + std::to_string(lineno));
    }
    for (const auto& o : overrides) apply_line(cfg, o, "override '" + o + "'");
    cfg.validate();
    return cfg;
}

RunConfig parse_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::string text;
    if (!path.empty()) {
        std::ifstream f(path);
        if (!f) throw_io("cannot open config file: " + path);
        std::ostringstream buf;
        buf << f.rdbuf();
        text = buf.str();
    }
    return parse_config_text(text, overrides);
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
    std::vector<int> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        errno = 0;
        char* end = nullptr;
        const long v = std::strtol(item.c_str(), &end, 10);
        if (errno != 0 || end != item.c_str() + item.size()) {
            throw_config(what + ": '" + item + "' is not an integer");
        }
        out.push_back(static_cast<int>(v));
    }
    if (out.empty()) throw_config(what + ": empty list");
    return out;
}

}  // namespace sdmae::config
