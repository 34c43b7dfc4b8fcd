#include "orthotrack/tracker/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <vector>

#include "orthotrack/core/errors.hpp"

namespace orthotrack {

void ModelConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) {
            throw InputError(std::string("model.") + name + " must be positive");
        }
    };
    positive(layers, "layers");
    positive(heads, "heads");
    positive(dim, "dim");
    positive(mlp_ratio, "mlp_ratio");
    positive(patch, "patch");
    positive(event_bins, "event_bins");
    if (stream == StreamKind::TwoStream) {
        positive(relation_layers, "relation_layers");
    }
    if (dim % heads != 0) {
        throw InputError("model.dim " + std::to_string(dim) + " not divisible by model.heads " +
                         std::to_string(heads));
    }
    if (template_size == 0 || template_size % patch != 0 || search_size == 0 || search_size % patch != 0) {
        throw InputError("model.template_size and model.search_size must be positive multiples of model.patch");
    }
    if (!(template_scale > 0.0) || !(search_scale > 0.0) || !(init_std >= 0.0)) {
        throw InputError("model crop scales must be positive and init_std non-negative");
    }
}

void OptimConfig::validate() const {
    if (!(lr_head >= 0.0) || !(lr_backbone >= 0.0) || !(weight_decay >= 0.0) || !(eps > 0.0)) {
        throw InputError("optim: learning rates and weight decay must be non-negative, eps positive");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw InputError("optim: betas must lie in [0, 1)");
    }
}

void DataConfig::validate() const {
    if (sequences == 0 || frames == 0 || image_size == 0) {
        throw InputError("data: sequences, frames and image_size must be positive");
    }
    if (!(target_min > 0.0) || target_max < target_min) {
        throw InputError("data: need 0 < target_min <= target_max");
    }
    if (2.0 * target_max >= static_cast<double>(image_size)) {
        throw InputError("data: target_max must be below half the image size");
    }
    if (!(max_speed >= 0.0) || !(jitter_loc >= 0.0) || !(jitter_scale >= 0.0) || !(noise_rate >= 0.0)) {
        throw InputError("data: speed, jitter and noise must be non-negative");
    }
}

void RunConfig::validate() const {
    model.validate();
    aug.validate();
    optim.validate();
    data.validate();
    if (train.batch == 0) {
        throw InputError("train.batch must be positive");
    }
    if (eval.sequences == 0 || eval.frames == 0) {
        throw InputError("eval.sequences and eval.frames must be positive");
    }
    // Mask grids must accept the granularity for both regions.
    mask_cells_per_side(model.template_grid(), aug.granularity);
    mask_cells_per_side(model.search_grid(), aug.granularity);
}

RunConfig RunConfig::desk() {
    return {};
}

RunConfig RunConfig::micro() {
    RunConfig c;
    c.model.layers = 2;
    c.model.relation_layers = 1;
    c.model.heads = 2;
    c.model.dim = 32;
    c.model.mlp_ratio = 2;
    c.model.patch = 8;
    c.model.template_size = 32;
    c.model.search_size = 64;
    c.model.event_bins = 2;
    c.model.init_std = 0.05;
    c.optim.lr_head = 1e-3;
    c.optim.lr_backbone = 5e-4;
    c.data.sequences = 32;
    c.data.frames = 12;
    c.data.image_size = 96;
    c.data.target_min = 12.0;
    c.data.target_max = 24.0;
    c.data.max_speed = 2.0;
    c.data.max_gap = 4;
    c.train.steps = 200;
    c.train.batch = 4;
    c.train.dump_every = 0;
    c.eval.sequences = 24;
    c.eval.frames = 20;
    return c;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
        return s.substr(1, s.size() - 2);
    }
    return s;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw InputError("config: bad value '" + text + "' for " + key);
    }
    return value;
}

std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true") {
        return true;
    }
    if (text == "false") {
        return false;
    }
    throw InputError("config: bad boolean '" + text + "' for " + key);
}

struct Field {
    std::function<std::string()> get;
    std::function<void(const std::string&)> set;
};

/// Ordered registry of every serialized field bound to `c`.
std::vector<std::pair<std::string, Field>> fields(RunConfig& c) {
    std::vector<std::pair<std::string, Field>> out;
    auto size_field = [&out](const std::string& key, std::size_t& ref) {
        out.push_back({key, {[&ref] { return std::to_string(ref); },
                             [&ref, key](const std::string& v) { ref = parse_number<std::size_t>(key, v); }}});
    };
    auto u64_field = [&out](const std::string& key, std::uint64_t& ref) {
        out.push_back({key, {[&ref] { return std::to_string(ref); },
                             [&ref, key](const std::string& v) { ref = parse_number<std::uint64_t>(key, v); }}});
    };
    auto double_field = [&out](const std::string& key, double& ref) {
        out.push_back({key, {[&ref] { return format_double(ref); },
                             [&ref, key](const std::string& v) { ref = parse_number<double>(key, v); }}});
    };

    out.push_back({"model.stream",
                   {[&c] { return std::string(c.model.stream == StreamKind::OneStream ? "\"one\"" : "\"two\""); },
                    [&c](const std::string& v) {
                        if (v == "one") {
                            c.model.stream = StreamKind::OneStream;
                        } else if (v == "two") {
                            c.model.stream = StreamKind::TwoStream;
                        } else {
                            throw InputError("config: model.stream must be \"one\" or \"two\", got " + v);
                        }
                    }}});
    size_field("model.layers", c.model.layers);
    size_field("model.relation_layers", c.model.relation_layers);
    size_field("model.heads", c.model.heads);
    size_field("model.dim", c.model.dim);
    size_field("model.mlp_ratio", c.model.mlp_ratio);
    size_field("model.patch", c.model.patch);
    size_field("model.template_size", c.model.template_size);
    size_field("model.search_size", c.model.search_size);
    size_field("model.event_bins", c.model.event_bins);
    double_field("model.template_scale", c.model.template_scale);
    double_field("model.search_scale", c.model.search_scale);
    double_field("model.init_std", c.model.init_std);
    u64_field("model.init_seed", c.model.init_seed);

    double_field("mask.delta_i", c.aug.delta_i);
    double_field("mask.delta_e", c.aug.delta_e);
    double_field("mask.granularity", c.aug.granularity);
    out.push_back({"mask.template",
                   {[&c] { return std::string(c.aug.mask_template ? "true" : "false"); },
                    [&c](const std::string& v) { c.aug.mask_template = parse_bool("mask.template", v); }}});
    double_field("reg.alpha", c.aug.alpha);
    out.push_back({"reg.tau", {[&c] { return c.aug.tau ? format_double(*c.aug.tau) : std::string("\"auto\""); },
                               [&c](const std::string& v) {
                                   if (v == "auto") {
                                       c.aug.tau.reset();
                                   } else {
                                       c.aug.tau = parse_number<double>("reg.tau", v);
                                   }
                               }}});

    double_field("optim.lr_head", c.optim.lr_head);
    double_field("optim.lr_backbone", c.optim.lr_backbone);
    double_field("optim.weight_decay", c.optim.weight_decay);
    double_field("optim.beta1", c.optim.beta1);
    double_field("optim.beta2", c.optim.beta2);
    double_field("optim.eps", c.optim.eps);

    size_field("data.sequences", c.data.sequences);
    size_field("data.frames", c.data.frames);
    size_field("data.image_size", c.data.image_size);
    double_field("data.target_min", c.data.target_min);
    double_field("data.target_max", c.data.target_max);
    double_field("data.max_speed", c.data.max_speed);
    size_field("data.max_gap", c.data.max_gap);
    double_field("data.jitter_loc", c.data.jitter_loc);
    double_field("data.jitter_scale", c.data.jitter_scale);
    double_field("data.noise_rate", c.data.noise_rate);
    u64_field("data.seed", c.data.seed);

    size_field("train.steps", c.train.steps);
    size_field("train.batch", c.train.batch);
    u64_field("train.seed", c.train.seed);
    size_field("train.dump_every", c.train.dump_every);

    size_field("eval.sequences", c.eval.sequences);
    size_field("eval.frames", c.eval.frames);
    u64_field("eval.seed", c.eval.seed);
    return out;
}

} // namespace

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
    for (auto& [name, field] : fields(config)) {
        if (name == key) {
            field.set(unquote(trim(value)));
            return;
        }
    }
    throw InputError("config: unknown key " + key);
}

void write_config(std::ostream& os, const RunConfig& config) {
    RunConfig copy = config;
    std::string section;
    for (auto& [name, field] : fields(copy)) {
        const auto dot = name.find('.');
        const std::string sec = name.substr(0, dot);
        if (sec != section) {
            if (!section.empty()) {
                os << '\n';
            }
            os << '[' << sec << "]\n";
            section = sec;
        }
        os << name.substr(dot + 1) << " = " << field.get() << '\n';
    }
}

RunConfig read_config(std::istream& is, RunConfig base) {
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw InputError("config line " + std::to_string(lineno) + ": malformed section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw InputError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        if (!section.empty()) {
            key = section + "." + key;
        }
        set_config_value(base, key, line.substr(eq + 1));
    }
    base.validate();
    return base;
}

void write_config_file(const std::string& path, const RunConfig& config) {
    std::ofstream os(path);
    if (!os) {
        throw InputError("cannot open " + path + " for writing");
    }
    write_config(os, config);
}

RunConfig read_config_file(const std::string& path, RunConfig base) {
    std::ifstream is(path);
    if (!is) {
        throw InputError("cannot open " + path);
    }
    return read_config(is, std::move(base));
}

} // namespace orthotrack
