// Command-line front end: simulate, train, eval, diagnose, ablate.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "orthotrack/attention/attention_reg.hpp"
#include "orthotrack/events/io.hpp"
#include "orthotrack/events/simulator.hpp"
#include "orthotrack/tracker/ablation.hpp"
#include "orthotrack/tracker/data.hpp"
#include "orthotrack/tracker/trainer.hpp"
#include "orthotrack/tracker/tracking.hpp"

namespace fs = std::filesystem;
using namespace orthotrack;

namespace {

struct ConfigArgs {
    std::string preset = "desk";
    std::string stream;
    std::string file;
    std::vector<std::string> overrides;
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
    cmd->add_option("--preset", args.preset, "Base configuration")
        ->check(CLI::IsMember({"desk", "micro"}))
        ->capture_default_str();
    cmd->add_option("--stream", args.stream, "Tracker family; also selects its augmentation defaults")
        ->check(CLI::IsMember({"one", "two"}));
    cmd->add_option("--config", args.file, "Config file applied over the preset")->check(CLI::ExistingFile);
    cmd->add_option("--set", args.overrides, "Override as section.key=value (repeatable)");
}

RunConfig resolve(const ConfigArgs& args) {
    RunConfig cfg = args.preset == "micro" ? RunConfig::micro() : RunConfig::desk();
    if (args.stream == "two") {
        cfg.model.stream = StreamKind::TwoStream;
        cfg.aug = AugmentationConfig::two_stream_defaults();
    }
    if (!args.file.empty()) {
        cfg = read_config_file(args.file, cfg);
    }
    for (const auto& kv : args.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw InputError("--set expects section.key=value, got " + kv);
        }
        set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

void print_eval(const metrics::EvalResult& r, double stable_rank) {
    std::printf("SR %.2f  PR %.2f  NPR %.2f  OP50 %.2f  OP75 %.2f  mean stable rank %.4f\n", r.sr, r.pr, r.npr,
                r.op50, r.op75, stable_rank);
}

int run_simulate(const ConfigArgs& args, std::uint64_t seed, const fs::path& out) {
    const RunConfig cfg = resolve(args);
    const auto scene = random_scene(cfg.data, cfg.data.frames, seed);
    const auto seq = events::simulate_sequence(scene, seed);
    fs::create_directories(out / "frames");
    fs::create_directories(out / "voxels");
    events::write_events_csv(out / "events.csv", seq.events);
    events::write_boxes_csv(out / "boxes.csv", seq.boxes);
    for (std::size_t f = 0; f < seq.frames.size(); ++f) {
        char name[32];
        std::snprintf(name, sizeof name, "%04zu", f);
        events::write_ppm(out / "frames" / (std::string(name) + ".ppm"), seq.frames[f].image);
        events::write_frame_raw(out / "frames" / (std::string(name) + ".raw"), seq.frames[f]);
        events::write_voxel_raw(out / "voxels" / (std::string(name) + ".raw"),
                                frame_voxels(seq, f, cfg.model.event_bins));
    }
    std::printf("%zu frames, %zu events written to %s\n", seq.frames.size(), seq.events.size(), out.c_str());
    return 0;
}

int run_train(const ConfigArgs& args, const fs::path& run_dir) {
    const RunConfig cfg = resolve(args);
    TrackerModel model(cfg.model);
    const auto start = std::chrono::steady_clock::now();
    const TrainResult r = train(model, cfg, run_dir);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!r.log.empty()) {
        const auto& first = r.log.front();
        const auto& last = r.log.back();
        std::printf("%zu steps in %.1f s; L_task %.4f -> %.4f, L_reg %.4f -> %.4f\n", r.log.size(), secs,
                    first.loss_task, last.loss_task, first.loss_reg, last.loss_reg);
    }
    std::printf("run written to %s\n", run_dir.c_str());
    return 0;
}

int run_eval(const fs::path& run_dir, const std::string& out) {
    const RunConfig cfg = read_config_file((run_dir / "config.txt").string());
    TrackerModel model(cfg.model);
    load_checkpoint((run_dir / "checkpoint.bin").string(), model);
    const auto result = evaluate_model(model, cfg);
    const double sr = mean_stable_rank(model, cfg);
    nlohmann::json j = metrics::to_json(result);
    j["mean_stable_rank"] = sr;
    const fs::path path = out.empty() ? run_dir / "metrics.json" : fs::path(out);
    std::ofstream os(path);
    if (!os) {
        throw InputError("cannot write " + path.string());
    }
    os << j.dump(2) << '\n';
    print_eval(result, sr);
    return 0;
}

int run_diagnose(const fs::path& input, const fs::path& out, const std::string& stream) {
    std::vector<fs::path> files;
    if (fs::is_directory(input)) {
        for (const auto& e : fs::directory_iterator(input)) {
            if (e.path().extension() == ".bin") {
                files.push_back(e.path());
            }
        }
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(input);
    }
    if (files.empty()) {
        throw InputError("no attention dumps found in " + input.string());
    }
    const StreamKind kind = stream == "two" ? StreamKind::TwoStream : StreamKind::OneStream;
    fs::create_directories(out / "gram");
    std::vector<BlockDiagnostics> all;
    for (const auto& f : files) {
        for (auto& d : diagnose(read_attention_file(f.string()), kind)) {
            std::string label = d.label;
            std::replace(label.begin(), label.end(), '>', '_');
            write_gram_file((out / "gram" /
                             ("layer" + std::to_string(d.layer) + "_head" + std::to_string(d.head) + "_" + label +
                              ".bin"))
                                .string(),
                            d.gram);
            std::printf("layer %d head %d %-8s stable rank %.4f\n", d.layer, d.head, d.label.c_str(),
                        d.stable_rank);
            all.push_back(std::move(d));
        }
    }
    std::ofstream csv(out / "sigma.csv");
    write_sigma_csv(csv, all);
    return 0;
}

int run_ablate(const ConfigArgs& args, const std::string& grid, const fs::path& out) {
    const RunConfig cfg = resolve(args);
    std::vector<AblationCell> cells;
    if (grid == "components" || grid == "all") {
        cells = component_cells(cfg.aug);
    }
    if (grid == "granularity" || grid == "all") {
        auto g = granularity_cells(cfg.aug);
        cells.insert(cells.end(), g.begin(), g.end());
    }
    for (const auto& r : run_ablation(cfg, cells, out)) {
        std::printf("%-18s ", r.name.c_str());
        print_eval(r.eval, r.mean_stable_rank);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Event/RGB tracker with cross-modal masking and attention rank regularization"};
    app.require_subcommand(1);

    ConfigArgs sim_args;
    std::uint64_t sim_seed = 1;
    std::string sim_out = "sequence";
    auto* sim = app.add_subcommand("simulate", "Render one synthetic sequence with events");
    add_config_options(sim, sim_args);
    sim->add_option("--seed", sim_seed, "Scene seed")->capture_default_str();
    sim->add_option("--out", sim_out, "Output directory")->capture_default_str();

    ConfigArgs train_args;
    std::string run_dir = "run";
    auto* tr = app.add_subcommand("train", "Train a tracker and write a run directory");
    add_config_options(tr, train_args);
    tr->add_option("--run-dir", run_dir, "Run directory")->capture_default_str();

    std::string eval_dir = "run";
    std::string eval_out;
    auto* ev = app.add_subcommand("eval", "Evaluate a trained run on synthetic sequences");
    ev->add_option("--run-dir", eval_dir, "Run directory with config.txt and checkpoint.bin")->capture_default_str();
    ev->add_option("--out", eval_out, "metrics.json path (default <run-dir>/metrics.json)");

    std::string diag_in;
    std::string diag_out = "diagnostics";
    std::string diag_stream = "one";
    auto* dg = app.add_subcommand("diagnose", "Singular spectra and Gram matrices of attention dumps");
    dg->add_option("--input", diag_in, "Attention dump file or directory")->required();
    dg->add_option("--out", diag_out, "Output directory")->capture_default_str();
    dg->add_option("--stream", diag_stream, "Block selection of the dumped model")
        ->check(CLI::IsMember({"one", "two"}))
        ->capture_default_str();

    ConfigArgs abl_args;
    std::string abl_grid = "all";
    std::string abl_out = "ablation";
    auto* ab = app.add_subcommand("ablate", "Train and evaluate every cell of an ablation grid");
    add_config_options(ab, abl_args);
    ab->add_option("--grid", abl_grid, "Which grid")
        ->check(CLI::IsMember({"components", "granularity", "all"}))
        ->capture_default_str();
    ab->add_option("--out", abl_out, "Output directory")->capture_default_str();

    CLI11_PARSE(app, argc, argv);
    try {
        if (sim->parsed()) {
            return run_simulate(sim_args, sim_seed, sim_out);
        }
        if (tr->parsed()) {
            return run_train(train_args, run_dir);
        }
        if (ev->parsed()) {
            return run_eval(eval_dir, eval_out);
        }
        if (dg->parsed()) {
            return run_diagnose(diag_in, diag_out, diag_stream);
        }
        if (ab->parsed()) {
            return run_ablate(abl_args, abl_grid, abl_out);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
