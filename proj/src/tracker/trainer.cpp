#include "orthotrack/tracker/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>

#include "orthotrack/core/binary_io.hpp"
#include "orthotrack/core/ops.hpp"
#include "orthotrack/core/random.hpp"

namespace orthotrack {

namespace {

constexpr std::uint64_t kMaskSalt = 0x6d61736b6d61736bull;
constexpr std::uint64_t kProbeSalt = 0x70726f6265ull;

std::vector<std::vector<AttentionRecord>> detached(const std::vector<std::vector<AttentionRecord>>& attention) {
    auto out = attention;
    for (auto& layer : out) {
        for (auto& rec : layer) {
            rec.matrix = rec.matrix.detach();
        }
    }
    return out;
}

} // namespace

std::optional<Tensor> layer_rank_loss(const std::vector<AttentionRecord>& heads, const ModelConfig& model,
                                      const TrackingSample& sample, std::optional<double> tau) {
    const StreamKind kind = model.stream;
    const double patch = static_cast<double>(model.patch);
    Tensor total;
    std::size_t counted = 0;
    for (const auto& rec : heads) {
        std::vector<RegBlock> blocks;
        for (const auto& b : select_blocks(rec, kind)) {
            const std::string label =
                "layer " + std::to_string(rec.layer) + " head " + std::to_string(rec.head) + " block " + b.label();
            if (kind == StreamKind::TwoStream) {
                auto inside = mask_non_target(b.matrix, model.search_grid(), to_grid_box(sample.search_box, patch),
                                              model.template_grid(), to_grid_box(sample.template_box, patch));
                if (inside) {
                    blocks.push_back({label, *inside});
                }
            } else {
                blocks.push_back({label, b.matrix});
            }
        }
        if (blocks.empty()) {
            continue;
        }
        Tensor head_loss = high_rank_loss(blocks, tau);
        total = total.defined() ? add(total, head_loss) : head_loss;
        ++counted;
    }
    if (counted == 0) {
        return std::nullopt;
    }
    return scale(total, 1.0 / static_cast<double>(counted));
}

SampleLoss sample_loss(const TrackerModel& model, const TrackingSample& sample, const AugmentationConfig& aug,
                       const MaskSet* masks, std::size_t reg_layer) {
    const ModelConfig& cfg = model.config();
    SampleLoss out;
    out.forward = forward(model, sample.templ, sample.search, ForwardOptions{masks});
    out.task_terms = task_loss(out.forward.cls_logits, out.forward.box_params, sample.search_box, cfg.search_grid(),
                               static_cast<double>(cfg.search_size));
    out.task = out.task_terms.total;
    out.total = out.task;
    if (reg_layer >= out.forward.attention.size()) {
        throw InputError("sample_loss: layer " + std::to_string(reg_layer) + " is not regularizable");
    }
    if (aug.alpha == 0.0) {
        NoGradGuard guard;
        auto plain = detached(out.forward.attention);
        if (auto reg = layer_rank_loss(plain[reg_layer], cfg, sample, aug.tau)) {
            out.reg = reg->item();
        }
        return out;
    }
    if (auto reg = layer_rank_loss(out.forward.attention[reg_layer], cfg, sample, aug.tau)) {
        out.reg = reg->item();
        out.total = add(out.task, scale(*reg, aug.alpha));
    }
    return out;
}

std::uint64_t mask_seed(std::uint64_t seed, std::uint64_t sample_index) {
    return mix_seed(seed ^ kMaskSalt, sample_index);
}

StepResult train_step(TrackerModel& model, AdamW& optimizer, std::span<const TrackingSample> batch,
                      const AugmentationConfig& aug, std::uint64_t step, std::uint64_t seed) {
    aug.validate();
    if (batch.empty()) {
        throw InputError("train_step: empty batch");
    }
    const ModelConfig& cfg = model.config();
    StepResult r;
    r.step = step;
    r.layer = pick_layer(static_cast<int>(cfg.regularized_layers()), step, seed);
    const double inv_batch = 1.0 / static_cast<double>(batch.size());

    model.zero_grad();
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const MaskSet masks = sample_masks(cfg.template_grid(), cfg.search_grid(), aug,
                                           mask_seed(seed, step * batch.size() + b));
        SampleLoss sl = sample_loss(model, batch[b], aug, &masks, static_cast<std::size_t>(r.layer));
        const double total = sl.total.item();
        if (!std::isfinite(total) || !std::isfinite(sl.reg)) {
            throw NonFiniteLossError("train_step: non-finite loss at step " + std::to_string(step) + " sample " +
                                         std::to_string(b) + " (task " + std::to_string(sl.task.item()) +
                                         ", rank " + std::to_string(sl.reg) + ")",
                                     detached(sl.forward.attention));
        }
        r.loss_all += total * inv_batch;
        r.loss_task += sl.task.item() * inv_batch;
        r.loss_reg += sl.reg * inv_batch;
        scale(sl.total, inv_batch).backward();
    }
    optimizer.step();
    return r;
}

void dump_attention(const std::filesystem::path& dir, const std::vector<std::vector<AttentionRecord>>& attention) {
    std::filesystem::create_directories(dir);
    for (const auto& layer : attention) {
        for (const auto& rec : layer) {
            write_attention_file(
                (dir / ("layer" + std::to_string(rec.layer) + "_head" + std::to_string(rec.head) + ".bin")).string(),
                rec);
        }
    }
}

TrainResult train(TrackerModel& model, const RunConfig& config,
                  const std::optional<std::filesystem::path>& run_dir) {
    config.validate();
    const SyntheticDataset dataset(config.data, model.config());
    AdamW optimizer(model.parameters(), config.optim);
    const std::size_t batch_size = config.train.batch;
    const std::uint64_t seed = config.train.seed;

    std::ofstream log;
    if (run_dir) {
        std::filesystem::create_directories(*run_dir);
        write_config_file((*run_dir / "config.txt").string(), config);
        log.open(*run_dir / "log.csv");
        if (!log) {
            throw InputError("cannot open " + (*run_dir / "log.csv").string() + " for writing");
        }
        log << "step,L_all,L_task,L_reg,layer_picked\n" << std::setprecision(17);
    }
    auto probe_dump = [&](const std::string& name) {
        NoGradGuard guard;
        const TrackingSample probe = dataset.sample(0, mix_seed(seed, kProbeSalt));
        dump_attention(*run_dir / "attn" / name, forward(model, probe.templ, probe.search).attention);
    };

    TrainResult result;
    std::vector<TrackingSample> batch(batch_size);
    for (std::size_t step = 0; step < config.train.steps; ++step) {
        for (std::size_t b = 0; b < batch_size; ++b) {
            batch[b] = dataset.sample(step * batch_size + b, seed);
        }
        StepResult r;
        try {
            r = train_step(model, optimizer, batch, config.aug, step, seed);
        } catch (const NonFiniteLossError& e) {
            if (run_dir) {
                dump_attention(*run_dir / "attn" / ("failure_" + std::to_string(step)), e.attention);
                log.flush();
            }
            throw;
        }
        result.log.push_back(r);
        if (run_dir) {
            log << r.step << ',' << r.loss_all << ',' << r.loss_task << ',' << r.loss_reg << ',' << r.layer << '\n';
            if (config.train.dump_every > 0 && (step + 1) % config.train.dump_every == 0) {
                probe_dump(std::to_string(step + 1));
            }
        }
    }
    if (run_dir) {
        log.flush();
        if (!log) {
            throw InputError("failed writing " + (*run_dir / "log.csv").string());
        }
        save_checkpoint((*run_dir / "checkpoint.bin").string(), model);
    }
    return result;
}

void save_checkpoint(const std::string& path, const TrackerModel& model) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw InputError("cannot open " + path + " for writing");
    }
    binary::write_magic(os, "OTCK");
    binary::write_u32(os, 1);
    binary::write_u32(os, static_cast<std::uint32_t>(model.parameters().size()));
    for (const auto& p : model.parameters()) {
        binary::write_u32(os, static_cast<std::uint32_t>(p.name.size()));
        os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        binary::write_u32(os, static_cast<std::uint32_t>(p.value.rank()));
        for (std::size_t d : p.value.shape()) {
            binary::write_u64(os, d);
        }
        for (double v : p.value.values()) {
            binary::write_f64(os, v);
        }
    }
    if (!os) {
        throw InputError("failed writing " + path);
    }
}

void load_checkpoint(const std::string& path, TrackerModel& model) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw InputError("cannot open " + path);
    }
    binary::expect_magic(is, "OTCK");
    if (binary::read_u32(is) != 1) {
        throw InputError(path + ": unsupported checkpoint version");
    }
    const std::size_t count = binary::read_u32(is);
    if (count != model.parameters().size()) {
        throw InputError(path + ": checkpoint has " + std::to_string(count) + " tensors, model has " +
                         std::to_string(model.parameters().size()));
    }
    for (const auto& p : model.parameters()) {
        std::string name(binary::read_u32(is), '\0');
        is.read(name.data(), static_cast<std::streamsize>(name.size()));
        Shape shape(binary::read_u32(is));
        for (auto& d : shape) {
            d = binary::read_u64(is);
        }
        if (name != p.name || shape != p.value.shape()) {
            throw InputError(path + ": expected " + p.name + " " + shape_str(p.value.shape()) + ", found " + name +
                             " " + shape_str(shape));
        }
        Tensor t = p.value;
        for (double& v : t.mutable_values()) {
            v = binary::read_f64(is);
        }
    }
}

} // namespace orthotrack
