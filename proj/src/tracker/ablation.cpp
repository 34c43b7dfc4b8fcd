#include "orthotrack/tracker/ablation.hpp"

#include <fstream>
#include <iomanip>

#include <nlohmann/json.hpp>

#include "orthotrack/core/errors.hpp"
#include "orthotrack/tracker/trainer.hpp"
#include "orthotrack/tracker/tracking.hpp"

namespace orthotrack {

std::vector<AblationCell> component_cells(const AugmentationConfig& full) {
    AugmentationConfig none = full;
    none.delta_i = 0.0;
    none.delta_e = 0.0;
    none.alpha = 0.0;
    AugmentationConfig mask_only = full;
    mask_only.alpha = 0.0;
    AugmentationConfig rank_only = full;
    rank_only.delta_i = 0.0;
    rank_only.delta_e = 0.0;
    return {{"baseline", none}, {"mask_only", mask_only}, {"highrank_only", rank_only}, {"both", full}};
}

std::vector<AblationCell> granularity_cells(const AugmentationConfig& full) {
    std::vector<AblationCell> out;
    for (int denom : {2, 4, 8, 16}) {
        AugmentationConfig c = full;
        c.granularity = 1.0 / denom;
        out.push_back({"granularity_1_" + std::to_string(denom), c});
    }
    return out;
}

std::vector<AblationResult> run_ablation(const RunConfig& base, const std::vector<AblationCell>& cells,
                                         const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    std::vector<AblationResult> results;
    for (const auto& cell : cells) {
        RunConfig cfg = base;
        cfg.aug = cell.aug;
        cfg.validate();
        const auto dir = out_dir / cell.name;
        TrackerModel model(cfg.model);
        const TrainResult tr = train(model, cfg, dir);

        AblationResult r;
        r.name = cell.name;
        r.eval = evaluate_model(model, cfg);
        r.mean_stable_rank = mean_stable_rank(model, cfg);
        r.final_task_loss = tr.log.empty() ? 0.0 : tr.log.back().loss_task;

        nlohmann::json j = metrics::to_json(r.eval);
        j["cell"] = cell.name;
        j["mean_stable_rank"] = r.mean_stable_rank;
        j["final_task_loss"] = r.final_task_loss;
        std::ofstream os(dir / "metrics.json");
        if (!os) {
            throw InputError("cannot write " + (dir / "metrics.json").string());
        }
        os << j.dump(2) << '\n';
        results.push_back(std::move(r));
    }

    std::ofstream summary(out_dir / "summary.csv");
    if (!summary) {
        throw InputError("cannot write " + (out_dir / "summary.csv").string());
    }
    summary << "cell,sr,pr,npr,op50,op75,mean_stable_rank,final_task_loss\n" << std::setprecision(10);
    for (const auto& r : results) {
        summary << r.name << ',' << r.eval.sr << ',' << r.eval.pr << ',' << r.eval.npr << ',' << r.eval.op50 << ','
                << r.eval.op75 << ',' << r.mean_stable_rank << ',' << r.final_task_loss << '\n';
    }
    return results;
}

} // namespace orthotrack
