#pragma once

#include <filesystem>
#include <optional>

#include "fr/dataset.hpp"
#include "fr/losses.hpp"
#include "fr/network.hpp"

namespace fr {

// lr_end + 0.5*(lr_start - lr_end)*(1 + cos(pi*step/total)).
double lr_schedule(long step, long total_steps, double lr_start, double lr_end);

struct TrainState {
    RunConfig cfg;
    ParamStore params;
    std::map<std::string, Tensor> m1, m2;  // Adam moments
    long step = 0;
    long total_steps = 0;
    int epoch = 0;
    double best_loss = std::numeric_limits<double>::infinity();
    Rng rng;

    static TrainState init(const RunConfig& cfg);
};

// Stack 1xCxHxW planes into one batch tensor.
Tensor stack_batch(const std::vector<Tensor>& planes);

struct StepResult {
    double total;
    double edge, global, freq, detail;
    double lr;
};

// forward -> total_loss -> backward -> clip(global norm 1) -> Adam
// (beta1=0.9, beta2=0.999). Returns the pre-update loss.
StepResult train_step(TrainState& state, const std::vector<TrainingSample>& batch);

void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path, const RunConfig& expected_cfg);
// Reads only the stored config (for tools that accept any checkpoint).
RunConfig peek_checkpoint_config(const std::filesystem::path& path);

struct TrainOptions {
    std::filesystem::path out_dir;
    std::optional<std::filesystem::path> resume;
    bool loss_report = false;  // per-component CSV columns
};

// Full loop over the dataset: epoch = one pass over the record list.
// Writes out/log.csv and checkpoints under out/ckpt/.
void run_training(const RunConfig& cfg, const std::vector<PairRecord>& records,
                  const TrainOptions& opt);

}  // namespace fr
