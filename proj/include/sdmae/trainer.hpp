#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sdmae/checkpoint.hpp"
#include "sdmae/config.hpp"
#include "sdmae/dataio.hpp"
#include "sdmae/losses.hpp"
#include "sdmae/masking.hpp"
#include "sdmae/model.hpp"

namespace sdmae::trainer {

// Linear ramp 0 -> peak across warmup_steps, then half-cosine peak -> 0
// across the remaining steps. Steps at or past total_steps yield 0.
double lr_at(std::int64_t step, std::int64_t warmup_steps, std::int64_t total_steps,
             double peak_lr);

// Effective peak rate: base_lr scaled by batch_size/256.
double peak_lr(const config::RunConfig& cfg);

// Decoupled-weight-decay adaptive-moment optimizer. Biases, norms and the
// learnable tokens opt out of decay via their Param flag; non-trainable
// parameters (the momentum tower) are skipped entirely.
class AdamW {
public:
    AdamW(double beta1 = 0.9, double beta2 = 0.95, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void attach(ParamStore& store);  // zero the moments, record the layout
    void step(ParamStore& store, double lr, double weight_decay);
    std::int64_t steps_taken() const { return t_; }

    // Checkpoint plumbing: moments plus the step counter, name-keyed. The
    // moments themselves live on the Params; AdamW owns only the schedule
    // position and the expected layout.
    void dump(const ParamStore& store, std::vector<std::pair<std::string, Mat>>& out) const;
    void restore(ParamStore& store, const std::vector<std::pair<std::string, Mat>>& in);

private:
    double beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<std::string> names_;  // trainable params, store order
};

struct EvalReport {
    double top1 = 0.0;
    std::vector<double> loss_curve;  // per-epoch mean training loss
    double location_accuracy = 0.0;  // populated by pretrain-side evaluation
};

// Dataset resolution shared by the commands: synthetic generation or the
// binary-shard loader, train and held-out test splits.
std::vector<dataio::ImageRecord> load_train(const config::RunConfig& cfg);
std::vector<dataio::ImageRecord> load_test(const config::RunConfig& cfg);

// Full-batch count per epoch; a dataset smaller than one batch still yields
// a single (short) step so tiny rigs can train.
std::int64_t steps_per_epoch(size_t dataset_size, int batch_size);

// ---------------------------------------------------------------------------
// Pretrainer: owns the model, optimizer and schedule position for the
// self-supervised phase. `step` consumes one augmented batch; `run` drives
// whole epochs with shuffling, metrics and checkpoints.
// ---------------------------------------------------------------------------
class Pretrainer {
public:
    explicit Pretrainer(const config::RunConfig& cfg);

    // One gradient step (then exactly one momentum-tower update) on an
    // already-augmented batch. Mask plans are derived deterministically from
    // the seed and step counter. Returns the pre-step loss values; optionally
    // reports the batch's hard location accuracy.
    losses::LossBreakdown step(const std::vector<dataio::AugmentedPair>& batch,
                               double* loc_acc = nullptr);

    // Same, with caller-chosen mask plans (test rigs tie the two views).
    losses::LossBreakdown step_with_plans(const std::vector<dataio::AugmentedPair>& batch,
                                          const std::vector<masking::MaskPlan>& plans_strong,
                                          const std::vector<masking::MaskPlan>& plans_weak,
                                          double* loc_acc = nullptr);

    // Epoch loop over the configured dataset: writes metrics.csv and
    // checkpoints under cfg.out_dir, honours stop_after_epochs, resumes
    // from a checkpoint path when given. Returns the final state.
    checkpoint::Checkpoint run(const std::string& resume_path = "");

    checkpoint::Checkpoint snapshot() const;
    void restore(const checkpoint::Checkpoint& c);

    model::SdmaeModel& model() { return model_; }
    const config::RunConfig& config() const { return cfg_; }
    std::int64_t step_count() const { return step_; }
    std::int64_t epochs_done() const { return epoch_; }

    // The lr schedule needs the per-epoch step count before run() computes
    // it; standalone step() drivers can pin it here.
    void set_steps_per_epoch(std::int64_t spe);

private:
    double current_lr() const;

    config::RunConfig cfg_;
    model::SdmaeModel model_;
    AdamW opt_;
    Rng shuffle_rng_;
    std::int64_t epoch_ = 0;  // epochs fully completed
    std::int64_t step_ = 0;   // gradient steps taken
    std::int64_t spe_ = 1;
};

// Supervised phase: encoder + class-token linear head, initialized from a
// pretrain checkpoint when cfg.finetune_init is set. Writes metrics and the
// classifier checkpoint under cfg.out_dir; returns the held-out top-1.
EvalReport finetune(const config::RunConfig& cfg);

// Load a classifier checkpoint written by finetune and evaluate it on the
// held-out split.
double eval_classifier(const config::RunConfig& cfg, const std::string& checkpoint_path);

// Masked forward pass for visualization: encode the visibles, fill the
// masked slots with the learned token, decode, and return the model's
// N x D patch predictions (still in normalized-target space).
Mat predict_all_patches(model::SdmaeModel& m, const Mat& tokens, const masking::MaskPlan& plan);

// Deterministic per-image mask plan for reconstruction dumps, drawn from a
// stream disjoint from every training stream.
masking::MaskPlan recon_mask_plan(const config::RunConfig& cfg, int image_index);

struct SweepRow {
    int depth = 0;
    int dim = 0;
    double top1 = 0.0;
    bool failed = false;
};

// Full factorial over decoder depth x width: pretrain + finetune per cell,
// one row per cell written to out_dir/sweep.csv. A failed cell records a
// nan row and the sweep continues.
std::vector<SweepRow> decoder_sweep(const config::RunConfig& cfg);

}  // namespace sdmae::trainer
