#include "sdmae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace sdmae::trainer {

namespace {

namespace fs = std::filesystem;

// Independent seed streams hanging off the run seed. Augmentation, masking
// and initialization draws must never share a stream, or a config change in
// one would silently reshuffle another.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kClassifierInitStream = 2;
constexpr std::uint64_t kShuffleStream = 3;
constexpr std::uint64_t kFtShuffleStream = 4;
constexpr std::uint64_t kAugStream = 10;
constexpr std::uint64_t kMaskStream = 11;
constexpr std::uint64_t kFtAugStream = 12;
constexpr std::uint64_t kFtDropStream = 13;
constexpr std::uint64_t kReconMaskStream = 20;
constexpr std::uint64_t kTrainCorpusStream = 40;
constexpr std::uint64_t kTestCorpusStream = 41;

std::uint64_t epoch_index_key(std::int64_t epoch, std::int64_t index) {
    return (static_cast<std::uint64_t>(epoch) << 32) | static_cast<std::uint64_t>(index);
}

Mat gather_mat_rows(const Mat& src, const std::vector<int>& idx) {
    Mat out(static_cast<int>(idx.size()), src.cols);
    for (size_t i = 0; i < idx.size(); ++i) {
        std::memcpy(out.row_ptr(static_cast<int>(i)), src.row_ptr(idx[i]),
                    sizeof(double) * src.cols);
    }
    return out;
}

Mat vstack(const std::vector<Mat>& parts) {
    int rows = 0;
    for (const auto& p : parts) rows += p.rows;
    Mat out(rows, parts.front().cols);
    int r = 0;
    for (const auto& p : parts) {
        std::memcpy(out.row_ptr(r), p.data.data(), sizeof(double) * p.size());
        r += p.rows;
    }
    return out;
}

void write_metrics_row(std::ofstream& out, std::int64_t epoch, const losses::LossBreakdown& b,
                       double lr, double loc_acc) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%lld,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n",
                  static_cast<long long>(epoch), b.recon, b.loc, b.ctr, b.total, lr, loc_acc);
    out << buf;
}

void ensure_out_dirs(const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "checkpoints", ec);
    if (ec) throw_io("cannot create output directory " + out_dir + ": " + ec.message());
}

// Stochastic-depth keep rates ramp linearly over the blocks to the
// configured terminal rate; depth 1 keeps its single block always.
std::vector<double> drop_path_rates(int depth, double rate) {
    std::vector<double> p(depth, 0.0);
    for (int i = 1; i < depth; ++i) p[i] = rate * i / (depth - 1);
    return p;
}

double evaluate_top1(model::ClassifierModel& clf, const std::vector<dataio::ImageRecord>& test,
                     int patch_size) {
    if (test.empty()) throw_data("evaluation split is empty");
    const std::vector<double> eval_scales(clf.config().encoder.depth, 1.0);
    int hits = 0;
    for (const auto& img : test) {
        ad::Graph g;
        dataio::PatchSequence seq = dataio::patchify(img, patch_size);
        const Mat& logits = clf.logits(g, seq.tokens, eval_scales).value();
        int best = 0;
        for (int c = 1; c < logits.cols; ++c) {
            if (logits.at(0, c) > logits.at(0, best)) best = c;
        }
        if (best == img.label) ++hits;
    }
    return static_cast<double>(hits) / test.size();
}

void load_params_from(ParamStore& store, const checkpoint::Checkpoint& c,
                      const std::string& prefix, const std::string& context) {
    size_t copied = 0;
    for (auto& p : store.all()) {
        if (p->name.rfind(prefix, 0) != 0) continue;
        const Mat* src = c.find_param(p->name);
        if (!src) throw_config(context + ": checkpoint lacks parameter " + p->name);
        if (!src->same_shape(p->value)) {
            throw_config(context + ": shape mismatch for " + p->name);
        }
        p->value = *src;
        ++copied;
    }
    if (copied == 0) {
        throw_config(context + ": checkpoint has no '" + prefix + "*' tensors to load");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Schedule
// ---------------------------------------------------------------------------

double lr_at(std::int64_t step, std::int64_t warmup_steps, std::int64_t total_steps,
             double peak_lr) {
    if (step < 0) throw_config("lr_at: negative step");
    if (total_steps <= 0) return 0.0;
    if (step >= total_steps) return 0.0;
    if (warmup_steps > 0 && step < warmup_steps) {
        return peak_lr * (static_cast<double>(step) / static_cast<double>(warmup_steps));
    }
    const double progress = static_cast<double>(step - warmup_steps) /
                            static_cast<double>(total_steps - warmup_steps);
    return 0.5 * peak_lr * (1.0 + std::cos(progress * 3.14159265358979323846));
}

double peak_lr(const config::RunConfig& cfg) { return cfg.base_lr * cfg.batch_size / 256.0; }

std::int64_t steps_per_epoch(size_t dataset_size, int batch_size) {
    if (dataset_size == 0) throw_data("empty training dataset");
    const std::int64_t full = static_cast<std::int64_t>(dataset_size) / batch_size;
    return full > 0 ? full : 1;
}

// ---------------------------------------------------------------------------
// AdamW
// ---------------------------------------------------------------------------

void AdamW::attach(ParamStore& store) {
    names_.clear();
    t_ = 0;
    for (const auto& p : store.all()) {
        if (!p->trainable) continue;
        names_.push_back(p->name);
        p->adam_m.fill(0.0);
        p->adam_v.fill(0.0);
    }
}

void AdamW::step(ParamStore& store, double lr, double weight_decay) {
    if (names_.empty()) throw_config("optimizer used before attach()");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    size_t slot = 0;
    for (const auto& p : store.all()) {
        if (!p->trainable) continue;
        ++slot;
        const bool decay = p->weight_decay && weight_decay != 0.0;
        for (size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad.data[i];
            double& m = p->adam_m.data[i];
            double& v = p->adam_v.data[i];
            m = beta1_ * m + (1.0 - beta1_) * g;
            v = beta2_ * v + (1.0 - beta2_) * g * g;
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            double update = mhat / (std::sqrt(vhat) + eps_);
            if (decay) update += weight_decay * p->value.data[i];
            p->value.data[i] -= lr * update;
        }
    }
    if (slot != names_.size()) throw_config("optimizer state no longer matches the store");
}

void AdamW::dump(const ParamStore& store,
                 std::vector<std::pair<std::string, Mat>>& out) const {
    Mat t(1, 1);
    t.at(0, 0) = static_cast<double>(t_);
    out.emplace_back("opt.t", std::move(t));
    for (const auto& p : store.all()) {
        if (!p->trainable) continue;
        out.emplace_back("opt.m." + p->name, p->adam_m);
        out.emplace_back("opt.v." + p->name, p->adam_v);
    }
}

void AdamW::restore(ParamStore& store, const std::vector<std::pair<std::string, Mat>>& in) {
    if (in.size() != 1 + 2 * names_.size()) {
        throw_data("optimizer state: expected " + std::to_string(1 + 2 * names_.size()) +
                   " tensors, found " + std::to_string(in.size()));
    }
    if (in[0].first != "opt.t" || in[0].second.size() != 1) {
        throw_data("optimizer state: missing step counter");
    }
    t_ = static_cast<std::int64_t>(in[0].second.at(0, 0));
    size_t slot = 0;
    for (auto& p : store.all()) {
        if (!p->trainable) continue;
        const auto& [mn, mm] = in[1 + 2 * slot];
        const auto& [vn, vv] = in[2 + 2 * slot];
        ++slot;
        if (mn != "opt.m." + p->name || vn != "opt.v." + p->name ||
            !mm.same_shape(p->adam_m) || !vv.same_shape(p->adam_v)) {
            throw_data("optimizer state: tensor " + mn + " does not match parameter layout");
        }
        p->adam_m = mm;
        p->adam_v = vv;
    }
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

std::vector<dataio::ImageRecord> load_train(const config::RunConfig& cfg) {
    if (cfg.data_source == "cifar") {
        return dataio::load_cifar(cfg.data_path, "train", cfg.data_classes);
    }
    dataio::SyntheticSpec spec;
    spec.classes = cfg.data_classes;
    spec.per_class = cfg.data_per_class;
    spec.resolution = cfg.data_resolution;
    spec.patch_size = cfg.encoder.patch_size;
    spec.seed = derive_seed(cfg.seed, kTrainCorpusStream);
    return dataio::gen_synthetic(spec);
}

std::vector<dataio::ImageRecord> load_test(const config::RunConfig& cfg) {
    if (cfg.data_source == "cifar") {
        return dataio::load_cifar(cfg.data_path, "test", cfg.data_classes);
    }
    dataio::SyntheticSpec spec;
    spec.classes = cfg.data_classes;
    spec.per_class = std::max(1, cfg.data_per_class / 4);
    spec.resolution = cfg.data_resolution;
    spec.patch_size = cfg.encoder.patch_size;
    spec.seed = derive_seed(cfg.seed, kTestCorpusStream);
    return dataio::gen_synthetic(spec);
}

// ---------------------------------------------------------------------------
// Pretrainer
// ---------------------------------------------------------------------------

Pretrainer::Pretrainer(const config::RunConfig& cfg)
    : cfg_([&] {
          cfg.validate();
          return cfg;
      }()),
      model_(cfg_.model_config(), derive_seed(cfg_.seed, kInitStream)),
      shuffle_rng_(derive_seed(cfg_.seed, kShuffleStream)) {
    opt_.attach(model_.store());
}

void Pretrainer::set_steps_per_epoch(std::int64_t spe) {
    if (spe < 1) throw_config("steps_per_epoch must be >= 1");
    spe_ = spe;
}

double Pretrainer::current_lr() const {
    return lr_at(step_, static_cast<std::int64_t>(cfg_.warmup_epochs) * spe_,
                 static_cast<std::int64_t>(cfg_.total_epochs) * spe_, peak_lr(cfg_));
}

losses::LossBreakdown Pretrainer::step(const std::vector<dataio::AugmentedPair>& batch,
                                       double* loc_acc) {
    const int n = model_.config().n_tokens;
    std::vector<masking::MaskPlan> plans_s, plans_w;
    plans_s.reserve(batch.size());
    plans_w.reserve(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) {
        const std::uint64_t slot = static_cast<std::uint64_t>(step_) << 16 | (i << 1);
        Rng rs(derive_seed(cfg_.seed, kMaskStream, slot));
        Rng rw(derive_seed(cfg_.seed, kMaskStream, slot | 1));
        plans_s.push_back(masking::sample_mask_plan(n, cfg_.mask_ratio, rs));
        plans_w.push_back(masking::sample_mask_plan(n, cfg_.mask_ratio, rw));
    }
    return step_with_plans(batch, plans_s, plans_w, loc_acc);
}

losses::LossBreakdown Pretrainer::step_with_plans(
    const std::vector<dataio::AugmentedPair>& batch,
    const std::vector<masking::MaskPlan>& plans_strong,
    const std::vector<masking::MaskPlan>& plans_weak, double* loc_acc) {
    if (batch.empty()) throw_config("pretrain step: empty batch");
    if (plans_strong.size() != batch.size() || plans_weak.size() != batch.size()) {
        throw_config("pretrain step: one mask plan per view per sample required");
    }
    const int patch = cfg_.encoder.patch_size;
    const int n = model_.config().n_tokens;

    ad::Graph g;
    ad::Var mask_token = g.param(model_.store().get("decoder.mask_token"));
    std::vector<ad::Var> preds_s, preds_w, logit_parts;
    std::vector<Mat> targets_s, targets_w;
    std::vector<int> loc_targets;
    std::vector<ad::Var> qs_rows, qw_rows, ks_rows, kw_rows;

    for (size_t i = 0; i < batch.size(); ++i) {
        for (int view = 0; view < 2; ++view) {
            const bool strong = view == 0;
            const dataio::ImageRecord& img = strong ? batch[i].strong : batch[i].weak;
            const masking::MaskPlan& plan = strong ? plans_strong[i] : plans_weak[i];
            if (plan.n_total != n) {
                throw_config("pretrain step: mask plan covers " + std::to_string(plan.n_total) +
                             " tokens, model expects " + std::to_string(n));
            }
            dataio::PatchSequence seq = dataio::patchify(img, patch);
            auto [visible, masked] = masking::split_tokens(seq.tokens, plan);
            (void)masked;
            Mat normalized = dataio::normalize_targets(seq.tokens);
            (strong ? targets_s : targets_w)
                .push_back(gather_mat_rows(normalized, plan.masked_idx));

            ad::Var z = model_.encode_visible(g, visible, plan.visible_idx);
            ad::Var cls = g.slice_rows(z, 0, 1);
            ad::Var z_vis = g.slice_rows(z, 1, plan.n_visible());
            logit_parts.push_back(model_.predict_locations(g, z_vis));
            loc_targets.insert(loc_targets.end(), plan.visible_idx.begin(),
                               plan.visible_idx.end());

            ad::Var filled = g.reassemble(z_vis, mask_token, plan.visible_idx, n);
            std::vector<ad::Var> seq_parts{cls, filled};
            auto [tokens, pixels] = model_.decode_all(g, g.concat_rows(seq_parts));
            (strong ? preds_s : preds_w).push_back(g.gather_rows(pixels, plan.masked_idx));

            // Class-token contrastive branches: the key always comes from the
            // momentum tower; the query normally from the gradient tower.
            ad::Var k_feat = model_.feature_encode(g, tokens, model::Branch::Momentum);
            ad::Var q_feat =
                (strong && cfg_.strong_query_via_momentum)
                    ? k_feat
                    : model_.feature_encode(g, tokens, model::Branch::Query);
            ad::Var q = model_.project(g, g.slice_rows(q_feat, 0, 1));
            (strong ? qs_rows : qw_rows).push_back(q);
            (strong ? ks_rows : kw_rows).push_back(g.slice_rows(k_feat, 0, 1));
        }
    }

    ad::Var recon = losses::recon_loss(g, g.concat_rows(preds_s), g.concat_rows(preds_w),
                                       vstack(targets_s), vstack(targets_w));
    ad::Var all_logits = g.concat_rows(logit_parts);
    ad::Var loc = losses::location_loss(g, all_logits, loc_targets, 1.0);
    ad::Var ctr = losses::contrastive_loss(
        g, g.l2_normalize_rows(g.concat_rows(qs_rows)), g.l2_normalize_rows(g.concat_rows(qw_rows)),
        g.l2_normalize_rows(g.concat_rows(ks_rows)), g.l2_normalize_rows(g.concat_rows(kw_rows)),
        cfg_.tau);

    const losses::LossWeights weights{cfg_.lambda_l, cfg_.lambda_c};
    // Validates finiteness and names the first bad term before any update.
    losses::LossBreakdown breakdown = losses::total_loss(
        recon.value().at(0, 0), loc.value().at(0, 0), ctr.value().at(0, 0), weights);

    ad::Var total = losses::combine(g, recon, loc, ctr, weights);
    model_.store().zero_grads();
    g.backward(total);
    opt_.step(model_.store(), current_lr(), cfg_.weight_decay);
    model_.ema_update();
    ++step_;

    if (loc_acc) *loc_acc = losses::location_accuracy(all_logits.value(), loc_targets);
    return breakdown;
}

checkpoint::Checkpoint Pretrainer::snapshot() const {
    checkpoint::Checkpoint c;
    c.epoch = epoch_;
    c.step = step_;
    c.config_hash = cfg_.hash();
    c.rng_state = shuffle_rng_.serialize();
    for (const auto& p : model_.store().all()) c.model_params.emplace_back(p->name, p->value);
    opt_.dump(model_.store(), c.opt_state);
    return c;
}

void Pretrainer::restore(const checkpoint::Checkpoint& c) {
    if (c.config_hash != cfg_.hash()) {
        throw_config("resume: checkpoint was written under a different configuration");
    }
    if (c.model_params.size() != model_.store().all().size()) {
        throw_data("resume: checkpoint parameter count does not match the model");
    }
    load_params_from(model_.store(), c, "", "resume");
    opt_.restore(model_.store(), c.opt_state);
    epoch_ = c.epoch;
    step_ = c.step;
    shuffle_rng_.deserialize(c.rng_state);
}

checkpoint::Checkpoint Pretrainer::run(const std::string& resume_path) {
    const auto data = load_train(cfg_);
    spe_ = steps_per_epoch(data.size(), cfg_.batch_size);
    ensure_out_dirs(cfg_.out_dir);
    const fs::path out(cfg_.out_dir);

    const bool fresh = resume_path.empty();
    if (!fresh) restore(checkpoint::load_checkpoint(resume_path));

    std::ofstream metrics(out / "metrics.csv",
                          fresh ? std::ios::trunc : std::ios::app);
    if (!metrics) throw_io("cannot open metrics log under " + cfg_.out_dir);
    if (fresh) metrics << "epoch,recon,loc,ctr,total,lr,loc_acc\n";

    const int batch_n = static_cast<int>(std::min<size_t>(cfg_.batch_size, data.size()));
    std::vector<int> order(data.size());
    const std::int64_t stop = cfg_.stop_after_epochs > 0
                                  ? std::min<std::int64_t>(cfg_.stop_after_epochs,
                                                           cfg_.total_epochs)
                                  : cfg_.total_epochs;

    for (std::int64_t e = epoch_; e < stop; ++e) {
        std::iota(order.begin(), order.end(), 0);
        shuffle_rng_.shuffle(order);

        losses::LossBreakdown sum;
        double acc_sum = 0.0;
        for (std::int64_t s = 0; s < spe_; ++s) {
            std::vector<dataio::AugmentedPair> batch;
            batch.reserve(batch_n);
            dataio::AugmentPolicy policy =
                dataio::AugmentPolicy::scaled(cfg_.data_resolution, cfg_.augment_scale);
            for (int b = 0; b < batch_n; ++b) {
                const int idx = order[static_cast<size_t>(s) * batch_n + b];
                batch.push_back(dataio::augment_pair(
                    data[idx], policy, derive_seed(cfg_.seed, kAugStream, epoch_index_key(e, idx))));
            }
            double acc = 0.0;
            losses::LossBreakdown b = step(batch, &acc);
            sum.recon += b.recon;
            sum.loc += b.loc;
            sum.ctr += b.ctr;
            sum.total += b.total;
            acc_sum += acc;
        }
        epoch_ = e + 1;

        losses::LossBreakdown mean;
        mean.recon = sum.recon / spe_;
        mean.loc = sum.loc / spe_;
        mean.ctr = sum.ctr / spe_;
        mean.total = sum.total / spe_;
        write_metrics_row(metrics, epoch_, mean, current_lr(), acc_sum / spe_);
        metrics.flush();

        checkpoint::save_checkpoint(snapshot(), (out / "checkpoints" / "last.ckpt").string());
    }

    checkpoint::Checkpoint final_state = snapshot();
    checkpoint::save_checkpoint(final_state, (out / "checkpoints" / "final.ckpt").string());
    return final_state;
}

// ---------------------------------------------------------------------------
// Fine-tuning and evaluation
// ---------------------------------------------------------------------------

EvalReport finetune(const config::RunConfig& cfg) {
    cfg.validate();
    const auto train = load_train(cfg);
    const auto test = load_test(cfg);
    for (const auto& img : train) {
        if (img.label < 0 || img.label >= cfg.data_classes) {
            throw_config("finetune: label " + std::to_string(img.label) +
                         " outside the configured " + std::to_string(cfg.data_classes) +
                         " classes");
        }
    }

    const model::ModelConfig mc = cfg.model_config();
    model::ClassifierModel clf(mc, cfg.data_classes,
                               derive_seed(cfg.seed, kClassifierInitStream));
    if (!cfg.finetune_init.empty()) {
        const checkpoint::Checkpoint init = checkpoint::load_checkpoint(cfg.finetune_init);
        load_params_from(clf.store(), init, "encoder.", "finetune init");
    }

    AdamW opt;
    opt.attach(clf.store());
    Rng shuffle_rng(derive_seed(cfg.seed, kFtShuffleStream));
    const std::int64_t spe = steps_per_epoch(train.size(), cfg.batch_size);
    const std::int64_t warmup = static_cast<std::int64_t>(cfg.warmup_epochs) * spe;
    const std::int64_t total = static_cast<std::int64_t>(cfg.total_epochs) * spe;
    const int batch_n = static_cast<int>(std::min<size_t>(cfg.batch_size, train.size()));
    const std::vector<double> rates = drop_path_rates(cfg.encoder.depth, cfg.encoder.drop_path);

    ensure_out_dirs(cfg.out_dir);
    const fs::path out(cfg.out_dir);
    std::ofstream metrics(out / "metrics.csv", std::ios::trunc);
    if (!metrics) throw_io("cannot open metrics log under " + cfg.out_dir);
    metrics << "epoch,recon,loc,ctr,total,lr,loc_acc\n";

    EvalReport report;
    dataio::AugmentPolicy policy =
        dataio::AugmentPolicy::scaled(cfg.data_resolution, cfg.augment_scale);
    std::vector<int> order(train.size());
    std::int64_t step = 0;

    for (int e = 0; e < cfg.total_epochs; ++e) {
        std::iota(order.begin(), order.end(), 0);
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        double lr = 0.0;

        for (std::int64_t s = 0; s < spe; ++s) {
            ad::Graph g;
            std::vector<ad::Var> logit_rows;
            std::vector<int> labels;
            for (int b = 0; b < batch_n; ++b) {
                const int idx = order[static_cast<size_t>(s) * batch_n + b];
                const auto& img = train[idx];
                // The supervised phase reuses the mild view: crop + flip only.
                dataio::AugmentedPair pair = dataio::augment_pair(
                    img, policy, derive_seed(cfg.seed, kFtAugStream, epoch_index_key(e, idx)));
                dataio::PatchSequence seq = dataio::patchify(pair.weak, cfg.encoder.patch_size);

                Rng droppa(derive_seed(cfg.seed, kFtDropStream, epoch_index_key(e, idx)));
                std::vector<double> scales(rates.size(), 1.0);
                for (size_t d = 0; d < rates.size(); ++d) {
                    if (rates[d] > 0.0) {
                        scales[d] = droppa.bernoulli(rates[d]) ? 0.0 : 1.0 / (1.0 - rates[d]);
                    }
                }
                logit_rows.push_back(clf.logits(g, seq.tokens, scales));
                labels.push_back(img.label);
            }
            ad::Var ce = g.mean_all(g.cross_entropy_rows(g.concat_rows(logit_rows), labels));
            const double loss = ce.value().at(0, 0);
            if (!std::isfinite(loss)) {
                throw_numeric("finetune: loss became non-finite at step " + std::to_string(step));
            }
            clf.store().zero_grads();
            g.backward(ce);
            lr = lr_at(step, warmup, total, peak_lr(cfg));
            opt.step(clf.store(), lr, cfg.weight_decay);
            ++step;
            loss_sum += loss;
        }

        const double mean_loss = loss_sum / spe;
        report.loss_curve.push_back(mean_loss);
        losses::LossBreakdown row;
        row.total = mean_loss;
        write_metrics_row(metrics, e + 1, row, lr, 0.0);
        metrics.flush();
    }

    report.top1 = evaluate_top1(clf, test, cfg.encoder.patch_size);

    checkpoint::Checkpoint c;
    c.epoch = cfg.total_epochs;
    c.step = step;
    c.config_hash = cfg.hash();
    c.rng_state = shuffle_rng.serialize();
    for (const auto& p : clf.store().all()) c.model_params.emplace_back(p->name, p->value);
    opt.dump(clf.store(), c.opt_state);
    checkpoint::save_checkpoint(c, (out / "checkpoints" / "classifier.ckpt").string());
    return report;
}

double eval_classifier(const config::RunConfig& cfg, const std::string& checkpoint_path) {
    cfg.validate();
    const checkpoint::Checkpoint c = checkpoint::load_checkpoint(checkpoint_path);
    model::ClassifierModel clf(cfg.model_config(), cfg.data_classes,
                               derive_seed(cfg.seed, kClassifierInitStream));
    if (c.model_params.size() != clf.store().all().size()) {
        throw_data("eval: checkpoint parameter count does not match the classifier");
    }
    load_params_from(clf.store(), c, "", "eval");
    const auto test = load_test(cfg);
    return evaluate_top1(clf, test, cfg.encoder.patch_size);
}

Mat predict_all_patches(model::SdmaeModel& m, const Mat& tokens, const masking::MaskPlan& plan) {
    ad::Graph g;
    auto [visible, masked] = masking::split_tokens(tokens, plan);
    (void)masked;
    ad::Var z = m.encode_visible(g, visible, plan.visible_idx);
    ad::Var filled = g.reassemble(g.slice_rows(z, 1, plan.n_visible()),
                                  g.param(m.store().get("decoder.mask_token")),
                                  plan.visible_idx, plan.n_total);
    std::vector<ad::Var> parts{g.slice_rows(z, 0, 1), filled};
    auto [decoded, pixels] = m.decode_all(g, g.concat_rows(parts));
    (void)decoded;
    return pixels.value();
}

masking::MaskPlan recon_mask_plan(const config::RunConfig& cfg, int image_index) {
    Rng rng(derive_seed(cfg.seed, kReconMaskStream, static_cast<std::uint64_t>(image_index)));
    const int grid = cfg.data_resolution / cfg.encoder.patch_size;
    return masking::sample_mask_plan(grid * grid, cfg.mask_ratio, rng);
}

// ---------------------------------------------------------------------------
// Decoder sweep
// ---------------------------------------------------------------------------

std::vector<SweepRow> decoder_sweep(const config::RunConfig& cfg) {
    cfg.validate();
    const std::vector<int> depths = config::parse_int_list(cfg.sweep_depths, "sweep.depths");
    const std::vector<int> dims = config::parse_int_list(cfg.sweep_dims, "sweep.dims");
    ensure_out_dirs(cfg.out_dir);

    std::vector<SweepRow> rows;
    for (int depth : depths) {
        for (int dim : dims) {
            SweepRow row;
            row.depth = depth;
            row.dim = dim;
            const std::string cell =
                "d" + std::to_string(depth) + "_w" + std::to_string(dim);
            try {
                config::RunConfig pre = cfg;
                pre.decoder.depth = depth;
                pre.decoder.dim = dim;
                pre.out_dir = (fs::path(cfg.out_dir) / "sweep" / cell).string();
                pre.validate();
                Pretrainer trainer(pre);
                trainer.run();

                config::RunConfig ft = pre;
                ft.out_dir = (fs::path(pre.out_dir) / "finetune").string();
                ft.finetune_init =
                    (fs::path(pre.out_dir) / "checkpoints" / "final.ckpt").string();
                row.top1 = finetune(ft).top1;
            } catch (const Error&) {
                row.failed = true;
                row.top1 = std::nan("");
            }
            rows.push_back(row);
        }
    }

    std::ofstream table(fs::path(cfg.out_dir) / "sweep.csv", std::ios::trunc);
    if (!table) throw_io("cannot write sweep table under " + cfg.out_dir);
    table << "depth,dim,top1\n";
    for (const auto& r : rows) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%d,%d,%.6g\n", r.depth, r.dim, r.top1);
        table << buf;
    }
    return rows;
}

}  // namespace sdmae::trainer
