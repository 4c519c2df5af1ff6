#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "attnconv/augment.hpp"
#include "attnconv/heads.hpp"
#include "attnconv/metrics.hpp"
#include "attnconv/model.hpp"

namespace attnconv {

// Raised for conditions that stop training without a usable result
// (non-finite gradients, unreadable checkpoints).
class TrainingAbort : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    int epochs = 300;
    int batch_size = 6;
    double lr = 1e-4;
    int lr_drop_epoch = 250;  // epochs after this one run at lr · lr_drop_factor
    double lr_drop_factor = 0.1;
    double weight_decay = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double grad_clip = 0.1;  // global L2 norm; 0 disables
    uint64_t seed = 1;
    int eval_every = 1;  // epochs between validation passes; 0 disables
    double eval_threshold = 0.0;
    bool augment = false;
    AugmentPolicy policy = AugmentPolicy::defaults();
    LossWeights loss;

    void validate() const;
    // Learning rate used during 1-based `epoch`.
    double lr_at(int epoch) const;
};

struct AdamState {
    int64_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
};

// One AdamW update of a single array: decoupled decay p ← p − lr·wd·p, then
// the bias-corrected Adam step. `t` is the 1-based step count.
void adamw_update(std::span<double> p, std::span<const double> g, std::span<double> m, std::span<double> v,
                  int64_t t, double lr, const TrainConfig& cfg);

// Applies adamw_update to every parameter using its current grad.
// Throws TrainingAbort on a non-finite gradient entry.
void adamw_step(const NamedParams& params, AdamState& state, double lr, const TrainConfig& cfg);

// Scales all grads so their joint L2 norm is at most `max_norm`; returns the norm before scaling.
double clip_grad_norm(const NamedParams& params, double max_norm);

struct EpochLog {
    int epoch = 0;
    int64_t step = 0;  // optimizer steps completed so far
    double loss = 0.0;  // mean per-image loss over the epoch
    double lr = 0.0;
    std::optional<double> val_ap;
    bool infinite_loss = false;
};

struct TrainResult {
    std::vector<EpochLog> log;
    bool aborted = false;  // infinite-loss break
    std::string abort_reason;
    double best_val_ap = -1.0;
    int best_epoch = 0;
};

struct TrainOptions {
    std::optional<std::filesystem::path> out_dir;  // log.csv, last.ckpt, best.ckpt
    std::ostream* progress = nullptr;
};

// Mean per-image total loss over `scenes`, evaluation mode, matching included.
double dataset_loss(const AttnConvNet& model, const std::vector<SceneAnnotation>& scenes, const LossWeights& w);

TrainResult train(AttnConvNet& model, const std::vector<SceneAnnotation>& train_set,
                  const std::vector<SceneAnnotation>& val_set, const TrainConfig& cfg,
                  const TrainOptions& opts = {});

void write_log_csv(std::ostream& os, const std::vector<EpochLog>& log);

// Decodes every scene and scores the detections. Images are processed by up to
// `threads` workers; the report does not depend on the thread count.
EvalReport evaluate(const AttnConvNet& model, const std::vector<SceneAnnotation>& scenes, double conf_threshold,
                    const std::vector<std::string>& labels = default_labels(), int threads = 1);

// Per-image detections, in scene order.
std::vector<std::vector<Detection>> detect_all(const AttnConvNet& model, const std::vector<SceneAnnotation>& scenes,
                                               double conf_threshold, int threads = 1);

// Binary container: magic "ACNK", format version, model config text, named
// parameter tensors, optional optimizer state. Values are little-endian float64.
void save_checkpoint(const std::filesystem::path& path, const AttnConvNet& model, const AdamState* state = nullptr);
AttnConvNet load_checkpoint(const std::filesystem::path& path, AdamState* state = nullptr);

// Worker count from ATTNCONV_THREADS (default 1, minimum 1).
int thread_budget();

}  // namespace attnconv
