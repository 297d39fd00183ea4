#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "rlab/model.hpp"

namespace rlab {

// Adam with linear warmup over the first 1% of steps
// to lr_max, then cosine anneal to lr_min.
struct TrainConfig {
    int total_steps = 1000;
    int batch_size = 8;
    int seq_len = 64;
    double lr_max = 0.001;
    double lr_min = 0.0001;
    double warmup_fraction = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    uint64_t seed = 1;

    // 0 <= lr_min <= lr_max (lr_max = 0 freezes the model), 0 < warmup
    // fraction < 1, positive step/batch/window sizes.
    void validate() const;
    int warmup_steps() const;
};

// Learning rate at a 0-based step. Warmup endpoint is exactly lr_max and
// the final step exactly lr_min; the two pieces meet continuously.
double lr_at(int step, const TrainConfig& tc);

// First and second moment estimates, parallel to ModelParams::named()
// order. steps_done doubles as Adam's bias-correction counter.
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    long long steps_done = 0;

    static AdamState init_like(const ModelParams& params);
};

// One Adam update from the gradients currently stored in `params`,
// with bias correction: p -= lr * m_hat / (sqrt(v_hat) + eps).
void adam_step(ModelParams& params, AdamState& state, double lr, const TrainConfig& tc);

struct StepLog {
    int step;
    double lr;
    double loss_nats;
};

// Deterministic training loop. Batches are contiguous non-overlapping
// seq_len windows of the token stream; window order per epoch comes from
// a seed-derived shuffle, and the batch at global step k is a pure
// function of (seed, k, stream length), so resuming from saved state
// reproduces the uninterrupted run bit-for-bit.
class Trainer {
  public:
    Trainer(ModelParams& params, const ModelConfig& config, TrainConfig tc);

    // Runs one optimization step; throws NumericError naming the step if
    // the loss goes non-finite.
    StepLog step(const std::vector<int>& tokens);

    // Runs steps until total_steps, appending to the returned log.
    std::vector<StepLog> run(const std::vector<int>& tokens);

    int steps_completed() const { return static_cast<int>(state_.steps_done); }

    // Adam moments + step counter in the checkpoint block format.
    void save_state(std::ostream& out) const;
    void load_state(std::istream& in);
    void save_state_file(const std::string& path) const;
    void load_state_file(const std::string& path);

  private:
    ModelParams& params_;
    const ModelConfig& config_;
    TrainConfig tc_;
    AdamState state_;
    // Cached shuffle of window indices for one epoch.
    long long cached_epoch_ = -1;
    std::vector<int> epoch_order_;

    std::vector<int> batch_windows(long long step, int window_count);
};

// Convenience wrapper: fresh trainer, full run.
std::vector<StepLog> train(ModelParams& params, const ModelConfig& config,
                           const std::vector<int>& tokens, const TrainConfig& tc);

// CSV columns: step, lr, loss_nats.
void write_loss_log(std::ostream& out, const std::vector<StepLog>& log);

} // namespace rlab
