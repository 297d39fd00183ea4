#include "rlab/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace rlab {

void TrainConfig::validate() const {
    if (total_steps < 1) throw ConfigError("train: total_steps must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (seq_len < 1) throw ConfigError("train: seq_len must be >= 1");
    if (!(lr_min >= 0.0) || !(lr_max >= lr_min))
        throw ConfigError("train: need 0 <= lr_min <= lr_max");
    if (!(warmup_fraction > 0.0) || !(warmup_fraction < 1.0))
        throw ConfigError("train: warmup_fraction must lie in (0, 1)");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw ConfigError("train: betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("train: eps must be positive");
}

int TrainConfig::warmup_steps() const {
    return static_cast<int>(std::ceil(warmup_fraction * total_steps));
}

double lr_at(int step, const TrainConfig& tc) {
    if (step < 0 || step >= tc.total_steps)
        throw ContractError("lr_at: step " + std::to_string(step) + " outside [0, " +
                            std::to_string(tc.total_steps) + ")");
    const int warmup = tc.warmup_steps();
    if (step < warmup) return tc.lr_max * (step + 1) / warmup;
    const int decay_span = tc.total_steps - 1 - warmup;
    if (decay_span <= 0) return tc.lr_min;
    const double progress = static_cast<double>(step - warmup) / decay_span;
    return tc.lr_min + 0.5 * (tc.lr_max - tc.lr_min) * (1.0 + std::cos(3.14159265358979323846 * progress));
}

AdamState AdamState::init_like(const ModelParams& params) {
    AdamState s;
    for (const auto& [name, t] : params.named()) {
        s.m.push_back(Tensor::zeros(t->shape));
        s.v.push_back(Tensor::zeros(t->shape));
    }
    return s;
}

void adam_step(ModelParams& params, AdamState& state, double lr, const TrainConfig& tc) {
    auto named = params.named();
    if (state.m.size() != named.size() || state.v.size() != named.size())
        throw ShapeError("adam_step: state does not match parameter list");
    const long long t = state.steps_done + 1;
    const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(t));
    for (size_t p = 0; p < named.size(); ++p) {
        Tensor* param = named[p].second;
        if (!param->grad) throw ContractError("adam_step: parameter '" + named[p].first +
                                              "' has no gradient buffer");
        auto& m = *state.m[p].data;
        auto& v = *state.v[p].data;
        auto& g = *param->grad;
        auto& w = *param->data;
        if (m.size() != w.size())
            throw ShapeError("adam_step: state shape mismatch for '" + named[p].first + "'");
        for (size_t i = 0; i < w.size(); ++i) {
            m[i] = tc.beta1 * m[i] + (1.0 - tc.beta1) * g[i];
            v[i] = tc.beta2 * v[i] + (1.0 - tc.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            w[i] -= lr * m_hat / (std::sqrt(v_hat) + tc.eps);
        }
    }
    state.steps_done = t;
}

Trainer::Trainer(ModelParams& params, const ModelConfig& config, TrainConfig tc)
    : params_(params), config_(config), tc_(tc), state_(AdamState::init_like(params)) {
    tc_.validate();
    config_.validate();
}

// Window w covers input tokens [w*L, w*L+L) with targets shifted one
// ahead, so the stream must hold at least L+1 tokens.
std::vector<int> Trainer::batch_windows(long long step, int window_count) {
    std::vector<int> windows(static_cast<size_t>(tc_.batch_size));
    for (int b = 0; b < tc_.batch_size; ++b) {
        const long long g = step * tc_.batch_size + b;
        const long long epoch = g / window_count;
        const int idx = static_cast<int>(g % window_count);
        if (epoch != cached_epoch_) {
            epoch_order_.resize(static_cast<size_t>(window_count));
            std::iota(epoch_order_.begin(), epoch_order_.end(), 0);
            Rng rng(tc_.seed + 0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(epoch + 1));
            rng.shuffle(epoch_order_);
            cached_epoch_ = epoch;
        }
        windows[static_cast<size_t>(b)] = epoch_order_[static_cast<size_t>(idx)];
    }
    return windows;
}

StepLog Trainer::step(const std::vector<int>& tokens) {
    const int L = tc_.seq_len;
    if (static_cast<int>(tokens.size()) < L + 1)
        throw DataError("train: token stream has " + std::to_string(tokens.size()) +
                        " tokens, need at least seq_len+1 = " + std::to_string(L + 1));
    const int window_count = static_cast<int>((tokens.size() - 1) / static_cast<size_t>(L));
    const int step_index = steps_completed();
    if (step_index >= tc_.total_steps) throw ContractError("train: all steps already completed");
    const double lr = lr_at(step_index, tc_);

    StepLog log{step_index, lr, 0.0};
    try {
        params_.zero_grad();
        Tape tape;
        Tensor loss_acc;
        for (int w : batch_windows(step_index, window_count)) {
            const size_t base = static_cast<size_t>(w) * static_cast<size_t>(L);
            std::vector<int> inputs(tokens.begin() + base, tokens.begin() + base + L);
            std::vector<int> targets(tokens.begin() + base + 1, tokens.begin() + base + L + 1);
            ForwardResult fr = forward(tape, params_, config_, inputs, {Mode::train, false});
            Tensor ce = cross_entropy(tape, fr.logits, targets);
            loss_acc = loss_acc.defined() ? add(tape, loss_acc, ce) : ce;
        }
        Tensor loss = scale(tape, loss_acc, 1.0 / tc_.batch_size);
        log.loss_nats = loss.scalar_value();
        if (!std::isfinite(log.loss_nats))
            throw NumericError("loss is not finite");
        tape.backward(loss);
        adam_step(params_, state_, lr, tc_);
    } catch (const NumericError& e) {
        throw NumericError("train step " + std::to_string(step_index) + ": " + e.what());
    }
    return log;
}

std::vector<StepLog> Trainer::run(const std::vector<int>& tokens) {
    std::vector<StepLog> log;
    while (steps_completed() < tc_.total_steps) log.push_back(step(tokens));
    return log;
}

namespace {
constexpr const char* kStateMagic = "recency-lab-train-state";
}

void Trainer::save_state(std::ostream& out) const {
    out << kStateMagic << "\n";
    out << "steps_done=" << state_.steps_done << "\n";
    out << "\n";
    auto named = params_.named();
    for (size_t p = 0; p < named.size(); ++p) {
        write_tensor_block(out, "m." + named[p].first, state_.m[p]);
        write_tensor_block(out, "v." + named[p].first, state_.v[p]);
    }
}

void Trainer::load_state(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kStateMagic)
        throw DataError("train state: bad magic");
    if (!std::getline(in, line) || line.rfind("steps_done=", 0) != 0)
        throw DataError("train state: missing steps_done");
    state_.steps_done = std::stoll(line.substr(line.find('=') + 1));
    if (!std::getline(in, line) || !line.empty())
        throw DataError("train state: malformed header terminator");
    auto named = params_.named();
    for (size_t p = 0; p < named.size(); ++p) {
        auto [mname, m] = read_tensor_block(in);
        auto [vname, v] = read_tensor_block(in);
        if (mname != "m." + named[p].first || vname != "v." + named[p].first)
            throw DataError("train state: block order mismatch at '" + named[p].first + "'");
        if (m.shape != state_.m[p].shape || v.shape != state_.v[p].shape)
            throw DataError("train state: shape mismatch at '" + named[p].first + "'");
        *state_.m[p].data = *m.data;
        *state_.v[p].data = *v.data;
    }
    // Force an epoch-order refresh on the next step.
    cached_epoch_ = -1;
}

void Trainer::save_state_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("train state: cannot write " + path);
    save_state(out);
}

void Trainer::load_state_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("train state: cannot read " + path);
    load_state(in);
}

std::vector<StepLog> train(ModelParams& params, const ModelConfig& config,
                           const std::vector<int>& tokens, const TrainConfig& tc) {
    Trainer trainer(params, config, tc);
    return trainer.run(tokens);
}

void write_loss_log(std::ostream& out, const std::vector<StepLog>& log) {
    out << "step,lr,loss_nats\n";
    std::ostringstream os;
    os.precision(17);
    for (const auto& s : log) {
        os.str("");
        os << s.step << "," << s.lr << "," << s.loss_nats << "\n";
        out << os.str();
    }
}

} // namespace rlab
