#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "tlsan/model.hpp"

namespace tlsan {

// Dense mirrors for W/b/gamma, sparse row updates for the embedding tables
// and the position table.
struct Gradients {
    Mat dw1, dw2, dw3, dw4;
    Vec db1, db2, db3, db4;
    double dgamma = 0.0;
    std::unordered_map<uint32_t, Vec> duser;  // row -> d_f
    std::unordered_map<uint32_t, Vec> ditem;
    std::unordered_map<uint32_t, Vec> dcat;
    std::unordered_map<uint32_t, Vec> dpos;   // user -> long_seq_len

    static Gradients zeros(const HyperParams& hyper);
    void accumulate(const Gradients& other);
    void scale(double alpha);
};

struct TrainConfig {
    uint32_t d_f = 32;
    uint32_t heads = 8;
    uint32_t long_seq_len = 10;
    uint32_t batch = 32;
    double l2 = 0.00005;
    uint32_t epochs = 50;
    uint64_t seed = 42;
    double lr_initial = 1.0;
    double lr_drop_fraction = 0.8;
    double lr_after = 0.1;
    uint32_t negatives_per_positive = 1;
    Ablation ablation = Ablation::Full;

    void validate() const;
};

struct TrainReport {
    std::vector<double> step_loss;  // mean per-sample data loss of each batch
    double final_loss = 0.0;        // mean per-sample data loss, last epoch
    uint64_t total_steps = 0;
    std::string checkpoint_path;
};

namespace train {

struct Sample {
    double score = 0.0;
    int label = 0;  // y in {0,1}
};

// Rows whose L2 penalty is active for a batch (paper's Theta excludes the
// category table, the position table and gamma).
struct TouchedRows {
    std::unordered_set<uint32_t> users;
    std::unordered_set<uint32_t> items;
};

// -sum[y log sigma(f) + (1-y) log(1-sigma(f))] + l2 * ||Theta||^2 over the
// touched embedding rows plus the dense weights/biases. Stable log-sigmoid.
double loss(const std::vector<Sample>& samples, double l2,
            const ModelParams& params, const TouchedRows& touched);

double sample_loss(double score, int label);

// Exact analytic gradients of the data term for one observation, given
// dLoss/dScore per scored candidate (cache.candidates order).
Gradients backward(const model::ForwardCache& cache,
                   const std::vector<double>& dscore, const ModelParams& params,
                   Ablation ablation = Ablation::Full);

// Adds 2*l2*theta for the touched rows and the dense tensors.
void add_l2_gradient(Gradients& grads, const ModelParams& params, double l2,
                     const TouchedRows& touched);

// theta <- theta - lr * g; untouched rows stay bit-identical.
void sgd_step(ModelParams& params, const Gradients& grads, double lr);

struct GradCheckReport {
    // tensor name -> max relative error |a - n| / max(|a|, |n|, 1e-8)
    std::vector<std::pair<std::string, double>> per_tensor;
    double max_error = 0.0;
    bool passed(double tol = 1e-4) const { return max_error < tol; }
};

// Central finite differences (h = 1e-5) against backward() over every
// trainable tensor on one random small instance. `tamper` lets tests verify
// the harness notices a corrupted gradient.
GradCheckReport grad_check(const HyperParams& hyper, uint64_t seed,
                           double fd_step = 1e-5,
                           const std::function<void(Gradients&)>& tamper = {});

using EvalHook = std::function<void(uint64_t step, uint32_t epoch, double lr,
                                    double mean_loss, const ModelParams&)>;

// Algorithm: per epoch reshuffle users, re-draw each training target from
// the newest session, minibatch SGD with the staged learning rate (drop at
// lr_drop_fraction of the planned steps). Deterministic given the seed.
// `on_step` fires after every update with the batch's mean sample loss.
TrainReport train_loop(const Dataset& dataset, const TrainConfig& config,
                       ModelParams& params, const std::string& checkpoint_path,
                       const EvalHook& on_step = {});

}  // namespace train
}  // namespace tlsan
