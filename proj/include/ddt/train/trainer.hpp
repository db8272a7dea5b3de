#ifndef DDT_TRAIN_TRAINER_HPP
#define DDT_TRAIN_TRAINER_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddt/data/dataset.hpp"
#include "ddt/model/network.hpp"
#include "ddt/train/optimizer.hpp"

namespace ddt {
namespace train {

/// Raised when the loss turns non-finite; carries a diagnostic dump.
class TrainAbort : public std::runtime_error {
public:
    TrainAbort(const std::string& msg, std::string dump)
        : std::runtime_error(msg), diagnostic(std::move(dump)) {}
    std::string diagnostic;
};

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double lr = 1e-3;
    std::size_t patience = 5;       // early stop on stalled validation loss
    std::uint64_t seed = 0;
    double teacher_forcing_start = 1.0; // decays linearly to 0 over the first half
};

struct EpochLog {
    std::size_t epoch = 0;
    double train_loss = 0;
    double val_loss = 0;
    double val_mse = 0; // median track, de-standardized
    double val_mae = 0;
    double tau = 0;
};

struct TrainResult {
    std::vector<EpochLog> logs;
    std::size_t best_epoch = 0;
    double best_val_loss = std::numeric_limits<double>::infinity();
    std::vector<Tensor> best_params; // snapshot in registry order
    bool early_stopped = false;
};

namespace detail {

inline double eval_loss_pass(model::DdtModel& m, const data::Dataset& ds,
                             const std::vector<std::size_t>& starts, std::size_t batch_size,
                             std::uint64_t seed, double* mse, double* mae) {
    double loss_acc = 0;
    std::size_t loss_cnt = 0;
    double se = 0, ae = 0;
    std::size_t elem = 0;
    const std::size_t med = m.config().head.median_index();
    for (std::size_t off = 0; off < starts.size(); off += batch_size) {
        std::vector<std::size_t> chunk(starts.begin() + off,
                                       starts.begin() + std::min(off + batch_size, starts.size()));
        model::Batch batch = data::make_batch(ds, chunk);
        Graph g;
        RngStream noise = RngStream(seed).split(off);
        model::ForwardOut fo = m.forward(g, batch, model::RunMode::eval, noise);
        Var loss = model::quantile_loss(g, fo.prediction, g.constant(batch.labels),
                                        m.config().head.quantiles);
        loss_acc += g.value(loss).item() * static_cast<double>(chunk.size());
        loss_cnt += chunk.size();
        const Tensor& pred = g.value(fo.prediction);
        const std::size_t B = pred.dim(0), H = pred.dim(1), Nt = pred.dim(2);
        Tensor median({B, H, Nt});
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t c = 0; c < Nt; ++c) median.at3(b, h, c) = pred.at4(b, h, c, med);
        Tensor pred_d = data::destandardize_targets(ds, median);
        Tensor y_d = data::destandardize_targets(ds, batch.labels);
        for (std::size_t i = 0; i < pred_d.numel(); ++i) {
            const double d = y_d[i] - pred_d[i];
            se += d * d;
            ae += std::abs(d);
            ++elem;
        }
    }
    if (mse) *mse = elem ? se / static_cast<double>(elem) : 0;
    if (mae) *mae = elem ? ae / static_cast<double>(elem) : 0;
    return loss_cnt ? loss_acc / static_cast<double>(loss_cnt) : 0;
}

inline std::string nan_dump(const model::Batch& batch, const model::ForwardOut& fo, std::size_t epoch,
                            std::size_t step) {
    std::ostringstream os;
    os << "{\"event\":\"nan_loss\",\"epoch\":" << epoch << ",\"step\":" << step
       << ",\"batch_size\":" << batch.targets_in.dim(0) << ",\"input_max_abs\":"
       << batch.targets_in.max_abs() << ",\"mask_count\":" << fo.hard_masks.size();
    if (!fo.hard_masks.empty()) {
        double ones = 0;
        for (double v : fo.hard_masks[0].vec()) ones += v;
        os << ",\"mask0_ones\":" << ones;
    }
    os << "}";
    return os.str();
}

} // namespace detail

/// Gradient-descent training loop: quantile loss, adaptive-moments updates,
/// per-epoch temperature advance, early stopping, best-parameter snapshot.
inline TrainResult train_model(model::DdtModel& m, const data::Dataset& ds, const TrainConfig& cfg) {
    if (ds.train_starts.empty()) throw std::invalid_argument("train_model: empty training split");
    Adam opt(m.params(), AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    TrainResult res;
    RngStream shuffle_rng(cfg.seed ^ 0xddULL);
    std::size_t stall = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        m.metric().epoch = static_cast<int>(epoch); // advances tau = tau0 * gamma^epoch
        const double half = std::max(1.0, static_cast<double>(cfg.epochs) / 2.0);
        const double tf = cfg.teacher_forcing_start *
                          std::max(0.0, 1.0 - static_cast<double>(epoch) / half);

        std::vector<std::size_t> order = ds.train_starts;
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.index(i)]);

        double train_loss = 0;
        std::size_t seen = 0;
        std::size_t step = 0;
        for (std::size_t off = 0; off < order.size(); off += cfg.batch_size, ++step) {
            std::vector<std::size_t> chunk(order.begin() + off,
                                           order.begin() + std::min(off + cfg.batch_size, order.size()));
            model::Batch batch = data::make_batch(ds, chunk);
            // tie the noise stream to (seed, epoch, step) so runs reproduce
            RngStream noise = RngStream(cfg.seed).split(epoch * 100003 + step);
            Graph g;
            m.set_teacher_forcing(tf);
            model::ForwardOut fo = m.forward(g, batch, model::RunMode::train, noise);
            Var loss = model::quantile_loss(g, fo.prediction, g.constant(batch.labels),
                                            m.config().head.quantiles);
            const double lv = g.value(loss).item();
            if (!std::isfinite(lv))
                throw TrainAbort("train_model: non-finite loss at epoch " + std::to_string(epoch) +
                                     " step " + std::to_string(step),
                                 detail::nan_dump(batch, fo, epoch, step));
            train_loss += lv * static_cast<double>(chunk.size());
            seen += chunk.size();
            g.backward(loss);
            opt.step(m.params(), model::collect_gradients(g, fo.param_leaves));
        }

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = seen ? train_loss / static_cast<double>(seen) : 0;
        log.tau = m.metric().tau();
        log.val_loss = detail::eval_loss_pass(m, ds, ds.val_starts, cfg.batch_size, cfg.seed ^ 0xeeULL,
                                              &log.val_mse, &log.val_mae);
        res.logs.push_back(log);

        if (log.val_loss < res.best_val_loss - 1e-12) {
            res.best_val_loss = log.val_loss;
            res.best_epoch = epoch;
            res.best_params.clear();
            for (const auto& [name, t] : m.params().entries) res.best_params.push_back(*t);
            stall = 0;
        } else if (++stall >= cfg.patience) {
            res.early_stopped = true;
            break;
        }
    }

    return res;
}

/// Copy a best-parameter snapshot back into the model.
inline void restore_params(model::DdtModel& m, const std::vector<Tensor>& snapshot) {
    if (snapshot.size() != m.params().entries.size())
        throw std::invalid_argument("restore_params: snapshot size mismatch");
    for (std::size_t i = 0; i < snapshot.size(); ++i) *m.params().entries[i].second = snapshot[i];
}

/// Evaluate median-track MSE/MAE (de-standardized) over a split.
inline model::Metrics evaluate(model::DdtModel& m, const data::Dataset& ds,
                               const std::vector<std::size_t>& starts, std::size_t batch_size,
                               std::uint64_t seed, double* quantile = nullptr) {
    model::Metrics mt;
    double q = detail::eval_loss_pass(m, ds, starts, batch_size, seed, &mt.mse, &mt.mae);
    if (quantile) *quantile = q;
    return mt;
}

} // namespace train
} // namespace ddt

#endif
