#include "audron/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "audron/rng.hpp"

namespace audron {

void TrainConfig::validate() const {
  if (lr <= 0.0) throw ParameterError("train: lr must be positive");
  if (batch_size < 1) throw ParameterError("train: batch_size must be >= 1");
  if (max_epochs < 1) throw ParameterError("train: max_epochs must be >= 1");
  if (plateau_patience < 1 || early_stop_patience < 1)
    throw ParameterError("train: patience values must be >= 1");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0))
    throw ParameterError("train: plateau_factor must be in (0, 1)");
  if (recon_weight < 0.0) throw ParameterError("train: recon_weight must be >= 0");
  if (weight_decay < 0.0) throw ParameterError("train: weight_decay must be >= 0");
}

Tensor<float> combined_loss(const ForwardOutput<float>& output, const std::vector<int>& labels,
                            const Tensor<float>& pooled_target, double lambda) {
  Tensor<float> ce = cross_entropy(output.logits, labels);
  if (lambda <= 0.0 || !output.reconstruction.defined()) return ce;
  Tensor<float> mse = mse_loss(output.reconstruction, pooled_target);
  return add(ce, scale(mse, static_cast<float>(lambda)));
}

AdamW::AdamW(std::vector<std::pair<std::string, Tensor<float>>> params, double weight_decay)
    : params_(std::move(params)), weight_decay_(weight_decay) {
  for (const auto& [name, t] : params_) {
    (void)name;
    m_.emplace_back(static_cast<size_t>(t.numel()), 0.0f);
    v_.emplace_back(static_cast<size_t>(t.numel()), 0.0f);
  }
}

void AdamW::step(double lr) {
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (size_t p = 0; p < params_.size(); ++p) {
    Tensor<float>& t = params_[p].second;
    const auto* g = t.grad();
    float* w = t.data();
    const int64_t n = t.numel();
    float* m = m_[p].data();
    float* v = v_[p].data();
    const float decay = static_cast<float>(1.0 - lr * weight_decay_);
    for (int64_t i = 0; i < n; ++i) {
      const double gi = g ? static_cast<double>((*g)[i]) : 0.0;
      const double mi = beta1 * m[i] + (1.0 - beta1) * gi;
      const double vi = beta2 * v[i] + (1.0 - beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps);
      w[i] = decay * w[i] - static_cast<float>(update);
    }
  }
}

TrainingMonitor::TrainingMonitor(const TrainConfig& cfg) : cfg_(cfg), lr_(cfg.lr) {
  cfg_.validate();
}

TrainingMonitor::Decision TrainingMonitor::observe(double val_accuracy) {
  ++epoch_;
  Decision d;
  if (val_accuracy > best_acc_) {
    best_acc_ = val_accuracy;
    best_epoch_ = epoch_;
    plateau_count_ = 0;
    stall_count_ = 0;
    d.improved = true;
  } else {
    ++plateau_count_;
    ++stall_count_;
    if (plateau_count_ >= cfg_.plateau_patience) {
      lr_ *= cfg_.plateau_factor;
      plateau_count_ = 0;
      d.reduced_lr = true;
    }
    if (stall_count_ >= cfg_.early_stop_patience) d.stop = true;
  }
  d.next_lr = lr_;
  return d;
}

std::string TrainHistory::csv() const {
  std::ostringstream out;
  out << "epoch,train_loss,train_acc,val_loss,val_acc,lr\n";
  char buf[200];
  for (const auto& e : epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.8f,%.8f,%.8f,%.8f,%.8g\n", e.epoch, e.train_loss,
                  e.train_acc, e.val_loss, e.val_acc, e.lr);
    out << buf;
  }
  return out.str();
}

namespace {

std::vector<int> argmax_rows(const Tensor<float>& logits) {
  const int64_t b = logits.dim(0), k = logits.dim(1);
  std::vector<int> out(static_cast<size_t>(b));
  const float* p = logits.data();
  for (int64_t i = 0; i < b; ++i) {
    int best = 0;
    for (int64_t j = 1; j < k; ++j)
      if (p[i * k + j] > p[i * k + best]) best = static_cast<int>(j);
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

std::vector<std::vector<int64_t>> batch_indices(const std::vector<int64_t>& order,
                                                int batch_size) {
  std::vector<std::vector<int64_t>> out;
  for (size_t i = 0; i < order.size(); i += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(order.size(), i + static_cast<size_t>(batch_size));
    out.emplace_back(order.begin() + static_cast<int64_t>(i),
                     order.begin() + static_cast<int64_t>(end));
  }
  return out;
}

}  // namespace

EvalResult evaluate(AudronModel<float>& model, const FeatureSet& data, int batch_size,
                    double lambda) {
  if (data.count() == 0) throw DataError("evaluate: empty dataset");
  std::vector<int64_t> order(static_cast<size_t>(data.count()));
  for (int64_t i = 0; i < data.count(); ++i) order[static_cast<size_t>(i)] = i;

  std::vector<int> truth, predicted;
  double loss_sum = 0.0;
  int64_t seen = 0;
  for (const auto& idx : batch_indices(order, batch_size)) {
    const Batch<float> batch = data.make_batch(idx);
    ForwardOutput<float> out = model.forward(batch, Mode::Eval);
    const Tensor<float> loss = combined_loss(out, batch.labels, batch.recon_target, lambda);
    loss_sum += static_cast<double>(loss.item()) * static_cast<double>(batch.size());
    seen += batch.size();
    const std::vector<int> pred = argmax_rows(out.logits);
    truth.insert(truth.end(), batch.labels.begin(), batch.labels.end());
    predicted.insert(predicted.end(), pred.begin(), pred.end());
  }
  EvalResult r;
  r.metrics = metrics_from_predictions(truth, predicted, model.config().n_classes);
  r.loss = loss_sum / static_cast<double>(seen);
  return r;
}

TrainResult train(AudronModel<float>& model, const FeatureSet& train_set,
                  const FeatureSet& val_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.count() == 0 || val_set.count() == 0)
    throw DataError("train: both splits need at least one batch");

  AdamW opt(model.params().named_trainable(), cfg.weight_decay);
  TrainingMonitor monitor(cfg);
  TrainResult result;
  result.best_state = model.params().to_checkpoint();  // fallback: initial state

  double lr = cfg.lr;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<int64_t> order(static_cast<size_t>(train_set.count()));
    for (int64_t i = 0; i < train_set.count(); ++i) order[static_cast<size_t>(i)] = i;
    Rng shuffle_rng(split_stream(cfg.seed, static_cast<uint64_t>(epoch)));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

    double loss_sum = 0.0;
    int64_t correct = 0, seen = 0;
    const auto batches = batch_indices(order, cfg.batch_size);
    for (size_t bi = 0; bi < batches.size(); ++bi) {
      try {
        const Batch<float> batch = train_set.make_batch(batches[bi]);
        Graph<float> graph;
        Graph<float>::Scope scope(graph);
        ForwardOutput<float> out = model.forward(batch, Mode::Train);
        const Tensor<float> loss =
            combined_loss(out, batch.labels, batch.recon_target, cfg.recon_weight);
        graph.backward(loss);
        opt.step(lr);
        model.params().zero_grad();

        loss_sum += static_cast<double>(loss.item()) * static_cast<double>(batch.size());
        seen += batch.size();
        const std::vector<int> pred = argmax_rows(out.logits);
        for (size_t i = 0; i < pred.size(); ++i)
          if (pred[i] == batch.labels[i]) ++correct;
      } catch (const NumericError& e) {
        throw NumericError("train: epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(bi) + ": " + e.what());
      }
    }

    const EvalResult val = evaluate(model, val_set, cfg.batch_size, cfg.recon_weight);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
    rec.val_loss = val.loss;
    rec.val_acc = val.metrics.accuracy;
    rec.lr = lr;
    result.history.epochs.push_back(rec);

    const TrainingMonitor::Decision d = monitor.observe(val.metrics.accuracy);
    if (d.improved) result.best_state = model.params().to_checkpoint();
    lr = d.next_lr;
    if (d.stop) break;
  }

  result.history.best_epoch = monitor.best_epoch();
  result.history.best_val_acc = monitor.best_accuracy();
  model.params().from_checkpoint(result.best_state);
  return result;
}

std::vector<BranchSet> standard_ablation_sets() {
  return {
      {false, true, true, true},   // no MFCC
      {true, false, true, true},   // no STFT
      {true, true, false, true},   // no RNN
      {true, true, true, false},   // no AE
      {true, true, true, true},    // full model
  };
}

std::vector<AblationRow> ablate(const ModelConfig& base, const FeatureSet& train_set,
                                const FeatureSet& val_set, const TrainConfig& cfg,
                                const std::vector<BranchSet>& configs) {
  std::vector<AblationRow> rows;
  for (const BranchSet& branches : configs) {
    if (branches.count() < 3)
      throw ParameterError("ablate: configurations need at least 3 branches, got " +
                           branches.csv());
    ModelConfig mc = base;
    mc.branches = branches;
    AudronModel<float> model(mc, cfg.seed);
    train(model, train_set, val_set, cfg);
    const EvalResult val = evaluate(model, val_set, cfg.batch_size, cfg.recon_weight);
    AblationRow row;
    row.name = branches.csv();
    row.branches = branches;
    row.metrics = val.metrics;
    rows.push_back(std::move(row));
  }
  // Drop column relative to the full model (0 for the full row itself).
  double full_acc = 0.0;
  for (const auto& r : rows)
    if (r.branches.count() == 4) full_acc = r.metrics.accuracy;
  for (auto& r : rows) r.drop_pct = (full_acc - r.metrics.accuracy) * 100.0;
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "config,accuracy,precision,recall,f1,perf_drop_pct\n";
  char buf[240];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.8f,%.8f,%.8f,%.8f,%.4f\n", r.name.c_str(),
                  r.metrics.accuracy, r.metrics.precision, r.metrics.recall, r.metrics.f1,
                  r.drop_pct);
    out << buf;
  }
  return out.str();
}

}  // namespace audron
