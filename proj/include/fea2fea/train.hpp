#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "fea2fea/autodiff.hpp"
#include "fea2fea/graph.hpp"
#include "fea2fea/model.hpp"
#include "fea2fea/optim.hpp"
#include "fea2fea/random.hpp"
#include "fea2fea/stats.hpp"

namespace fea2fea {

struct TrainOptions {
  std::size_t epochs = 200;
  std::size_t patience = 20;
  AdamOptions adam{0.01, 0.9, 0.999, 1e-8, 5e-4};
};

/// Labels per output row (node or graph) and the row sets of each split.
struct Supervision {
  std::vector<ClassId> labels;
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct TrainResult {
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
  double test_accuracy = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::vector<double> loss_curve;  // training loss per epoch
};

inline std::vector<ClassId> argmax_rows(const Tensor& scores) {
  std::vector<ClassId> out(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    auto row = scores.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[r] = static_cast<ClassId>(best);
  }
  return out;
}

inline double subset_accuracy(std::span<const ClassId> pred, std::span<const ClassId> truth, std::span<const std::size_t> rows) {
  if (rows.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t r : rows) hits += pred[r] == truth[r];
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

/// Evaluation-mode forward pass; returns the log-probabilities.
inline Tensor predict_log_probs(GnnModel& model, const ModelInput& in) {
  Tape tape;
  Rng unused(0);
  return model.forward(tape, in, false, unused).log_probs.value();
}

inline std::vector<ClassId> predict(GnnModel& model, const ModelInput& in) { return argmax_rows(predict_log_probs(model, in)); }

/// Full-batch training with Adam and early stopping.
///
/// After every epoch the model is evaluated on the validation rows (the
/// training rows when there is no validation split). The parameters of the
/// best epoch are kept: higher validation accuracy wins, equal accuracy
/// with lower validation loss also counts as an improvement. Training stops
/// after `patience` epochs without improvement.
inline TrainResult train_classifier(GnnModel& model, const ModelInput& in, const Supervision& sup, const TrainOptions& opt, std::uint64_t seed) {
  if (sup.train.empty()) throw DataError("training split is empty");
  const auto& select = sup.val.empty() ? sup.train : sup.val;
  Rng dropout_rng(derive_seed(seed, 0xD50));
  AdamState adam;
  TrainResult result;

  ParameterStore best = model.parameters();
  std::vector<BatchNormStats> best_bn = model.batchnorm_stats();
  double best_acc = -1.0, best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    {
      Tape tape;
      auto out = model.forward(tape, in, true, dropout_rng);
      Var loss = nll_loss(out.log_probs, sup.labels, sup.train);
      model.parameters().zero_grad();
      tape.backward(loss);
      adam_step(model.parameters().all(), adam, opt.adam);
      result.loss_curve.push_back(loss.value().item());
    }
    ++result.epochs_run;

    Tape tape;
    Rng unused(0);
    auto out = model.forward(tape, in, false, unused);
    const auto pred = argmax_rows(out.log_probs.value());
    const double acc = subset_accuracy(pred, sup.labels, select);
    const double loss = nll_loss(out.log_probs, sup.labels, select).value().item();
    if (acc > best_acc || (acc == best_acc && loss < best_loss)) {
      best_acc = acc;
      best_loss = loss;
      best = model.parameters();
      best_bn = model.batchnorm_stats();
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= opt.patience) {
      break;
    }
  }

  for (std::size_t i = 0; i < best.size(); ++i) model.parameters()[i].value = best[i].value;
  model.batchnorm_stats() = best_bn;
  const auto pred = predict(model, in);
  result.train_accuracy = subset_accuracy(pred, sup.labels, sup.train);
  result.val_accuracy = subset_accuracy(pred, sup.labels, sup.val);
  result.test_accuracy = subset_accuracy(pred, sup.labels, sup.test);
  return result;
}

/// Columns of `m` as an N x cols.size() tensor, each standardized with the
/// mean and standard deviation of `fit_rows`. Columns with no spread on
/// those rows are passed through unchanged (so a constant column stays a
/// non-zero constant).
inline Tensor standardized_columns(const Matrix& m, std::span<const std::size_t> cols, std::span<const std::size_t> fit_rows) {
  Tensor out({m.rows, cols.size()});
  for (std::size_t k = 0; k < cols.size(); ++k) {
    const std::size_t c = cols[k];
    double mu = 0.0, ss = 0.0;
    for (std::size_t r : fit_rows) mu += m(r, c);
    mu /= static_cast<double>(std::max<std::size_t>(1, fit_rows.size()));
    for (std::size_t r : fit_rows) ss += (m(r, c) - mu) * (m(r, c) - mu);
    const double sd = std::sqrt(ss / static_cast<double>(std::max<std::size_t>(1, fit_rows.size())));
    const bool flat = !(sd > 1e-12);
    for (std::size_t r = 0; r < m.rows; ++r) out(r, k) = flat ? m(r, c) : (m(r, c) - mu) / sd;
  }
  return out;
}

inline Tensor to_tensor(const Matrix& m) { return Tensor({m.rows, m.cols}, m.values); }

}  // namespace fea2fea
