#include "alsim/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "alsim/binary_io.hpp"
#include "alsim/errors.hpp"

namespace alsim {

namespace {

constexpr std::string_view kCheckpointMagic = "ALSIMCKP";
constexpr std::uint32_t kCheckpointVersion = 1;

void check_dimensions(const LinearModel& model, const Examples& data) {
  if (data.features.size() != data.labels.size()) {
    throw ValidationError("examples", "feature and label counts differ");
  }
  if (model.weights.size() != model.label_count * model.feature_count || model.bias.size() != model.label_count) {
    throw ValidationError("model", "parameter storage does not match declared dimensions");
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] >= model.label_count) {
      throw ValidationError("examples", fmt::format("label {} outside model's {} labels", data.labels[i],
                                                    model.label_count));
    }
    const auto& entries = data.features[i]->entries;
    if (!entries.empty() && entries.back().index >= model.feature_count) {
      throw ValidationError("examples", fmt::format("feature index {} outside model's {} features",
                                                    entries.back().index, model.feature_count));
    }
  }
}

// -log softmax(scores)[label], computed stably.
double cross_entropy(std::span<const double> scores, LabelIndex label) {
  const double mx = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double s : scores) sum += std::exp(s - mx);
  return std::log(sum) + mx - scores[label];
}

double squared_weights(const LinearModel& model) {
  double s = 0.0;
  for (double w : model.weights) s += w * w;
  return s;
}

}  // namespace

LinearModel LinearModel::zeros(std::size_t label_count, std::size_t feature_count) {
  LinearModel m;
  m.label_count = label_count;
  m.feature_count = feature_count;
  m.weights.assign(label_count * feature_count, 0.0);
  m.bias.assign(label_count, 0.0);
  return m;
}

bool LinearModel::all_finite() const {
  auto finite = [](double v) { return std::isfinite(v); };
  return std::all_of(weights.begin(), weights.end(), finite) && std::all_of(bias.begin(), bias.end(), finite);
}

std::vector<double> linear_scores(const LinearModel& model, const SparseVector& x) {
  std::vector<double> s(model.label_count);
  for (std::size_t c = 0; c < model.label_count; ++c) s[c] = x.dot(model.row(c)) + model.bias[c];
  return s;
}

std::vector<double> softmax(std::span<const double> scores) {
  std::vector<double> p(scores.begin(), scores.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double sum = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : p) v /= sum;
  return p;
}

std::vector<double> predict_proba(const LinearModel& model, const SparseVector& x) {
  return softmax(linear_scores(model, x));
}

std::vector<std::vector<double>> predict_proba(const LinearModel& model, std::span<const SparseVector* const> xs) {
  std::vector<std::vector<double>> out;
  out.reserve(xs.size());
  for (const auto* x : xs) out.push_back(predict_proba(model, *x));
  return out;
}

LabelIndex predict_label(const LinearModel& model, const SparseVector& x) {
  const auto s = linear_scores(model, x);
  return static_cast<LabelIndex>(std::max_element(s.begin(), s.end()) - s.begin());
}

double objective(const LinearModel& model, const Examples& data, double l2) {
  check_dimensions(model, data);
  double loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    loss += cross_entropy(linear_scores(model, *data.features[i]), data.labels[i]);
  }
  if (data.size() > 0) loss /= static_cast<double>(data.size());
  return loss + 0.5 * l2 * squared_weights(model);
}

Gradient objective_gradient(const LinearModel& model, const Examples& data, double l2) {
  check_dimensions(model, data);
  Gradient g;
  g.weights.assign(model.weights.size(), 0.0);
  g.bias.assign(model.label_count, 0.0);
  const double inv_n = data.size() > 0 ? 1.0 / static_cast<double>(data.size()) : 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& x = *data.features[i];
    const auto scores = linear_scores(model, x);
    g.loss += cross_entropy(scores, data.labels[i]);
    auto p = softmax(scores);
    p[data.labels[i]] -= 1.0;
    for (std::size_t c = 0; c < model.label_count; ++c) {
      const double r = p[c] * inv_n;
      g.bias[c] += r;
      double* row = g.weights.data() + c * model.feature_count;
      for (const auto& e : x.entries) row[e.index] += r * e.weight;
    }
  }
  g.loss *= inv_n;
  g.loss += 0.5 * l2 * squared_weights(model);
  for (std::size_t k = 0; k < g.weights.size(); ++k) g.weights[k] += l2 * model.weights[k];
  return g;
}

LinearModel train_online(LinearModel model, const Examples& data, const TrainerConfig& cfg, Rng& rng) {
  if (data.size() == 0) throw ValidationError("labeled_docs", "cannot train on zero documents");
  check_dimensions(model, data);

  const double lr = cfg.learning_rate;
  const double decay = 1.0 - lr * cfg.l2_penalty;
  if (!(decay > 0.0)) throw ValidationError("trainer", "learning_rate * l2_penalty must be < 1");
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  std::vector<std::size_t> order(data.size());
  std::uint64_t update = 0;

  // Within an epoch weights are held as scale * raw, making the L2 shrink
  // O(1) per minibatch.
  double scale = 1.0;
  auto fold_scale = [&] {
    for (double& w : model.weights) w *= scale;
    scale = 1.0;
  };
  std::vector<std::vector<double>> residuals;

  for (std::int64_t epoch = 0; epoch < cfg.epochs_per_step; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));

    for (std::size_t start = 0; start < order.size(); start += batch, ++update) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double step_scale = lr / static_cast<double>(end - start);

      // Residuals use the pre-update parameters for the whole minibatch.
      residuals.clear();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const auto& x = *data.features[i];
        std::vector<double> scores(model.label_count);
        for (std::size_t c = 0; c < model.label_count; ++c) scores[c] = scale * x.dot(model.row(c)) + model.bias[c];
        batch_loss += cross_entropy(scores, data.labels[i]);
        auto p = softmax(scores);
        p[data.labels[i]] -= 1.0;
        residuals.push_back(std::move(p));
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError(fmt::format("non-finite training loss at step {}, epoch {}, update {}",
                                       model.step_counter, epoch, update));
      }

      scale *= decay;
      if (scale < 1e-6) fold_scale();
      for (std::size_t k = start; k < end; ++k) {
        const auto& x = *data.features[order[k]];
        const auto& r = residuals[k - start];
        for (std::size_t c = 0; c < model.label_count; ++c) {
          const double step = step_scale * r[c];
          model.bias[c] -= step;
          const double raw_step = step / scale;
          double* row = model.weights.data() + c * model.feature_count;
          for (const auto& e : x.entries) row[e.index] -= raw_step * e.weight;
        }
      }
    }
    // Folding at every epoch boundary keeps k+k epochs over two calls
    // bit-identical to 2k epochs in one call.
    fold_scale();
  }
  if (!model.all_finite()) {
    throw NumericError(fmt::format("non-finite parameters after training step {}", model.step_counter));
  }
  ++model.step_counter;
  return model;
}

EvaluationReport score_predictions(std::span<const LabelIndex> predicted, std::span<const LabelIndex> gold,
                                   std::size_t label_count, std::string split) {
  if (predicted.size() != gold.size()) throw ValidationError("predictions", "length differs from gold labels");
  std::vector<std::uint64_t> tp(label_count, 0), fp(label_count, 0), fn(label_count, 0);
  std::uint64_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i] >= label_count || gold[i] >= label_count) {
      throw ValidationError("predictions", "label index out of range");
    }
    if (predicted[i] == gold[i]) {
      ++tp[gold[i]];
      ++correct;
    } else {
      ++fp[predicted[i]];
      ++fn[gold[i]];
    }
  }

  auto ratio = [](std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };

  EvaluationReport report;
  report.split = std::move(split);
  report.per_label.resize(label_count);
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < label_count; ++c) {
    auto& s = report.per_label[c];
    s.precision = ratio(tp[c], tp[c] + fp[c]);
    s.recall = ratio(tp[c], tp[c] + fn[c]);
    s.f1 = (s.precision + s.recall) == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / (s.precision + s.recall);
    s.support = tp[c] + fn[c];
    f1_sum += s.f1;
  }
  report.macro_f1 = label_count == 0 ? 0.0 : f1_sum / static_cast<double>(label_count);
  report.accuracy = ratio(correct, gold.size());
  return report;
}

EvaluationReport evaluate(const LinearModel& model, const Examples& data, std::string split) {
  if (data.size() == 0) throw ValidationError("split", "cannot evaluate on zero documents");
  check_dimensions(model, data);
  std::vector<LabelIndex> predicted;
  predicted.reserve(data.size());
  for (const auto* x : data.features) predicted.push_back(predict_label(model, *x));
  return score_predictions(predicted, data.labels, model.label_count, std::move(split));
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const auto& m = ckpt.model;
  std::string out;
  binio::put_bytes(out, kCheckpointMagic);
  binio::put<std::uint32_t>(out, kCheckpointVersion);
  binio::put<std::uint64_t>(out, m.feature_count);
  binio::put<std::uint64_t>(out, m.label_count);
  binio::put<std::uint64_t>(out, m.step_counter);
  out.reserve(out.size() + 8 * (m.weights.size() + m.bias.size()) + ckpt.rng_state.size() + 4);
  for (double w : m.weights) binio::put<double>(out, w);
  for (double b : m.bias) binio::put<double>(out, b);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.rng_state.size()));
  binio::put_bytes(out, ckpt.rng_state);
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  binio::Reader r(bytes, "checkpoint");
  if (r.bytes(kCheckpointMagic.size()) != kCheckpointMagic) throw CorruptArtifact("checkpoint: bad magic");
  if (r.get<std::uint32_t>() != kCheckpointVersion) throw CorruptArtifact("checkpoint: unsupported version");
  Checkpoint ckpt;
  auto& m = ckpt.model;
  m.feature_count = r.get<std::uint64_t>();
  m.label_count = r.get<std::uint64_t>();
  m.step_counter = r.get<std::uint64_t>();
  const std::uint64_t n = m.feature_count * m.label_count;
  if (n > r.remaining() / 8) throw CorruptArtifact("checkpoint: truncated");
  m.weights.resize(n);
  for (auto& w : m.weights) w = r.get<double>();
  m.bias.resize(m.label_count);
  for (auto& b : m.bias) b = r.get<double>();
  ckpt.rng_state = std::string(r.bytes(r.get<std::uint32_t>()));
  if (!r.done()) throw CorruptArtifact("checkpoint: trailing bytes");
  if (!m.all_finite()) throw CorruptArtifact("checkpoint: non-finite parameters");
  return ckpt;
}

void store_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Checkpoint restore_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptArtifact("checkpoint missing: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

FeatureTable::FeatureTable(const DatasetSplit& split, const Vocabulary& vocab) {
  vectors_.resize(split.train.size() + split.dev.size() + split.test.size());
  for (const auto* part : {&split.train, &split.dev, &split.test}) {
    for (const auto& doc : *part) vectors_.at(doc.id) = tfidf_vectorize(doc.text, vocab);
  }
}

OnlineTrainer::OnlineTrainer(const DatasetSplit& split, const FeatureTable& features, std::size_t feature_count,
                             TrainerConfig cfg)
    : split_(split),
      features_(features),
      cfg_(std::move(cfg)),
      model_(LinearModel::zeros(split.labels.size(), feature_count)) {}

void OnlineTrainer::train(std::span<const DocId> labeled_ids, std::span<const LabelIndex> labels, Rng& rng) {
  std::vector<const SparseVector*> xs;
  xs.reserve(labeled_ids.size());
  for (DocId id : labeled_ids) xs.push_back(&features_[id]);
  model_ = train_online(std::move(model_), Examples{xs, labels}, cfg_, rng);
}

EvaluationReport OnlineTrainer::evaluate_split(std::span<const AnnotatedDocument> docs, const std::string& tag) const {
  std::vector<const SparseVector*> xs;
  std::vector<LabelIndex> ys;
  xs.reserve(docs.size());
  ys.reserve(docs.size());
  for (const auto& d : docs) {
    xs.push_back(&features_[d.id]);
    ys.push_back(d.gold_label);
  }
  return evaluate(model_, Examples{xs, ys}, tag);
}

EvaluationReport OnlineTrainer::evaluate_dev() const { return evaluate_split(split_.dev, "dev"); }
EvaluationReport OnlineTrainer::evaluate_test() const { return evaluate_split(split_.test, "test"); }

std::vector<std::vector<double>> OnlineTrainer::predict_proba(std::span<const DocId> ids) const {
  std::vector<std::vector<double>> out;
  out.reserve(ids.size());
  for (DocId id : ids) out.push_back(alsim::predict_proba(model_, features_[id]));
  return out;
}

void OnlineTrainer::set_model(LinearModel model) {
  if (model.label_count != model_.label_count || model.feature_count != model_.feature_count) {
    throw ValidationError("model", "restored model dimensions do not match the corpus");
  }
  model_ = std::move(model);
}

}  // namespace alsim
