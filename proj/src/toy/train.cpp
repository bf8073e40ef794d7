#include "eatt/toy/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <utility>

#include "eatt/error.hpp"
#include "eatt/ops.hpp"
#include "eatt/random.hpp"

namespace eatt::toy {

void TrainConfig::validate() const {
  if (steps < 0) throw DomainError("train: steps must be >= 0");
  if (batch_size == 0) throw DomainError("train: batch_size must be positive");
  if (eval_every <= 0) throw DomainError("train: eval_every must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(adam_eps > 0))
    throw DomainError("train: Adam betas must lie in [0, 1) and eps must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"steps", c.steps},         {"batch_size", c.batch_size}, {"eval_every", c.eval_every},
       {"seed", c.seed},           {"schedule", c.schedule},     {"beta1", c.beta1},
       {"beta2", c.beta2},         {"adam_eps", c.adam_eps}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "steps")
      c.steps = value.get<long>();
    else if (key == "batch_size")
      c.batch_size = value.get<std::size_t>();
    else if (key == "eval_every")
      c.eval_every = value.get<long>();
    else if (key == "seed")
      c.seed = value.get<std::uint64_t>();
    else if (key == "schedule")
      from_json(value, c.schedule);
    else if (key == "beta1")
      c.beta1 = value.get<double>();
    else if (key == "beta2")
      c.beta2 = value.get<double>();
    else if (key == "adam_eps")
      c.adam_eps = value.get<double>();
    else
      throw FormatError("train config: unknown key '" + key + "'");
  }
}

std::string metrics_to_csv(std::span<const MetricRow> rows) {
  std::string out = "step,loss,token_accuracy,lr\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%ld,%.6f,%.4f,%.6e\n", r.step, r.loss, r.token_accuracy, r.lr);
    out += buf;
  }
  return out;
}

TrainState init_train_state(const ModelConfig& model, const ToyTaskConfig& task, const TrainConfig& train) {
  model.validate();
  task.validate();
  train.validate();
  TrainState s;
  s.model_config = model;
  s.task_config = task;
  s.train_config = train;
  s.rng.seed(train.seed);
  s.model = ToyModel(model, task.vocab_size, task.seq_len + 1, s.rng);
  for (const auto& [name, t] : s.model.params()) {
    s.adam_m.emplace(name, Tensor<float>(t.shape()));
    s.adam_v.emplace(name, Tensor<float>(t.shape()));
  }
  return s;
}

EvalResult evaluate(const ToyModel& model, std::span<const Example> examples, std::size_t chunk) {
  if (examples.empty()) throw DegenerateError("evaluate: no examples");
  double loss_sum = 0.0;
  std::size_t tokens = 0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < examples.size(); start += chunk) {
    const auto part = examples.subspan(start, std::min(chunk, examples.size() - start));
    const Batch batch = make_batch(part);
    std::size_t n = 0;
    for (std::size_t len : batch.target_lengths) n += len;

    Tape<float> tape;
    const auto bound = model.bind(tape, false);
    const Var<float> logits = model.forward(tape, bound, batch, {});
    loss_sum += static_cast<double>(cross_entropy(logits, std::span<const int>(batch.decoder_out), kPad).value()[0]) *
                static_cast<double>(n);
    tokens += n;

    const std::vector<int> decoded = model.greedy_decode(batch, batch.tgt_len);
    for (std::size_t b = 0; b < batch.size; ++b)
      for (std::size_t t = 0; t < batch.target_lengths[b]; ++t)
        correct += decoded[b * batch.tgt_len + t] == batch.decoder_out[b * batch.tgt_len + t];
  }
  return {loss_sum / static_cast<double>(tokens), static_cast<double>(correct) / static_cast<double>(tokens)};
}

namespace {

void record_eval(TrainState& s, const ToyDataset& data, double lr, const ProgressFn& progress) {
  const EvalResult r = evaluate(s.model, data.eval);
  s.history.push_back({s.step, r.loss, r.token_accuracy, lr});
  if (progress) progress(s.history.back());
}

double train_step(TrainState& s, const ToyDataset& data) {
  const TrainConfig& tc = s.train_config;
  const long t = s.step + 1;
  const double lr = tc.schedule(t);

  std::vector<std::size_t> idx(tc.batch_size);
  for (auto& i : idx) i = static_cast<std::size_t>(uniform_index(s.rng, data.train.size()));
  const Batch batch = make_batch(data.train, idx);

  auto diverged = [&](const char* why) {
    char buf[192];
    std::snprintf(buf, sizeof buf, "training diverged at step %ld (lr %.6e): %s", t, lr, why);
    return DivergenceError(t, lr, buf);
  };

  Tape<float> tape;
  const auto bound = s.model.bind(tape, true);
  ForwardOptions opts;
  opts.training = true;
  opts.rng = &s.rng;
  Var<float> loss;
  try {
    const Var<float> logits = s.model.forward(tape, bound, batch, opts);
    loss = cross_entropy(logits, std::span<const int>(batch.decoder_out), kPad);
  } catch (const DegenerateError& e) {
    // Overflowed activations leave a softmax row with no finite entry.
    throw diverged(e.what());
  }
  const double loss_value = loss.value()[0];
  if (!std::isfinite(loss_value)) throw diverged("loss is not finite");
  tape.backward(loss);

  const double c1 = 1.0 - std::pow(tc.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(tc.beta2, static_cast<double>(t));
  for (auto& [name, p] : s.model.params()) {
    const Tensor<float> g = tape.grad(bound.at(name));
    auto pd = p.data();
    auto md = s.adam_m.at(name).data();
    auto vd = s.adam_v.at(name).data();
    for (std::size_t i = 0; i < pd.size(); ++i) {
      const double gi = g[i];
      const double m = tc.beta1 * md[i] + (1.0 - tc.beta1) * gi;
      const double v = tc.beta2 * vd[i] + (1.0 - tc.beta2) * gi * gi;
      md[i] = static_cast<float>(m);
      vd[i] = static_cast<float>(v);
      pd[i] = static_cast<float>(pd[i] - lr * (m / c1) / (std::sqrt(v / c2) + tc.adam_eps));
    }
    if (!p.all_finite()) throw diverged(("parameter " + name + " is not finite").c_str());
  }
  s.step = t;
  s.train_losses.push_back(loss_value);
  return lr;
}

}  // namespace

void run_training(TrainState& s, const ToyDataset& data, long target_step, const ProgressFn& progress) {
  if (target_step < s.step) throw DomainError("run_training: target step precedes the current step");
  if (data.train.empty() && target_step > s.step) throw DegenerateError("run_training: empty training split");
  const long every = s.train_config.eval_every;
  if (s.history.empty()) record_eval(s, data, s.step == 0 ? 0.0 : s.train_config.schedule(s.step), progress);
  while (s.step < target_step) {
    const double lr = train_step(s, data);
    if (s.step % every == 0 || s.step == target_step) record_eval(s, data, lr, progress);
  }
}

TrainState train(const ModelConfig& model, const ToyTaskConfig& task, const TrainConfig& cfg,
                 const ProgressFn& progress) {
  const ToyDataset data = generate_task(task);
  TrainState s = init_train_state(model, task, cfg);
  run_training(s, data, cfg.steps, progress);
  return s;
}

std::vector<NonzeroStats> collect_binarization_stats(const ToyModel& model, std::span<const Example> examples,
                                                     std::size_t chunk) {
  if (!model.config().uses_eatt()) return {};
  if (examples.empty()) throw DegenerateError("collect_binarization_stats: no examples");

  struct Count {
    double ones = 0.0;
    double total = 0.0;
  };
  std::map<std::pair<std::string, int>, Count> counts;
  for (std::size_t start = 0; start < examples.size(); start += chunk) {
    const auto part = examples.subspan(start, std::min(chunk, examples.size() - start));
    const Batch batch = make_batch(part);
    Tape<float> tape;
    std::vector<BinaryTap> taps;
    ForwardOptions opts;
    opts.taps = &taps;
    model.forward(tape, model.bind(tape, false), batch, opts);

    for (const BinaryTap& tap : taps) {
      const Tensor<float>& bits = tap.bits.value();
      const std::size_t L = bits.dim(1);
      const std::size_t d = bits.dim(2);
      const auto& lengths = tap.encoder_side ? batch.source_lengths : batch.target_lengths;
      Count& c = counts[{tap.label, tap.layer}];
      for (std::size_t b = 0; b < batch.size; ++b) {
        const auto valid = bits.data().subspan(b * L * d, lengths[b] * d);
        c.ones += nonzero_ratio<float>(valid) * static_cast<double>(valid.size());
        c.total += static_cast<double>(valid.size());
      }
    }
  }

  std::vector<NonzeroStats> out;
  for (const char* label : {"encoder-self", "decoder-self", "decoder-cross-query", "decoder-cross-key"})
    for (int layer = 1; layer <= static_cast<int>(model.config().layers); ++layer) {
      auto it = counts.find({label, layer});
      if (it != counts.end()) out.push_back({label, layer, it->second.ones / it->second.total});
    }
  return out;
}

Checkpoint to_checkpoint(const TrainState& s) {
  Checkpoint c;
  for (const auto& [name, t] : s.model.params()) c.tensors.emplace_back(name, t);
  for (const auto& [name, t] : s.adam_m) c.tensors.emplace_back("adam.m." + name, t);
  for (const auto& [name, t] : s.adam_v) c.tensors.emplace_back("adam.v." + name, t);

  std::ostringstream rng;
  rng << s.rng;
  nlohmann::json history = nlohmann::json::array();
  for (const auto& r : s.history)
    history.push_back({{"step", r.step}, {"loss", r.loss}, {"token_accuracy", r.token_accuracy}, {"lr", r.lr}});
  c.meta = {{"kind", "toy-train-state"},
            {"step", s.step},
            {"model", s.model_config},
            {"task", s.task_config},
            {"train", s.train_config},
            {"vocab_size", s.model.vocab_size()},
            {"max_len", s.model.max_len()},
            {"rng", rng.str()},
            {"history", history},
            {"train_losses", s.train_losses}};
  return c;
}

TrainState from_checkpoint(const Checkpoint& c) {
  try {
    if (c.meta.value("kind", "") != "toy-train-state") throw FormatError("checkpoint does not hold a training state");
    TrainState s;
    s.model_config = c.meta.at("model").get<ModelConfig>();
    s.task_config = c.meta.at("task").get<ToyTaskConfig>();
    s.train_config = c.meta.at("train").get<TrainConfig>();
    s.step = c.meta.at("step").get<long>();

    ParamMap params;
    for (const auto& [name, t] : c.tensors) {
      if (name.rfind("adam.m.", 0) == 0)
        s.adam_m.emplace(name.substr(7), t);
      else if (name.rfind("adam.v.", 0) == 0)
        s.adam_v.emplace(name.substr(7), t);
      else
        params.emplace(name, t);
    }
    s.model = ToyModel(s.model_config, c.meta.at("vocab_size").get<int>(), c.meta.at("max_len").get<std::size_t>(),
                       std::move(params));
    for (const auto& [name, t] : s.model.params()) {
      auto m = s.adam_m.find(name);
      auto v = s.adam_v.find(name);
      if (m == s.adam_m.end() || v == s.adam_v.end() || m->second.shape() != t.shape() ||
          v->second.shape() != t.shape())
        throw FormatError("checkpoint: optimizer moments missing or misshapen for " + name);
    }

    std::istringstream rng(c.meta.at("rng").get<std::string>());
    rng >> s.rng;
    if (!rng) throw FormatError("checkpoint: unreadable rng state");
    for (const auto& r : c.meta.at("history"))
      s.history.push_back({r.at("step").get<long>(), r.at("loss").get<double>(), r.at("token_accuracy").get<double>(),
                           r.at("lr").get<double>()});
    s.train_losses = c.meta.at("train_losses").get<std::vector<double>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed metadata: ") + e.what());
  } catch (const DimensionError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace eatt::toy
