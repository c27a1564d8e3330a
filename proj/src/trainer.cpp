#include "maskdiff/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace maskdiff {

namespace {

namespace fs = std::filesystem;

double wall_ms_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - start)
      .count();
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

StageKind stage_from_name(const std::string& name) {
  if (name == "pretrain") return StageKind::Pretrain;
  if (name == "midtrain") return StageKind::Midtrain;
  if (name == "sft") return StageKind::Sft;
  throw std::invalid_argument("unknown stage: " + name);
}

std::string stage_name(StageKind stage) {
  switch (stage) {
    case StageKind::Pretrain: return "pretrain";
    case StageKind::Midtrain: return "midtrain";
    case StageKind::Sft: return "sft";
  }
  throw std::logic_error("unknown stage");
}

AdamW::AdamW(std::size_t size, const AdamWConfig& config)
    : config_(config), m_(size, 0.0), v_(size, 0.0) {}

void AdamW::update(std::vector<double>& params, const std::vector<double>& grad,
                   double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw std::invalid_argument("adamw: shape mismatch");
  ++step_count_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_count_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grad[i];
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grad[i] * grad[i];
    const double m_hat = m_[i] / bc1;
    const double v_hat = v_[i] / bc2;
    // decoupled decay uses the pre-update parameter value
    params[i] -= lr * (m_hat / (std::sqrt(v_hat) + config_.eps) +
                       config_.weight_decay * params[i]);
  }
}

void AdamW::save(const std::string& path) const {
  std::vector<TensorInfo> manifest = {
      {"m", {m_.size()}, 0, m_.size()},
      {"v", {v_.size()}, m_.size(), v_.size()}};
  std::vector<double> data;
  data.reserve(m_.size() + v_.size());
  data.insert(data.end(), m_.begin(), m_.end());
  data.insert(data.end(), v_.begin(), v_.end());
  nlohmann::json meta = {{"step_count", step_count_}};
  save_tensor_bundle(path, manifest, data, meta.dump());
}

AdamW AdamW::load(const std::string& path, const AdamWConfig& config) {
  LoadedBundle bundle = load_tensor_bundle(path);
  if (bundle.manifest.size() != 2 || bundle.manifest[0].name != "m" ||
      bundle.manifest[1].name != "v")
    throw std::runtime_error("adamw: unexpected bundle layout in " + path);
  const std::size_t size = bundle.manifest[0].size;
  AdamW opt(size, config);
  std::copy_n(bundle.data.begin(), size, opt.m_.begin());
  std::copy_n(bundle.data.begin() + static_cast<std::ptrdiff_t>(size), size,
              opt.v_.begin());
  opt.step_count_ =
      nlohmann::json::parse(bundle.meta_json).at("step_count").get<std::uint64_t>();
  return opt;
}

std::string StageConfig::to_json() const {
  nlohmann::json j;
  j["stage"] = stage_name(stage);
  j["steps"] = steps;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["seq_len"] = seq_len;
  j["sft_width"] = sft_width;
  j["peak_lr"] = peak_lr;
  j["lr_schedule"] = lr_schedule == LrScheduleKind::Cosine ? "cosine" : "linear-decay";
  j["warmup_fraction"] = warmup_fraction;
  j["adamw"] = {{"beta1", adamw.beta1},
                {"beta2", adamw.beta2},
                {"eps", adamw.eps},
                {"weight_decay", adamw.weight_decay}};
  j["strategy"] = {{"s1", strategy.p_s1},
                   {"s2", strategy.p_s2},
                   {"s3", strategy.p_s3},
                   {"block_sizes", strategy.block_sizes}};
  if (curriculum.has_value())
    j["curriculum"] = nlohmann::json::parse(curriculum->to_json());
  j["seed"] = seed;
  j["checkpoint_interval"] = checkpoint_interval;
  j["early_stopping"] = early_stopping;
  j["early_stop_patience"] = early_stop_patience;
  j["early_stop_eval_n"] = early_stop_eval_n;
  j["early_stop_eval_steps"] = early_stop_eval_steps;
  return j.dump(2);
}

StageConfig StageConfig::from_json(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text);
  StageConfig c;
  c.stage = stage_from_name(j.at("stage").get<std::string>());
  c.steps = j.value("steps", std::size_t{0});
  c.epochs = j.value("epochs", std::size_t{0});
  c.batch_size = j.value("batch_size", std::size_t{32});
  c.seq_len = j.value("seq_len", std::size_t{64});
  c.sft_width = j.value("sft_width", std::size_t{80});
  c.peak_lr = j.value("peak_lr", 3e-4);
  c.lr_schedule = j.value("lr_schedule", std::string("linear-decay")) == "cosine"
                      ? LrScheduleKind::Cosine
                      : LrScheduleKind::LinearDecay;
  c.warmup_fraction = j.value("warmup_fraction", 0.0);
  if (j.contains("adamw")) {
    const auto& a = j["adamw"];
    c.adamw.beta1 = a.value("beta1", 0.9);
    c.adamw.beta2 = a.value("beta2", 0.999);
    c.adamw.eps = a.value("eps", 1e-8);
    c.adamw.weight_decay = a.value("weight_decay", 0.0);
  }
  if (j.contains("strategy")) {
    const auto& s = j["strategy"];
    c.strategy.p_s1 = s.value("s1", 0.0);
    c.strategy.p_s2 = s.value("s2", 0.0);
    c.strategy.p_s3 = s.value("s3", 0.0);
    if (s.contains("block_sizes"))
      c.strategy.block_sizes = s["block_sizes"].get<std::vector<std::size_t>>();
  }
  if (j.contains("curriculum"))
    c.curriculum = CurriculumTable::from_json(j["curriculum"].dump());
  c.seed = j.value("seed", std::uint64_t{1});
  c.checkpoint_interval = j.value("checkpoint_interval", std::size_t{0});
  c.early_stopping = j.value("early_stopping", false);
  c.early_stop_patience = j.value("early_stop_patience", std::size_t{2});
  c.early_stop_eval_n = j.value("early_stop_eval_n", std::size_t{64});
  c.early_stop_eval_steps = j.value("early_stop_eval_steps", std::size_t{8});
  return c;
}

double lr_at(const StageConfig& config, std::size_t step,
             std::size_t total_steps) {
  if (total_steps == 0) throw std::invalid_argument("lr_at: zero total steps");
  if (step > total_steps) throw std::invalid_argument("lr_at: step out of range");
  if (!(config.warmup_fraction >= 0.0 && config.warmup_fraction < 1.0))
    throw std::invalid_argument("lr_at: warmup fraction outside [0,1)");
  const auto warmup = static_cast<std::size_t>(
      config.warmup_fraction * static_cast<double>(total_steps));
  if (warmup > 0 && step <= warmup)
    return config.peak_lr * static_cast<double>(step) /
           static_cast<double>(warmup);
  const double progress = static_cast<double>(step - warmup) /
                          static_cast<double>(total_steps - warmup);
  if (config.lr_schedule == LrScheduleKind::Cosine)
    return config.peak_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
  return config.peak_lr * (1.0 - progress);
}

std::string TrainLog::to_jsonl(bool include_timing) const {
  std::ostringstream out;
  for (const auto& r : records) {
    out << "{\"step\":" << r.step << ",\"loss\":" << format_double(r.loss)
        << ",\"lr\":" << format_double(r.lr) << ",\"plain\":" << r.n_plain
        << ",\"s1\":" << r.n_s1 << ",\"s2\":" << r.n_s2 << ",\"s3\":" << r.n_s3
        << ",\"tokens\":" << r.tokens;
    if (include_timing) out << ",\"wall_ms\":" << format_double(r.wall_ms);
    out << "}\n";
  }
  return out.str();
}

TrainLog TrainLog::from_jsonl(const std::string& text) {
  TrainLog log;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    StepRecord r;
    r.step = j.at("step").get<std::size_t>();
    r.loss = j.at("loss").get<double>();
    r.lr = j.at("lr").get<double>();
    r.n_plain = j.at("plain").get<std::uint32_t>();
    r.n_s1 = j.at("s1").get<std::uint32_t>();
    r.n_s2 = j.at("s2").get<std::uint32_t>();
    r.n_s3 = j.at("s3").get<std::uint32_t>();
    r.tokens = j.at("tokens").get<std::size_t>();
    r.wall_ms = j.value("wall_ms", 0.0);
    log.records.push_back(r);
  }
  return log;
}

void TrainLog::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("trainlog: cannot open " + path);
  f << to_jsonl(true);
}

TrainLog TrainLog::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("trainlog: cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_jsonl(ss.str());
}

std::string render_answer(const TokenSeq& generated, const Vocabulary& vocab) {
  std::string out;
  for (TokenId tok : generated) {
    if (tok == vocab.eos_id()) break;
    if (tok == vocab.pad_id()) continue;
    if (vocab.is_glyph(tok)) {
      out.push_back(vocab.glyph(tok));
    } else if (tok == vocab.mask_id()) {
      out.push_back('#');
    } else if (tok == vocab.bos_id()) {
      out.push_back('^');
    } else {
      out.push_back('|');
    }
  }
  return out;
}

double sft_exact_match(const TinyTransformer& model, const Vocabulary& vocab,
                       const std::vector<SftExample>& examples,
                       std::size_t sft_width, std::size_t decode_steps,
                       std::uint64_t seed) {
  if (examples.empty()) return 0.0;
  std::size_t hits = 0;
  Rng rng(seed);
  for (std::size_t n = 0; n < examples.size(); ++n) {
    const auto& ex = examples[n];
    TokenSeq prompt;
    prompt.push_back(vocab.bos_id());
    prompt.insert(prompt.end(), ex.prompt.begin(), ex.prompt.end());
    prompt.push_back(vocab.sep_id());
    if (sft_width <= prompt.size())
      throw std::invalid_argument("sft_exact_match: prompt exceeds width");
    const std::size_t gen_len = sft_width - prompt.size();
    DecodePolicy policy;
    policy.mode = DecodeMode::PerStepQuota;
    policy.steps = std::min(decode_steps, gen_len);
    policy.temperature = 0.0;
    const TokenSeq out =
        generate(prompt, gen_len, model, policy, vocab, rng.fork(n + 1));
    if (render_answer(out, vocab) == vocab.detokenize(ex.response)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

namespace {

struct StageSetup {
  std::size_t items = 0;            // rows or examples
  std::size_t steps_per_epoch = 0;
  std::size_t total_steps = 0;
};

StageSetup resolve_stage(const StageConfig& config, const Corpus& corpus) {
  StageSetup s;
  if (config.stage == StageKind::Sft) {
    if (corpus.sft_examples == nullptr || corpus.sft_examples->empty())
      throw std::invalid_argument("train: sft stage needs sft examples");
    s.items = corpus.sft_examples->size();
  } else {
    if (corpus.shard == nullptr || corpus.shard->n_seq == 0)
      throw std::invalid_argument("train: packed stage needs a shard");
    if (corpus.shard->seq_len != config.seq_len)
      throw std::invalid_argument("train: shard seq_len does not match config");
    s.items = corpus.shard->n_seq;
  }
  s.steps_per_epoch = (s.items + config.batch_size - 1) / config.batch_size;
  // A zero budget is a no-op stage: parameters pass through unchanged.
  s.total_steps = config.stage == StageKind::Pretrain
                      ? config.steps
                      : config.epochs * s.steps_per_epoch;
  return s;
}

StrategyConfig stage_strategy(const StageConfig& config, std::size_t epoch_index) {
  if (!config.curriculum.has_value()) return config.strategy;
  const auto& rows = config.curriculum->rows();
  // clamp to the last row when training runs past the table
  const int epoch = std::min<int>(static_cast<int>(epoch_index) + 1,
                                  rows.back().epoch);
  StrategyConfig c = curriculum_lookup(*config.curriculum, epoch);
  c.block_sizes = config.strategy.block_sizes;
  return c;
}

void write_stage_checkpoint(const std::string& out_dir, StageKind stage,
                            std::size_t step, const TinyTransformer& model,
                            const Rng& rng, const AdamW& opt,
                            const TrainLog& log) {
  const fs::path dir =
      fs::path(out_dir) / stage_name(stage) / std::to_string(step);
  fs::create_directories(dir);
  save_checkpoint((dir / "model.ckpt").string(), model, rng);
  opt.save((dir / "optim.ckpt").string());
  log.save((dir / "trainlog.jsonl").string());
}

}  // namespace

TrainResult train_stage(const StageConfig& config, TinyTransformer& model,
                        const Corpus& corpus, const Vocabulary& vocab,
                        const std::string& out_dir, std::size_t resume_step) {
  const StageSetup setup = resolve_stage(config, corpus);
  const std::size_t total = setup.total_steps;

  Rng rng(config.seed);
  AdamW opt(model.param_count(), config.adamw);
  TrainLog log;
  std::size_t start_step = 0;

  if (resume_step > 0) {
    const fs::path dir = fs::path(out_dir) / stage_name(config.stage) /
                         std::to_string(resume_step);
    LoadedCheckpoint ckpt = load_checkpoint((dir / "model.ckpt").string());
    if (ckpt.model.config().vocab_size != model.config().vocab_size)
      throw std::runtime_error("train: resume checkpoint vocabulary mismatch");
    model.params() = ckpt.model.params();
    rng = ckpt.rng;
    opt = AdamW::load((dir / "optim.ckpt").string(), config.adamw);
    log = TrainLog::load((dir / "trainlog.jsonl").string());
    start_step = resume_step;
  }

  const BatchIterator iterator(setup.items, config.batch_size, config.seed);

  // SFT early stopping state
  std::vector<double> best_params;
  double best_metric = -1.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_since_best = 0;
  bool stopped_early = false;

  std::vector<double> grad;
  for (std::size_t step = start_step; step < total; ++step) {
    const auto step_start = std::chrono::steady_clock::now();
    const std::size_t epoch_index = step / setup.steps_per_epoch;
    const auto batch_rows =
        iterator.batch(epoch_index, step % setup.steps_per_epoch);

    TrainBatch batch;
    StepRecord record;
    record.step = step;

    if (config.stage == StageKind::Sft) {
      const double progress =
          static_cast<double>(step) / static_cast<double>(total);
      const double first_epoch_fraction =
          1.0 / static_cast<double>(config.epochs);
      for (const std::uint32_t idx : batch_rows) {
        const SftExample& ex = (*corpus.sft_examples)[idx];
        const SftRow row = build_sft_row(ex, vocab, config.sft_width);
        const SftMaskResult mask =
            sft_conditioning(row.tokens.size(), row.prompt_begin,
                             row.prompt_len, progress, first_epoch_fraction);
        const double t = sample_training_noise(rng);
        const NoiseSchedule schedule;
        TokenSeq xt =
            forward_corrupt(row.tokens, mask.maskable, t, schedule, vocab, rng);
        batch.x0.push_back(row.tokens);
        batch.xt.push_back(std::move(xt));
        batch.t.push_back(t);
        ++record.n_plain;
        record.tokens += row.tokens.size();
      }
    } else {
      const StrategyConfig strat = stage_strategy(config, epoch_index);
      const NoiseSchedule schedule;
      for (const std::uint32_t idx : batch_rows) {
        TokenSeq tokens = corpus.shard->row_tokens(idx);
        MaskabilityMask maskable = row_maskability(*corpus.shard, idx, vocab);
        const StrategySelection sel = select_strategies(strat, rng);
        if (sel.s1) {
          const MaskabilityMask s1 = apply_s1(tokens.size(), rng);
          for (std::size_t i = 0; i < maskable.size(); ++i)
            maskable[i] = maskable[i] && s1[i];
          ++record.n_s1;
        } else if (sel.s2) {
          S2Result s2 = apply_s2(tokens, vocab, rng);
          tokens = std::move(s2.tokens);
          for (std::size_t i = 0; i < maskable.size(); ++i)
            maskable[i] = maskable[i] && s2.maskable[i];
          ++record.n_s2;
        } else {
          ++record.n_plain;
        }
        const double t = sample_training_noise(rng);
        TokenSeq xt;
        if (sel.s3) {
          ++record.n_s3;
          const std::size_t k = std::min(sel.s3_block, tokens.size());
          const auto decision = apply_s3(tokens.size(), t, k, schedule, rng);
          xt = tokens;
          for (std::size_t i = 0; i < xt.size(); ++i)
            if (maskable[i] && decision[i]) xt[i] = vocab.mask_id();
        } else {
          xt = forward_corrupt(tokens, maskable, t, schedule, vocab, rng);
        }
        batch.x0.push_back(std::move(tokens));
        batch.xt.push_back(std::move(xt));
        batch.t.push_back(t);
        record.tokens += config.seq_len;
      }
    }

    double loss = 0.0;
    try {
      loss = model.loss_gradient(batch, vocab, grad);
    } catch (const std::runtime_error&) {
      // halt with a diagnostic checkpoint so the failure state is inspectable
      const fs::path dir = fs::path(out_dir) / stage_name(config.stage) /
                           (std::to_string(step) + "_diag");
      fs::create_directories(dir);
      save_checkpoint((dir / "model.ckpt").string(), model, rng);
      log.save((dir / "trainlog.jsonl").string());
      throw;
    }
    const double lr = lr_at(config, step, total);
    opt.update(model.params(), grad, lr);

    record.loss = loss;
    record.lr = lr;
    record.wall_ms = wall_ms_since(step_start);
    log.records.push_back(record);

    const std::size_t done = step + 1;
    if (config.checkpoint_interval > 0 && done < total &&
        done % config.checkpoint_interval == 0)
      write_stage_checkpoint(out_dir, config.stage, done, model, rng, opt, log);

    // Epoch boundary bookkeeping for SFT early stopping.
    const bool epoch_end = done % setup.steps_per_epoch == 0 || done == total;
    if (config.stage == StageKind::Sft && config.early_stopping && epoch_end &&
        corpus.sft_eval != nullptr && !corpus.sft_eval->empty()) {
      const double metric = sft_exact_match(
          model, vocab, *corpus.sft_eval, config.sft_width,
          config.early_stop_eval_steps, config.seed ^ 0xe7a1u);
      const std::size_t epoch_number = (done - 1) / setup.steps_per_epoch + 1;
      if (metric > best_metric) {
        best_metric = metric;
        best_params = model.params();
        best_epoch = epoch_number;
        epochs_since_best = 0;
      } else {
        ++epochs_since_best;
        if (epochs_since_best >= config.early_stop_patience) {
          stopped_early = true;
        }
      }
      if (stopped_early || done == total) {
        if (!best_params.empty()) model.params() = best_params;
      }
      if (stopped_early) {
        TrainResult result;
        result.final_step = done;
        write_stage_checkpoint(out_dir, config.stage, done, model, rng, opt, log);
        result.checkpoint_dir = (fs::path(out_dir) / stage_name(config.stage) /
                                 std::to_string(done))
                                    .string();
        result.log = std::move(log);
        result.early_stopped = true;
        result.best_epoch = best_epoch;
        result.best_exact_match = best_metric;
        return result;
      }
    }
  }

  write_stage_checkpoint(out_dir, config.stage, total, model, rng, opt, log);
  TrainResult result;
  result.final_step = total;
  result.checkpoint_dir =
      (fs::path(out_dir) / stage_name(config.stage) / std::to_string(total))
          .string();
  result.log = std::move(log);
  result.best_epoch = best_epoch;
  result.best_exact_match = best_metric;
  return result;
}

}  // namespace maskdiff
