#include "maskdiff/evalharness.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "maskdiff/stats.hpp"
#include "maskdiff/trainer.hpp"

namespace maskdiff {

namespace {

TokenSeq build_prompt(const std::string& text, const Vocabulary& vocab) {
  TokenSeq prompt;
  prompt.push_back(vocab.bos_id());
  const TokenSeq body = vocab.tokenize(text);
  prompt.insert(prompt.end(), body.begin(), body.end());
  prompt.push_back(vocab.sep_id());
  return prompt;
}

double time_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - start)
      .count();
}

}  // namespace

std::string EvalReport::to_json(bool include_timing) const {
  nlohmann::json j;
  j["task"] = task;
  j["sample_count"] = sample_count;
  j["exact_match"] = exact_match;
  j["seed"] = seed;
  j["config_fingerprint"] = config_fingerprint;
  nlohmann::json rows_json = nlohmann::json::array();
  for (const auto& r : rows)
    rows_json.push_back({{"steps", r.steps},
                         {"accuracy", r.accuracy},
                         {"mean_ms", include_timing ? r.mean_ms : 0.0},
                         {"std_ms", include_timing ? r.std_ms : 0.0}});
  j["rows"] = rows_json;
  return j.dump(2);
}

void EvalReport::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("eval report: cannot open " + path);
  f << to_json() << "\n";
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "steps,accuracy,mean_ms,std_ms\n";
  for (const auto& r : rows) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%zu,%.6f,%.4f,%.4f\n", r.steps, r.accuracy,
                  r.mean_ms, r.std_ms);
    out << buf;
  }
  return out.str();
}

void EvalReport::save_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("eval report: cannot open " + path);
  f << to_csv();
}

EvalReport evaluate(const Denoiser& model, const Vocabulary& vocab,
                    const ToyTaskConfig& task, const DecodePolicy& policy,
                    std::size_t n_samples, std::size_t gen_len,
                    std::uint64_t seed) {
  EvalReport report;
  report.task = toy_task_name(task.task);
  report.sample_count = n_samples;
  report.seed = seed;
  report.config_fingerprint = config_fingerprint(
      report.task + "/" + std::to_string(gen_len) + "/" +
      std::to_string(policy.steps) + "/" + std::to_string(seed));
  if (n_samples == 0) return report;

  Rng prompt_rng(seed);
  std::size_t hits = 0;
  for (std::size_t n = 0; n < n_samples; ++n) {
    const ToyExample ex = sample_toy_example(task, prompt_rng);
    const TokenSeq prompt = build_prompt(ex.prompt, vocab);
    const TokenSeq out = generate(prompt, gen_len, model, policy, vocab,
                                  prompt_rng.fork(n + 1));
    if (render_answer(out, vocab) == ex.answer) ++hits;
  }
  report.exact_match = static_cast<double>(hits) / static_cast<double>(n_samples);
  return report;
}

EvalReport sweep_steps(const Denoiser& model, const Vocabulary& vocab,
                       const ToyTaskConfig& task,
                       const std::vector<std::size_t>& steps_list,
                       std::size_t trials, std::size_t n_samples,
                       std::size_t gen_len, const DecodePolicy& base_policy,
                       std::uint64_t seed) {
  if (trials == 0) throw std::invalid_argument("sweep: trials must be >= 1");
  for (std::size_t s : steps_list)
    if (s == 0 || s > gen_len)
      throw std::invalid_argument("sweep: steps must be in [1, gen_len]");

  EvalReport report;
  report.task = toy_task_name(task.task);
  report.sample_count = n_samples;
  report.seed = seed;
  report.config_fingerprint =
      config_fingerprint(report.task + "/sweep/" + std::to_string(seed));

  // Prompts are drawn once so every step budget sees the same items.
  Rng prompt_rng(seed);
  std::vector<ToyExample> examples;
  examples.reserve(n_samples);
  for (std::size_t n = 0; n < n_samples; ++n)
    examples.push_back(sample_toy_example(task, prompt_rng));

  std::vector<std::size_t> sorted_steps = steps_list;
  std::sort(sorted_steps.begin(), sorted_steps.end());

  for (const std::size_t steps : sorted_steps) {
    DecodePolicy policy = base_policy;
    policy.mode = DecodeMode::PerStepQuota;
    policy.steps = steps;

    // warm-up generation, excluded from timing
    if (!examples.empty())
      generate(build_prompt(examples[0].prompt, vocab), gen_len, model, policy,
               vocab, Rng(seed ^ 0xabcdULL));

    std::size_t hits = 0;
    std::vector<double> per_sample_ms;
    per_sample_ms.reserve(n_samples);
    for (std::size_t n = 0; n < examples.size(); ++n) {
      const TokenSeq prompt = build_prompt(examples[n].prompt, vocab);
      double total_ms = 0.0;
      TokenSeq first_out;
      for (std::size_t trial = 0; trial < trials; ++trial) {
        // same generation rng every trial: trials differ only in timing
        Rng gen_rng = Rng(seed).fork(n + 1);
        const auto start = std::chrono::steady_clock::now();
        TokenSeq out = generate(prompt, gen_len, model, policy, vocab, gen_rng);
        total_ms += time_ms(start);
        if (trial == 0) first_out = std::move(out);
      }
      per_sample_ms.push_back(total_ms / static_cast<double>(trials));
      if (render_answer(first_out, vocab) == examples[n].answer) ++hits;
    }

    EvalRow row;
    row.steps = steps;
    row.accuracy = examples.empty()
                       ? 0.0
                       : static_cast<double>(hits) /
                             static_cast<double>(examples.size());
    if (!per_sample_ms.empty()) {
      row.mean_ms = stats::mean(per_sample_ms);
      row.std_ms = stats::sample_std(per_sample_ms);
    }
    report.rows.push_back(row);
  }
  return report;
}

std::string config_fingerprint(const std::string& config_text) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(
                    fnv1a64(config_text.data(), config_text.size())));
  return buf;
}

}  // namespace maskdiff
