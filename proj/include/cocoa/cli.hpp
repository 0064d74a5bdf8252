#pragma once

// Batch driver behind the `cocoa` command: configuration, backend
// construction and the generate / evaluate / inspect commands.
//
// Config files are key = value lines. Keys are dotted (decoder.alpha) or
// grouped under [section] headers; '#' starts a comment; values may be quoted.
// Command-line flags are applied on top of the file as the same keys.

#include <atomic>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cocoa/decoder.hpp"
#include "cocoa/eval.hpp"
#include "cocoa/judge.hpp"
#include "cocoa/scripted_model.hpp"
#include "cocoa/tiny_transformer.hpp"
#include "cocoa/trace_io.hpp"

namespace cocoa::cli {

using KeyValues = std::map<std::string, std::string>;

enum class Strategy { cocoa, greedy };

struct JudgeSettings {
  JudgeConfig client;
  std::string truth_template;  // path
  std::string info_template;   // path
};

struct RunConfig {
  DecodeConfig decode;
  Strategy strategy = Strategy::cocoa;
  std::string backend;
  std::string input;
  std::string output;
  std::string trace;
  int workers = 1;
  std::optional<JudgeSettings> judge;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string unquote(std::string s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got \"" + v + "\"");
  }
}

template <typename Int>
Int to_int(const std::string& key, const std::string& v) {
  Int x{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected an integer, got \"" + v + "\"");
  }
  return x;
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected on/off, got \"" + v + "\"");
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

}  // namespace detail

inline KeyValues parse_config_text(std::string_view text, const std::string& origin = "config") {
  KeyValues kv;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated section header");
      section = detail::trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = detail::trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    kv[key] = detail::unquote(detail::trim(t.substr(eq + 1)));
  }
  return kv;
}

inline KeyValues load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

inline WindowSpec parse_layers(const std::string& key, const std::string& v) {
  if (v == "auto") return {};
  if (v == "all") return {WindowKind::all, 0, 0};
  const auto colon = v.find(':');
  if (colon == std::string::npos) throw ConfigError(key + ": expected auto, all or M:N, got \"" + v + "\"");
  return WindowSpec::range(detail::to_int<int>(key, v.substr(0, colon)), detail::to_int<int>(key, v.substr(colon + 1)));
}

/// Builds a RunConfig from dotted keys. Unknown keys are rejected.
inline RunConfig make_run_config(const KeyValues& kv) {
  RunConfig rc;
  JudgeSettings judge;
  bool has_judge = false;
  for (const auto& [key, v] : kv) {
    auto& d = rc.decode;
    if (key == "decoder.alpha") d.alpha = detail::to_double(key, v);
    else if (key == "decoder.gamma") d.gamma = detail::to_double(key, v);
    else if (key == "decoder.mode") {
      if (v == "conmlds") d.mode = MldsMode::conmlds;
      else if (v == "fmlds") d.mode = MldsMode::fmlds;
      else throw ConfigError(key + ": expected conmlds or fmlds, got \"" + v + "\"");
    } else if (key == "decoder.gating") d.gating = detail::to_bool(key, v);
    else if (key == "decoder.layers") d.layer_window = parse_layers(key, v);
    else if (key == "decoder.max_span_len") d.max_span_len = detail::to_int<int>(key, v);
    else if (key == "decoder.max_candidates") d.max_candidates = detail::to_int<int>(key, v);
    else if (key == "decoder.commit") {
      if (v == "span" || v == "full_span") d.commit_mode = CommitMode::full_span;
      else if (v == "token" || v == "first_token") d.commit_mode = CommitMode::first_token;
      else throw ConfigError(key + ": expected span or token, got \"" + v + "\"");
    } else if (key == "decoder.length_normalize") d.length_normalize = detail::to_bool(key, v);
    else if (key == "decoder.max_new_tokens") d.max_new_tokens = detail::to_int<int>(key, v);
    else if (key == "decoder.eos") {
      d.eos_tokens.clear();
      for (const auto& item : detail::split(v, ',')) {
        if (!item.empty()) d.eos_tokens.insert(detail::to_int<TokenId>(key, item));
      }
    } else if (key == "decoder.seed") d.seed = detail::to_int<std::uint64_t>(key, v);
    else if (key == "decoder.strategy") {
      if (v == "cocoa") rc.strategy = Strategy::cocoa;
      else if (v == "greedy") rc.strategy = Strategy::greedy;
      else throw ConfigError(key + ": expected cocoa or greedy, got \"" + v + "\"");
    } else if (key == "run.backend") rc.backend = v;
    else if (key == "run.input") rc.input = v;
    else if (key == "run.output") rc.output = v;
    else if (key == "run.trace") rc.trace = v;
    else if (key == "run.workers") rc.workers = detail::to_int<int>(key, v);
    else if (key.starts_with("judge.")) {
      has_judge = true;
      if (key == "judge.endpoint") judge.client.endpoint = v;
      else if (key == "judge.model") judge.client.model = v;
      else if (key == "judge.max_retries") judge.client.max_retries = detail::to_int<int>(key, v);
      else if (key == "judge.backoff_ms") judge.client.initial_backoff = std::chrono::milliseconds(detail::to_int<int>(key, v));
      else if (key == "judge.max_in_flight") judge.client.max_in_flight = detail::to_int<int>(key, v);
      else if (key == "judge.timeout_s") judge.client.timeout = std::chrono::seconds(detail::to_int<int>(key, v));
      else if (key == "judge.truth_template") judge.truth_template = v;
      else if (key == "judge.info_template") judge.info_template = v;
      else throw ConfigError("unknown config key " + key);
    } else {
      throw ConfigError("unknown config key " + key);
    }
  }
  if (rc.workers < 1) throw ConfigError("run.workers must be >= 1");
  rc.decode.validate();
  if (has_judge && !judge.client.endpoint.empty()) {
    judge.client.load_key_from_env();
    rc.judge = std::move(judge);
  }
  return rc;
}

/// "scripted:<path>" or "tiny:V,L,d,heads,seed[,logit_scale]".
inline std::unique_ptr<Backend> make_backend(const std::string& spec) {
  if (spec.starts_with("scripted:")) {
    return std::make_unique<ScriptedModel>(ScriptedModel::load(spec.substr(9)));
  }
  if (spec.starts_with("tiny:")) {
    const auto parts = detail::split(spec.substr(5), ',');
    if (parts.size() != 5 && parts.size() != 6) {
      throw ConfigError("backend: expected tiny:V,L,d,heads,seed[,logit_scale], got \"" + spec + "\"");
    }
    TinyTransformerConfig tc;
    tc.vocab_size = detail::to_int<int>("backend", parts[0]);
    tc.num_layers = detail::to_int<int>("backend", parts[1]);
    tc.hidden_dim = detail::to_int<int>("backend", parts[2]);
    tc.num_heads = detail::to_int<int>("backend", parts[3]);
    tc.seed = detail::to_int<std::uint64_t>("backend", parts[4]);
    if (parts.size() == 6) tc.logit_scale = detail::to_double("backend", parts[5]);
    return std::make_unique<TinyTransformer>(tc);
  }
  throw ConfigError("backend: expected scripted:<path> or tiny:V,L,d,heads,seed, got \"" + spec + "\"");
}

/// Reads a JSONL file; blank lines are skipped, errors carry the line number.
inline std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  std::vector<nlohmann::json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": not a JSON object");
    }
    rows.push_back(std::move(j));
  }
  return rows;
}

namespace detail {

/// Opens `path` for writing, creating missing parent directories.
inline std::ofstream open_output(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  std::error_code ec;
  if (!parent.empty()) std::filesystem::create_directories(parent, ec);
  return std::ofstream(path);
}

inline std::string require_id(const nlohmann::json& row, const std::string& where) {
  auto it = row.find("id");
  if (it == row.end() || !it->is_string()) throw ParseError(where + ": missing string field \"id\"");
  return it->get<std::string>();
}

inline std::vector<TokenId> token_list(const nlohmann::json& row, const char* key, const std::string& where) {
  auto it = row.find(key);
  if (it == row.end() || !it->is_array()) throw ParseError(where + ": missing array field \"" + key + "\"");
  std::vector<TokenId> out;
  for (const auto& t : *it) {
    if (!t.is_number_integer()) throw ParseError(where + ": \"" + key + "\" must hold integers");
    out.push_back(t.get<TokenId>());
  }
  return out;
}

inline std::vector<std::string> string_list(const nlohmann::json& row, const char* key, const std::string& where,
                                            bool required) {
  auto it = row.find(key);
  if (it == row.end()) {
    if (required) throw ParseError(where + ": missing field \"" + key + "\"");
    return {};
  }
  if (it->is_string()) return {it->get<std::string>()};
  if (!it->is_array()) throw ParseError(where + ": \"" + key + "\" must be a string list");
  std::vector<std::string> out;
  for (const auto& s : *it) {
    if (!s.is_string()) throw ParseError(where + ": \"" + key + "\" must be a string list");
    out.push_back(s.get<std::string>());
  }
  return out;
}

}  // namespace detail

struct SampleOutcome {
  std::string id;
  GenerationResult result;
  std::optional<std::string> error;
};

inline SampleOutcome run_sample(const Backend& backend, const RunConfig& rc, const std::string& id,
                                const std::vector<TokenId>& prompt) {
  SampleOutcome o{id, {}, std::nullopt};
  try {
    if (rc.strategy == Strategy::greedy) {
      o.result.tokens = greedy_decode(backend, prompt, rc.decode.max_new_tokens, rc.decode.eos_tokens);
      o.result.steps_greedy = o.result.tokens.size();
    } else {
      o.result = decode(backend, prompt, rc.decode);
    }
  } catch (const DecodeAborted& e) {
    o.result = e.partial();
    o.error = e.what();
  } catch (const Error& e) {
    o.error = e.what();
  }
  return o;
}

/// Decodes every prompt of rc.input into rc.output (and rc.trace).
/// Returns 0 on success, 1 on unusable input/config, 2 if any sample aborted.
inline int cmd_generate(const RunConfig& rc, std::ostream& err = std::cerr) {
  std::unique_ptr<Backend> backend;
  std::vector<std::pair<std::string, std::vector<TokenId>>> prompts;
  try {
    rc.decode.validate();
    if (rc.workers < 1) throw ConfigError("workers must be >= 1");
    if (rc.input.empty() || rc.output.empty()) throw ConfigError("generate needs --input and --output");
    if (rc.backend.empty()) throw ConfigError("generate needs a backend (run.backend / --backend)");
    backend = make_backend(rc.backend);
    resolve_window(rc.decode.layer_window, backend->info().num_layers);
    const auto rows = read_jsonl(rc.input);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::string where = rc.input + " row " + std::to_string(i + 1);
      prompts.emplace_back(detail::require_id(rows[i], where), detail::token_list(rows[i], "prompt", where));
    }
  } catch (const Error& e) {
    err << "cocoa generate: " << e.what() << '\n';
    return 1;
  }

  std::vector<SampleOutcome> outcomes(prompts.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < prompts.size(); i = next++) {
      outcomes[i] = run_sample(*backend, rc, prompts[i].first, prompts[i].second);
    }
  };
  {
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(rc.workers), std::max<std::size_t>(1, prompts.size()));
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < n; ++w) pool.emplace_back(work);
    work();
  }

  std::ofstream out = detail::open_output(rc.output);
  if (!out) {
    err << "cocoa generate: cannot write " << rc.output << '\n';
    return 1;
  }
  std::ofstream trace;
  if (!rc.trace.empty()) {
    trace = detail::open_output(rc.trace);
    if (!trace) {
      err << "cocoa generate: cannot write " << rc.trace << '\n';
      return 1;
    }
  }

  bool aborted = false;
  for (const auto& o : outcomes) {
    nlohmann::json row = {{"id", o.id}, {"tokens", o.result.tokens}, {"n_divergence", o.result.traces.size()}};
    if (o.error) {
      row["error"] = *o.error;
      aborted = true;
      err << "cocoa generate: sample " << o.id << ": " << *o.error << '\n';
    }
    out << row.dump() << '\n';
    if (trace.is_open()) write_traces(trace, o.result.traces);
  }
  return aborted ? 2 : 0;
}

enum class EvalTask { qa, mc, summ };

struct EvalOptions {
  EvalTask task = EvalTask::qa;
  std::string pred;
  std::string ref;
  std::string out;
  std::string backend;  // mc only
  bool length_normalize = true;
  std::optional<JudgeSettings> judge;
};

namespace detail {

inline nlohmann::json judge_metrics(const JudgeSettings& js, const std::vector<QASample>& samples, std::ostream& err) {
  if (js.truth_template.empty() || js.info_template.empty()) {
    throw ConfigError("judge needs judge.truth_template and judge.info_template");
  }
  const std::string truth_tmpl = load_template(js.truth_template);
  const std::string info_tmpl = load_template(js.info_template);
  JudgeClient client(js.client);

  struct Labels {
    std::optional<bool> truth, info;
  };
  std::vector<Labels> labels(samples.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::size_t failures = 0;
  auto work = [&] {
    for (std::size_t i = next++; i < samples.size(); i = next++) {
      try {
        labels[i].truth = judge_evaluate(client, truth_tmpl, samples[i]).truthful;
        labels[i].info = judge_evaluate(client, info_tmpl, samples[i]).informative;
      } catch (const Error& e) {
        std::lock_guard lock(err_mu);
        ++failures;
        err << "cocoa evaluate: judge failed on sample " << i << ": " << e.what() << '\n';
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (int w = 1; w < std::max(1, js.client.max_in_flight); ++w) pool.emplace_back(work);
    work();
  }

  std::vector<std::string> preds;
  std::vector<bool> truth, info;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!labels[i].truth || !labels[i].info) continue;
    preds.push_back(samples[i].prediction);
    truth.push_back(*labels[i].truth);
    info.push_back(*labels[i].info);
  }
  const TxI all = txi(truth, info);
  const TxI kept = txi_without_rejected(preds, truth, info);
  return {{"truth", all.truth},
          {"info", all.info},
          {"t_x_i", all.t_x_i},
          {"truth_nonrejected", kept.truth},
          {"info_nonrejected", kept.info},
          {"t_x_i_nonrejected", kept.t_x_i},
          {"judge_errors", failures}};
}

}  // namespace detail

/// Computes metrics and prints them as JSON. Returns 0, or 1 on bad input.
inline int cmd_evaluate(const EvalOptions& opt, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  nlohmann::json metrics;
  try {
    if (opt.ref.empty()) throw ConfigError("evaluate needs --ref");
    const auto refs = read_jsonl(opt.ref);

    if (opt.task == EvalTask::mc) {
      if (opt.backend.empty()) throw ConfigError("evaluate --task mc needs --backend");
      const auto backend = make_backend(opt.backend);
      std::vector<MCSample> samples;
      for (std::size_t i = 0; i < refs.size(); ++i) {
        const std::string where = opt.ref + " row " + std::to_string(i + 1);
        MCSample s;
        s.question = refs[i].value("question_text", std::string());
        s.question_tokens = detail::token_list(refs[i], "question", where);
        auto it = refs[i].find("choices");
        if (it == refs[i].end() || !it->is_array()) throw ParseError(where + ": missing array field \"choices\"");
        for (const auto& c : *it) {
          MCChoice choice;
          choice.text = c.value("text", std::string());
          choice.tokens = detail::token_list(c, "tokens", where);
          if (!c.contains("correct") || !c["correct"].is_boolean()) {
            throw ParseError(where + ": choice needs boolean \"correct\"");
          }
          choice.correct = c["correct"].get<bool>();
          s.choices.push_back(std::move(choice));
        }
        samples.push_back(std::move(s));
      }
      const MCScores s = mc_scores(*backend, samples, opt.length_normalize);
      metrics = {{"mc1", s.mc1}, {"mc2", s.mc2}, {"mc3", s.mc3}, {"n", samples.size()}};
    } else {
      if (opt.pred.empty()) throw ConfigError("evaluate needs --pred");
      std::map<std::string, std::string> preds;
      const auto pred_rows = read_jsonl(opt.pred);
      for (std::size_t i = 0; i < pred_rows.size(); ++i) {
        const std::string where = opt.pred + " row " + std::to_string(i + 1);
        const auto id = detail::require_id(pred_rows[i], where);
        auto it = pred_rows[i].find("prediction");
        if (it == pred_rows[i].end() || !it->is_string()) throw ParseError(where + ": missing string \"prediction\"");
        preds[id] = it->get<std::string>();
      }

      std::vector<QASample> samples;
      std::set<std::string> ref_ids;
      std::vector<std::string> missing;
      for (std::size_t i = 0; i < refs.size(); ++i) {
        const std::string where = opt.ref + " row " + std::to_string(i + 1);
        QASample s;
        const auto id = detail::require_id(refs[i], where);
        ref_ids.insert(id);
        s.gold_answers = detail::string_list(refs[i], "golds", where, true);
        if (s.gold_answers.empty()) throw ParseError(where + ": \"golds\" is empty");
        s.incorrect_answers = detail::string_list(refs[i], "incorrect", where, false);
        s.question = refs[i].value("question", std::string());
        auto p = preds.find(id);
        if (p == preds.end()) {
          missing.push_back(id + " (no prediction)");
          continue;
        }
        s.prediction = p->second;
        samples.push_back(std::move(s));
      }
      for (const auto& [id, _] : preds) {
        if (!ref_ids.contains(id)) missing.push_back(id + " (no reference)");
      }
      if (!missing.empty()) {
        err << "cocoa evaluate: id mismatch between predictions and references:\n";
        for (const auto& m : missing) err << "  " << m << '\n';
        return 1;
      }

      const double n = samples.empty() ? 1.0 : static_cast<double>(samples.size());
      double rl = 0.0;
      for (const auto& s : samples) {
        double best = 0.0;
        for (const auto& g : s.gold_answers) best = std::max(best, rouge_l(s.prediction, g));
        rl += best;
      }
      if (opt.task == EvalTask::summ) {
        metrics = {{"rouge_l", rl / n}, {"n", samples.size()}};
      } else {
        double em = 0.0, f1 = 0.0;
        std::vector<std::string> texts;
        for (const auto& s : samples) {
          em += exact_match(s.prediction, s.gold_answers) ? 1.0 : 0.0;
          f1 += token_f1(s.prediction, s.gold_answers);
          texts.push_back(s.prediction);
        }
        metrics = {{"em", em / n},
                   {"f1", f1 / n},
                   {"rouge_l", rl / n},
                   {"rejection_rate", rejection_rate(texts)},
                   {"n", samples.size()}};
      }
      if (opt.judge) metrics["judge"] = detail::judge_metrics(*opt.judge, samples, err);
    }
  } catch (const Error& e) {
    err << "cocoa evaluate: " << e.what() << '\n';
    return 1;
  }

  out << metrics.dump(2) << '\n';
  if (!opt.out.empty()) {
    std::ofstream f = detail::open_output(opt.out);
    if (!f) {
      err << "cocoa evaluate: cannot write " << opt.out << '\n';
      return 1;
    }
    f << metrics.dump(2) << '\n';
  }
  return 0;
}

struct InspectOptions {
  std::string trace;
  std::string csv;
  bool flipped_only = false;
  std::size_t min_candidates = 0;
};

struct InspectRow {
  std::size_t pos = 0;
  std::size_t candidates = 0;
  std::size_t greedy = 0;
  std::size_t chosen = 0;
  double delta_score = 0.0;  // chosen score minus greedy score
  std::string greedy_span;
  std::string chosen_span;
};

inline std::vector<InspectRow> inspect_rows(const std::vector<DivergenceTrace>& traces, const InspectOptions& opt) {
  auto span_text = [](const std::vector<TokenId>& toks) {
    std::string s;
    for (std::size_t i = 0; i < toks.size(); ++i) s += (i ? " " : "") + std::to_string(toks[i]);
    return s;
  };
  std::vector<InspectRow> rows;
  for (const auto& t : traces) {
    if (opt.flipped_only && t.chosen_index == t.greedy_index) continue;
    if (t.candidates.size() < opt.min_candidates) continue;
    const auto& g = t.candidates[t.greedy_index];
    const auto& c = t.candidates[t.chosen_index];
    rows.push_back({t.position, t.candidates.size(), t.greedy_index, t.chosen_index, c.score - g.score,
                    span_text(g.tokens), span_text(c.tokens)});
  }
  return rows;
}

inline constexpr const char* kInspectCsvHeader = "pos,candidates,greedy,chosen,delta_score,greedy_span,chosen_span";

/// Prints one row per divergence point. Returns 0, or 1 if the trace is malformed.
inline int cmd_inspect(const InspectOptions& opt, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<DivergenceTrace> traces;
  try {
    std::ifstream in(opt.trace);
    if (!in) throw Error("cannot read " + opt.trace);
    traces = read_traces(in);
  } catch (const Error& e) {
    err << "cocoa inspect: " << opt.trace << ": " << e.what() << '\n';
    return 1;
  }
  const auto rows = inspect_rows(traces, opt);

  out << std::left << std::setw(8) << "pos" << std::setw(7) << "cands" << std::setw(8) << "greedy" << std::setw(8)
      << "chosen" << std::setw(13) << "delta_score"
      << "spans (greedy -> chosen)\n";
  for (const auto& r : rows) {
    std::ostringstream delta;
    delta << std::fixed << std::setprecision(6) << r.delta_score;
    out << std::left << std::setw(8) << r.pos << std::setw(7) << r.candidates << std::setw(8) << r.greedy
        << std::setw(8) << r.chosen << std::setw(13) << delta.str() << "[" << r.greedy_span << "]"
        << (r.greedy == r.chosen ? "" : " -> [" + r.chosen_span + "]") << '\n';
  }

  if (!opt.csv.empty()) {
    std::ofstream csv = detail::open_output(opt.csv);
    if (!csv) {
      err << "cocoa inspect: cannot write " << opt.csv << '\n';
      return 1;
    }
    csv << kInspectCsvHeader << '\n';
    for (const auto& r : rows) {
      csv << r.pos << ',' << r.candidates << ',' << r.greedy << ',' << r.chosen << ','
          << nlohmann::json(r.delta_score).dump() << ',' << r.greedy_span << ',' << r.chosen_span << '\n';
    }
  }
  return 0;
}

}  // namespace cocoa::cli
