// cocoa: batch generation, evaluation and trace inspection.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cocoa/cli.hpp"

namespace {

// Flag name -> config key. Flags given on the command line override the file.
struct Override {
  const char* flag;
  const char* key;
  const char* help;
};

constexpr Override kGenerateOverrides[] = {
    {"--alpha", "decoder.alpha", "Penalty weight on the disagreement score"},
    {"--gamma", "decoder.gamma", "Divergence threshold relative to the top probability, in (0,1]"},
    {"--mode", "decoder.mode", "conmlds | fmlds"},
    {"--gating", "decoder.gating", "Self-information gating: on | off"},
    {"--layers", "decoder.layers", "Middle-layer window: auto | all | M:N"},
    {"--max-span-len", "decoder.max_span_len", "Maximum candidate span length"},
    {"--max-candidates", "decoder.max_candidates", "Maximum candidates per divergence point"},
    {"--commit", "decoder.commit", "span | token"},
    {"--length-normalize", "decoder.length_normalize", "Mean per-token span log-prob: on | off"},
    {"--max-new-tokens", "decoder.max_new_tokens", "Generation budget per prompt"},
    {"--eos", "decoder.eos", "Comma-separated EOS token ids"},
    {"--strategy", "decoder.strategy", "cocoa | greedy"},
    {"--backend", "run.backend", "scripted:<path> | tiny:V,L,d,heads,seed[,logit_scale]"},
    {"--input", "run.input", "Prompt JSONL"},
    {"--output", "run.output", "Output JSONL"},
    {"--trace", "run.trace", "Divergence trace JSONL"},
    {"--workers", "run.workers", "Worker threads"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cocoa: span re-ranking decoder driven by middle-layer disagreement"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "Decode every prompt of an input file");
  std::string gen_config;
  gen->add_option("--config", gen_config, "Config file (key = value)");
  std::vector<std::pair<const Override*, std::string>> gen_values(std::size(kGenerateOverrides));
  std::vector<CLI::Option*> gen_opts;
  for (std::size_t i = 0; i < std::size(kGenerateOverrides); ++i) {
    gen_values[i].first = &kGenerateOverrides[i];
    gen_opts.push_back(gen->add_option(kGenerateOverrides[i].flag, gen_values[i].second, kGenerateOverrides[i].help));
  }

  auto* eval = app.add_subcommand("evaluate", "Compute QA, summarization or multiple-choice metrics");
  std::string task = "qa", eval_config, length_normalize = "on";
  cocoa::cli::EvalOptions eopt;
  eval->add_option("--task", task, "qa | mc | summ")->check(CLI::IsMember({"qa", "mc", "summ"}));
  eval->add_option("--pred", eopt.pred, "Predictions JSONL {id, prediction}");
  eval->add_option("--ref", eopt.ref, "References JSONL {id, golds} (mc: pre-tokenized samples)")->required();
  eval->add_option("--out", eopt.out, "Write metrics JSON here as well");
  eval->add_option("--backend", eopt.backend, "Backend for --task mc");
  eval->add_option("--length-normalize", length_normalize, "Length-normalized choice scores (mc): on | off");
  eval->add_option("--config", eval_config, "Config file with judge.* settings");

  auto* insp = app.add_subcommand("inspect", "Summarize a divergence trace");
  cocoa::cli::InspectOptions iopt;
  insp->add_option("--trace", iopt.trace, "Trace JSONL")->required();
  insp->add_option("--csv", iopt.csv, "Also write rows as CSV");
  insp->add_flag("--flipped-only", iopt.flipped_only, "Only rows where the chosen span differs from greedy");
  insp->add_option("--min-candidates", iopt.min_candidates, "Only rows with at least this many candidates");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      cocoa::cli::KeyValues kv;
      if (!gen_config.empty()) kv = cocoa::cli::load_config_file(gen_config);
      for (std::size_t i = 0; i < gen_values.size(); ++i) {
        if (gen_opts[i]->count() > 0) kv[gen_values[i].first->key] = gen_values[i].second;
      }
      return cocoa::cli::cmd_generate(cocoa::cli::make_run_config(kv));
    }
    if (*eval) {
      eopt.task = task == "mc" ? cocoa::cli::EvalTask::mc
                  : task == "summ" ? cocoa::cli::EvalTask::summ
                                   : cocoa::cli::EvalTask::qa;
      eopt.length_normalize = cocoa::cli::detail::to_bool("--length-normalize", length_normalize);
      if (!eval_config.empty()) eopt.judge = cocoa::cli::make_run_config(cocoa::cli::load_config_file(eval_config)).judge;
      return cocoa::cli::cmd_evaluate(eopt);
    }
    if (*insp) return cocoa::cli::cmd_inspect(iopt);
  } catch (const cocoa::Error& e) {
    std::cerr << "cocoa: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
