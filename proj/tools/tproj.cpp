// tproj: annotation projection from a labeled source corpus onto its
// parallel target sentences.
//
//   tproj project     --source en.conll --target es.jsonl --out es.conll --method tprojection ...
//   tproj evaluate    --pred es.conll --gold es.gold.conll
//   tproj sweep       --source ... --target ... --gold ... --counts 1,10,100
//   tproj serve-check --endpoint http://localhost:8000

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tproj/tproj.hpp"

namespace {

struct Flags {
  tproj::RunConfig cfg;
  tproj::RunPaths paths;
  std::string method = "tprojection";
  std::string scorer = "translation";
  std::string oracle_candidates = "generator";
};

void add_run_flags(CLI::App* app, Flags& f) {
  app->add_option("--method", f.method,
                  "tprojection | ngram+select | most-probable | oracle | alignment | span-translation")
      ->capture_default_str();
  app->add_option("--beams", f.cfg.n_beams, "beams / candidates per prompt")->capture_default_str();
  app->add_option("--max-new-tokens", f.cfg.max_new_tokens)->capture_default_str();
  app->add_option("--batch-size", f.cfg.batch_size, "scorer requests per batch")->capture_default_str();
  app->add_option("--jobs", f.cfg.jobs, "worker threads over sentence pairs")->capture_default_str();
  app->add_option("--endpoint", f.cfg.endpoint, "http://host:port of the model server, or 'mock'");
  app->add_option("--categories", f.cfg.categories_path, "JSON map raw tag -> verbalized name");
  app->add_option("--src-lang", f.cfg.langs.source)->capture_default_str();
  app->add_option("--tgt-lang", f.cfg.langs.target)->capture_default_str();
  app->add_option("--scorer", f.scorer, "translation | embedding")->capture_default_str();
  app->add_option("--oracle-candidates", f.oracle_candidates, "generator | ngram")->capture_default_str();
  app->add_flag("--ngram-fallback", f.cfg.ngram_fallback, "use n-grams when no beam yields a candidate");
  app->add_option("--seed", f.cfg.seed)->capture_default_str();
  app->add_option("--cache-dir", f.cfg.cache_dir, "persist self-probabilities here");
  app->add_option("--alignments", f.cfg.alignments_path, "Pharaoh alignment file");
  app->add_option("--gold", f.cfg.gold_path, "gold target CoNLL");
  app->add_option("--beam-file", f.cfg.beam_file, "replay generator beams from JSONL");
  app->add_option("--lexicon", f.cfg.lexicon_path, "word dictionary for the mock backends");
  app->add_option("--source", f.paths.source, "labeled source CoNLL");
  app->add_option("--target", f.paths.target, "target sentences (CoNLL or JSONL)");
  app->add_option("--report-json", f.paths.report_json);
}

// Applies the string-valued enums; returns validation messages.
std::vector<std::string> finish(Flags& f) {
  std::vector<std::string> errs;
  if (auto m = tproj::parse_method(f.method)) f.cfg.method = *m;
  else errs.push_back("unknown --method '" + f.method + "'");
  if (f.scorer == "translation") f.cfg.scorer = tproj::ScoreMode::Translation;
  else if (f.scorer == "embedding") f.cfg.scorer = tproj::ScoreMode::Embedding;
  else errs.push_back("unknown --scorer '" + f.scorer + "'");
  if (f.oracle_candidates == "generator") f.cfg.oracle_candidates = tproj::CandidateSource::Generator;
  else if (f.oracle_candidates == "ngram") f.cfg.oracle_candidates = tproj::CandidateSource::Ngram;
  else errs.push_back("unknown --oracle-candidates '" + f.oracle_candidates + "'");
  for (auto& e : tproj::validate_config(f.cfg)) errs.push_back(std::move(e));
  return errs;
}

int report_errors(const std::vector<std::string>& errs) {
  std::cerr << "invalid configuration:\n";
  for (const auto& e : errs) std::cerr << "  " << e << "\n";
  return 2;
}

int cmd_project(Flags& f) {
  auto errs = finish(f);
  if (f.paths.source.empty()) errs.push_back("missing --source");
  if (f.paths.target.empty()) errs.push_back("missing --target");
  if (f.paths.out.empty()) errs.push_back("missing --out");
  if (!errs.empty()) return report_errors(errs);
  auto outcome = tproj::run_project(f.cfg, f.paths);
  std::cerr << "wrote " << f.paths.out << " (" << outcome.meta["assigned"] << "/"
            << outcome.meta["source_spans"] << " spans projected)\n";
  if (outcome.report) std::cout << tproj::to_table(*outcome.report);
  return outcome.exit_status;
}

int cmd_evaluate(const std::string& pred_path, const std::string& gold_path,
                 const std::string& categories, const std::string& report_json) {
  tproj::CategoryMap map = tproj::CategoryMap::defaults();
  if (!categories.empty()) {
    auto in = tproj::open_in(categories);
    map = tproj::CategoryMap::from_json_stream(in);
  }
  auto pin = tproj::open_in(pred_path);
  auto gin = tproj::open_in(gold_path);
  auto pred = tproj::parse_conll(pin, map);
  auto gold = tproj::parse_conll(gin, map);
  auto rep = tproj::span_f1(pred, gold);
  std::cout << tproj::to_table(rep);
  if (!report_json.empty()) {
    std::ofstream out(report_json, std::ios::binary);
    out << tproj::to_json(rep).dump(2) << '\n';
  }
  return 0;
}

int cmd_sweep(Flags& f, const std::string& counts_csv) {
  auto errs = finish(f);
  if (f.paths.source.empty()) errs.push_back("missing --source");
  if (f.paths.target.empty()) errs.push_back("missing --target");
  if (f.cfg.gold_path.empty()) errs.push_back("sweep requires --gold");
  std::vector<int> counts;
  for (const auto& c : tproj::split_ws(std::string(counts_csv.begin(), counts_csv.end()))) {
    std::string item;
    std::stringstream ss(c);
    while (std::getline(ss, item, ','))
      if (!item.empty()) {
        try {
          counts.push_back(std::stoi(item));
        } catch (const std::exception&) {
          errs.push_back("bad --counts item '" + item + "'");
        }
      }
  }
  if (!errs.empty()) return report_errors(errs);

  tproj::CategoryMap map = tproj::load_category_map(f.cfg, f.paths.source);
  auto sin = tproj::open_in(f.paths.source);
  auto tin = tproj::open_in(f.paths.target);
  auto pairs = tproj::load_parallel(sin, tin, map);
  auto gold = tproj::load_gold(f.cfg.gold_path, map, pairs);
  auto backends = tproj::make_backends(f.cfg);
  tproj::SelfProbCache cache;
  auto rows = tproj::sweep_candidate_counts(f.cfg, counts, pairs, gold, backends, map, &cache);

  nlohmann::json j = nlohmann::json::array();
  std::printf("%8s %10s\n", "count", "micro-F1");
  for (const auto& r : rows) {
    std::printf("%8d %10.2f\n", r.count, 100.0 * r.micro_f1);
    j.push_back({{"count", r.count}, {"micro_f1", r.micro_f1}, {"report", tproj::to_json(r.report)}});
  }
  if (!f.paths.report_json.empty()) {
    std::ofstream out(f.paths.report_json, std::ios::binary);
    out << j.dump(2) << '\n';
  }
  return 0;
}

int cmd_serve_check(const std::string& endpoint) {
  if (endpoint.empty()) return report_errors({"missing --endpoint"});
  tproj::http::Endpoint ep(endpoint, {.retries = 0});
  auto h = tproj::http::health(ep);
  std::cout << h.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Annotation projection onto parallel target sentences"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file; keys under [project] or [sweep], command-line flags win");

  Flags project_flags;
  auto* project = app.add_subcommand("project", "project source annotations onto target sentences");
  add_run_flags(project, project_flags);
  project->add_option("--out", project_flags.paths.out, "output CoNLL path");
  project->add_option("--meta", project_flags.paths.meta, "run metadata JSON (default <out>.meta.json)");

  std::string pred, gold, categories, report_json;
  auto* evaluate = app.add_subcommand("evaluate", "span-level P/R/F1 of predictions against gold");
  evaluate->add_option("--pred", pred)->required();
  evaluate->add_option("--gold", gold)->required();
  evaluate->add_option("--categories", categories);
  evaluate->add_option("--report-json", report_json);

  Flags sweep_flags;
  std::string counts = "1,5,10,25,50,100";
  auto* sweep = app.add_subcommand("sweep", "F1 as a function of the number of generated candidates");
  add_run_flags(sweep, sweep_flags);
  sweep->add_option("--counts", counts, "ascending candidate counts, comma separated")->capture_default_str();

  std::string endpoint;
  auto* serve_check = app.add_subcommand("serve-check", "probe the model server health endpoint");
  serve_check->add_option("--endpoint", endpoint)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*project) return cmd_project(project_flags);
    if (*evaluate) return cmd_evaluate(pred, gold, categories, report_json);
    if (*sweep) return cmd_sweep(sweep_flags, counts);
    if (*serve_check) return cmd_serve_check(endpoint);
  } catch (const tproj::TransportError& e) {
    std::cerr << "backend unreachable: " << e.what() << "\n";
    return 3;
  } catch (const tproj::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
