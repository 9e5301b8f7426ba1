#pragma once

// End-to-end projection runs: configuration, backend wiring, a worker pool
// over parallel pairs, candidate-count sweeps and run metadata.

#include <algorithm>
#include <cmath>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tproj/alignment.hpp"
#include "tproj/backends/http.hpp"
#include "tproj/backends/mock.hpp"
#include "tproj/corpus.hpp"
#include "tproj/eval.hpp"
#include "tproj/generation.hpp"
#include "tproj/prompting.hpp"
#include "tproj/scoring.hpp"
#include "tproj/selection.hpp"

namespace tproj {

enum class Method { TProjection, NgramSelect, MostProbable, Oracle, Alignment, SpanTranslation };

inline const std::vector<std::pair<Method, std::string>>& method_names() {
  static const std::vector<std::pair<Method, std::string>> names = {
      {Method::TProjection, "tprojection"},   {Method::NgramSelect, "ngram+select"},
      {Method::MostProbable, "most-probable"}, {Method::Oracle, "oracle"},
      {Method::Alignment, "alignment"},       {Method::SpanTranslation, "span-translation"}};
  return names;
}

inline std::string to_string(Method m) {
  for (const auto& [k, v] : method_names())
    if (k == m) return v;
  return "?";
}

inline std::optional<Method> parse_method(const std::string& s) {
  for (const auto& [k, v] : method_names())
    if (v == s) return k;
  return std::nullopt;
}

enum class CandidateSource { Generator, Ngram };

struct RunConfig {
  Method method = Method::TProjection;
  int n_beams = 100;
  int max_new_tokens = 64;
  std::size_t batch_size = 32;
  std::size_t jobs = 1;
  std::string endpoint;  // http://host:port or "mock"
  std::string categories_path;
  LanguagePair langs;
  ScoreMode scorer = ScoreMode::Translation;
  CandidateSource oracle_candidates = CandidateSource::Generator;
  bool ngram_fallback = false;
  std::uint64_t seed = 0;
  std::string cache_dir;
  std::string alignments_path;
  std::string gold_path;
  std::string beam_file;     // replayed generator beams (JSONL)
  std::string lexicon_path;  // mock scorer / translator dictionary
};

inline bool needs_generator(const RunConfig& c) {
  switch (c.method) {
    case Method::TProjection:
    case Method::MostProbable:
    case Method::SpanTranslation:
      return true;
    case Method::Oracle:
      return c.oracle_candidates == CandidateSource::Generator;
    default:
      return false;
  }
}

inline bool needs_scorer(const RunConfig& c) {
  return c.method == Method::TProjection || c.method == Method::NgramSelect ||
         c.method == Method::Oracle;
}

// Every problem with the configuration, not just the first.
inline std::vector<std::string> validate_config(const RunConfig& c) {
  std::vector<std::string> errs;
  if (c.n_beams < 1) errs.push_back("--beams must be >= 1");
  if (c.max_new_tokens < 1) errs.push_back("--max-new-tokens must be >= 1");
  if (c.batch_size < 1) errs.push_back("--batch-size must be >= 1");
  if (c.jobs < 1) errs.push_back("--jobs must be >= 1");
  if (c.method == Method::Alignment && c.alignments_path.empty())
    errs.push_back("method alignment requires --alignments");
  if (c.method == Method::Oracle && c.gold_path.empty())
    errs.push_back("method oracle requires --gold");
  bool http = c.endpoint.rfind("http://", 0) == 0;
  bool mock = c.endpoint == "mock";
  if (!c.endpoint.empty() && !http && !mock)
    errs.push_back("--endpoint must be http://host:port or mock");
  if (needs_scorer(c) && c.endpoint.empty())
    errs.push_back("method " + to_string(c.method) + " requires --endpoint");
  if (needs_generator(c)) {
    if (c.endpoint.empty() && c.beam_file.empty())
      errs.push_back("method " + to_string(c.method) + " requires --endpoint or --beam-file");
    if (mock && c.beam_file.empty() &&
        !(c.method == Method::SpanTranslation && !c.lexicon_path.empty()))
      errs.push_back("mock generation requires --beam-file (or --lexicon for span-translation)");
  }
  if (!c.lexicon_path.empty() && !mock) errs.push_back("--lexicon is only used with --endpoint mock");
  return errs;
}

struct Backends {
  std::unique_ptr<Generator> generator;
  std::unique_ptr<ScorerBackend> scorer;
};

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  return in;
}

inline Backends make_backends(const RunConfig& c) {
  Backends b;
  std::optional<mock::Lexicon> lexicon;
  if (!c.lexicon_path.empty()) {
    auto in = open_in(c.lexicon_path);
    lexicon = mock::Lexicon::read(in);
  }
  if (c.endpoint == "mock") {
    if (lexicon) b.scorer = std::make_unique<mock::LexiconScorer>(*lexicon);
    else b.scorer = std::make_unique<mock::HashScorer>(c.seed);
    if (lexicon) b.generator = std::make_unique<mock::LexiconTranslator>(*lexicon);
  } else if (!c.endpoint.empty()) {
    b.scorer = std::make_unique<http::HttpScorer>(http::Endpoint(c.endpoint));
    b.generator = std::make_unique<http::HttpGenerator>(http::Endpoint(c.endpoint));
  }
  if (!c.beam_file.empty()) {
    auto in = open_in(c.beam_file);
    b.generator = std::make_unique<mock::ScriptedGenerator>(mock::ScriptedGenerator::read_jsonl(in));
  }
  return b;
}

// ---------------------------------------------------------------------------

struct PairInputs {
  const ParallelPair* pair = nullptr;
  const LabeledSentence* gold = nullptr;        // oracle / evaluation
  const AlignmentMap* alignment = nullptr;      // alignment method
  const std::vector<Beam>* cached_beams = nullptr;  // sweep: pre-generated beams
};

struct PairResult {
  Assignment assignment;
  LabeledSentence projected;
  std::size_t beams_returned = 0;
  std::size_t beams_malformed = 0;
  bool ngram_fallback = false;
};

struct Context {
  const RunConfig& config;
  const CategoryMap& categories;
  Backends& backends;
  SelfProbCache* cache = nullptr;
};

namespace detail {

inline Generator& need_generator(Context& ctx) {
  if (!ctx.backends.generator) throw ConfigError("no generator configured");
  return *ctx.backends.generator;
}

inline ScorerBackend& need_scorer(Context& ctx) {
  if (!ctx.backends.scorer) throw ConfigError("no scorer configured");
  return *ctx.backends.scorer;
}

inline GenerationResult run_generation(const PairInputs& in, const TagPrompt& prompt, Context& ctx) {
  if (in.cached_beams) {
    std::vector<Beam> raw = *in.cached_beams;
    if (raw.size() > static_cast<std::size_t>(ctx.config.n_beams))
      raw.resize(static_cast<std::size_t>(ctx.config.n_beams));
    return parse_beams(raw, prompt);
  }
  return generate_candidates(prompt, need_generator(ctx), ctx.config.n_beams,
                             ctx.config.max_new_tokens);
}

}  // namespace detail

inline PairResult project_pair(const PairInputs& in, Context& ctx) {
  const RunConfig& cfg = ctx.config;
  const ParallelPair& pair = *in.pair;
  const LabeledSentence& src = pair.source;
  const Tokens& tgt = pair.target_tokens;
  PairResult r;
  ScoreOptions sopt{cfg.langs, cfg.batch_size, cfg.scorer};

  if (src.spans.empty()) {
    r.projected = LabeledSentence{pair.id, tgt, {}};
    return r;
  }

  auto generated_groups = [&](const TagPrompt& prompt) {
    GenerationResult gen = detail::run_generation(in, prompt, ctx);
    r.beams_returned = gen.returned;
    r.beams_malformed = gen.malformed;
    auto groups = match_and_filter(gen, prompt, tgt);
    if (groups.empty() && cfg.ngram_fallback) {
      r.ngram_fallback = true;
      groups = ngram_candidates(tgt, categories_of(src));
    }
    return groups;
  };

  switch (cfg.method) {
    case Method::TProjection: {
      TagPrompt prompt = build_prompt(pair, ctx.categories);
      auto groups = generated_groups(prompt);
      auto scored = score_groups(src, groups, detail::need_scorer(ctx), ctx.cache, sopt);
      r.assignment = select_greedy(src, scored, tgt.size());
      break;
    }
    case Method::NgramSelect: {
      auto groups = ngram_candidates(tgt, categories_of(src));
      auto scored = score_groups(src, groups, detail::need_scorer(ctx), ctx.cache, sopt);
      r.assignment = select_greedy(src, scored, tgt.size());
      break;
    }
    case Method::MostProbable: {
      TagPrompt prompt = build_prompt(pair, ctx.categories);
      GenerationResult gen = detail::run_generation(in, prompt, ctx);
      r.beams_returned = gen.returned;
      r.beams_malformed = gen.malformed;
      r.assignment = select_most_probable(src, prompt, gen, tgt);
      break;
    }
    case Method::Oracle: {
      if (!in.gold) throw ConfigError("oracle needs gold target annotations");
      std::vector<CandidateGroup> groups;
      if (cfg.oracle_candidates == CandidateSource::Ngram) {
        groups = ngram_candidates(tgt, categories_of(src));
      } else {
        groups = generated_groups(build_prompt(pair, ctx.categories));
      }
      auto scored = score_groups(src, groups, detail::need_scorer(ctx), ctx.cache, sopt);
      r.assignment = oracle_upper_bound(src, scored, *in.gold);
      break;
    }
    case Method::Alignment: {
      if (!in.alignment) throw ConfigError("alignment method needs an alignment line per pair");
      r.assignment = project_via_alignments(src, *in.alignment, tgt.size());
      fill_surfaces(r.assignment, tgt);
      break;
    }
    case Method::SpanTranslation: {
      r.assignment = project_via_span_translation(src, tgt, detail::need_generator(ctx),
                                                  cfg.n_beams, cfg.max_new_tokens);
      break;
    }
  }
  r.projected = to_labeled(pair.id, tgt, r.assignment);
  return r;
}

struct CorpusInputs {
  const std::vector<ParallelPair>* pairs = nullptr;
  const std::vector<LabeledSentence>* gold = nullptr;
  const std::vector<AlignmentMap>* alignments = nullptr;
  const std::vector<std::vector<Beam>>* cached_beams = nullptr;
};

// Runs every pair on `config.jobs` workers. Output order equals input order.
// If pairs fail, the error of the lowest failing index is rethrown.
inline std::vector<PairResult> project_corpus(const CorpusInputs& in, Context& ctx) {
  const auto& pairs = *in.pairs;
  auto check_len = [&](const auto* v, const char* what) {
    if (v && v->size() != pairs.size())
      throw Error(std::string(what) + " count mismatch: pairs=" + std::to_string(pairs.size()) +
                  " " + what + "=" + std::to_string(v->size()));
  };
  check_len(in.gold, "gold");
  check_len(in.alignments, "alignments");
  check_len(in.cached_beams, "beams");

  std::vector<PairResult> results(pairs.size());
  std::vector<std::exception_ptr> errors(pairs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < pairs.size();) {
      try {
        PairInputs pi{&pairs[i], in.gold ? &(*in.gold)[i] : nullptr,
                      in.alignments ? &(*in.alignments)[i] : nullptr,
                      in.cached_beams ? &(*in.cached_beams)[i] : nullptr};
        results[i] = project_pair(pi, ctx);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::size_t n = std::min<std::size_t>(ctx.config.jobs, std::max<std::size_t>(pairs.size(), 1));
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < n; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

inline std::vector<LabeledSentence> projected_sentences(const std::vector<PairResult>& rs) {
  std::vector<LabeledSentence> out;
  out.reserve(rs.size());
  for (const auto& r : rs) out.push_back(r.projected);
  return out;
}

inline EvalReport evaluate_run(const std::vector<PairResult>& rs,
                               const std::vector<LabeledSentence>& gold) {
  EvalReport rep = span_f1(projected_sentences(rs), gold);
  for (const auto& r : rs)
    for (const auto& u : r.assignment.unassigned) ++rep.unassigned[u.reason];
  return rep;
}

// ---------------------------------------------------------------------------

struct SweepRow {
  int count = 0;
  double micro_f1 = 0.0;
  EvalReport report;
};

inline void check_counts(const std::vector<int>& counts) {
  if (counts.empty()) throw ConfigError("sweep: no counts given");
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] < 1) throw ConfigError("sweep: counts must be positive");
    if (i > 0 && counts[i] == counts[i - 1])
      throw ConfigError("sweep: duplicate count " + std::to_string(counts[i]));
    if (i > 0 && counts[i] < counts[i - 1]) throw ConfigError("sweep: counts must be ascending");
  }
}

// One run per candidate count. Beams are generated once at the largest count
// and each smaller run uses the top-k prefix.
inline std::vector<SweepRow> sweep_candidate_counts(const RunConfig& config,
                                                    const std::vector<int>& counts,
                                                    const std::vector<ParallelPair>& pairs,
                                                    const std::vector<LabeledSentence>& gold,
                                                    Backends& backends, const CategoryMap& map,
                                                    SelfProbCache* cache) {
  check_counts(counts);
  if (!(config.method == Method::TProjection || config.method == Method::MostProbable ||
        (config.method == Method::Oracle && config.oracle_candidates == CandidateSource::Generator)))
    throw ConfigError("sweep needs a generation-based method (tprojection, most-probable, oracle)");
  if (!backends.generator) throw ConfigError("sweep needs a generator");

  std::vector<std::vector<Beam>> beams(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (pairs[i].source.spans.empty()) continue;
    TagPrompt prompt = build_prompt(pairs[i], map);
    beams[i] = backends.generator->generate({prompt.text, counts.back(), config.max_new_tokens});
    if (beams[i].size() > static_cast<std::size_t>(counts.back()))
      beams[i].resize(static_cast<std::size_t>(counts.back()));
  }

  std::vector<SweepRow> rows;
  for (int k : counts) {
    RunConfig c = config;
    c.n_beams = k;
    Context ctx{c, map, backends, cache};
    auto rs = project_corpus({&pairs, &gold, nullptr, &beams}, ctx);
    EvalReport rep = evaluate_run(rs, gold);
    rows.push_back({k, rep.micro().f1(), rep});
  }
  return rows;
}

// ---------------------------------------------------------------------------

inline nlohmann::json config_json(const RunConfig& c) {
  return {{"method", to_string(c.method)},
          {"beams", c.n_beams},
          {"max_new_tokens", c.max_new_tokens},
          {"batch_size", c.batch_size},
          {"jobs", c.jobs},
          {"endpoint", c.endpoint},
          {"categories", c.categories_path},
          {"src_lang", c.langs.source},
          {"tgt_lang", c.langs.target},
          {"scorer", c.scorer == ScoreMode::Translation ? "translation" : "embedding"},
          {"oracle_candidates", c.oracle_candidates == CandidateSource::Ngram ? "ngram" : "generator"},
          {"ngram_fallback", c.ngram_fallback},
          {"seed", c.seed},
          {"cache_dir", c.cache_dir},
          {"alignments", c.alignments_path},
          {"gold", c.gold_path},
          {"beam_file", c.beam_file},
          {"lexicon", c.lexicon_path}};
}

inline nlohmann::json run_metadata(const RunConfig& c, const Backends& b, const SelfProbCache* cache,
                                   const std::vector<ParallelPair>& pairs,
                                   const std::vector<PairResult>& rs, const ConllStats& stats) {
  nlohmann::json unassigned = nlohmann::json::object();
  nlohmann::json spans = nlohmann::json::array();
  nlohmann::json diags = nlohmann::json::array();
  std::size_t n_spans = 0, n_assigned = 0, returned = 0, malformed = 0, fallbacks = 0;
  for (std::size_t i = 0; i < rs.size(); ++i) {
    n_spans += pairs[i].source.spans.size();
    n_assigned += rs[i].assignment.assigned.size();
    returned += rs[i].beams_returned;
    malformed += rs[i].beams_malformed;
    fallbacks += rs[i].ngram_fallback ? 1 : 0;
    for (const auto& u : rs[i].assignment.unassigned) {
      unassigned[u.reason] = unassigned.value(u.reason, 0) + 1;
      spans.push_back({{"id", pairs[i].id}, {"span", u.source_index}, {"reason", u.reason}});
    }
    for (const auto& d : rs[i].assignment.diagnostics) diags.push_back({{"id", pairs[i].id}, {"note", d}});
  }
  nlohmann::json meta = {
      {"config", config_json(c)},
      {"backends",
       {{"generator", b.generator ? b.generator->identity() : ""},
        {"scorer", b.scorer ? b.scorer->identity() : ""}}},
      {"self_probability_languages", "p(X|X) is requested with X's own language on both sides"},
      {"pairs", pairs.size()},
      {"source_spans", n_spans},
      {"assigned", n_assigned},
      {"unassigned", unassigned},
      {"unassigned_spans", spans},
      {"diagnostics", diags},
      {"generation", {{"beams_returned", returned}, {"beams_malformed", malformed}, {"ngram_fallbacks", fallbacks}}},
      {"docstart_lines_skipped", stats.docstart_lines}};
  if (cache)
    meta["cache"] = {{"hits", cache->hits()}, {"misses", cache->misses()}, {"entries", cache->size()}};
  return meta;
}

// Persisted self-probabilities live in <dir>/selfprob-<scorer hash>.jsonl.
inline std::filesystem::path cache_file(const std::string& dir, const ScorerBackend& scorer,
                                        const RunConfig& c) {
  std::uint64_t h = mock::fnv1a(scorer.identity() + '\x1f' + std::to_string(c.seed));
  std::ostringstream name;
  name << "selfprob-" << std::hex << h << ".jsonl";
  return std::filesystem::path(dir) / name.str();
}

inline void load_cache(SelfProbCache& cache, const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) return;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      cache.insert(j.at(0).get<std::string>(), j.at(1).get<std::string>(), j.at(2).get<double>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(lineno, file.string() + ": " + e.what());
    }
  }
}

inline void save_cache(const SelfProbCache& cache, const std::filesystem::path& file) {
  std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  for (const auto& [lang, text, v] : cache.snapshot())
    if (std::isfinite(v)) out << nlohmann::json::array({lang, text, v}).dump() << '\n';
}

// ---------------------------------------------------------------------------

// The configured map, or the defaults extended with an identity entry for
// every other tag found in the source corpus.
inline CategoryMap load_category_map(const RunConfig& c, const std::string& source_path) {
  if (!c.categories_path.empty()) {
    auto in = open_in(c.categories_path);
    return CategoryMap::from_json_stream(in);
  }
  CategoryMap map = CategoryMap::defaults();
  auto in = open_in(source_path);
  for (const auto& s : parse_conll(in, map))
    for (const auto& sp : s.spans) map.add_identity_if_unknown(sp.category);
  return map;
}

// Gold target annotations; tokens must equal the target sentences.
inline std::vector<LabeledSentence> load_gold(const std::string& path, const CategoryMap& map,
                                              const std::vector<ParallelPair>& pairs) {
  auto in = open_in(path);
  auto gold = parse_conll(in, map);
  if (gold.size() != pairs.size())
    throw Error("gold count mismatch: pairs=" + std::to_string(pairs.size()) +
                " gold=" + std::to_string(gold.size()));
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i].tokens != pairs[i].target_tokens)
      throw Error("gold sentence " + std::to_string(i) + " tokens differ from the target sentence");
    gold[i].id = pairs[i].id;
  }
  return gold;
}

struct RunPaths {
  std::string source;
  std::string target;
  std::string out;
  std::string report_json;  // optional
  std::string meta;         // defaults to <out>.meta.json
};

struct RunOutcome {
  int exit_status = 0;
  std::optional<EvalReport> report;
  nlohmann::json meta;
};

// Loads the corpora, projects every pair and writes the target CoNLL, the run
// metadata and, when gold is configured, the evaluation report.
inline RunOutcome run_project(const RunConfig& cfg, const RunPaths& paths) {
  auto errs = validate_config(cfg);
  if (paths.source.empty()) errs.push_back("missing --source");
  if (paths.target.empty()) errs.push_back("missing --target");
  if (paths.out.empty()) errs.push_back("missing --out");
  if (!errs.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw ConfigError(msg);
  }

  CategoryMap map = load_category_map(cfg, paths.source);
  ConllStats stats;
  auto src_in = open_in(paths.source);
  auto tgt_in = open_in(paths.target);
  auto pairs = load_parallel(src_in, tgt_in, map, TargetFormat::Auto, &stats);

  std::optional<std::vector<LabeledSentence>> gold;
  if (!cfg.gold_path.empty()) gold = load_gold(cfg.gold_path, map, pairs);
  std::optional<std::vector<AlignmentMap>> aligns;
  if (!cfg.alignments_path.empty()) {
    auto in = open_in(cfg.alignments_path);
    aligns = read_pharaoh(in);
  }

  Backends backends = make_backends(cfg);
  SelfProbCache cache;
  std::optional<std::filesystem::path> cfile;
  if (!cfg.cache_dir.empty() && backends.scorer) {
    cfile = cache_file(cfg.cache_dir, *backends.scorer, cfg);
    load_cache(cache, *cfile);
  }

  Context ctx{cfg, map, backends, &cache};
  auto results = project_corpus({&pairs, gold ? &*gold : nullptr, aligns ? &*aligns : nullptr, nullptr}, ctx);
  if (cfile) save_cache(cache, *cfile);

  RunOutcome outcome;
  {
    std::ofstream out(paths.out, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + paths.out);
    write_conll(out, projected_sentences(results), map);
  }
  outcome.meta = run_metadata(cfg, backends, &cache, pairs, results, stats);
  if (gold) {
    outcome.report = evaluate_run(results, *gold);
    outcome.meta["report"] = to_json(*outcome.report);
    if (!paths.report_json.empty()) {
      std::ofstream rj(paths.report_json, std::ios::binary);
      rj << to_json(*outcome.report).dump(2) << '\n';
    }
  }
  std::string meta_path = paths.meta.empty() ? paths.out + ".meta.json" : paths.meta;
  std::ofstream mo(meta_path, std::ios::binary);
  mo << outcome.meta.dump(2) << '\n';
  return outcome;
}

}  // namespace tproj
