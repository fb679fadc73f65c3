// tldr-audit: harvest, generate, tag-roles, evaluate and report.
// Exit codes: 0 success, 1 input error, 2 partial failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tldr/corpus.hpp"
#include "tldr/harvest.hpp"
#include "tldr/http_transport.hpp"
#include "tldr/llmclient.hpp"
#include "tldr/report.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 1;
constexpr int kPartial = 2;

using InputError = std::runtime_error;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::unique_ptr<std::ofstream> open_out(const std::string& path, bool append = false) {
  auto out = std::make_unique<std::ofstream>(path, append ? std::ios::app : std::ios::trunc);
  if (!*out) throw InputError("cannot write " + path);
  return out;
}

bool is_url(const std::string& s) { return s.rfind("http://", 0) == 0 || s.rfind("https://", 0) == 0; }

// Live transport, or fixture replay; either may be recorded.
struct TransportOptions {
  std::string replay;
  std::string record;
  std::unique_ptr<std::ofstream> record_file;

  void add(CLI::App* cmd) {
    cmd->add_option("--replay", replay, "Serve requests from a fixture JSONL instead of the network")
        ->check(CLI::ExistingFile);
    cmd->add_option("--record", record, "Append every exchange to a fixture JSONL");
  }

  tldr::Transport build(tldr::Transport live) {
    tldr::Transport t = replay.empty() ? std::move(live) : tldr::Transport(tldr::FixtureTransport::load(replay));
    if (!record.empty()) {
      record_file = open_out(record, true);
      t = tldr::recording_transport(std::move(t), std::make_shared<tldr::AppendChannel>(*record_file));
    }
    return t;
  }
};

// ---------------------------------------------------------------------------
// harvest

struct HarvestArgs {
  std::vector<std::string> pages;
  std::string abstracts;
  std::string out;
  std::string report;
  tldr::MetadataServiceConfig metadata;
  bool offline = false;
  TransportOptions transport;
};

int run_harvest(HarvestArgs& a) {
  const auto abstracts = tldr::load_abstracts(a.abstracts);
  std::optional<tldr::MetadataClient> client;
  if (!a.offline) client.emplace(a.metadata, a.transport.build(tldr::http_get_transport("tldr-audit (mailto:" + a.metadata.mailto + ")")));
  const auto fetch = tldr::http_get_transport();

  tldr::HarvestReport report;
  std::vector<tldr::PairRecord> pairs;
  std::size_t page_failures = 0;
  for (const auto& page_ref : a.pages) {
    std::string page;
    try {
      if (is_url(page_ref)) {
        const auto resp = fetch({page_ref, "", 30000});
        if (resp.status != 200) throw std::runtime_error("HTTP " + std::to_string(resp.status));
        page = resp.body;
      } else {
        page = read_file(page_ref);
      }
    } catch (const std::exception& e) {
      std::cerr << "harvest: " << page_ref << ": " << e.what() << '\n';
      ++page_failures;
      continue;
    }
    ++report.pages_processed;
    std::vector<std::string> diagnostics;
    const auto entries = tldr::parse_annotated_bibliography(page, &diagnostics);
    for (const auto& d : diagnostics) std::cerr << "harvest: " << page_ref << ": " << d << '\n';
    std::vector<tldr::DoiResolution> resolutions;
    for (const auto& e : entries) {
      // Only annotated entries are worth a metadata query.
      if (!e.annotation_text && !e.embedded_doi) {
        resolutions.push_back({e.citation_text, std::nullopt, 0.0, tldr::ResolutionMethod::Failed, "not annotated"});
        continue;
      }
      auto r = tldr::resolve_doi(e, client ? &*client : nullptr);
      if (!r.resolved_doi && e.annotation_text) std::cerr << "harvest: unresolved: " << r.cause << '\n';
      resolutions.push_back(std::move(r));
    }
    auto page_pairs = tldr::assemble_pairs(entries, resolutions, abstracts, tldr::page_doi(page), report);
    pairs.insert(pairs.end(), page_pairs.begin(), page_pairs.end());
  }

  auto out = open_out(a.out);
  tldr::write_pairs(*out, pairs);
  const auto summary = report.to_json().dump(2) + "\n";
  if (!a.report.empty()) {
    *open_out(a.report) << summary;
  } else {
    std::cerr << summary;
  }
  const bool partial = page_failures > 0 || report.unresolved > 0 || report.missing_abstract > 0;
  return partial ? kPartial : kOk;
}

// ---------------------------------------------------------------------------
// generate / tag-roles

struct ClientArgs {
  tldr::GenerationConfig config;
  std::string dialect = "ollama";
  int threads = 1;
  TransportOptions transport;

  void add(CLI::App* cmd) {
    cmd->add_option("--model", config.model, "Model id")->required();
    cmd->add_option("--endpoint", config.endpoint, "Chat service base URL")->capture_default_str();
    cmd->add_option("--dialect", dialect, "ollama or openai")->capture_default_str();
    cmd->add_option("--temperature", config.temperature)->capture_default_str();
    cmd->add_option("--num-ctx", config.context_window, "Context window")->capture_default_str();
    cmd->add_flag("--thinking", config.thinking_enabled, "Enable the model's thinking mode");
    cmd->add_option("--timeout-ms", config.timeout_ms)->capture_default_str();
    cmd->add_option("--retries", config.max_retries)->capture_default_str();
    cmd->add_option("--backoff-ms", config.backoff_ms)->capture_default_str();
    cmd->add_option("--max-in-flight", config.max_in_flight)->capture_default_str();
    cmd->add_option("--threads", threads, "Worker threads")->capture_default_str();
    transport.add(cmd);
  }

  tldr::ChatClient build() {
    config.dialect = tldr::parse_dialect(dialect);
    return tldr::ChatClient(config, transport.build(tldr::http_post_transport()));
  }
};

tldr::Corpus load_corpus(const std::string& path) {
  auto loaded = tldr::load_pairs(path);
  for (const auto& r : loaded.rejects) std::cerr << path << ":" << r.line << ": rejected: " << r.message << '\n';
  return loaded.corpus;
}

int report_batch(const tldr::BatchSummary& s, const char* what) {
  for (const auto& f : s.failures) std::cerr << what << ": failed: " << f << '\n';
  std::cerr << what << ": " << s.succeeded << " succeeded, " << s.failures.size() << " failed\n";
  return s.failures.empty() ? kOk : kPartial;
}

struct GenerateArgs {
  std::string pairs;
  std::string out;
  std::uint64_t seed = 2025;
  bool append = false;
  ClientArgs client;
};

int run_generate(GenerateArgs& a) {
  const auto corpus = tldr::split_few_shot(load_corpus(a.pairs), a.seed);
  auto client = a.client.build();
  auto file = open_out(a.out, a.append);
  tldr::AppendChannel channel(*file);
  return report_batch(tldr::generate_summaries(corpus, client, channel, a.client.threads), "generate");
}

struct TagArgs {
  std::string pairs;
  std::string out;
  int max_attempts = 3;
  ClientArgs client;
};

int run_tag_roles(TagArgs& a) {
  const auto corpus = load_corpus(a.pairs);
  auto client = a.client.build();
  auto file = open_out(a.out);
  tldr::AppendChannel channel(*file);
  return report_batch(tldr::tag_corpus_roles(corpus, client, channel, a.client.threads, a.max_attempts), "tag-roles");
}

// ---------------------------------------------------------------------------
// evaluate / report

// Flags that mirror config keys; set only when given, so they override.
struct ConfigFlags {
  std::vector<std::pair<std::string, CLI::Option*>> options;
  std::vector<std::string> values;
  std::vector<std::string> generations;
  CLI::Option* generations_opt = nullptr;
  std::vector<std::string> overrides;

  void add(CLI::App* cmd, const std::vector<std::pair<std::string, std::string>>& keys) {
    values.reserve(keys.size());
    for (const auto& [key, help] : keys) {
      values.emplace_back();
      auto flag = "--" + key;
      std::replace(flag.begin(), flag.end(), '_', '-');
      options.emplace_back(key, cmd->add_option(flag, values.back(), help));
    }
    generations_opt = cmd->add_option("--generations", generations, "Generation JSONL files (one or more)");
    cmd->add_option("--set", overrides, "Extra key=value settings");
  }

  void apply(tldr::AuditConfig& cfg) const {
    for (std::size_t i = 0; i < options.size(); ++i) {
      if (options[i].second->count() > 0) cfg.set(options[i].first, values[i]);
    }
    if (generations_opt->count() > 0) {
      cfg.generations.clear();
      for (const auto& g : generations) cfg.set("generations", g);
    }
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw tldr::AuditError("--set expects key=value, got " + kv);
      cfg.set(tldr::detail::trim(std::string_view(kv).substr(0, eq)), std::string_view(kv).substr(eq + 1));
    }
  }
};

const std::vector<std::pair<std::string, std::string>> kSharedKeys = {
    {"pairs", "Pairs JSONL"},
    {"semantic_human", "Sidecar scores against human references"},
    {"semantic_abstract", "Sidecar scores against abstracts"},
    {"baseline_iterations", "Human baseline iterations"},
    {"baseline_seed", "Human baseline seed"},
    {"bleu_mode", "sentence or corpus"},
    {"threads", "Worker threads (0: all cores)"},
};

struct EvaluateArgs {
  ConfigFlags flags;
  std::string reference = "both";
  std::string out;
};

int run_evaluate(EvaluateArgs& a) {
  tldr::AuditConfig cfg;
  a.flags.apply(cfg);
  cfg.lengths = cfg.readability = cfg.novelty = cfg.rhetoric = false;
  const auto report = tldr::run_audit(cfg);

  std::string csv = "reference,model,bleu,rouge1,rouge2,rougeL,meteor,bertscore,moverscore,pairs\n";
  for (bool human_ref : {true, false}) {
    if ((human_ref && a.reference == "abstract") || (!human_ref && a.reference == "human")) continue;
    for (const auto& [name, m] : tldr::detail::reference_rows(report, human_ref)) {
      csv += std::string(human_ref ? "human," : "abstract,") + tldr::detail::csv_field(name);
      for (const auto& cell : tldr::detail::metric_cells(*m)) csv += ',' + cell;
      csv += ',' + std::to_string(m->pairs) + '\n';
    }
  }
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    *open_out(a.out) << csv;
  }
  for (const auto& w : report.warnings) std::cerr << "evaluate: " << w << '\n';
  for (const auto& [reason, n] : report.skipped_items) std::cerr << "evaluate: skipped " << n << ": " << reason << '\n';
  return report.partial() ? kPartial : kOk;
}

struct ReportArgs {
  std::string config;
  ConfigFlags flags;
};

int run_report(ReportArgs& a) {
  auto cfg = a.config.empty() ? tldr::AuditConfig{} : tldr::load_audit_config(a.config);
  a.flags.apply(cfg);
  const auto report = tldr::run_audit(cfg);
  const auto files = tldr::emit_tables(report, cfg.out_dir);
  for (const auto& f : files) std::cout << f.string() << '\n';
  for (const auto& w : report.warnings) std::cerr << "report: " << w << '\n';
  for (const auto& [reason, n] : report.skipped_items) std::cerr << "report: skipped " << n << ": " << reason << '\n';
  return report.partial() ? kPartial : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audit extreme scientific summaries: harvest, generate, tag-roles, evaluate, report"};
  app.require_subcommand(1);

  HarvestArgs harvest;
  auto* h = app.add_subcommand("harvest", "Build pairs from annotated bibliography pages");
  h->add_option("--pages", harvest.pages, "HTML files or URLs")->required();
  h->add_option("--abstracts", harvest.abstracts, "JSONL of {doi, abstract}")->required()->check(CLI::ExistingFile);
  h->add_option("--out", harvest.out, "Output pairs JSONL")->required();
  h->add_option("--report", harvest.report, "Output harvest counts JSON");
  h->add_option("--mailto", harvest.metadata.mailto, "Contact address for the metadata service");
  h->add_option("--metadata-url", harvest.metadata.base_url)->capture_default_str();
  h->add_option("--min-score", harvest.metadata.min_score, "Minimum relevance score")->capture_default_str();
  h->add_option("--rps", harvest.metadata.requests_per_second, "Metadata requests per second")->capture_default_str();
  h->add_flag("--offline", harvest.offline, "Use embedded DOI links only");
  harvest.transport.add(h);

  GenerateArgs generate;
  auto* g = app.add_subcommand("generate", "Generate summaries for the test pairs");
  g->add_option("--pairs", generate.pairs)->required()->check(CLI::ExistingFile);
  g->add_option("--out", generate.out)->required();
  g->add_option("--seed", generate.seed, "Few-shot split seed")->capture_default_str();
  g->add_flag("--append", generate.append, "Append to --out");
  generate.client.add(g);

  TagArgs tag;
  auto* t = app.add_subcommand("tag-roles", "Label abstract sentences with rhetorical roles");
  t->add_option("--pairs", tag.pairs)->required()->check(CLI::ExistingFile);
  t->add_option("--out", tag.out)->required();
  t->add_option("--max-attempts", tag.max_attempts, "Queries per abstract")->capture_default_str();
  tag.client.add(t);

  EvaluateArgs evaluate;
  auto* e = app.add_subcommand("evaluate", "Reference-based metrics for any subset of inputs");
  evaluate.flags.add(e, kSharedKeys);
  e->add_option("--reference", evaluate.reference, "human, abstract or both")
      ->check(CLI::IsMember({"human", "abstract", "both"}))
      ->capture_default_str();
  e->add_option("--out", evaluate.out, "CSV path (default stdout)");

  ReportArgs report;
  auto* r = app.add_subcommand("report", "Full audit: tables, heatmaps and plots");
  r->add_option("--config", report.config, "key = value config file")->check(CLI::ExistingFile);
  auto keys = kSharedKeys;
  keys.insert(keys.end(), {{"spans", "Sidecar entity spans JSONL"},
                           {"roles", "Role labels JSONL"},
                           {"out_dir", "Output directory"},
                           {"split_seed", "Few-shot split seed"},
                           {"sections", "Enabled sections"}});
  report.flags.add(r, keys);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*h) return run_harvest(harvest);
    if (*g) return run_generate(generate);
    if (*t) return run_tag_roles(tag);
    if (*e) return run_evaluate(evaluate);
    if (*r) return run_report(report);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return kInputError;
  }
  return kOk;
}
