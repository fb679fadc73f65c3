#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "tldr/harvest.hpp"

using namespace tldr;

namespace {

std::string read_file(const std::string& name) {
  std::ifstream in(std::string(TLDR_FIXTURES) + "/" + name);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string wrap_list(const std::string& items) {
  return "<html><body><ol class=\"references\">" + items + "</ol></body></html>";
}

MetadataServiceConfig quiet_config() {
  MetadataServiceConfig c;
  c.mailto = "audit@example.org";
  c.requests_per_second = 1000;
  c.backoff_ms = 1;
  return c;
}

HttpResponse works(const std::string& doi, double score) {
  nlohmann::json j;
  j["message"]["items"] = nlohmann::json::array({{{"DOI", doi}, {"score", score}}});
  return {200, j.dump()};
}

const char* kRiquetAnnotation =
    "Together with reference 99, this paper describes the fine mapping of a QTL with a major effect on milk "
    "composition to a small chromosome segment by identity-by-descent mapping in outbred pedigrees.";

}  // namespace

TEST(Html, EntitiesAndTags) {
  EXPECT_EQ(html::decode_entities("a &amp; b &lt;c&gt; &#946; &#x3B3; &ndash; &bogus; &"), "a & b <c> β γ – &bogus; &");
  const auto toks = html::tokenize("<P Class='x' data-a=1>Hi<br/>there<!-- c --></p><script>var x='<b>'</script>");
  ASSERT_EQ(toks.size(), 5u);
  EXPECT_EQ(toks[0].name, "p");
  EXPECT_EQ(toks[0].attr("class"), "x");
  EXPECT_EQ(toks[0].attr("data-a"), "1");
  EXPECT_EQ(toks[1].text, "Hi");
  EXPECT_EQ(toks[2].name, "br");
  EXPECT_TRUE(toks[2].self_closing);
  EXPECT_EQ(toks[3].text, "there");
  EXPECT_EQ(toks[4].kind, html::Token::EndTag);
}

TEST(Doi, SyntaxAndLinks) {
  EXPECT_TRUE(is_valid_doi("10.1038/12567"));
  EXPECT_TRUE(is_valid_doi("10.1073/pnas.96.16.9252"));
  EXPECT_FALSE(is_valid_doi("10.10/abc"));
  EXPECT_FALSE(is_valid_doi("11.1038/abc"));
  EXPECT_FALSE(is_valid_doi("10.1038/"));
  EXPECT_FALSE(is_valid_doi("10.1038/a b"));
  EXPECT_EQ(doi_from_link("https://doi.org/10.1073%2Fpnas.96.16.9252"), "10.1073/pnas.96.16.9252");
  EXPECT_EQ(doi_from_link("http://scholar.google.com/scholar_lookup?&title=X&doi=10.1038%2F12567&volume=1"),
            "10.1038/12567");
  EXPECT_EQ(doi_from_link("http://scholar.google.com/scholar_lookup?&title=X"), std::nullopt);
  EXPECT_EQ(doi_from_link("https://example.org/10.1038/12567"), std::nullopt);
  EXPECT_EQ(normalize_doi(" https://doi.org/10.1038/NRG701 "), "10.1038/nrg701");
}

TEST(ParseBibliography, AnnotatedFixturePage) {
  std::vector<std::string> diag;
  const auto page = read_file("annotated_bibliography.html");
  const auto entries = parse_annotated_bibliography(page, &diag);
  EXPECT_TRUE(diag.empty());
  ASSERT_EQ(entries.size(), 5u);
  std::size_t annotated = 0;
  for (const auto& e : entries) annotated += e.annotation_text.has_value();
  EXPECT_EQ(annotated, 1u);

  const auto& riquet = entries[2];
  ASSERT_TRUE(riquet.annotation_text);
  EXPECT_EQ(*riquet.annotation_text, kRiquetAnnotation);
  EXPECT_TRUE(riquet.annotation_text->starts_with(
      "Together with reference 99, this paper describes the fine mapping"));
  EXPECT_EQ(riquet.citation_text,
            "Riquet, J. et al. Fine-mapping of quantitative trait loci by identity by descent in outbred populations: "
            "application to milk production in dairy cattle. Proc. Natl Acad. Sci. USA 96, 9252–9257 (1999).");
  EXPECT_EQ(riquet.embedded_doi, "10.1073/pnas.96.16.9252");
  ASSERT_TRUE(riquet.scholar_link);
  EXPECT_NE(riquet.scholar_link->find("scholar_lookup"), std::string::npos);

  EXPECT_EQ(entries[1].embedded_doi, "10.1093/genetics/161.1.275");  // scholar link only
  EXPECT_FALSE(entries[3].annotation_text);                            // bold head, plain tail
  EXPECT_FALSE(entries[4].embedded_doi);
  EXPECT_EQ(page_doi(page), "10.1038/35048560");
}

TEST(ParseBibliography, Deterministic) {
  const auto page = read_file("annotated_bibliography.html");
  EXPECT_EQ(parse_annotated_bibliography(page), parse_annotated_bibliography(page));
}

TEST(ParseBibliography, TrailingBoldRules) {
  const auto e = parse_annotated_bibliography(wrap_list(
      "<li>Plain citation without any bold at all (2001).</li>"
      "<li>A. Author. Title. <b>12</b>, 1-2 (2003).</li>"
      "<li>A. Author. Title (2003). <b>Short bold tail</b></li>"
      "<li>A. Author. Title (2003). <strong>First bold part</strong> <b>and the second part.</b></li>"
      "<li>A. Author. Title (2003). <span style=\"font-weight: bold\">Styled bold annotation text here.</span>"
      "<div class=\"c-links\"><a href=\"/x\">Article</a></div></li>"
      "<li>A. Author. Title (2003). <b>Annotation with <i>italic species</i> name inside.</b></li>"));
  ASSERT_EQ(e.size(), 6u);
  EXPECT_FALSE(e[0].annotation_text);
  EXPECT_FALSE(e[1].annotation_text);
  EXPECT_FALSE(e[2].annotation_text);  // three words
  EXPECT_EQ(e[2].citation_text, "A. Author. Title (2003). Short bold tail");
  EXPECT_EQ(e[3].annotation_text, "First bold part and the second part.");
  EXPECT_EQ(e[3].citation_text, "A. Author. Title (2003).");
  EXPECT_EQ(e[4].annotation_text, "Styled bold annotation text here.");
  EXPECT_EQ(e[5].annotation_text, "Annotation with italic species name inside.");
}

TEST(ParseBibliography, TolerantOfUnclosedItems) {
  const auto e = parse_annotated_bibliography(
      "<ul id=\"references-list\"><li>First entry text here.<li>Second <b>entry has an annotation here.</b>"
      "<li>Third &amp; final</ul><p>after</p>");
  ASSERT_EQ(e.size(), 3u);
  EXPECT_EQ(e[0].citation_text, "First entry text here.");
  EXPECT_EQ(e[1].annotation_text, "entry has an annotation here.");
  EXPECT_EQ(e[2].citation_text, "Third & final");
}

TEST(ParseBibliography, NoListGivesDiagnostic) {
  std::vector<std::string> diag;
  EXPECT_TRUE(parse_annotated_bibliography("<html><ol><li>x</li></ol></html>", &diag).empty());
  EXPECT_EQ(diag, std::vector<std::string>{"no reference list found"});
}

TEST(RateLimiter, NeverExceedsRateUnderFakeClock) {
  using namespace std::chrono;
  steady_clock::time_point now{};
  std::vector<steady_clock::time_point> stamps;
  RateLimiter limiter(
      2.0, [&] { return now; }, [&](milliseconds d) { now += d; });
  for (int i = 0; i < 20; ++i) {
    limiter.acquire();
    stamps.push_back(now);
    now += milliseconds(37 * (i % 3));  // irregular work between requests
  }
  for (std::size_t i = 0; i < stamps.size(); ++i) {
    std::size_t in_window = 0;
    for (std::size_t j = i; j < stamps.size() && stamps[j] - stamps[i] < seconds(1); ++j) ++in_window;
    EXPECT_LE(in_window, 2u) << i;
  }
}

TEST(Resolve, EmbeddedDoiShortCircuits) {
  int calls = 0;
  MetadataClient client(quiet_config(), [&](const HttpRequest&) { ++calls; return works("10.1/x", 99); },
                        [](auto) {});
  BibliographyEntry e{"Some citation.", std::nullopt, std::nullopt, "10.1038/12567"};
  const auto r = resolve_doi(e, &client);
  EXPECT_EQ(r.method, ResolutionMethod::EmbeddedLink);
  EXPECT_EQ(r.resolved_doi, "10.1038/12567");
  EXPECT_EQ(calls, 0);
  EXPECT_THROW(resolve_doi(BibliographyEntry{"  ", {}, {}, {}}, &client), std::invalid_argument);
}

TEST(Resolve, ReplaysRecordedServiceResponse) {
  const auto page = read_file("annotated_bibliography.html");
  const auto entries = parse_annotated_bibliography(page);
  const auto& haley = entries[4];
  MetadataClient client(quiet_config(), FixtureTransport::load(std::string(TLDR_FIXTURES) + "/crossref_works.jsonl"),
                        [](auto) {});
  const auto r = resolve_doi(haley, &client);
  EXPECT_EQ(r.method, ResolutionMethod::MetadataQuery) << r.cause;
  EXPECT_EQ(r.resolved_doi, "10.1038/hdy.1992.131");
  EXPECT_DOUBLE_EQ(r.match_score, 112.4);
}

TEST(Resolve, QueryUrlShape) {
  EXPECT_EQ(works_query_url(quiet_config(), "A & B"),
            "https://api.crossref.org/works?query.bibliographic=A%20%26%20B&rows=1&mailto=audit%40example.org");
}

TEST(Resolve, BelowThresholdFails) {
  MetadataClient client(quiet_config(), [](const HttpRequest&) { return works("10.1/x", 12.0); }, [](auto) {});
  const auto r = client.query("Obscure citation");
  EXPECT_EQ(r.method, ResolutionMethod::Failed);
  EXPECT_FALSE(r.resolved_doi);
  EXPECT_EQ(r.cause, "score below threshold");
}

TEST(Resolve, RetriesThenRecordsCause) {
  int calls = 0;
  std::vector<std::chrono::milliseconds> sleeps;
  auto cfg = quiet_config();
  cfg.max_retries = 2;
  cfg.backoff_ms = 100;
  MetadataClient failing(
      cfg, [&](const HttpRequest&) -> HttpResponse { ++calls; throw TransportError("connection refused"); },
      [&](std::chrono::milliseconds d) { sleeps.push_back(d); });
  const auto r = failing.query("Citation");
  EXPECT_EQ(calls, 3);
  EXPECT_EQ(r.method, ResolutionMethod::Failed);
  EXPECT_EQ(r.cause, "retries exhausted: connection refused");
  EXPECT_NE(std::find(sleeps.begin(), sleeps.end(), std::chrono::milliseconds(200)), sleeps.end());

  int n = 0;
  MetadataClient flaky(cfg, [&](const HttpRequest&) { return ++n < 3 ? HttpResponse{503, ""} : works("10.1000/yy", 80); },
                       [](auto) {});
  EXPECT_EQ(flaky.query("Citation").resolved_doi, "10.1000/yy");
}

TEST(Assemble, FixturePair) {
  const auto page = read_file("annotated_bibliography.html");
  const auto entries = parse_annotated_bibliography(page);
  std::vector<DoiResolution> res;
  for (const auto& e : entries) res.push_back(resolve_doi(e, nullptr));
  const auto abstracts = load_abstracts(std::string(TLDR_FIXTURES) + "/bibliography_abstracts.jsonl");
  HarvestReport report;
  const auto pairs = assemble_pairs(entries, res, abstracts, page_doi(page), report);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].doi, "10.1073/pnas.96.16.9252");
  EXPECT_EQ(pairs[0].summary, kRiquetAnnotation);
  EXPECT_TRUE(pairs[0].abstract.starts_with("Numerous quantitative trait loci"));
  EXPECT_TRUE(pairs[0].is_human());
  EXPECT_EQ(pairs[0].target_word_count, static_cast<int>(word_count(kRiquetAnnotation)));
  EXPECT_EQ(pairs[0].annotating_doi, "10.1038/35048560");
  EXPECT_EQ(report.entries_found, 5u);
  EXPECT_EQ(report.entries_with_annotation, 1u);
  EXPECT_EQ(report.dois_resolved, 4u);
  EXPECT_EQ(report.pairs_emitted, 1u);
  EXPECT_EQ(report.unresolved, 0u);
  // The emitted record passes corpus validation.
  EXPECT_NO_THROW(parse_pair_record(nlohmann::json::parse(to_json(pairs[0]).dump())));
}

TEST(Assemble, DropsAreCounted) {
  const std::vector<BibliographyEntry> entries = {
      {"c1", "one two three four", {}, "10.1000/a"},
      {"c2", "five six seven eight", {}, "10.1000/b"},
      {"c3", "nine ten eleven twelve", {}, {}},
      {"c4", std::nullopt, {}, "10.1000/c"}};
  std::vector<DoiResolution> res;
  for (const auto& e : entries) res.push_back(resolve_doi(e, nullptr));
  const AbstractIndex abstracts = {{"10.1000/a", "Abstract A."}, {"10.1000/c", "Abstract C."}};
  HarvestReport report;
  const auto pairs = assemble_pairs(entries, res, abstracts, std::nullopt, report);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(report.pairs_emitted, 1u);
  EXPECT_EQ(report.missing_abstract, 1u);
  EXPECT_EQ(report.unresolved, 1u);
  EXPECT_LE(report.pairs_emitted, report.entries_with_annotation);
  for (const auto& p : pairs) EXPECT_TRUE(abstracts.count(p.doi));
}
