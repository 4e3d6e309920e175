#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <atomic>
#include <thread>

#include "mano/parking/program.hpp"
#include "mano/util/rng.hpp"
#include "parking_fixtures.hpp"
#include "selector_oracle.hpp"

using namespace mano;
using namespace mano::parking;
using namespace mano::oracle::parking_fixtures;

namespace {

std::string random_markup(Rng& rng, int depth = 0) {
  static const char* tags[] = {"div", "span", "p", "a", "ul", "li", "img", "script", "style", "section", "b"};
  std::string out;
  const int n = rng.range(1, depth > 2 ? 2 : 4);
  for (int i = 0; i < n; ++i) {
    const std::string tag = tags[rng.range(0, 10)];
    switch (rng.range(0, 5)) {
      case 0: out += "  some  text\n &amp; more "; break;
      case 1: out += "<!-- note -->"; break;
      default: {
        out += "<" + tag;
        if (rng.bernoulli(0.5)) out += " class=\"c" + std::to_string(rng.range(0, 3)) + "\"";
        if (rng.bernoulli(0.3)) out += " onclick=\"go()\"";
        if (rng.bernoulli(0.2)) out += " style=\"display:none\"";
        if (tag == "img") out += rng.bernoulli(0.5) ? " width=\"1\" height=\"1\">" : " src=\"/x.png\">";
        else {
          out += ">";
          if (tag == "script" || tag == "style") out += "var a = 1 < 2;";
          else if (depth < 4) out += random_markup(rng, depth + 1);
          out += "</" + tag + ">";
        }
      }
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// HTML cleaning

TEST(ParkingHtml, ConstructedFixtureHasExactRatio) {
  const auto src = fixture("ratio95.html");
  const auto c = simplify_html(src);
  EXPECT_EQ(c.cleaned_bytes * 20, c.original_bytes);
  EXPECT_NEAR(c.ratio(), 0.95, 1e-12);
}

TEST(ParkingHtml, ScriptHeavyPageCompressesAboveNinetyPercent) {
  const auto c = simplify_html(fixture("script_heavy.html"));
  EXPECT_GE(c.ratio(), 0.90);
  EXPECT_NE(c.markup.find("Desk lamp model 11"), std::string::npos);
  EXPECT_EQ(c.markup.find("<script"), std::string::npos);
  EXPECT_EQ(c.markup.find("onclick"), std::string::npos);
  EXPECT_EQ(c.markup.find("px.example.net"), std::string::npos);
  EXPECT_EQ(c.markup.find("cookies"), std::string::npos);
}

TEST(ParkingHtml, CleanContentIsUntouched) {
  const std::string src = R"(<html><body><p id="a" class="x">Hello <a href="/b">world</a></p></body></html>)";
  const auto c = simplify_html(src);
  EXPECT_EQ(c.markup, src);
  EXPECT_DOUBLE_EQ(c.ratio(), 0.0);
}

TEST(ParkingHtml, RemovesNoiseAndKeepsSemantics) {
  const auto c = simplify_html(
      "<div id=k class='a b' data-x=1 onclick='f()' style='color:red'>"
      "<script>x()</script><style>p{}</style><!-- c -->"
      "<img src=p.gif width=1 height=1><img src=big.png alt=Big width=300>"
      "<span hidden>gone</span><span style='visibility: hidden'>gone</span>"
      "<p>  two \n  words </p><a href='/h' title=T>link</a></div>");
  EXPECT_EQ(c.markup, R"(<div id="k" class="a b"><img src="big.png" alt="Big"><p> two words </p><a href="/h" title="T">link</a></div>)");
}

TEST(ParkingHtml, SimplifyIsIdempotent) {
  for (const char* f : {"script_heavy.html", "ratio95.html", "site/v1.html", "site/v2.html", "product_card.html", "table.html"}) {
    const auto once = simplify_html(fixture(f));
    const auto twice = simplify_html(once.markup);
    EXPECT_EQ(twice.markup, once.markup) << f;
    EXPECT_DOUBLE_EQ(twice.ratio(), 0.0) << f;
  }
  Rng rng(11);
  for (int i = 0; i < 300; ++i) {
    const auto src = "<html><body>" + random_markup(rng) + "</body></html>";
    const auto once = simplify_html(src);
    EXPECT_EQ(simplify_html(once.markup).markup, once.markup) << src;
    EXPECT_NO_THROW((void)parse_html(once.markup));
    EXPECT_LE(once.cleaned_bytes, once.original_bytes);
  }
}

TEST(ParkingHtml, ParserIsTolerantButRejectsBrokenInput) {
  EXPECT_NO_THROW((void)parse_html("<p>unclosed <b>bold <i>italic</p> </span> trailing"));
  EXPECT_NO_THROW((void)parse_html("<ul><li>a<li>b</ul>"));
  EXPECT_THROW((void)parse_html(std::string("<p>a\0b</p>", 10)), Error);
  EXPECT_THROW((void)parse_html("<p><!-- never closed"), Error);
  EXPECT_THROW((void)simplify_html("<div><script>never closed"), Error);
}

TEST(ParkingHtml, DecodesEntities) {
  EXPECT_EQ(decode_entities("a &amp; b &lt;c&gt; &#65;&#x42; &copy; &nosuch;"), "a & b <c> AB \xC2\xA9 &nosuch;");
}

// ---------------------------------------------------------------------------
// Selectors

TEST(ParkingSelector, ParsePrintRoundTrip) {
  for (const char* s : {"//span", "/html/body//div.card/span:nth(2)", "//*#main//*:nth(3)", "//td.n:nth(1)"})
    EXPECT_EQ(to_string(parse_selector(s)), s);
  for (const char* bad : {"", "span", "//", "//span.", "//span:nth(0)", "//span:nth(x)", "//a//b//c//d//e//f//g//h//i",
                          "//span extra"})
    EXPECT_THROW((void)parse_selector(bad), Error) << bad;
}

TEST(ParkingSelector, MatchingAgreesWithIndependentMatcher) {
  const auto doc = simplify_html(fixture("site/v1.html")).doc();
  Index ix(doc.root);
  const auto flat = oracle::flatten(doc.root);
  ASSERT_EQ(flat.size(), ix.nodes.size());
  for (const char* s : {"//span", "/html/body/div//span.price", "//div:nth(2)/*:nth(2)", "/body", "//*#page/*", "//a",
                        "//div//div//span:nth(3)"}) {
    const auto sel = parse_selector(s);
    for (std::size_t i = 0; i < flat.size(); ++i)
      EXPECT_EQ(matches(ix, sel, static_cast<int>(i)), oracle::oracle_matches(sel, flat[i])) << s << " at " << i;
  }
}

TEST(ParkingSynthesis, ProductCardPriceIsUniqueAndMinimal) {
  const auto doc = simplify_html(fixture("product_card.html")).doc();
  Index ix(doc.root);
  const auto price = *ix.find_path(path_with_text(doc, "span", "$42.50"));
  const auto sel = synthesize_selector(ix, {{price}, {}, false});
  EXPECT_EQ(select(ix, sel), std::vector<int>{price});
  const auto brute = oracle::brute_force_selector(doc.root, {static_cast<std::size_t>(price)}, {}, false, 4);
  ASSERT_TRUE(brute.best);
  EXPECT_EQ(to_string(sel), to_string(*brute.best));
}

TEST(ParkingSynthesis, TwoTableRowsGeneralizeToTheColumn) {
  const auto doc = simplify_html(fixture("table.html")).doc();
  Index ix(doc.root);
  const int a = *ix.find_path(path_with_text(doc, "td", "0.80"));
  const int b = *ix.find_path(path_with_text(doc, "td", "1.20"));
  const int neg = *ix.find_path(path_with_text(doc, "td", "120"));
  const auto sel = synthesize_selector(ix, {{a, b}, {neg}, true});
  std::vector<std::string> got;
  for (int i : select(ix, sel)) got.push_back(text_content(*ix.nodes[static_cast<std::size_t>(i)].node));
  EXPECT_EQ(got, (std::vector<std::string>{"0.80", "0.45", "1.20", "6.99", "2.10", "1.75"})) << to_string(sel);
  const auto brute = oracle::brute_force_selector(doc.root, {static_cast<std::size_t>(a), static_cast<std::size_t>(b)},
                                                  {static_cast<std::size_t>(neg)}, true, 4);
  ASSERT_TRUE(brute.best);
  EXPECT_EQ(to_string(sel), to_string(*brute.best));
}

TEST(ParkingSynthesis, EveryProductFieldIsMinimal) {
  const auto doc = simplify_html(fixture("site/v1.html")).doc();
  Index ix(doc.root);
  for (const char* cls : {"title", "brand", "price", "released", "blurb", "buy"}) {
    const int node = *ix.find_path(path_with_class(doc, cls));
    const auto sel = synthesize_selector(ix, {{node}, {}, false});
    const auto steps = static_cast<int>(sel.steps.size());
    const auto brute = oracle::brute_force_selector(doc.root, {static_cast<std::size_t>(node)}, {}, false, steps);
    ASSERT_TRUE(brute.best) << cls;
    EXPECT_EQ(to_string(sel), to_string(*brute.best)) << cls;
  }
}

TEST(ParkingSynthesis, ContradictoryLabelsAreRejected) {
  const auto doc = simplify_html(fixture("table.html")).doc();
  Index ix(doc.root);
  const int a = *ix.find_path(path_with_text(doc, "td", "0.80"));
  EXPECT_THROW((void)synthesize_selector(ix, {{a}, {a}, false}), Error);
  EXPECT_THROW((void)synthesize_selector(ix, {{}, {}, false}), Error);
}

TEST(ParkingSynthesis, ProgramNeedsExamplesForRequiredFields) {
  const auto clean = simplify_html(fixture("site/v1.html"));
  EXPECT_THROW((void)synthesize_program(clean, product_specs(), {}), Error);
  EXPECT_THROW((void)synthesize_program(clean, {field("title")}, {{"9/9/9", "title", true}}), Error);
}

// ---------------------------------------------------------------------------
// Programs and validation

TEST(ParkingProgram, ExtractsProductFields) {
  const auto prog = v1_program();
  const auto x = run_program(prog, simplify_html(fixture("site/v1.html")).doc());
  EXPECT_EQ(x.at("title"), std::vector<std::string>{"Walnut desk"});
  EXPECT_EQ(x.at("brand"), std::vector<std::string>{"Oakline"});
  EXPECT_EQ(x.at("price"), std::vector<std::string>{"$349.00"});
  EXPECT_EQ(x.at("released"), std::vector<std::string>{"2023-09-14"});
  EXPECT_EQ(prog.field("price")->anchors, std::vector<std::string>{"$349.00"});
  EXPECT_TRUE(validate(prog, x).ok());
}

TEST(ParkingProgram, RawAndCleanDocumentsExtractTheSameValues) {
  const auto prog = v1_program();
  for (const char* f : {"site/v1.html", "site/v2.html"}) {
    const auto raw = fixture(f);
    EXPECT_EQ(run_program(prog, parse_html(raw)), run_program(prog, simplify_html(raw).doc())) << f;
  }
  ExtractionProgram lamps;
  FieldSpec names = field("name");
  names.multiple = true;
  FieldSpec links = field("link");
  links.multiple = true;
  links.transform = Transform::attribute;
  links.attribute = "href";
  lamps.fields = {{names, "//ul.grid/li/span.name", {}}, {links, "//li/a.card-link", {}}};
  const auto raw = fixture("script_heavy.html");
  const auto a = run_program(lamps, parse_html(raw));
  EXPECT_EQ(a.at("name").size(), 12u);
  EXPECT_EQ(a.at("link").front(), "/item/1000");
  EXPECT_EQ(a, run_program(lamps, simplify_html(raw).doc()));
  // A selector reaching into a removed <template> sees an extra node in the raw page only.
  lamps.fields[0].selector = "//li.card/span.name";
  EXPECT_EQ(run_program(lamps, parse_html(raw)).at("name").size(), 13u);
  EXPECT_EQ(run_program(lamps, simplify_html(raw).doc()).at("name").size(), 12u);
}

TEST(ParkingProgram, AttributeAndTextTransforms) {
  const auto doc = parse_html("<p><a class='k' href='/x'>  go   now </a></p>");
  ExtractionProgram p;
  FieldSpec text = field("text");
  text.transform = Transform::text;
  FieldSpec trimmed = field("trimmed");
  FieldSpec href = field("href");
  href.transform = Transform::attribute;
  href.attribute = "href";
  p.fields = {{text, "//a.k", {}}, {trimmed, "//a.k", {}}, {href, "//a.k", {}}};
  const auto x = run_program(p, doc);
  EXPECT_EQ(x.at("text").front(), "  go   now ");
  EXPECT_EQ(x.at("trimmed").front(), "go now");
  EXPECT_EQ(x.at("href").front(), "/x");
}

TEST(ParkingValidation, TierExamples) {
  const auto prog = v1_program();
  const Extraction good = {{"title", {"Walnut desk"}}, {"brand", {"Oakline"}}, {"price", {"$1,349.00"}}, {"released", {"2023-09-14"}}};
  const auto ok = validate(prog, good);
  EXPECT_TRUE(ok.coverage_ok && ok.semantics_ok && ok.structure_ok);

  auto missing = good;
  missing["brand"].clear();
  const auto r1 = validate(prog, missing);
  EXPECT_FALSE(r1.coverage_ok);
  EXPECT_DOUBLE_EQ(r1.required_coverage, 2.0 / 3.0);
  EXPECT_TRUE(r1.semantics_ok);

  auto na = good;
  na["price"] = {"N/A"};
  const auto r2 = validate(prog, na);
  EXPECT_TRUE(r2.coverage_ok);
  EXPECT_FALSE(r2.semantics_ok);

  auto bad_date = good;
  bad_date["released"] = {"2023-02-30"};
  EXPECT_FALSE(validate(prog, bad_date).semantics_ok);

  auto no_optional = good;
  no_optional.erase("released");
  EXPECT_FALSE(validate(prog, no_optional).coverage_ok);
  EXPECT_TRUE(validate(prog, no_optional, {0.0}).coverage_ok);

  ExtractionProgram empty;
  EXPECT_FALSE(validate(empty, Extraction{}).structure_ok);
  auto broken = prog;
  broken.fields[0].selector = "span.title";
  EXPECT_FALSE(validate(broken, good).structure_ok);
}

TEST(ParkingValidation, RegexAndRangeRules) {
  FieldSpec sku = field("sku", FieldType::regex);
  sku.pattern = "SKU-[0-9]{4}";
  FieldSpec stars = field("stars", FieldType::range);
  stars.min = 1;
  stars.max = 5;
  ExtractionProgram p;
  p.fields = {{sku, "//b", {}}, {stars, "//i", {}}};
  EXPECT_TRUE(validate(p, Extraction{{"sku", {"SKU-1234"}}, {"stars", {"4.5"}}}).ok());
  EXPECT_FALSE(validate(p, Extraction{{"sku", {"SKU-12"}}, {"stars", {"4"}}}).semantics_ok);
  EXPECT_FALSE(validate(p, Extraction{{"sku", {"SKU-1234"}}, {"stars", {"7"}}}).semantics_ok);
  EXPECT_FALSE(validate(p, Extraction{{"sku", {"SKU-1234"}}, {"stars", {"many"}}}).semantics_ok);
}

// ---------------------------------------------------------------------------
// Registry

TEST(ParkingRegistry, TieBreakingTable) {
  const auto table = nlohmann::json::parse(fixture("registry_table.json"));
  Registry reg;
  int version = 1;
  for (const auto& pat : table.at("patterns")) {
    ExtractionProgram p;
    p.version = version++;
    reg.register_program(pat.get<std::string>(), p);
  }
  ASSERT_EQ(reg.patterns().size(), 10u);
  for (const auto& c : table.at("cases")) {
    const auto hit = reg.lookup(c.at("url").get<std::string>());
    if (c.at("expect").is_null()) {
      EXPECT_FALSE(hit) << c.at("url");
    } else {
      ASSERT_TRUE(hit) << c.at("url");
      EXPECT_EQ(hit->first, c.at("expect").get<std::string>()) << c.at("url");
    }
  }
}

TEST(ParkingRegistry, LookupIgnoresRegistrationOrder) {
  const auto table = nlohmann::json::parse(fixture("registry_table.json"));
  auto pats = table.at("patterns").get<std::vector<std::string>>();
  Registry forward;
  for (const auto& p : pats) forward.register_program(p, {});
  std::reverse(pats.begin(), pats.end());
  Registry backward;
  for (const auto& p : pats) backward.register_program(p, {});
  for (const auto& c : table.at("cases")) {
    const auto url = c.at("url").get<std::string>();
    const auto a = forward.lookup(url), b = backward.lookup(url);
    ASSERT_EQ(a.has_value(), b.has_value());
    if (a) {
      EXPECT_EQ(a->first, b->first);
    }
    EXPECT_EQ(forward.lookup(url).has_value(), a.has_value());
  }
}

TEST(ParkingRegistry, MalformedUrlsThrow) {
  Registry reg;
  for (const char* bad : {"shop.example.com/item", "://x/y", "https:///path", "ht tp://x/"})
    EXPECT_THROW((void)reg.lookup(bad), Error) << bad;
  EXPECT_THROW(reg.register_program("no-scheme", {}), Error);
}

TEST(ParkingRegistry, JsonRoundTrip) {
  Registry reg;
  reg.register_program("https://shop.example.com/item/*", v1_program());
  reg.register_program("https://*/*", {});
  const auto path = std::filesystem::temp_directory_path() / "mano_registry_test.json";
  reg.save(path.string());
  const auto back = Registry::load(path.string());
  EXPECT_EQ(back.to_json(), reg.to_json());
  EXPECT_EQ(back.lookup("https://shop.example.com/item/3")->second, v1_program());
  std::filesystem::remove(path);
  EXPECT_TRUE(Registry::load(path.string()).patterns().empty());
  EXPECT_THROW((void)Registry::from_json(nlohmann::json{{"format", "other"}}), Error);
}

TEST(ParkingRegistry, ConcurrentLookupsDuringRegistration) {
  Registry reg;
  reg.register_program("https://a.example/*", {});
  std::vector<std::thread> readers;
  std::atomic<int> misses{0};
  for (int t = 0; t < 4; ++t)
    readers.emplace_back([&] {
      for (int i = 0; i < 2000; ++i)
        if (!reg.lookup("https://a.example/x")) ++misses;
    });
  for (int i = 0; i < 200; ++i) reg.register_program("https://b.example/p" + std::to_string(i), {});
  for (auto& t : readers) t.join();
  EXPECT_EQ(misses.load(), 0);
  EXPECT_EQ(reg.patterns().size(), 201u);
}

// ---------------------------------------------------------------------------
// Health and repair

TEST(ParkingHealth, UnchangedSiteIsANoOp) {
  Registry reg;
  const auto url = "https://shop.example.com/desk/77";
  reg.register_program("https://shop.example.com/desk/*", v1_program());
  const auto before = reg.to_json();
  const auto rep = health_check_and_repair(reg, url, fixture("site/v1.html"));
  EXPECT_EQ(rep.status, Health::healthy);
  EXPECT_FALSE(rep.repaired);
  EXPECT_EQ(rep.version, 1);
  EXPECT_EQ(reg.to_json(), before);
}

TEST(ParkingHealth, RenamedClassesAreRepaired) {
  Registry reg;
  const auto url = "https://shop.example.com/desk/77";
  const auto v1 = v1_program();
  reg.register_program("https://shop.example.com/desk/*", v1);
  const auto v1_values = run_program(v1, simplify_html(fixture("site/v1.html")).doc());
  const auto v2_doc = simplify_html(fixture("site/v2.html")).doc();
  EXPECT_FALSE(validate(v1, v2_doc).ok());

  const auto rep = health_check_and_repair(reg, url, fixture("site/v2.html"));
  EXPECT_EQ(rep.status, Health::repaired);
  EXPECT_TRUE(rep.repaired);
  EXPECT_EQ(rep.version, 2);
  const auto now = reg.lookup(url)->second;
  EXPECT_EQ(now.version, 2);
  EXPECT_EQ(run_program(now, v2_doc), v1_values);

  // A second check on the same site keeps the repaired program.
  const auto again = health_check_and_repair(reg, url, fixture("site/v2.html"));
  EXPECT_FALSE(again.repaired);
  EXPECT_EQ(reg.lookup(url)->second, now);
}

TEST(ParkingHealth, RemovedRequiredFieldMarksUnhealthy) {
  Registry reg;
  const auto url = "https://shop.example.com/desk/77";
  const auto v1 = v1_program();
  reg.register_program("https://shop.example.com/desk/*", v1);
  const auto rep = health_check_and_repair(reg, url, fixture("site/v2_removed.html"));
  EXPECT_EQ(rep.status, Health::unhealthy);
  EXPECT_FALSE(rep.repaired);
  auto kept = reg.lookup(url)->second;
  EXPECT_EQ(kept.health, Health::unhealthy);
  kept.health = v1.health;
  EXPECT_EQ(kept, v1);
  EXPECT_THROW((void)health_check_and_repair(reg, "https://elsewhere.example/x", "<p></p>"), Error);
}

TEST(ParkingFetch, FileFetcherServesFixtureSite) {
  const auto fetch = file_fetcher(std::filesystem::path(MANO_FIXTURE_DIR) / "parking");
  EXPECT_EQ(fetch("https://site/v1.html"), fixture("site/v1.html"));
  EXPECT_THROW((void)fetch("https://site/../x"), Error);
  EXPECT_THROW((void)fetch("https://site/missing.html"), Error);
}
