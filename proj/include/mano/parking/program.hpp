#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <shared_mutex>
#include <string>
#include <vector>

#include "mano/parking/selector.hpp"

namespace mano::parking {

// ---------------------------------------------------------------------------
// Field specs and programs

enum class FieldType { text, number, date, regex, range };
enum class Transform { text, trimmed, attribute };

inline constexpr std::array<std::string_view, 5> kFieldTypeNames = {"text", "number", "date", "regex", "range"};
inline constexpr std::array<std::string_view, 3> kTransformNames = {"text", "trimmed", "attribute"};

struct FieldSpec {
  std::string name;
  std::string description;
  bool required = true;
  bool multiple = false;  // list field: the selector may generalize past the examples
  FieldType type = FieldType::text;
  std::string pattern;  // regex fields
  double min = 0.0, max = 0.0;  // range fields
  Transform transform = Transform::trimmed;
  std::string attribute;  // attribute transform
  friend bool operator==(const FieldSpec&, const FieldSpec&) = default;
};

struct FieldRule {
  FieldSpec spec;
  std::string selector;
  std::vector<std::string> anchors;  // values seen when the rule was last healthy
  friend bool operator==(const FieldRule&, const FieldRule&) = default;
};

enum class Health { healthy, repaired, unhealthy };
inline constexpr std::array<std::string_view, 3> kHealthNames = {"healthy", "repaired", "unhealthy"};

struct ExtractionProgram {
  std::vector<FieldRule> fields;
  int version = 1;
  Health health = Health::healthy;

  const FieldRule* field(std::string_view name) const {
    for (const auto& f : fields)
      if (f.spec.name == name) return &f;
    return nullptr;
  }
  friend bool operator==(const ExtractionProgram&, const ExtractionProgram&) = default;
};

using Extraction = std::map<std::string, std::vector<std::string>>;

inline std::string field_value(const Node& n, const FieldSpec& spec) {
  switch (spec.transform) {
    case Transform::text: return text_content(n);
    case Transform::trimmed: return normalize_space(text_content(n));
    case Transform::attribute: {
      const auto* v = n.attr(spec.attribute);
      return v ? *v : "";
    }
  }
  return "";
}

/// Runs every field selector; unparseable selectors extract nothing.
inline Extraction run_program(const ExtractionProgram& p, const Document& doc) {
  Index ix(doc.root);
  Extraction out;
  for (const auto& f : p.fields) {
    auto& vals = out[f.spec.name];
    try {
      const auto sel = parse_selector(f.selector);
      for (int i : select(ix, sel)) vals.push_back(field_value(*ix.nodes[static_cast<std::size_t>(i)].node, f.spec));
    } catch (const Error&) {
      vals.clear();
    }
    if (!f.spec.multiple && vals.size() > 1) vals.resize(1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Program synthesis

/// A labeled node: `path` is the element path in the cleaned document (Index::path).
struct LabeledExample {
  std::string path;
  std::string field;
  bool positive = true;
};

inline ExtractionProgram synthesize_program(const CleanDoc& clean, const std::vector<FieldSpec>& specs,
                                            const std::vector<LabeledExample>& examples) {
  const auto doc = clean.doc();
  Index ix(doc.root);
  ExtractionProgram prog;
  for (const auto& spec : specs) {
    SynthesisProblem prob;
    prob.multiple = spec.multiple;
    for (const auto& ex : examples) {
      if (ex.field != spec.name) continue;
      const auto node = ix.find_path(ex.path);
      if (!node) throw Error("example path " + ex.path + " not found in document");
      (ex.positive ? prob.positives : prob.negatives).push_back(*node);
    }
    if (prob.positives.empty()) {
      if (spec.required) throw Error("required field '" + spec.name + "' has no labeled example");
      continue;
    }
    FieldRule rule{spec, to_string(synthesize_selector(ix, prob)), {}};
    prog.fields.push_back(std::move(rule));
  }
  const auto values = run_program(prog, doc);
  for (auto& f : prog.fields) f.anchors = values.at(f.spec.name);
  return prog;
}

// ---------------------------------------------------------------------------
// Validation

struct ValidationConfig {
  double optional_coverage = 0.5;
};

struct ValidationReport {
  bool coverage_ok = false;   // tier 1
  bool semantics_ok = false;  // tier 2
  bool structure_ok = false;  // tier 3
  double required_coverage = 0.0;
  double optional_coverage = 1.0;
  std::vector<std::string> problems;
  bool ok() const { return coverage_ok && semantics_ok && structure_ok; }
};

inline std::optional<double> parse_number(std::string_view raw) {
  std::string s(trim(raw));
  if (!s.empty() && (s[0] == '$' || s[0] == '+')) s.erase(0, 1);
  std::string digits;
  for (char c : s)
    if (c != ',') digits += c;
  if (digits.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(digits, &used);
    if (used != digits.size() || !std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

/// YYYY-MM-DD naming a real calendar day.
inline bool valid_date(std::string_view raw) {
  static const std::regex re(R"((\d{4})-(\d{2})-(\d{2}))");
  std::string s(trim(raw));
  std::smatch m;
  if (!std::regex_match(s, m, re)) return false;
  const std::chrono::year_month_day d{std::chrono::year(std::stoi(m[1])), std::chrono::month(std::stoi(m[2])),
                                      std::chrono::day(std::stoi(m[3]))};
  return d.ok();
}

inline std::optional<std::string> semantic_problem(const FieldSpec& spec, const std::string& v) {
  switch (spec.type) {
    case FieldType::text:
      if (trim(v).empty()) return "empty text";
      return std::nullopt;
    case FieldType::number:
      if (!parse_number(v)) return "'" + v + "' is not a number";
      return std::nullopt;
    case FieldType::date:
      if (!valid_date(v)) return "'" + v + "' is not a YYYY-MM-DD date";
      return std::nullopt;
    case FieldType::regex:
      try {
        if (!std::regex_match(v, std::regex(spec.pattern))) return "'" + v + "' does not match " + spec.pattern;
      } catch (const std::regex_error&) {
        return "invalid pattern " + spec.pattern;
      }
      return std::nullopt;
    case FieldType::range: {
      const auto x = parse_number(v);
      if (!x) return "'" + v + "' is not a number";
      if (*x < spec.min || *x > spec.max) return "'" + v + "' outside [" + std::to_string(spec.min) + ", " + std::to_string(spec.max) + "]";
      return std::nullopt;
    }
  }
  return std::nullopt;
}

/// Tier 3 on its own: bounded, parseable selectors and a non-empty field map.
inline std::vector<std::string> structure_problems(const ExtractionProgram& p) {
  std::vector<std::string> out;
  if (p.fields.empty()) out.push_back("empty field map");
  std::set<std::string> names;
  for (const auto& f : p.fields) {
    if (!names.insert(f.spec.name).second) out.push_back("duplicate field '" + f.spec.name + "'");
    if (f.spec.transform == Transform::attribute && f.spec.attribute.empty())
      out.push_back("field '" + f.spec.name + "' reads an unnamed attribute");
    try {
      (void)parse_selector(f.selector);
    } catch (const Error& e) {
      out.push_back(e.what());
    }
  }
  return out;
}

inline ValidationReport validate(const ExtractionProgram& p, const Extraction& x, const ValidationConfig& cfg = {}) {
  ValidationReport r;
  int req = 0, req_ok = 0, opt = 0, opt_ok = 0;
  for (const auto& f : p.fields) {
    auto it = x.find(f.spec.name);
    const bool present = it != x.end() && !it->second.empty();
    if (f.spec.required) {
      ++req;
      req_ok += present ? 1 : 0;
      if (!present) r.problems.push_back("required field '" + f.spec.name + "' missing");
    } else {
      ++opt;
      opt_ok += present ? 1 : 0;
    }
  }
  r.required_coverage = req ? static_cast<double>(req_ok) / req : 1.0;
  r.optional_coverage = opt ? static_cast<double>(opt_ok) / opt : 1.0;
  r.coverage_ok = req_ok == req && r.optional_coverage >= cfg.optional_coverage;
  if (r.optional_coverage < cfg.optional_coverage) r.problems.push_back("optional coverage below threshold");

  r.semantics_ok = true;
  for (const auto& f : p.fields) {
    auto it = x.find(f.spec.name);
    if (it == x.end()) continue;
    for (const auto& v : it->second) {
      if (auto prob = semantic_problem(f.spec, v)) {
        r.semantics_ok = false;
        r.problems.push_back(f.spec.name + ": " + *prob);
      }
    }
  }
  const auto sp = structure_problems(p);
  r.structure_ok = sp.empty();
  r.problems.insert(r.problems.end(), sp.begin(), sp.end());
  return r;
}

inline ValidationReport validate(const ExtractionProgram& p, const Document& doc, const ValidationConfig& cfg = {}) {
  return validate(p, run_program(p, doc), cfg);
}

// ---------------------------------------------------------------------------
// URL patterns and the registry

struct Url {
  std::string scheme, host;
  std::vector<std::string> segments;
};

inline Url parse_url(std::string_view s) {
  const auto sep = s.find("://");
  if (sep == std::string_view::npos || sep == 0) throw Error("malformed URL '" + std::string(s) + "': no scheme");
  Url u;
  u.scheme = to_lower(std::string(s.substr(0, sep)));
  for (char c : u.scheme)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '+' && c != '-' && c != '.' && c != '*')
      throw Error("malformed URL '" + std::string(s) + "': bad scheme");
  auto rest = s.substr(sep + 3);
  rest = rest.substr(0, rest.find_first_of("?#"));
  const auto slash = rest.find('/');
  u.host = to_lower(std::string(rest.substr(0, slash)));
  if (const auto colon = u.host.find(':'); colon != std::string::npos) u.host.resize(colon);
  if (u.host.empty()) throw Error("malformed URL '" + std::string(s) + "': empty host");
  if (u.host.find_first_of(" \t\n") != std::string::npos) throw Error("malformed URL '" + std::string(s) + "': bad host");
  if (slash != std::string_view::npos)
    for (auto& seg : split(rest.substr(slash + 1), '/'))
      if (!seg.empty()) u.segments.push_back(std::string(seg));
  return u;
}

/// scheme://host/seg/... where any component may be "*" (exactly one component).
struct UrlPattern {
  std::string text;
  Url parts;

  explicit UrlPattern(std::string_view s) : text(s), parts(parse_url(s)) {}

  bool matches(const Url& u) const {
    auto eq = [](const std::string& pat, const std::string& v) { return pat == "*" || pat == v; };
    if (!eq(parts.scheme, u.scheme) || !eq(parts.host, u.host)) return false;
    if (parts.segments.size() != u.segments.size()) return false;
    for (std::size_t i = 0; i < u.segments.size(); ++i)
      if (!eq(parts.segments[i], u.segments[i])) return false;
    return true;
  }

  int literal_components() const {
    int n = (parts.scheme != "*") + (parts.host != "*");
    for (const auto& s : parts.segments) n += s != "*";
    return n;
  }

  /// Characters of the pattern before its first wildcard.
  std::size_t literal_prefix() const {
    const auto p = text.find('*');
    return p == std::string::npos ? text.size() : p;
  }
};

/// Preference between matching patterns: more literal components, then a longer
/// literal prefix, then the lexicographically smaller pattern.
inline bool more_specific(const UrlPattern& a, const UrlPattern& b) {
  if (a.literal_components() != b.literal_components()) return a.literal_components() > b.literal_components();
  if (a.literal_prefix() != b.literal_prefix()) return a.literal_prefix() > b.literal_prefix();
  return a.text < b.text;
}

/// Thread-safe pattern -> program map; lookups share, mutations are exclusive.
class Registry {
 public:
  void register_program(const std::string& pattern, ExtractionProgram p) {
    UrlPattern pat(pattern);
    std::unique_lock lock(mu_);
    for (auto& [k, v] : entries_)
      if (k.text == pat.text) {
        v = std::move(p);
        return;
      }
    entries_.emplace_back(std::move(pat), std::move(p));
  }

  std::optional<std::pair<std::string, ExtractionProgram>> lookup(std::string_view url) const {
    const Url u = parse_url(url);
    std::shared_lock lock(mu_);
    const std::pair<UrlPattern, ExtractionProgram>* best = nullptr;
    for (const auto& e : entries_)
      if (e.first.matches(u) && (!best || more_specific(e.first, best->first))) best = &e;
    if (!best) return std::nullopt;
    return std::pair{best->first.text, best->second};
  }

  std::vector<std::string> patterns() const {
    std::shared_lock lock(mu_);
    std::vector<std::string> out;
    for (const auto& e : entries_) out.push_back(e.first.text);
    return out;
  }

  nlohmann::json to_json() const;
  static Registry from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static Registry load(const std::string& path);

  Registry() = default;
  Registry(const Registry& o) {
    std::shared_lock lock(o.mu_);
    entries_ = o.entries_;
  }
  Registry& operator=(const Registry& o) {
    if (this == &o) return *this;
    std::vector<std::pair<UrlPattern, ExtractionProgram>> copy;
    {
      std::shared_lock lock(o.mu_);
      copy = o.entries_;
    }
    std::unique_lock lock(mu_);
    entries_ = std::move(copy);
    return *this;
  }

 private:
  mutable std::shared_mutex mu_;
  std::vector<std::pair<UrlPattern, ExtractionProgram>> entries_;
};

// ---------------------------------------------------------------------------
// JSON

template <std::size_t N>
inline int enum_index(const std::array<std::string_view, N>& names, const std::string& s, const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == s) return static_cast<int>(i);
  throw Error(std::string("unknown ") + what + " '" + s + "'");
}

inline void to_json(nlohmann::json& j, const FieldSpec& f) {
  j = {{"name", f.name},
       {"description", f.description},
       {"required", f.required},
       {"multiple", f.multiple},
       {"type", std::string(kFieldTypeNames[static_cast<int>(f.type)])},
       {"transform", std::string(kTransformNames[static_cast<int>(f.transform)])}};
  if (!f.pattern.empty()) j["pattern"] = f.pattern;
  if (f.type == FieldType::range) {
    j["min"] = f.min;
    j["max"] = f.max;
  }
  if (!f.attribute.empty()) j["attribute"] = f.attribute;
}

inline void from_json(const nlohmann::json& j, FieldSpec& f) {
  f = FieldSpec{};
  f.name = j.at("name").get<std::string>();
  if (f.name.empty()) throw Error("field spec without a name");
  f.description = j.value("description", "");
  f.required = j.value("required", true);
  f.multiple = j.value("multiple", false);
  f.type = static_cast<FieldType>(enum_index(kFieldTypeNames, j.value("type", "text"), "field type"));
  f.transform = static_cast<Transform>(enum_index(kTransformNames, j.value("transform", "trimmed"), "transform"));
  f.pattern = j.value("pattern", "");
  f.min = j.value("min", 0.0);
  f.max = j.value("max", 0.0);
  f.attribute = j.value("attribute", "");
}

inline void to_json(nlohmann::json& j, const ExtractionProgram& p) {
  j = nlohmann::json{{"version", p.version}, {"health", std::string(kHealthNames[static_cast<int>(p.health)])}};
  j["fields"] = nlohmann::json::array();
  for (const auto& f : p.fields)
    j["fields"].push_back({{"spec", f.spec}, {"selector", f.selector}, {"anchors", f.anchors}});
}

inline void from_json(const nlohmann::json& j, ExtractionProgram& p) {
  p = ExtractionProgram{};
  p.version = j.value("version", 1);
  p.health = static_cast<Health>(enum_index(kHealthNames, j.value("health", "healthy"), "health"));
  for (const auto& f : j.at("fields"))
    p.fields.push_back({f.at("spec").get<FieldSpec>(), f.at("selector").get<std::string>(),
                        f.value("anchors", std::vector<std::string>{})});
}

inline nlohmann::json Registry::to_json() const {
  std::shared_lock lock(mu_);
  nlohmann::json j = {{"format", "mano-registry"}, {"version", 1}, {"entries", nlohmann::json::array()}};
  for (const auto& [pat, prog] : entries_) j["entries"].push_back({{"pattern", pat.text}, {"program", prog}});
  return j;
}

inline Registry Registry::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "mano-registry") throw Error("not a registry file");
  if (j.value("version", 0) != 1) throw Error("unsupported registry version");
  Registry r;
  for (const auto& e : j.at("entries")) r.register_program(e.at("pattern").get<std::string>(), e.at("program").get<ExtractionProgram>());
  return r;
}

inline void Registry::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << to_json().dump(2) << '\n';
}

inline Registry Registry::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) return Registry{};
  return from_json(nlohmann::json::parse(in));
}

// ---------------------------------------------------------------------------
// Fetching

/// Source of live documents for a URL.
using Fetcher = std::function<std::string(const std::string& url)>;

/// Serves host/seg/... from files under `root`, "index.html" for an empty path.
inline Fetcher file_fetcher(std::filesystem::path root) {
  return [root = std::move(root)](const std::string& url) {
    const Url u = parse_url(url);
    auto p = root / u.host;
    for (const auto& s : u.segments) {
      if (s == "..") throw Error("path escapes fetch root: " + url);
      p /= s;
    }
    if (u.segments.empty()) p /= "index.html";
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot fetch " + url + " from " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
}

// ---------------------------------------------------------------------------
// Health check and repair

struct HealthReport {
  Health status = Health::healthy;
  ValidationReport validation;
  bool repaired = false;
  int version = 0;
  std::vector<std::string> notes;
};

/// Nodes whose field value equals one of the anchors.
inline std::vector<int> anchor_nodes(const Index& ix, const FieldRule& f) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(ix.nodes.size()); ++i) {
    const auto v = field_value(*ix.nodes[static_cast<std::size_t>(i)].node, f.spec);
    if (v.empty() || std::find(f.anchors.begin(), f.anchors.end(), v) == f.anchors.end()) continue;
    // Prefer the innermost element carrying the value.
    out.erase(std::remove_if(out.begin(), out.end(),
                             [&](int o) {
                               for (int a = ix.parent(i); a >= 0; a = ix.parent(a))
                                 if (a == o) return true;
                               return false;
                             }),
              out.end());
    out.push_back(i);
  }
  return out;
}

/// Re-synthesizes every field from its stored anchors on the new document.
inline std::optional<ExtractionProgram> repair_program(const ExtractionProgram& old, const CleanDoc& clean,
                                                       std::vector<std::string>& notes) {
  const auto doc = clean.doc();
  Index ix(doc.root);
  ExtractionProgram next;
  next.version = old.version + 1;
  next.health = Health::repaired;
  for (const auto& f : old.fields) {
    SynthesisProblem prob;
    prob.multiple = f.spec.multiple;
    prob.positives = anchor_nodes(ix, f);
    if (prob.positives.empty()) {
      if (f.spec.required) {
        notes.push_back("no anchor for required field '" + f.spec.name + "'");
        return std::nullopt;
      }
      notes.push_back("optional field '" + f.spec.name + "' has no anchor; keeping its selector");
      next.fields.push_back(f);
      continue;
    }
    // A single-valued anchor can reappear elsewhere (a title echoed in <title>);
    // each hit is then tried alone and the cheapest selector kept.
    std::vector<SynthesisProblem> tries;
    if (prob.multiple || prob.positives.size() == 1) {
      tries.push_back(prob);
    } else {
      for (int hit : prob.positives) tries.push_back({{hit}, {}, false});
    }
    std::optional<Selector> best;
    std::size_t best_hits = 0;
    for (const auto& t : tries) {
      try {
        auto sel = synthesize_selector(ix, t);
        const auto hits = select(ix, sel).size();
        if (!best || selector_cost(sel, hits) < selector_cost(*best, best_hits)) {
          best = std::move(sel);
          best_hits = hits;
        }
      } catch (const Error& e) {
        notes.push_back(f.spec.name + ": " + e.what());
      }
    }
    if (!best) return std::nullopt;
    next.fields.push_back({f.spec, to_string(*best), f.anchors});
  }
  return next;
}

/// Validates the registered program on `live_html`; repairs it from anchors on failure.
inline HealthReport health_check_and_repair(Registry& reg, const std::string& url, std::string_view live_html,
                                            const ValidationConfig& cfg = {}) {
  HealthReport rep;
  auto hit = reg.lookup(url);
  if (!hit) throw Error("no program registered for " + url);
  auto& [pattern, prog] = *hit;
  const auto clean = simplify_html(live_html);
  const auto doc = clean.doc();
  rep.validation = validate(prog, doc, cfg);
  rep.version = prog.version;
  if (rep.validation.ok()) {
    rep.status = prog.health == Health::unhealthy ? Health::healthy : prog.health;
    if (prog.health == Health::unhealthy) {
      prog.health = Health::healthy;
      reg.register_program(pattern, prog);
    }
    return rep;
  }
  rep.notes = rep.validation.problems;
  if (auto fixed = repair_program(prog, clean, rep.notes)) {
    auto check = validate(*fixed, doc, cfg);
    if (check.ok()) {
      fixed->health = Health::repaired;
      reg.register_program(pattern, *fixed);
      rep.status = Health::repaired;
      rep.repaired = true;
      rep.validation = check;
      rep.version = fixed->version;
      return rep;
    }
    rep.notes.insert(rep.notes.end(), check.problems.begin(), check.problems.end());
  }
  prog.health = Health::unhealthy;
  reg.register_program(pattern, prog);
  rep.status = Health::unhealthy;
  return rep;
}

}  // namespace mano::parking
