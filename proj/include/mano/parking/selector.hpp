#pragma once

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "mano/parking/html.hpp"

namespace mano::parking {

/// Selector step: axis from the previous step, tag (or "*"), optional class/id
/// predicate and optional position among same-tag siblings (1-based).
struct Step {
  enum class Axis { descendant, child };
  enum class Pred { none, cls, id };
  Axis axis = Axis::descendant;
  std::string tag = "*";
  Pred pred = Pred::none;
  std::string value;
  int nth = 0;  // 0: any position

  friend bool operator==(const Step&, const Step&) = default;
};

struct Selector {
  std::vector<Step> steps;
  friend bool operator==(const Selector&, const Selector&) = default;
};

inline constexpr int kMaxSelectorSteps = 8;

inline int wildcards(const Selector& s) {
  int n = 0;
  for (const auto& st : s.steps) n += st.tag == "*" ? 1 : 0;
  return n;
}

/// Grammar: step (("/" | "//") step)*, leading "/" or "//" from the document root;
/// step = (tag | "*") ["." class | "#" id] [":nth(" k ")"].
inline std::string to_string(const Selector& s) {
  std::string out;
  for (const auto& st : s.steps) {
    out += st.axis == Step::Axis::child ? "/" : "//";
    out += st.tag;
    if (st.pred == Step::Pred::cls) out += "." + st.value;
    if (st.pred == Step::Pred::id) out += "#" + st.value;
    if (st.nth > 0) out += ":nth(" + std::to_string(st.nth) + ")";
  }
  return out;
}

inline bool name_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
}

inline Selector parse_selector(std::string_view s) {
  Selector sel;
  std::size_t i = 0;
  auto fail = [&](const std::string& m) { throw Error("selector '" + std::string(s) + "': " + m); };
  if (s.empty()) fail("empty");
  while (i < s.size()) {
    Step st;
    if (s.substr(i, 2) == "//") {
      st.axis = Step::Axis::descendant;
      i += 2;
    } else if (s[i] == '/') {
      st.axis = Step::Axis::child;
      i += 1;
    } else {
      fail("expected '/' or '//' at " + std::to_string(i));
    }
    std::size_t b = i;
    if (i < s.size() && s[i] == '*') {
      ++i;
    } else {
      while (i < s.size() && name_char(s[i])) ++i;
    }
    if (i == b) fail("missing tag at " + std::to_string(b));
    st.tag = std::string(s.substr(b, i - b));
    if (i < s.size() && (s[i] == '.' || s[i] == '#')) {
      st.pred = s[i] == '.' ? Step::Pred::cls : Step::Pred::id;
      b = ++i;
      while (i < s.size() && name_char(s[i])) ++i;
      if (i == b) fail("empty class or id");
      st.value = std::string(s.substr(b, i - b));
    }
    if (s.substr(i, 5) == ":nth(") {
      i += 5;
      b = i;
      while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
      if (i == b || i >= s.size() || s[i] != ')') fail("bad :nth()");
      st.nth = std::stoi(std::string(s.substr(b, i - b)));
      if (st.nth < 1) fail(":nth() is 1-based");
      ++i;
    }
    sel.steps.push_back(std::move(st));
    if (sel.steps.size() > static_cast<std::size_t>(kMaxSelectorSteps)) fail("too many steps");
  }
  return sel;
}

// ---------------------------------------------------------------------------
// Indexed document view for matching

struct NodeRef {
  const Node* node = nullptr;
  int parent = -1;  // index, -1 for top-level nodes
  int nth_of_type = 0;
  int nth_child = 0;
};

/// Elements in document order with parent links.
struct Index {
  std::vector<NodeRef> nodes;

  explicit Index(const Node& root) { add_children(root, -1); }

  int parent(int i) const { return nodes[static_cast<std::size_t>(i)].parent; }

  /// "a/b/c" child-index path of element positions from the root.
  std::string path(int i) const {
    std::vector<int> parts;
    for (int k = i; k >= 0; k = parent(k)) parts.push_back(nodes[static_cast<std::size_t>(k)].nth_child);
    std::string out;
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) out += (out.empty() ? "" : "/") + std::to_string(*it);
    return out;
  }

  std::optional<int> find_path(std::string_view p) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (path(static_cast<int>(i)) == p) return static_cast<int>(i);
    return std::nullopt;
  }

 private:
  void add_children(const Node& n, int parent) {
    std::map<std::string, int> seen;
    int child = 0;
    for (const auto& c : n.children) {
      if (!c.is_element()) continue;
      NodeRef r{&c, parent, ++seen[c.tag], ++child};
      nodes.push_back(r);
      add_children(c, static_cast<int>(nodes.size()) - 1);
    }
  }
};

inline bool step_matches(const Step& st, const NodeRef& r) {
  const Node& n = *r.node;
  if (st.tag != "*" && st.tag != n.tag) return false;
  if (st.pred == Step::Pred::cls) {
    const auto cs = n.classes();
    if (std::find(cs.begin(), cs.end(), st.value) == cs.end()) return false;
  }
  if (st.pred == Step::Pred::id) {
    const auto* id = n.attr("id");
    if (!id || *id != st.value) return false;
  }
  if (st.nth > 0 && (st.tag == "*" ? r.nth_child : r.nth_of_type) != st.nth) return false;
  return true;
}

/// True when steps[0..k] can be matched ending at node i.
inline bool matches_at(const Index& ix, const Selector& s, int k, int i) {
  const Step& st = s.steps[static_cast<std::size_t>(k)];
  if (!step_matches(st, ix.nodes[static_cast<std::size_t>(i)])) return false;
  const int p = ix.parent(i);
  if (k == 0) return st.axis == Step::Axis::descendant || p < 0;
  if (st.axis == Step::Axis::child) return p >= 0 && matches_at(ix, s, k - 1, p);
  for (int a = p; a >= 0; a = ix.parent(a))
    if (matches_at(ix, s, k - 1, a)) return true;
  return false;
}

inline bool matches(const Index& ix, const Selector& s, int i) {
  return !s.steps.empty() && matches_at(ix, s, static_cast<int>(s.steps.size()) - 1, i);
}

inline std::vector<int> select(const Index& ix, const Selector& s) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(ix.nodes.size()); ++i)
    if (matches(ix, s, i)) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------
// Synthesis

/// Ranking of candidate selectors: fewer steps, then fewer wildcards, then fewer
/// matches, then the canonical string.
inline auto selector_cost(const Selector& s, std::size_t match_count) {
  return std::make_tuple(s.steps.size(), wildcards(s), match_count, to_string(s));
}

struct SynthesisProblem {
  std::vector<int> positives;
  std::vector<int> negatives;
  bool multiple = false;  // false: the selection must equal the positives exactly
};

inline bool acceptable(const Index& ix, const Selector& s, const SynthesisProblem& p, std::vector<int>* hits = nullptr) {
  for (int i : p.positives)
    if (!matches(ix, s, i)) return false;
  for (int i : p.negatives)
    if (matches(ix, s, i)) return false;
  auto sel = select(ix, s);
  if (!p.multiple) {
    auto want = p.positives;
    std::sort(want.begin(), want.end());
    want.erase(std::unique(want.begin(), want.end()), want.end());
    if (sel != want) return false;
  }
  if (hits) *hits = std::move(sel);
  return true;
}

/// Step variants satisfied by node i.
inline std::vector<Step> step_options(const Index& ix, int i) {
  const auto& r = ix.nodes[static_cast<std::size_t>(i)];
  std::vector<Step> out;
  for (const std::string& tag : {r.node->tag, std::string("*")}) {
    std::vector<std::pair<Step::Pred, std::string>> preds{{Step::Pred::none, ""}};
    for (const auto& c : r.node->classes()) preds.push_back({Step::Pred::cls, c});
    if (const auto* id = r.node->attr("id"); id && !id->empty()) {
      bool ok = std::all_of(id->begin(), id->end(), name_char);
      if (ok) preds.push_back({Step::Pred::id, *id});
    }
    for (const auto& [pred, value] : preds) {
      bool ok = std::all_of(value.begin(), value.end(), name_char);
      if (!ok) continue;
      for (int nth : {0, tag == "*" ? r.nth_child : r.nth_of_type}) {
        Step st;
        st.tag = tag;
        st.pred = pred;
        st.value = value;
        st.nth = nth;
        out.push_back(st);
      }
    }
  }
  return out;
}

/// Minimal selector (by selector_cost) consistent with the examples, searching
/// selectors up to `max_steps` built on the ancestor chain of the first positive.
inline Selector synthesize_selector(const Index& ix, const SynthesisProblem& p, int max_steps = 4) {
  if (p.positives.empty()) throw Error("synthesis needs at least one positive example");
  for (int a : p.positives)
    for (int b : p.negatives)
      if (a == b) throw Error("inconsistent examples: node " + ix.path(a) + " is both positive and negative");
  std::vector<int> chain;  // root-most first, ending at the first positive
  for (int k = p.positives.front(); k >= 0; k = ix.parent(k)) chain.insert(chain.begin(), k);
  const int depth = static_cast<int>(chain.size());

  for (int steps = 1; steps <= max_steps; ++steps) {
    std::optional<Selector> best;
    std::size_t best_hits = 0;
    std::vector<int> pick(static_cast<std::size_t>(steps));
    std::vector<std::vector<Step>> opts(static_cast<std::size_t>(steps));
    Selector cur;
    cur.steps.resize(static_cast<std::size_t>(steps));

    std::function<void(int)> fill = [&](int k) {
      if (k == steps) {
        std::vector<int> hits;
        if (!acceptable(ix, cur, p, &hits)) return;
        if (!best || selector_cost(cur, hits.size()) < selector_cost(*best, best_hits)) {
          best = cur;
          best_hits = hits.size();
        }
        return;
      }
      const int node = chain[static_cast<std::size_t>(pick[static_cast<std::size_t>(k)])];
      const bool adjacent = k > 0 && pick[static_cast<std::size_t>(k)] == pick[static_cast<std::size_t>(k - 1)] + 1;
      const bool top = k == 0 && pick[0] == 0;
      std::vector<Step::Axis> axes{Step::Axis::descendant};
      if (adjacent || top) axes.push_back(Step::Axis::child);
      for (const auto& base : step_options(ix, node)) {
        for (auto axis : axes) {
          Step st = base;
          st.axis = axis;
          cur.steps[static_cast<std::size_t>(k)] = st;
          fill(k + 1);
        }
      }
    };

    // Choose increasing chain positions for the first steps-1 steps; the last is the node itself.
    std::function<void(int, int)> choose = [&](int k, int from) {
      if (k == steps - 1) {
        pick[static_cast<std::size_t>(k)] = depth - 1;
        fill(0);
        return;
      }
      for (int j = from; j < depth - 1; ++j) {
        pick[static_cast<std::size_t>(k)] = j;
        choose(k + 1, j + 1);
      }
    };
    if (steps <= depth) choose(0, 0);
    if (best) return *best;
  }
  throw Error("inconsistent examples: no selector of at most " + std::to_string(max_steps) +
              " steps separates the positives from the negatives");
}

}  // namespace mano::parking
