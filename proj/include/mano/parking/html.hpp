#pragma once

#include <algorithm>
#include <cctype>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mano/util/result.hpp"
#include "mano/util/strings.hpp"

namespace mano::parking {

struct Node {
  enum class Type { element, text, comment, doctype };
  Type type = Type::element;
  std::string tag;  // lower-case; empty for non-elements
  std::vector<std::pair<std::string, std::string>> attrs;
  std::string text;  // decoded text, comment body or doctype body
  std::vector<Node> children;

  bool is_element() const { return type == Type::element; }

  const std::string* attr(std::string_view name) const {
    for (const auto& [k, v] : attrs)
      if (k == name) return &v;
    return nullptr;
  }

  std::vector<std::string> classes() const {
    std::vector<std::string> out;
    if (const auto* c = attr("class"))
      for (auto& t : split(*c, ' '))
        if (!trim(t).empty()) out.push_back(std::string(trim(t)));
    return out;
  }

  friend bool operator==(const Node&, const Node&) = default;
};

/// A parsed document: a synthetic root whose children are the top-level nodes.
struct Document {
  Node root;
};

inline bool is_void_tag(std::string_view t) {
  static const std::set<std::string_view> v = {"area", "base", "br",   "col",   "embed",  "hr",    "img",
                                               "input", "link", "meta", "param", "source", "track", "wbr"};
  return v.count(t) > 0;
}

inline bool is_raw_text_tag(std::string_view t) { return t == "script" || t == "style"; }

// ---------------------------------------------------------------------------
// Entities

inline std::string utf8(long code) {
  std::string out;
  if (code < 0x80) {
    out += static_cast<char>(code);
  } else if (code < 0x800) {
    out += static_cast<char>(0xC0 | (code >> 6));
    out += static_cast<char>(0x80 | (code & 0x3F));
  } else if (code < 0x10000) {
    out += static_cast<char>(0xE0 | (code >> 12));
    out += static_cast<char>(0x80 | ((code >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (code & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (code >> 18));
    out += static_cast<char>(0x80 | ((code >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((code >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (code & 0x3F));
  }
  return out;
}

inline constexpr std::pair<std::string_view, long> kNamedEntities[] = {
    {"amp", '&'},      {"lt", '<'},       {"gt", '>'},      {"quot", '"'},    {"apos", '\''},
    {"nbsp", 0xA0},    {"copy", 0xA9},    {"reg", 0xAE},    {"trade", 0x2122}, {"euro", 0x20AC},
    {"pound", 0xA3},   {"yen", 0xA5},     {"cent", 0xA2},   {"mdash", 0x2014}, {"ndash", 0x2013},
    {"hellip", 0x2026}, {"laquo", 0xAB},  {"raquo", 0xBB},  {"middot", 0xB7},  {"times", 0xD7},
};

/// Named entities from a common subset plus numeric references; unknown ones stay literal.
inline std::string decode_entities(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out += s[i];
      continue;
    }
    const auto semi = s.find(';', i);
    if (semi == std::string_view::npos || semi - i > 10) {
      out += '&';
      continue;
    }
    const auto name = s.substr(i + 1, semi - i - 1);
    long code = -1;
    for (const auto& [n, c] : kNamedEntities)
      if (n == name) code = c;
    if (code < 0 && name.size() > 1 && name[0] == '#') {
      try {
        std::size_t used = 0;
        const std::string digits(name.substr(name[1] == 'x' || name[1] == 'X' ? 2 : 1));
        code = std::stol(digits, &used, name[1] == 'x' || name[1] == 'X' ? 16 : 10);
        if (used != digits.size()) code = -1;
      } catch (const std::exception&) {
        code = -1;
      }
      if (code > 0x10FFFF || (code >= 0xD800 && code <= 0xDFFF)) code = -1;
    }
    if (code <= 0) {
      out += '&';
      continue;
    }
    out += utf8(code);
    i = semi;
  }
  return out;
}

inline std::string escape_text(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

inline std::string escape_attr(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '"') out += "&quot;";
    else if (c == '<') out += "&lt;";
    else out += c;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Error-tolerant parser: stray end tags are dropped, unclosed elements are closed
// at the first ancestor end tag or at end of input.

class Parser {
 public:
  explicit Parser(std::string_view src) : s_(src) {}

  Document parse() {
    if (s_.find('\0') != std::string_view::npos) throw Error("markup contains NUL bytes");
    Document doc;
    std::vector<Node*> stack{&doc.root};
    while (i_ < s_.size()) {
      if (s_[i_] == '<') {
        if (starts("<!--")) {
          const auto end = s_.find("-->", i_ + 4);
          if (end == std::string_view::npos) throw Error("unterminated comment at byte " + std::to_string(i_));
          stack.back()->children.push_back({Node::Type::comment, "", {}, std::string(s_.substr(i_ + 4, end - i_ - 4)), {}});
          i_ = end + 3;
          continue;
        }
        if (starts("<!") || starts("<?")) {
          const auto end = s_.find('>', i_);
          if (end == std::string_view::npos) throw Error("unterminated declaration at byte " + std::to_string(i_));
          stack.back()->children.push_back({Node::Type::doctype, "", {}, std::string(s_.substr(i_ + 2, end - i_ - 2)), {}});
          i_ = end + 1;
          continue;
        }
        if (starts("</")) {
          const auto end = s_.find('>', i_);
          if (end == std::string_view::npos) throw Error("unterminated end tag at byte " + std::to_string(i_));
          const std::string name = to_lower(std::string(trim(s_.substr(i_ + 2, end - i_ - 2))));
          i_ = end + 1;
          for (std::size_t k = stack.size(); k-- > 1;) {
            if (stack[k]->tag == name) {
              stack.resize(k);
              break;
            }
          }
          continue;
        }
        if (i_ + 1 < s_.size() && std::isalpha(static_cast<unsigned char>(s_[i_ + 1]))) {
          Node el = start_tag();
          const bool self_closing = last_self_closing_;
          const std::string tag = el.tag;
          if (is_raw_text_tag(tag) && !self_closing) {
            const std::string close = "</" + tag;
            std::size_t end = i_;
            while (true) {
              end = find_ci(close, end);
              if (end == std::string_view::npos) throw Error("unterminated <" + tag + "> element");
              const char after = end + close.size() < s_.size() ? s_[end + close.size()] : '>';
              if (after == '>' || std::isspace(static_cast<unsigned char>(after))) break;
              end += close.size();
            }
            if (end > i_) el.children.push_back({Node::Type::text, "", {}, std::string(s_.substr(i_, end - i_)), {}});
            const auto gt = s_.find('>', end);
            i_ = gt == std::string_view::npos ? s_.size() : gt + 1;
            stack.back()->children.push_back(std::move(el));
            continue;
          }
          stack.back()->children.push_back(std::move(el));
          if (!self_closing && !is_void_tag(tag)) stack.push_back(&stack.back()->children.back());
          continue;
        }
      }
      const auto next = s_.find('<', i_ + 1);
      const auto end = next == std::string_view::npos ? s_.size() : next;
      stack.back()->children.push_back({Node::Type::text, "", {}, decode_entities(s_.substr(i_, end - i_)), {}});
      i_ = end;
    }
    return doc;
  }

 private:
  bool starts(std::string_view p) const { return s_.substr(i_, p.size()) == p; }

  std::size_t find_ci(std::string_view needle, std::size_t from) const {
    for (std::size_t k = from; k + needle.size() <= s_.size(); ++k) {
      bool ok = true;
      for (std::size_t j = 0; j < needle.size() && ok; ++j)
        ok = std::tolower(static_cast<unsigned char>(s_[k + j])) == needle[j];
      if (ok) return k;
    }
    return std::string_view::npos;
  }

  void skip_space() {
    while (i_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[i_]))) ++i_;
  }

  Node start_tag() {
    Node el;
    ++i_;
    std::size_t b = i_;
    while (i_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[i_])) && s_[i_] != '>' && s_[i_] != '/') ++i_;
    el.tag = to_lower(std::string(s_.substr(b, i_ - b)));
    last_self_closing_ = false;
    while (true) {
      skip_space();
      if (i_ >= s_.size()) throw Error("unterminated <" + el.tag + "> tag");
      if (s_[i_] == '>') {
        ++i_;
        break;
      }
      if (s_[i_] == '/') {
        ++i_;
        skip_space();
        if (i_ < s_.size() && s_[i_] == '>') {
          last_self_closing_ = true;
          ++i_;
          break;
        }
        continue;
      }
      b = i_;
      while (i_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[i_])) && s_[i_] != '=' && s_[i_] != '>' &&
             !(s_[i_] == '/' && i_ + 1 < s_.size() && s_[i_ + 1] == '>'))
        ++i_;
      std::string name = to_lower(std::string(s_.substr(b, i_ - b)));
      std::string value;
      skip_space();
      if (i_ < s_.size() && s_[i_] == '=') {
        ++i_;
        skip_space();
        if (i_ < s_.size() && (s_[i_] == '"' || s_[i_] == '\'')) {
          const char q = s_[i_++];
          const auto end = s_.find(q, i_);
          if (end == std::string_view::npos) throw Error("unterminated attribute value in <" + el.tag + ">");
          value = decode_entities(s_.substr(i_, end - i_));
          i_ = end + 1;
        } else {
          b = i_;
          while (i_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[i_])) && s_[i_] != '>') ++i_;
          value = decode_entities(s_.substr(b, i_ - b));
        }
      }
      if (!name.empty() && !el.attr(name)) el.attrs.emplace_back(std::move(name), std::move(value));
    }
    return el;
  }

  std::string_view s_;
  std::size_t i_ = 0;
  bool last_self_closing_ = false;
};

inline Document parse_html(std::string_view src) { return Parser(src).parse(); }

// ---------------------------------------------------------------------------
// Serialization

inline void serialize_node(const Node& n, std::string& out) {
  switch (n.type) {
    case Node::Type::text: out += escape_text(n.text); return;
    case Node::Type::comment: out += "<!--" + n.text + "-->"; return;
    case Node::Type::doctype: out += "<!" + n.text + ">"; return;
    case Node::Type::element: break;
  }
  out += '<';
  out += n.tag;
  for (const auto& [k, v] : n.attrs) {
    out += ' ';
    out += k;
    out += "=\"";
    out += escape_attr(v);
    out += '"';
  }
  out += '>';
  if (is_void_tag(n.tag)) return;
  if (is_raw_text_tag(n.tag)) {
    for (const auto& c : n.children) out += c.text;
  } else {
    for (const auto& c : n.children) serialize_node(c, out);
  }
  out += "</" + n.tag + ">";
}

inline std::string serialize(const Document& d) {
  std::string out;
  for (const auto& c : d.root.children) serialize_node(c, out);
  return out;
}

/// Concatenated descendant text.
inline std::string text_content(const Node& n) {
  if (n.type == Node::Type::text) return n.text;
  if (n.type != Node::Type::element || is_raw_text_tag(n.tag)) return "";
  std::string out;
  for (const auto& c : n.children) out += text_content(c);
  return out;
}

// ---------------------------------------------------------------------------
// Simplification

/// Attributes kept on retained elements.
inline bool semantic_attribute(std::string_view name) {
  static const std::set<std::string_view> keep = {"id",   "class", "href",  "src",         "alt",  "title",
                                                  "name", "type",  "value", "datetime",    "role", "aria-label",
                                                  "for",  "colspan", "rowspan", "placeholder", "lang", "content"};
  return keep.count(name) > 0;
}

inline bool removable_tag(std::string_view t) {
  return t == "script" || t == "style" || t == "noscript" || t == "template" || t == "link" || t == "meta";
}

inline std::string style_value(const Node& n) {
  const auto* s = n.attr("style");
  if (!s) return "";
  std::string out;
  for (char c : *s)
    if (!std::isspace(static_cast<unsigned char>(c))) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline bool hidden_subtree(const Node& n) {
  if (n.attr("hidden")) return true;
  const auto st = style_value(n);
  return st.find("display:none") != std::string::npos || st.find("visibility:hidden") != std::string::npos;
}

inline std::optional<int> pixel_size(const Node& n, std::string_view dim) {
  if (const auto* v = n.attr(dim)) {
    try {
      std::size_t used = 0;
      const int x = std::stoi(*v, &used);
      return x;
    } catch (const std::exception&) {
    }
  }
  const auto st = style_value(n);
  const auto key = std::string(dim) + ":";
  const auto pos = st.find(key);
  if (pos != std::string::npos && (pos == 0 || st[pos - 1] == ';')) {
    try {
      return std::stoi(st.substr(pos + key.size()));
    } catch (const std::exception&) {
    }
  }
  return std::nullopt;
}

inline bool tracking_pixel(const Node& n) {
  if (n.tag != "img") return false;
  const auto w = pixel_size(n, "width"), h = pixel_size(n, "height");
  return w && h && *w <= 1 && *h <= 1;
}

namespace detail {

inline std::string collapse_ws(std::string_view s) {
  std::string out;
  bool pending = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending = true;
      continue;
    }
    if (pending) out += ' ';
    pending = false;
    out += c;
  }
  if (pending) out += ' ';
  return out;
}

inline void clean(Node& n) {
  std::vector<Node> kept;
  for (auto& c : n.children) {
    if (c.type == Node::Type::comment || c.type == Node::Type::doctype) continue;
    if (c.type == Node::Type::text) {
      std::string t = collapse_ws(c.text);
      if (trim(t).empty()) {
        // Whitespace between inline content still separates words.
        if (!kept.empty() && kept.back().type == Node::Type::text) continue;
        if (t.empty()) continue;
        t = " ";
      }
      if (!kept.empty() && kept.back().type == Node::Type::text) {
        kept.back().text = collapse_ws(kept.back().text + t);
        continue;
      }
      c.text = std::move(t);
      kept.push_back(std::move(c));
      continue;
    }
    if (removable_tag(c.tag) || hidden_subtree(c) || tracking_pixel(c)) continue;
    std::vector<std::pair<std::string, std::string>> attrs;
    for (auto& a : c.attrs)
      if (semantic_attribute(a.first)) attrs.push_back(std::move(a));
    c.attrs = std::move(attrs);
    clean(c);
    kept.push_back(std::move(c));
  }
  // Whitespace-only text at the edges of a block carries nothing.
  while (!kept.empty() && kept.front().type == Node::Type::text && trim(kept.front().text).empty()) kept.erase(kept.begin());
  while (!kept.empty() && kept.back().type == Node::Type::text && trim(kept.back().text).empty()) kept.pop_back();
  n.children = std::move(kept);
}

}  // namespace detail

struct CleanDoc {
  std::string markup;
  std::size_t original_bytes = 0;
  std::size_t cleaned_bytes = 0;
  double ratio() const {
    return original_bytes == 0 ? 0.0 : 1.0 - static_cast<double>(cleaned_bytes) / static_cast<double>(original_bytes);
  }
  Document doc() const { return parse_html(markup); }
};

/// Drops scripts, styles, comments, tracking pixels, hidden subtrees and
/// non-semantic attributes, and collapses whitespace.
inline Document simplify(Document d) {
  detail::clean(d.root);
  return d;
}

inline CleanDoc simplify_html(std::string_view src) {
  CleanDoc c;
  c.markup = serialize(simplify(parse_html(src)));
  c.original_bytes = src.size();
  c.cleaned_bytes = c.markup.size();
  return c;
}

}  // namespace mano::parking
