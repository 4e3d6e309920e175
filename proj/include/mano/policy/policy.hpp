#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <json.hpp>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mano/dsl/action.hpp"
#include "mano/util/rng.hpp"
#include "mano/verify/verifier.hpp"
#include "mano/world/generator.hpp"
#include "mano/world/pool.hpp"

namespace mano::policy {

using dsl::Action;
using dsl::ActionKind;
using world::AgentHistory;
using world::ElementKind;
using world::Observation;

enum Head : int { kType = 0, kCell, kCell2, kDir, kContent, kSummary, kNumHeads };
inline constexpr std::array<std::string_view, kNumHeads> kHeadNames = {"type", "cell", "cell2",
                                                                       "direction", "content", "summary"};

inline constexpr int kTypes = dsl::kNumActionKinds;
inline constexpr int kKinds = world::kNumElementKinds;
inline constexpr int kDirs = dsl::kNumDirections;

inline std::vector<std::string> default_vocab() {
  std::vector<std::string> v = world::search_words();
  for (const char* k : {"enter", "ctrl+a", "ctrl+c", "ctrl+v"}) v.emplace_back(k);
  return v;
}

struct PolicyConfig {
  int grid_cols = 8;
  int grid_rows = 8;
  int token_buckets = 128;
  int history_window = 2;  // prior steps whose action, mark and observation are featurized
  int hidden = 0;          // width of the optional tanh layer under the dense heads
  bool summary_head = false;
  std::vector<std::string> vocab = default_vocab();
  std::array<bool, kNumHeads> frozen{};
  bool frozen_encoder = false;
  bool corrupt_format = false;  // drop the Action Desp header from emitted utterances
  double init_scale = 0.0;
  std::uint64_t init_seed = 0;

  int cells() const { return grid_cols * grid_rows; }

  void validate() const {
    if (grid_cols < 1 || grid_rows < 1) throw Error("policy grid must be positive");
    if (token_buckets < 1) throw Error("token_buckets must be positive");
    if (history_window < 0 || history_window > 2) throw Error("history_window must be 0, 1 or 2");
    if (hidden < 0) throw Error("hidden must be >= 0");
    if (vocab.empty()) throw Error("content vocabulary is empty");
    for (const auto& w : vocab)
      if (!dsl::well_formed(Action::hotkey(w)) && !dsl::well_formed(Action::type(w)))
        throw Error("vocabulary entry cannot be emitted: " + w);
  }

  std::string canonical() const {
    std::string s = "v1;" + std::to_string(grid_cols) + "x" + std::to_string(grid_rows) + ";b" +
                    std::to_string(token_buckets) + ";w" + std::to_string(history_window) + ";h" +
                    std::to_string(hidden) + ";s" + (summary_head ? "1" : "0") + ";vocab";
    for (const auto& w : vocab) s += ":" + w;
    return s;
  }

  std::uint64_t hash() const { return fnv1a(canonical()); }
};

// ---------------------------------------------------------------------------
// Features

inline constexpr int kObsFlags = 4;  // popup, focused box, empty box, open list
inline constexpr int kSlotWidth = (kTypes + 1) + 2 + kObsFlags;
inline constexpr int kCellChannels = 3 * kKinds + 3;
inline constexpr int kContentChannels = 1;

struct FeatureLayout {
  int tokens = 0, raster = 0, flags = 0, slots = 0, dense = 0;
  int cells = 0, cell_channels = kCellChannels;
  int vocab = 0, content_channels = kContentChannels;

  explicit FeatureLayout(const PolicyConfig& c) {
    tokens = 1;
    raster = tokens + c.token_buckets;
    flags = raster + c.cells() * kKinds;
    slots = flags + kObsFlags + kKinds;
    dense = slots + c.history_window * kSlotWidth;
    cells = c.cells();
    vocab = static_cast<int>(c.vocab.size());
  }

  int total() const { return dense + cells * cell_channels + vocab * content_channels; }
};

/// Dense context vector plus per-option channel blocks for the cell and content heads.
struct FeatureVector {
  std::vector<double> dense;
  std::vector<double> cell;     // cells x cell_channels
  std::vector<double> content;  // vocab x content_channels

  std::vector<double> flatten() const {
    std::vector<double> out(dense);
    out.insert(out.end(), cell.begin(), cell.end());
    out.insert(out.end(), content.begin(), content.end());
    return out;
  }
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// Strings quoted with single quotes in the instruction.
inline std::vector<std::string> quoted_terms(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while ((i = text.find('\'', i)) != std::string_view::npos) {
    const auto j = text.find('\'', i + 1);
    if (j == std::string_view::npos) break;
    out.push_back(to_lower(std::string(text.substr(i + 1, j - i - 1))));
    i = j + 1;
  }
  return out;
}

inline bool mentioned(const std::vector<std::string>& terms, const std::string& label) {
  const std::string l = to_lower(normalize_space(label));
  for (const auto& t : terms)
    if (t == l) return true;
  return false;
}

inline std::string element_label(const world::ObservedElement& e) {
  if (e.kind == ElementKind::dropdown) {
    auto pos = e.text.find(':');
    return pos == std::string::npos ? e.text : e.text.substr(0, pos);
  }
  return e.text;
}

inline std::array<double, kObsFlags> obs_flags(const Observation& obs) {
  std::array<double, kObsFlags> f{};
  for (const auto& e : obs.elements) {
    if (e.in_popup) f[0] = 1;
    if (e.focused) f[1] = 1;
    if (e.kind == ElementKind::textbox && e.placeholder) f[2] = 1;
    if (e.kind == ElementKind::scroll_container) f[3] = 1;
  }
  return f;
}

inline std::size_t token_bucket(std::string_view token, int buckets) {
  return static_cast<std::size_t>(fnv1a(token) % static_cast<std::uint64_t>(buckets));
}

/// Context of step i: the instruction, the current observation, and the last
/// `history_window` steps of actions, verdict marks and observations.
inline FeatureVector featurize(const PolicyConfig& cfg, const Observation& obs, const AgentHistory& history,
                               std::string_view instruction) {
  const FeatureLayout L(cfg);
  FeatureVector f;
  f.dense.assign(static_cast<std::size_t>(L.dense), 0.0);
  f.cell.assign(static_cast<std::size_t>(L.cells * L.cell_channels), 0.0);
  f.content.assign(static_cast<std::size_t>(L.vocab * L.content_channels), 0.0);
  auto& x = f.dense;
  x[0] = 1.0;

  for (const auto& t : tokenize(instruction)) x[L.tokens + token_bucket(t, cfg.token_buckets)] = 1.0;

  const int cells = cfg.cells();
  const bool grid_matches = obs.grid_cols == cfg.grid_cols && obs.grid_rows == cfg.grid_rows &&
                            static_cast<int>(obs.raster.size()) == cells;
  if (grid_matches)
    for (int c = 0; c < cells; ++c)
      for (int k = 0; k < kKinds; ++k)
        if (obs.raster[c] & (1u << k)) x[L.raster + c * kKinds + k] = 1.0;

  const auto terms = quoted_terms(instruction);
  const auto flags = obs_flags(obs);
  for (int i = 0; i < kObsFlags; ++i) x[L.flags + i] = flags[i];

  Observation grid = obs;
  grid.grid_cols = cfg.grid_cols;
  grid.grid_rows = cfg.grid_rows;
  const bool modal = obs.has_popup();
  auto chan = [&](int cell, int ch) -> double& { return f.cell[static_cast<std::size_t>(cell * L.cell_channels + ch)]; };
  for (int c = 0; c < cells; ++c)
    for (int k = 0; k < kKinds; ++k)
      if (grid_matches && (obs.raster[c] & (1u << k))) chan(c, k) = 1.0;
  for (const auto& e : obs.elements) {
    const int k = static_cast<int>(e.kind);
    const int c = grid.cell_of(e.bbox.center());
    const bool reachable = !modal || e.in_popup;
    chan(c, kKinds + k) = 1.0;
    const bool match = mentioned(terms, element_label(e));
    if (match && reachable) {
      chan(c, 2 * kKinds + k) = 1.0;
      x[L.flags + kObsFlags + k] = 1.0;
    }
    if (e.in_popup && e.clickable) chan(c, 3 * kKinds) = 1.0;
    if (e.focused) chan(c, 3 * kKinds + 1) = 1.0;
    if (e.kind == ElementKind::textbox && e.placeholder && reachable) chan(c, 3 * kKinds + 2) = 1.0;
  }

  for (int v = 0; v < L.vocab; ++v)
    if (mentioned(terms, cfg.vocab[v])) f.content[static_cast<std::size_t>(v * L.content_channels)] = 1.0;

  const int n = static_cast<int>(history.actions.size());
  for (int j = 1; j <= cfg.history_window; ++j) {
    const int base = L.slots + (j - 1) * kSlotWidth;
    const int i = n - j;
    if (i < 0) {
      x[base + kTypes] = 1.0;  // no such step
      continue;
    }
    const auto& a = history.actions[i];
    x[base + (a ? static_cast<int>(*a) : kTypes)] = 1.0;
    if (i < static_cast<int>(history.verdicts.entries.size())) {
      const bool ok = history.verdicts.entries[i].mark == verifier::kMarkCorrect;
      x[base + kTypes + 1 + (ok ? 0 : 1)] = 1.0;
    }
    if (i < static_cast<int>(history.observations.size())) {
      const auto pf = obs_flags(history.observations[i]);
      for (int q = 0; q < kObsFlags; ++q) x[base + kTypes + 3 + q] = pf[q];
    }
  }
  return f;
}

// ---------------------------------------------------------------------------
// Outputs

struct StructuredOutput {
  int type = -1, cell = -1, cell2 = -1, dir = -1, content = -1, summary = -1;

  int& at(Head h) {
    switch (h) {
      case kType: return type;
      case kCell: return cell;
      case kCell2: return cell2;
      case kDir: return dir;
      case kContent: return content;
      default: return summary;
    }
  }
  int at(Head h) const { return const_cast<StructuredOutput*>(this)->at(h); }

  std::vector<int> to_vector() const { return {type, cell, cell2, dir, content, summary}; }
  static StructuredOutput from_vector(const std::vector<int>& v) {
    if (v.size() != kNumHeads) throw Error("structured output needs 6 entries");
    return {v[0], v[1], v[2], v[3], v[4], v[5]};
  }
  friend bool operator==(const StructuredOutput&, const StructuredOutput&) = default;
};

/// Heads that carry a value for a given action type (the mask rule).
inline std::array<bool, kNumHeads> applicable_heads(ActionKind k, bool summary_head) {
  std::array<bool, kNumHeads> m{};
  m[kType] = true;
  m[kCell] = dsl::has_point(k);
  m[kCell2] = k == ActionKind::drag;
  m[kDir] = dsl::is_scroll_family(k);
  m[kContent] = k == ActionKind::type || k == ActionKind::hotkey;
  m[kSummary] = summary_head;
  return m;
}

// ---------------------------------------------------------------------------
// Parameters

class PolicyParams {
 public:
  PolicyParams() : PolicyParams(PolicyConfig{}) {}
  explicit PolicyParams(PolicyConfig cfg) : cfg_(std::move(cfg)), layout_(cfg_) {
    cfg_.validate();
    const int dz = dense_width();
    auto add = [&](int n) {
      const int at = static_cast<int>(size_);
      size_ += static_cast<std::size_t>(n);
      return at;
    };
    off_hidden_ = add(cfg_.hidden * layout_.dense);
    off_[kType] = add(kTypes * dz);
    off_[kCell] = add(kTypes * kCellChannels);
    off_[kCell2] = add(kCellChannels);
    off_[kDir] = add(kDirs * dz);
    off_[kContent] = add(layout_.vocab * dz + kContentChannels);
    off_[kSummary] = add(cfg_.summary_head ? verifier::num_summary_templates() * dz : 0);
    theta.assign(size_, 0.0);
    if (cfg_.init_scale > 0.0 || cfg_.hidden > 0) {
      Rng rng(cfg_.init_seed);
      const double scale = cfg_.init_scale > 0.0 ? cfg_.init_scale : 0.1;
      for (std::size_t i = 0; i < size_; ++i) {
        const bool hidden_block = static_cast<int>(i) < off_[kType];
        if (cfg_.init_scale > 0.0 || hidden_block) theta[i] = scale * (2.0 * rng.uniform() - 1.0);
      }
    }
  }

  const PolicyConfig& config() const { return cfg_; }
  const FeatureLayout& layout() const { return layout_; }
  std::size_t size() const { return size_; }
  int dense_width() const { return layout_.dense + cfg_.hidden; }
  int offset(Head h) const { return off_[h]; }
  int hidden_offset() const { return off_hidden_; }
  int head_size(Head h) const {
    const int end = h + 1 < kNumHeads ? off_[h + 1] : static_cast<int>(size_);
    return end - off_[h];
  }
  int options(Head h) const {
    switch (h) {
      case kType: return kTypes;
      case kCell:
      case kCell2: return layout_.cells;
      case kDir: return kDirs;
      case kContent: return layout_.vocab;
      default: return cfg_.summary_head ? verifier::num_summary_templates() : 0;
    }
  }

  /// Zeroes gradient entries of frozen heads.
  void apply_freeze(std::vector<double>& grad) const {
    if (cfg_.frozen_encoder)
      std::fill(grad.begin() + off_hidden_, grad.begin() + off_[kType], 0.0);
    for (int h = 0; h < kNumHeads; ++h)
      if (cfg_.frozen[h]) std::fill(grad.begin() + off_[h], grad.begin() + off_[h] + head_size(static_cast<Head>(h)), 0.0);
  }

  bool finite() const {
    for (double v : theta)
      if (!std::isfinite(v)) return false;
    return true;
  }

  std::vector<double> theta;

 private:
  PolicyConfig cfg_;
  FeatureLayout layout_;
  std::size_t size_ = 0;
  int off_hidden_ = 0;
  std::array<int, kNumHeads> off_{};
};

// ---------------------------------------------------------------------------
// Forward pass

struct Forward {
  std::vector<double> z;       // dense input to the heads: x, then tanh(Ux) when hidden
  std::vector<double> logits[kNumHeads];
};

namespace detail {

inline double dot(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline std::vector<double> log_softmax(const std::vector<double>& logits) {
  double m = -INFINITY;
  for (double v : logits) m = std::max(m, v);
  double s = 0.0;
  for (double v : logits) s += std::exp(v - m);
  const double lse = m + std::log(s);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
  auto lp = log_softmax(logits);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

inline void dense_logits(const PolicyParams& p, Head h, int rows, const std::vector<double>& z, std::vector<double>& out) {
  const int dz = p.dense_width();
  out.assign(static_cast<std::size_t>(rows), 0.0);
  const double* w = p.theta.data() + p.offset(h);
  for (int r = 0; r < rows; ++r) out[r] = dot(w + r * dz, z.data(), dz);
}

inline void channel_logits(const double* theta, const std::vector<double>& channels, int options, int width,
                           std::vector<double>& out) {
  out.assign(static_cast<std::size_t>(options), 0.0);
  for (int c = 0; c < options; ++c) out[c] = dot(theta, channels.data() + c * width, width);
}

}  // namespace detail

inline std::vector<double> dense_input(const PolicyParams& p, const FeatureVector& f) {
  const int d = p.layout().dense;
  std::vector<double> z(f.dense);
  z.resize(static_cast<std::size_t>(p.dense_width()));
  const double* u = p.theta.data() + p.hidden_offset();
  for (int h = 0; h < p.config().hidden; ++h) z[d + h] = std::tanh(detail::dot(u + h * d, f.dense.data(), d));
  return z;
}

/// Logits of one head; `type` selects the conditional cell weights.
inline std::vector<double> head_logits(const PolicyParams& p, const FeatureVector& f, const std::vector<double>& z,
                                       Head h, int type = 0) {
  std::vector<double> out;
  const auto& L = p.layout();
  switch (h) {
    case kType: detail::dense_logits(p, kType, kTypes, z, out); break;
    case kCell:
      detail::channel_logits(p.theta.data() + p.offset(kCell) + type * kCellChannels, f.cell, L.cells, kCellChannels, out);
      break;
    case kCell2:
      detail::channel_logits(p.theta.data() + p.offset(kCell2), f.cell, L.cells, kCellChannels, out);
      break;
    case kDir: detail::dense_logits(p, kDir, kDirs, z, out); break;
    case kContent: {
      detail::dense_logits(p, kContent, L.vocab, z, out);
      std::vector<double> ch;
      detail::channel_logits(p.theta.data() + p.offset(kContent) + L.vocab * p.dense_width(), f.content, L.vocab,
                             kContentChannels, ch);
      for (int v = 0; v < L.vocab; ++v) out[v] += ch[v];
      break;
    }
    case kSummary: detail::dense_logits(p, kSummary, p.options(kSummary), z, out); break;
    default: break;
  }
  return out;
}

inline void check_output(const PolicyParams& p, const StructuredOutput& out) {
  if (out.type < 0 || out.type >= kTypes) throw Error("structured output has no valid type");
  const auto mask = applicable_heads(static_cast<ActionKind>(out.type), p.config().summary_head);
  for (int h = 1; h < kNumHeads; ++h) {
    const int v = out.at(static_cast<Head>(h));
    if (mask[h] != (v >= 0)) throw Error(std::string("masked-head mismatch on ") + std::string(kHeadNames[h]) + " head");
    if (v >= p.options(static_cast<Head>(h))) throw Error(std::string("index out of range on ") + std::string(kHeadNames[h]) + " head");
  }
}

/// Sum of per-head log-softmax values over the heads applicable to `out`.
inline double log_prob(const PolicyParams& p, const FeatureVector& f, const StructuredOutput& out) {
  check_output(p, out);
  const auto z = dense_input(p, f);
  double lp = 0.0;
  for (int h = 0; h < kNumHeads; ++h) {
    const int v = out.at(static_cast<Head>(h));
    if (v < 0) continue;
    lp += detail::log_softmax(head_logits(p, f, z, static_cast<Head>(h), out.type))[v];
  }
  return lp;
}

/// grad += coef * d log_prob / d theta.
inline void add_log_prob_grad(const PolicyParams& p, const FeatureVector& f, const StructuredOutput& out, double coef,
                              std::vector<double>& grad) {
  check_output(p, out);
  const auto& L = p.layout();
  const int dz = p.dense_width();
  const auto z = dense_input(p, f);
  std::vector<double> dz_acc(static_cast<std::size_t>(dz), 0.0);
  const bool hidden = p.config().hidden > 0;
  double* g = grad.data();
  const double* th = p.theta.data();

  auto dense_head = [&](Head h, const std::vector<double>& probs, int y, int row_offset = 0) {
    const int rows = static_cast<int>(probs.size());
    for (int r = 0; r < rows; ++r) {
      const double d = coef * ((r == y ? 1.0 : 0.0) - probs[r]);
      if (d == 0.0) continue;
      double* gw = g + p.offset(h) + row_offset + r * dz;
      for (int i = 0; i < dz; ++i)
        if (z[i] != 0.0) gw[i] += d * z[i];
      if (hidden) {
        const double* w = th + p.offset(h) + row_offset + r * dz;
        for (int i = L.dense; i < dz; ++i) dz_acc[i] += d * w[i];
      }
    }
  };
  auto channel_head = [&](int theta_off, const std::vector<double>& probs, const std::vector<double>& channels,
                          int width, int y) {
    double* gt = g + theta_off;
    for (int c = 0; c < static_cast<int>(probs.size()); ++c) {
      const double d = coef * ((c == y ? 1.0 : 0.0) - probs[c]);
      const double* ch = channels.data() + c * width;
      for (int k = 0; k < width; ++k) gt[k] += d * ch[k];
    }
  };

  for (int hi = 0; hi < kNumHeads; ++hi) {
    const Head h = static_cast<Head>(hi);
    const int y = out.at(h);
    if (y < 0) continue;
    const auto probs = detail::softmax(head_logits(p, f, z, h, out.type));
    switch (h) {
      case kType:
      case kDir:
      case kSummary: dense_head(h, probs, y); break;
      case kCell: channel_head(p.offset(kCell) + out.type * kCellChannels, probs, f.cell, kCellChannels, y); break;
      case kCell2: channel_head(p.offset(kCell2), probs, f.cell, kCellChannels, y); break;
      case kContent:
        dense_head(kContent, probs, y);
        channel_head(p.offset(kContent) + L.vocab * dz, probs, f.content, kContentChannels, y);
        break;
      default: break;
    }
  }

  if (hidden) {
    const int d = L.dense;
    for (int h = 0; h < p.config().hidden; ++h) {
      const double a = z[d + h];
      const double back = dz_acc[d + h] * (1.0 - a * a);
      if (back == 0.0) continue;
      double* gu = g + p.hidden_offset() + h * d;
      for (int i = 0; i < d; ++i)
        if (f.dense[i] != 0.0) gu[i] += back * f.dense[i];
    }
  }
}

/// Seeded draw from the factored policy; only applicable heads are sampled.
inline StructuredOutput sample(const PolicyParams& p, const FeatureVector& f, Rng& rng, bool greedy = false) {
  const auto z = dense_input(p, f);
  auto draw = [&](const std::vector<double>& logits) {
    const auto probs = detail::softmax(logits);
    if (greedy) return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    return static_cast<int>(rng.categorical(probs));
  };
  StructuredOutput out;
  out.type = draw(head_logits(p, f, z, kType));
  const auto mask = applicable_heads(static_cast<ActionKind>(out.type), p.config().summary_head);
  for (int h = 1; h < kNumHeads; ++h)
    if (mask[h]) out.at(static_cast<Head>(h)) = draw(head_logits(p, f, z, static_cast<Head>(h), out.type));
  return out;
}

inline StructuredOutput sample(const PolicyParams& p, const FeatureVector& f, std::uint64_t seed) {
  Rng rng(seed);
  return sample(p, f, rng);
}

// ---------------------------------------------------------------------------
// SFT objective

struct SftExample {
  FeatureVector features;
  StructuredOutput target;
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean negative log-likelihood of the expert outputs and its analytic gradient.
inline LossAndGrad sft_loss_and_grad(const PolicyParams& p, std::span<const SftExample> data) {
  if (data.empty()) throw Error("SFT dataset is empty");
  LossAndGrad r;
  r.grad.assign(p.size(), 0.0);
  const double inv = 1.0 / static_cast<double>(data.size());
  for (const auto& ex : data) {
    r.loss -= log_prob(p, ex.features, ex.target) * inv;
    add_log_prob_grad(p, ex.features, ex.target, -inv, r.grad);
  }
  p.apply_freeze(r.grad);
  return r;
}

// ---------------------------------------------------------------------------
// Decoding between actions and structured outputs

inline Observation on_grid(Observation obs, const PolicyConfig& cfg) {
  obs.grid_cols = cfg.grid_cols;
  obs.grid_rows = cfg.grid_rows;
  return obs;
}

/// Structured target for an expert action, or nullopt when the action is not
/// representable (content outside the vocabulary).
inline std::optional<StructuredOutput> encode(const PolicyConfig& cfg, const Action& a, const Observation& obs) {
  const Observation g = on_grid(obs, cfg);
  StructuredOutput out;
  out.type = static_cast<int>(a.kind);
  if (auto pt = a.primary_point()) out.cell = g.cell_of(*pt);
  if (auto* d = std::get_if<dsl::DragPayload>(&a.payload)) out.cell2 = g.cell_of(d->end);
  if (auto* s = std::get_if<dsl::ScrollPayload>(&a.payload)) out.dir = static_cast<int>(s->direction);
  if (auto text = a.text()) {
    std::string t(*text);
    while (!t.empty() && t.back() == '\n') t.pop_back();
    auto it = std::find(cfg.vocab.begin(), cfg.vocab.end(), t);
    if (it == cfg.vocab.end()) return std::nullopt;
    out.content = static_cast<int>(it - cfg.vocab.begin());
  }
  if (cfg.summary_head) {
    auto id = verifier::summary_template_id(verifier::describe(a, obs));
    if (!id) return std::nullopt;
    out.summary = *id;
  }
  return out;
}

inline Action decode_action(const PolicyConfig& cfg, const StructuredOutput& out, const Observation& obs) {
  const Observation g = on_grid(obs, cfg);
  const auto k = static_cast<ActionKind>(out.type);
  auto at = [&](int cell) { return g.cell_center(cell); };
  switch (k) {
    case ActionKind::drag: return Action::drag(at(out.cell), at(out.cell2));
    case ActionKind::hotkey: return Action::hotkey(cfg.vocab.at(out.content));
    case ActionKind::type: return Action::type(cfg.vocab.at(out.content));
    case ActionKind::scroll: return Action::scroll(at(out.cell), static_cast<dsl::Direction>(out.dir));
    case ActionKind::scroll_menu: return Action::scroll_menu(at(out.cell), static_cast<dsl::Direction>(out.dir));
    case ActionKind::wait: return Action::wait();
    case ActionKind::call_user: return Action::call_user();
    case ActionKind::finish: return Action::finish();
    default: return Action::click_at(k, at(out.cell));
  }
}

/// Renders a structured output as a template utterance.
inline std::string render(const PolicyConfig& cfg, const StructuredOutput& out, const Observation& obs,
                          std::string_view instruction) {
  const Action a = decode_action(cfg, out, obs);
  std::string summary = verifier::describe(a, obs);
  if (cfg.summary_head && out.summary >= 0 && verifier::summary_template_id(summary) != out.summary)
    summary = "take the step for template " + std::to_string(out.summary);
  const std::string thought = verifier::thought_for(instruction, summary);
  if (cfg.corrupt_format) return "Thought: " + thought + "\nAction: " + dsl::serialize(a);
  return dsl::serialize(dsl::make_utterance(thought, summary, a));
}

/// Rollout driver sampling from `params` (kept alive by the driver).
inline world::Driver make_driver(std::shared_ptr<const PolicyParams> params, bool greedy = false) {
  return [params, greedy](const world::AgentView& v, Rng& rng) {
    const auto f = featurize(params->config(), v.obs, v.history, v.task.instruction);
    const auto out = sample(*params, f, rng, greedy);
    return world::AgentTurn{render(params->config(), out, v.obs, v.task.instruction), {}, out.to_vector()};
  };
}

/// Driver choosing uniformly among action types and cells.
inline world::Driver random_driver(const PolicyConfig& cfg = {}) {
  auto params = std::make_shared<const PolicyParams>(cfg);
  return make_driver(params);
}

// ---------------------------------------------------------------------------
// Replay helpers

/// History visible before step i of a recorded trajectory.
inline AgentHistory history_before(const TrajectoryRecord& t, std::size_t i) {
  AgentHistory h;
  for (std::size_t j = 0; j < i && j < t.steps.size(); ++j) {
    const auto& s = t.steps[j];
    h.observations.push_back(s.pre);
    h.actions.push_back(s.action ? std::optional(s.action->kind) : std::nullopt);
    h.verdicts = verifier::augment(std::move(h.verdicts), s.summary, s.verdict);
  }
  return h;
}

/// Features of every step of a trajectory, rebuilt from the record.
inline std::vector<FeatureVector> replay_features(const PolicyConfig& cfg, const TrajectoryRecord& t) {
  std::vector<FeatureVector> out;
  AgentHistory h;
  for (const auto& s : t.steps) {
    out.push_back(featurize(cfg, s.pre, h, t.task.instruction));
    h.observations.push_back(s.pre);
    h.actions.push_back(s.action ? std::optional(s.action->kind) : std::nullopt);
    h.verdicts = verifier::augment(std::move(h.verdicts), s.summary, s.verdict);
  }
  return out;
}

/// Structured outputs taken at each step; from recorded choices, else re-encoded from actions.
inline std::vector<std::optional<StructuredOutput>> replay_outputs(const PolicyConfig& cfg, const TrajectoryRecord& t) {
  std::vector<std::optional<StructuredOutput>> out;
  for (const auto& s : t.steps) {
    if (s.choice.size() == kNumHeads) out.push_back(StructuredOutput::from_vector(s.choice));
    else if (s.action) out.push_back(encode(cfg, *s.action, s.pre));
    else out.push_back(std::nullopt);
  }
  return out;
}

/// SFT examples from trajectories whose every step is encodable.
inline std::vector<SftExample> sft_examples(const PolicyConfig& cfg, const std::vector<TrajectoryRecord>& trajs) {
  std::vector<SftExample> out;
  for (const auto& t : trajs) {
    const auto feats = replay_features(cfg, t);
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
      if (!t.steps[i].action) continue;
      auto target = encode(cfg, *t.steps[i].action, t.steps[i].pre);
      if (target) out.push_back({feats[i], *target});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline nlohmann::json to_checkpoint(const PolicyParams& p) {
  const auto& c = p.config();
  nlohmann::json frozen = nlohmann::json::array();
  for (bool b : c.frozen) frozen.push_back(b);
  return {{"format", "mano-policy"},
          {"version", 1},
          {"config_hash", c.hash()},
          {"config",
           {{"grid", {c.grid_cols, c.grid_rows}},
            {"token_buckets", c.token_buckets},
            {"history_window", c.history_window},
            {"hidden", c.hidden},
            {"summary_head", c.summary_head},
            {"vocab", c.vocab},
            {"frozen", frozen},
            {"frozen_encoder", c.frozen_encoder}}},
          {"theta", p.theta}};
}

inline PolicyParams from_checkpoint(const nlohmann::json& j) {
  if (j.value("format", "") != "mano-policy" || j.value("version", 0) != 1) throw Error("not a version-1 policy checkpoint");
  const auto& jc = j.at("config");
  PolicyConfig c;
  c.grid_cols = jc.at("grid").at(0).get<int>();
  c.grid_rows = jc.at("grid").at(1).get<int>();
  c.token_buckets = jc.at("token_buckets").get<int>();
  c.history_window = jc.at("history_window").get<int>();
  c.hidden = jc.at("hidden").get<int>();
  c.summary_head = jc.at("summary_head").get<bool>();
  c.vocab = jc.at("vocab").get<std::vector<std::string>>();
  for (int h = 0; h < kNumHeads; ++h) c.frozen[h] = jc.at("frozen").at(h).get<bool>();
  c.frozen_encoder = jc.value("frozen_encoder", false);
  if (j.at("config_hash").get<std::uint64_t>() != c.hash()) throw Error("checkpoint config hash mismatch");
  PolicyParams p(c);
  auto theta = j.at("theta").get<std::vector<double>>();
  if (theta.size() != p.size()) throw Error("checkpoint parameter count mismatch");
  p.theta = std::move(theta);
  if (!p.finite()) throw Error("checkpoint holds non-finite parameters");
  return p;
}

inline void save_checkpoint(const PolicyParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << to_checkpoint(p).dump();
}

inline PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path);
  return from_checkpoint(nlohmann::json::parse(in));
}

}  // namespace mano::policy
