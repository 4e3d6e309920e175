#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mano/util/rng.hpp"
#include "mano/world/expert.hpp"
#include "mano/world/world.hpp"

namespace mano::world {

/// Parameters of the synthetic world generator.
struct WorldConfig {
  int viewport_width = 1280;
  int viewport_height = 720;
  int grid_cols = 8;
  int grid_rows = 8;
  std::optional<int> horizon;  // unset: certified trace length + horizon_slack
  int horizon_slack = 2;
  double popup_probability = 0.3;
  int min_buttons = 3;
  int max_buttons = 5;
  int min_distractors = 2;
  int max_distractors = 4;
  int min_options = 4;
  int max_options = 8;
  int visible_rows = 4;   // dropdown depth shown before scrolling
  bool force_menu_scroll = false;
  int user_wait_steps = 2;
  int scroll_step_px = 90;
  int menu_scroll_rows = 1;
  /// Sampling weights for click-button, search, dropdown, navigate-click, login.
  std::array<double, 5> family_weights = {1, 1, 1, 1, 1};

  friend bool operator==(const WorldConfig&, const WorldConfig&) = default;
};

inline void validate(const WorldConfig& c) {
  auto fail = [](const std::string& m) { throw Error("invalid world config: " + m); };
  if (c.viewport_width <= 0 || c.viewport_height <= 0) fail("viewport must be positive");
  if (c.grid_cols < 4 || c.grid_rows < 7) fail("grid must be at least 4x7");
  if (c.viewport_width % c.grid_cols != 0 || c.viewport_height % c.grid_rows != 0)
    fail("viewport must divide evenly into grid cells");
  if (c.horizon && *c.horizon < 1) fail("horizon must be >= 1");
  if (c.horizon_slack < 0) fail("horizon_slack must be >= 0");
  if (!(c.popup_probability >= 0.0 && c.popup_probability <= 1.0)) fail("popup probability must be in [0,1]");
  if (c.min_buttons < 1 || c.max_buttons < c.min_buttons) fail("button count range");
  if (c.min_distractors < 0 || c.max_distractors < c.min_distractors) fail("distractor count range");
  if (c.visible_rows < 1 || c.visible_rows > c.grid_rows - 3) fail("visible_rows out of range");
  if (c.min_options < 2 || c.max_options < c.min_options) fail("option count range");
  if (c.force_menu_scroll && c.max_options <= c.visible_rows) fail("force_menu_scroll needs more options than rows");
  if (c.user_wait_steps < 1) fail("user_wait_steps must be >= 1");
  if (c.scroll_step_px <= 0 || c.menu_scroll_rows <= 0) fail("scroll amounts must be positive");
  double total = 0;
  for (double w : c.family_weights) {
    if (w < 0) fail("negative family weight");
    total += w;
  }
  if (total <= 0) fail("no family enabled");
}

inline const std::vector<std::string>& button_labels() {
  static const std::vector<std::string> v = {"Save",  "Cancel", "Submit", "Delete", "Next",  "Back",
                                             "Share", "Print",  "Export", "Apply",  "Reset", "Archive"};
  return v;
}
inline const std::vector<std::string>& search_words() {
  static const std::vector<std::string> v = {"apple", "banana", "cherry", "grape", "lemon", "mango",
                                             "melon", "peach",  "pear",   "plum",  "kiwi",  "lime"};
  return v;
}
inline const std::vector<std::string>& option_words() {
  static const std::vector<std::string> v = {"Paris", "London", "Tokyo", "Berlin", "Madrid", "Rome",
                                             "Oslo",  "Vienna", "Prague", "Dublin", "Lisbon", "Athens"};
  return v;
}
inline const std::vector<std::string>& menu_labels() {
  static const std::vector<std::string> v = {"City", "Origin", "Destination"};
  return v;
}
inline const std::vector<std::string>& page_names() {
  static const std::vector<std::string> v = {"Settings", "Profile", "Orders", "Billing"};
  return v;
}
inline const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> v = {"Welcome", "News", "Docs", "About", "Blog", "Terms", "Status"};
  return v;
}

namespace detail {

class LayoutBuilder {
 public:
  LayoutBuilder(const WorldConfig& c, Rng& rng) : cfg_(c), rng_(rng) {
    used_.assign(static_cast<std::size_t>(c.grid_cols * c.grid_rows), false);
    cw_ = c.viewport_width / c.grid_cols;
    ch_ = c.viewport_height / c.grid_rows;
  }

  int cols() const { return cfg_.grid_cols; }
  int rows() const { return cfg_.grid_rows; }
  int cell_w() const { return cw_; }
  int cell_h() const { return ch_; }

  Rect cell_box(int col, int row) const { return {col * cw_ + 10, row * ch_ + 10, cw_ - 20, ch_ - 20}; }
  Rect cell_full(int col, int row) const { return {col * cw_, row * ch_, cw_, ch_}; }

  void reserve(int col, int row) { used_[static_cast<std::size_t>(row * cfg_.grid_cols + col)] = true; }
  bool free(int col, int row) const { return !used_[static_cast<std::size_t>(row * cfg_.grid_cols + col)]; }

  /// Random free cell, excluding the status row.
  std::pair<int, int> take() {
    std::vector<int> cand;
    for (int r = 0; r < rows() - 1; ++r)
      for (int c = 0; c < cols(); ++c)
        if (free(c, r)) cand.push_back(r * cols() + c);
    if (cand.empty()) throw Error("generator ran out of layout cells");
    const int pick = cand[static_cast<std::size_t>(rng_.range(0, static_cast<int>(cand.size()) - 1))];
    used_[static_cast<std::size_t>(pick)] = true;
    return {pick % cols(), pick / cols()};
  }

  Element page(const std::string& id) const {
    Element root;
    root.id = id;
    root.kind = ElementKind::static_text;
    root.bbox = {0, 0, cfg_.viewport_width, cfg_.viewport_height};
    Element status;
    status.id = "status";
    status.kind = ElementKind::static_text;
    status.bbox = cell_box(0, rows() - 1);
    status.bbox.width = cw_ * 2 - 20;
    status.text = "Ready";
    root.children.push_back(status);
    return root;
  }

  Element button(const std::string& id, const std::string& label) {
    auto [c, r] = take();
    Element b;
    b.id = id;
    b.kind = ElementKind::button;
    b.bbox = cell_box(c, r);
    b.text = label;
    b.effect = {EffectKind::submit, ""};
    return b;
  }

  /// Decoys that exercise visibility filtering and the extraction criteria.
  void distractors(Element& root, int count, const std::vector<std::string>& avoid) {
    std::vector<std::string> words = filler_words();
    for (int i = 0; i < count; ++i) {
      auto [c, r] = take();
      Element d;
      d.id = root.id + "_d" + std::to_string(i);
      d.bbox = cell_box(c, r);
      d.text = words[static_cast<std::size_t>(rng_.range(0, static_cast<int>(words.size()) - 1))];
      switch (rng_.range(0, 5)) {
        case 0: d.kind = ElementKind::static_text; break;
        case 1:
          d.kind = ElementKind::link;
          d.effect = {EffectKind::navigate, "missing_" + d.text};
          break;
        case 2:
          d.kind = ElementKind::static_text;
          d.aria_role = "button";
          d.has_click_listener = true;
          break;
        case 3:
          d.kind = ElementKind::canvas_region;
          d.component = true;
          d.text.clear();
          break;
        case 4: {
          // Invisible button carrying a plausible label; must never show up.
          d.kind = ElementKind::button;
          d.text = avoid.empty() ? d.text : avoid.front();
          d.style.opacity = 0.0;
          break;
        }
        default: {
          d.kind = ElementKind::button;
          d.text = avoid.empty() ? d.text : avoid.front();
          d.style.display_none = true;
          break;
        }
      }
      root.children.push_back(std::move(d));
    }
    // Tracking pixel in the corner of a random cell.
    auto [c, r] = take();
    Element px;
    px.id = root.id + "_pixel";
    px.kind = ElementKind::canvas_region;
    px.bbox = {c * cw_, r * ch_, 1, 1};
    root.children.push_back(std::move(px));
  }

 private:
  const WorldConfig& cfg_;
  Rng& rng_;
  std::vector<bool> used_;
  int cw_ = 0, ch_ = 0;
};

template <typename T>
std::vector<T> sample_distinct(Rng& rng, const std::vector<T>& pool, int n) {
  std::vector<T> v = pool;
  rng.shuffle(v);
  v.resize(static_cast<std::size_t>(std::min<int>(n, static_cast<int>(v.size()))));
  return v;
}

inline std::string quote(const std::string& s) { return "'" + s + "'"; }

}  // namespace detail

/// A seeded world. Layout depends only on the world seed; interruptions on the state seed.
class World {
 public:
  World(std::uint64_t seed, WorldConfig config) : seed_(seed), config_(std::move(config)) {
    validate(config_);
    build();
  }

  const WorldConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  const std::string& instruction() const { return instruction_; }

  /// Initial state S0 for the given interruption seed.
  WorldState reset(std::uint64_t state_seed) const { return generate(state_seed).first; }

  /// Initial state plus the task certified by the construction trace from that state.
  std::pair<WorldState, Task> generate(std::uint64_t state_seed) const {
    WorldState s = base_;
    Rng rng(derive_seed(state_seed, 0x5eed));
    const auto base_trace = expert_trace(s);
    if (!base_trace.reached_goal) throw Error("generator produced an unsatisfiable task");
    const int base_len = static_cast<int>(base_trace.steps.size());
    if (rng.bernoulli(config_.popup_probability)) {
      s.popup_template = make_popup(rng);
      s.popup_at = rng.range(0, base_len - 1);
    }
    settle_initial(s);

    const auto trace = expert_trace(s);
    if (!trace.reached_goal) throw Error("generator produced an unsatisfiable task");
    Task task;
    task.instruction = instruction_;
    task.goal = s.goal;
    task.spec = s.spec;
    task.world_seed = seed_;
    task.state_seed = state_seed;
    for (const auto& st : trace.steps) task.gt.push_back(st.gt);
    const int needed = static_cast<int>(task.gt.size());
    task.horizon = config_.horizon ? *config_.horizon : needed + config_.horizon_slack;
    if (task.horizon < needed)
      throw Error("horizon " + std::to_string(task.horizon) + " shorter than certified trace of " +
                  std::to_string(needed) + " steps");
    s.horizon = task.horizon;
    task.initial = s;
    return {std::move(s), std::move(task)};
  }

 private:
  Element make_popup(Rng& rng) const {
    detail::LayoutBuilder lb(config_, rng);
    const int col = rng.range(0, config_.grid_cols - 3);
    const int row = rng.range(0, config_.grid_rows - 3);
    Element popup;
    popup.id = "popup";
    popup.kind = ElementKind::modal_popup;
    popup.bbox = {col * lb.cell_w(), row * lb.cell_h(), 3 * lb.cell_w(), 2 * lb.cell_h()};
    Element body;
    body.id = "popup_text";
    body.kind = ElementKind::static_text;
    body.bbox = lb.cell_box(col, row + 1);
    body.bbox.width = 2 * lb.cell_w() - 20;
    body.text = "Subscribe to our newsletter";
    Element close;
    close.id = "popup_close";
    close.kind = ElementKind::button;
    close.bbox = lb.cell_box(col + 2, row);
    close.text = "x";
    close.effect = {EffectKind::close_popup, ""};
    popup.children = {body, close};
    return popup;
  }

  void build() {
    Rng rng(derive_seed(seed_, 0x1a7));
    detail::LayoutBuilder lb(config_, rng);
    lb.reserve(0, config_.grid_rows - 1);
    lb.reserve(1, config_.grid_rows - 1);

    base_ = WorldState{};
    base_.screen.viewport_width = config_.viewport_width;
    base_.screen.viewport_height = config_.viewport_height;
    base_.user_wait_steps = config_.user_wait_steps;
    base_.scroll_step_px = config_.scroll_step_px;
    base_.menu_scroll_rows = config_.menu_scroll_rows;
    base_.page = "home";

    std::vector<double> weights(config_.family_weights.begin(), config_.family_weights.end());
    const auto family = static_cast<Family>(1 + rng.categorical(weights));
    Element root = lb.page("home");
    TaskSpec spec;
    spec.family = family;
    const int n_buttons = rng.range(config_.min_buttons, config_.max_buttons);
    const int n_distract = rng.range(config_.min_distractors, config_.max_distractors);
    std::vector<std::string> avoid;

    switch (family) {
      case Family::click_button: {
        auto labels = detail::sample_distinct(rng, button_labels(), n_buttons);
        for (int i = 0; i < n_buttons; ++i) root.children.push_back(lb.button("btn" + std::to_string(i), labels[i]));
        const int t = rng.range(0, n_buttons - 1);
        spec.target = "btn" + std::to_string(t);
        instruction_ = "Click the " + detail::quote(labels[t]) + " button.";
        goal_ = "fact:pressed:" + spec.target;
        avoid.push_back(labels[t]);
        break;
      }
      case Family::search: {
        auto [c, r] = lb.take();
        Element box;
        box.id = "search";
        box.kind = ElementKind::textbox;
        box.editable = true;
        box.placeholder = "Search";
        box.bbox = lb.cell_box(c, r);
        root.children.push_back(box);
        auto labels = detail::sample_distinct(rng, button_labels(), n_buttons - 1);
        for (std::size_t i = 0; i < labels.size(); ++i)
          root.children.push_back(lb.button("btn" + std::to_string(i), labels[i]));
        const auto& words = search_words();
        spec.word = words[static_cast<std::size_t>(rng.range(0, static_cast<int>(words.size()) - 1))];
        spec.textbox = "search";
        instruction_ = "Search for " + detail::quote(spec.word) + ".";
        goal_ = "fact:submitted:search:" + spec.word;
        break;
      }
      case Family::dropdown: {
        const int rows = config_.visible_rows;
        std::vector<int> cand;
        for (int r = 0; r + rows < config_.grid_rows - 1; ++r)
          for (int c = 0; c < config_.grid_cols; ++c) cand.push_back(r * config_.grid_cols + c);
        const int pick = cand[static_cast<std::size_t>(rng.range(0, static_cast<int>(cand.size()) - 1))];
        const int col = pick % config_.grid_cols, row = pick / config_.grid_cols;
        for (int r = row; r <= row + rows; ++r) lb.reserve(col, r);
        const auto& labels = menu_labels();
        const std::string label = labels[static_cast<std::size_t>(rng.range(0, static_cast<int>(labels.size()) - 1))];
        const int n_opt = rng.range(config_.force_menu_scroll ? std::max(config_.min_options, rows + 1)
                                                              : config_.min_options,
                                    config_.max_options);
        auto opts = detail::sample_distinct(rng, option_words(), n_opt);
        Element dd;
        dd.id = "dropdown";
        dd.kind = ElementKind::dropdown;
        dd.bbox = lb.cell_box(col, row);
        dd.text = label;
        dd.effect = {EffectKind::toggle_list, "menu"};
        Element list;
        list.id = "menu";
        list.kind = ElementKind::scroll_container;
        list.bbox = {col * lb.cell_w(), (row + 1) * lb.cell_h(), lb.cell_w(), rows * lb.cell_h()};
        list.row_height = lb.cell_h();
        list.style.display_none = true;
        for (int i = 0; i < static_cast<int>(opts.size()); ++i) {
          Element o;
          o.id = "opt" + std::to_string(i);
          o.kind = ElementKind::option;
          o.bbox = lb.cell_box(col, row + 1 + i);
          o.text = opts[static_cast<std::size_t>(i)];
          o.effect = {EffectKind::select_option, "dropdown"};
          list.children.push_back(o);
        }
        root.children.push_back(dd);
        root.children.push_back(list);
        const int lo = config_.force_menu_scroll ? rows : 0;
        const int t = rng.range(lo, static_cast<int>(opts.size()) - 1);
        spec.dropdown = "dropdown";
        spec.list = "menu";
        spec.target = "opt" + std::to_string(t);
        instruction_ = "Choose " + detail::quote(opts[static_cast<std::size_t>(t)]) + " from the " +
                       detail::quote(label) + " menu.";
        goal_ = "fact:selected:dropdown:" + opts[static_cast<std::size_t>(t)];
        auto blabels = detail::sample_distinct(rng, button_labels(), std::max(1, n_buttons - 2));
        for (std::size_t i = 0; i < blabels.size(); ++i)
          root.children.push_back(lb.button("btn" + std::to_string(i), blabels[i]));
        break;
      }
      case Family::navigate_click: {
        auto names = detail::sample_distinct(rng, page_names(), 2);
        const std::string page_id = "page_" + to_lower(names[0]);
        auto [c, r] = lb.take();
        Element link;
        link.id = "link0";
        link.kind = ElementKind::link;
        link.bbox = lb.cell_box(c, r);
        link.text = names[0];
        link.effect = {EffectKind::navigate, page_id};
        root.children.push_back(link);
        auto [c2, r2] = lb.take();
        Element other;
        other.id = "link1";
        other.kind = ElementKind::link;
        other.bbox = lb.cell_box(c2, r2);
        other.text = names[1];
        other.effect = {EffectKind::navigate, "missing_" + to_lower(names[1])};
        root.children.push_back(other);

        detail::LayoutBuilder lb2(config_, rng);
        lb2.reserve(0, config_.grid_rows - 1);
        lb2.reserve(1, config_.grid_rows - 1);
        Element page = lb2.page(page_id);
        auto labels = detail::sample_distinct(rng, button_labels(), n_buttons);
        for (int i = 0; i < n_buttons; ++i)
          page.children.push_back(lb2.button("p_btn" + std::to_string(i), labels[i]));
        const int t = rng.range(0, n_buttons - 1);
        lb2.distractors(page, std::max(0, n_distract - 1), {});
        base_.pages[page_id] = std::move(page);
        spec.link = "link0";
        spec.page = page_id;
        spec.target = "p_btn" + std::to_string(t);
        instruction_ = "Open " + detail::quote(names[0]) + " and press " + detail::quote(labels[t]) + ".";
        goal_ = "fact:pressed:" + spec.target;
        break;
      }
      case Family::login: {
        for (const char* name : {"Username", "Password"}) {
          auto [c, r] = lb.take();
          Element box;
          box.id = to_lower(name);
          box.kind = ElementKind::textbox;
          box.editable = true;
          box.placeholder = name;
          box.bbox = lb.cell_box(c, r);
          root.children.push_back(box);
        }
        root.children.push_back(lb.button("login", "Login"));
        root.children.back().effect = {EffectKind::login, ""};
        auto labels = detail::sample_distinct(rng, button_labels(), std::max(1, n_buttons - 2));
        for (std::size_t i = 0; i < labels.size(); ++i)
          root.children.push_back(lb.button("btn" + std::to_string(i), labels[i]));
        base_.user_fill = {{"username", "alice"}, {"password", "secret"}};
        spec.target = "login";
        instruction_ = "Sign in with the " + detail::quote("Login") + " button; ask the user for credentials.";
        goal_ = "fact:login:login";
        break;
      }
      case Family::custom: break;
    }
    lb.distractors(root, n_distract, avoid);
    base_.screen.root = std::move(root);
    base_.spec = spec;
    base_.goal = goal_;
    base_.horizon = 1 << 20;
  }

  std::uint64_t seed_;
  WorldConfig config_;
  WorldState base_;
  std::string instruction_;
  std::string goal_;
};

/// Deterministic world and certified task for (seed, config).
inline std::pair<WorldState, Task> generate_world(std::uint64_t seed, const WorldConfig& config) {
  return World(seed, config).generate(seed);
}

}  // namespace mano::world
