#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mano/datacycle/datacycle.hpp"
#include "mano/datacycle/server.hpp"
#include "mano/explore/explorer.hpp"
#include "mano/parking/program.hpp"
#include "mano/pipeline.hpp"
#include "mano/world/io.hpp"

using namespace mano;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  if (path == "-") {
    std::ostringstream ss;
    ss << std::cin.rdbuf();
    return ss.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

std::vector<TrajectoryRecord> read_trajectories(const std::vector<std::string>& paths) {
  std::vector<TrajectoryRecord> out;
  for (const auto& p : paths) {
    if (!std::filesystem::exists(p)) throw Error("no such file " + p);
    for (auto& t : TrajectoryStore(p).load()) out.push_back(std::move(t));
  }
  return out;
}

json to_json(const datacycle::SftSample& s) {
  json ctx = json::array();
  for (const auto& c : s.context) {
    json item = {{"kind", std::array<const char*, 4>{"system", "user", "observation", "summary"}[static_cast<int>(c.kind)]}};
    if (c.index >= 0) item["index"] = c.index;
    if (!c.text.empty()) item["text"] = c.text;
    ctx.push_back(std::move(item));
  }
  return {{"trajectory", s.trajectory_id},
          {"step", s.step},
          {"row", datacycle::row_pattern(s.context)},
          {"context", ctx},
          {"target",
           {{"thought", s.target.thought},
            {"summary", s.target.summary},
            {"action", s.target.action},
            {"thought_template", s.target.thought_template}}}};
}

json to_json(const parking::ValidationReport& v) {
  return {{"ok", v.ok()},
          {"coverage_ok", v.coverage_ok},
          {"semantics_ok", v.semantics_ok},
          {"structure_ok", v.structure_ok},
          {"required_coverage", v.required_coverage},
          {"optional_coverage", v.optional_coverage},
          {"problems", v.problems}};
}

// Examples name a node by preorder path ("1/2/3") or by a selector that may match several.
std::vector<parking::LabeledExample> read_examples(const json& j, const parking::CleanDoc& clean) {
  const auto doc = clean.doc();
  const parking::Index ix(doc.root);
  std::vector<parking::LabeledExample> out;
  for (const auto& e : j) {
    const auto field = e.at("field").get<std::string>();
    const bool positive = e.value("positive", true);
    if (e.contains("path")) {
      out.push_back({e.at("path").get<std::string>(), field, positive});
      continue;
    }
    const auto sel = parking::parse_selector(e.at("selector").get<std::string>());
    const auto hits = parking::select(ix, sel);
    if (hits.empty()) throw Error("example selector for " + field + " matches nothing");
    for (int n : hits) out.push_back({ix.path(n), field, positive});
  }
  return out;
}

pipeline::StageConfig stage_config(int suite, int threads, int online_rounds) {
  pipeline::StageConfig c;
  c.suite_size = suite;
  c.threads = threads;
  c.online_rounds = online_rounds;
  return c;
}

datacycle::ReviewApi* g_api = nullptr;
void on_signal(int) {
  if (g_api) g_api->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GUI agent toolkit: synthetic worlds, training stages, data cycle, web extraction"};
  app.require_subcommand(1);

  // gen-world
  auto* gen = app.add_subcommand("gen-world", "Generate a synthetic world and print its task as JSON");
  std::uint64_t seed = 1;
  std::string out_path;
  gen->add_option("--seed", seed, "World seed");
  gen->add_option("-o,--out", out_path, "Output file (default stdout)");
  gen->callback([&] {
    auto [state, task] = world::generate_world(seed, world::WorldConfig{});
    write_output(out_path, json(task).dump(2) + "\n");
  });

  // parse
  auto* parse = app.add_subcommand("parse", "Parse an agent utterance and print it as JSON, or the error code");
  std::string in_path = "-";
  bool action_only = false;
  parse->add_option("input", in_path, "Input file, - for stdin");
  parse->add_flag("--action", action_only, "Parse a bare action instead of a full utterance");
  int parse_status = 0;
  parse->callback([&] {
    const auto text = read_file(in_path);
    if (action_only) {
      auto a = dsl::parse_action(trim(text));
      if (!a) {
        std::cout << json{{"error", dsl::to_string(a.error().code)}, {"detail", a.error().detail}}.dump() << "\n";
        parse_status = 1;
        return;
      }
      std::cout << json{{"verb", dsl::verb(a->kind)}, {"canonical", dsl::serialize(*a)}}.dump() << "\n";
      return;
    }
    auto u = dsl::parse_utterance(text);
    if (!u) {
      std::cout << json{{"error", dsl::to_string(u.error().code)}, {"detail", u.error().detail}}.dump() << "\n";
      parse_status = 1;
      return;
    }
    std::cout << json{{"thought", u->thought},
                      {"summary", u->summary},
                      {"verb", dsl::verb(u->action.kind)},
                      {"canonical", dsl::serialize(u->action)}}
                     .dump()
              << "\n";
  });

  // stages
  auto* stages = app.add_subcommand("stages", "Run random, SFT, offline and online stages over several seeds");
  int n_seeds = 5, suite = 50, threads = 1, online_rounds = 20;
  stages->add_option("--seeds", n_seeds, "Number of seeds")->check(CLI::PositiveNumber);
  stages->add_option("--suite", suite, "Evaluation suite size")->check(CLI::PositiveNumber);
  stages->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  stages->add_option("--online-rounds", online_rounds, "Online GRPO rounds");
  std::string ckpt_out;
  stages->add_option("--save", ckpt_out, "Write the first seed's online checkpoint here");
  stages->callback([&] {
    const auto cfg = stage_config(suite, threads, online_rounds);
    json rows = json::array();
    std::vector<double> r, s, f, o;
    for (int i = 0; i < n_seeds; ++i) {
      const auto res = pipeline::run_stages(cfg, static_cast<std::uint64_t>(i + 1));
      rows.push_back({{"seed", i + 1}, {"random", res.random}, {"sft", res.sft}, {"offline", res.offline}, {"online", res.online}});
      r.push_back(res.random), s.push_back(res.sft), f.push_back(res.offline), o.push_back(res.online);
      if (i == 0 && !ckpt_out.empty()) policy::save_checkpoint(res.online_params, ckpt_out);
      std::cerr << rows.back().dump() << "\n";
    }
    std::cout << json{{"runs", rows},
                      {"median",
                       {{"random", pipeline::median(r)},
                        {"sft", pipeline::median(s)},
                        {"offline", pipeline::median(f)},
                        {"online", pipeline::median(o)}}}}
                     .dump(2)
              << "\n";
  });

  // explore
  auto* explore = app.add_subcommand("explore", "Depth-first exploration of a generated world");
  int depth = 10, budget = 10000;
  explore->add_option("--seed", seed, "World seed");
  explore->add_option("--depth", depth, "Maximum depth");
  explore->add_option("--budget", budget, "Node expansion budget");
  double keep = 0.0;
  explore->add_option("--min-quality", keep, "Drop trajectories scoring below this");
  explore->add_option("-o,--out", out_path, "Trajectory JSONL output");
  explore->callback([&] {
    explore::ExploreConfig ec;
    ec.max_depth = depth;
    ec.budget = budget;
    const auto res = explore::dfs_explore([&] { return world::generate_world(seed, world::WorldConfig{}); }, ec);
    int kept = 0;
    std::optional<TrajectoryStore> store;
    if (!out_path.empty()) store.emplace(out_path);
    for (const auto& t : res.trajectories) {
      if (!explore::retain(t, keep)) continue;
      ++kept;
      if (store) store->append(t);
    }
    std::cout << json{{"states", res.nodes.size()},
                      {"expansions", res.expansions},
                      {"budget_exhausted", res.budget_exhausted},
                      {"trajectories", res.trajectories.size()},
                      {"kept", kept}}
                     .dump()
              << "\n";
  });

  // route
  auto* route = app.add_subcommand("route", "Route trajectories into the SFT pool, review queue or negative pool");
  std::vector<std::string> inputs;
  std::string state_dir = "mano-state";
  route->add_option("inputs", inputs, "Trajectory JSONL files")->required();
  route->add_option("--state", state_dir, "Data state directory");
  route->callback([&] {
    auto state = datacycle::DataState::load(state_dir);
    std::map<std::string, int> counts;
    for (const auto& t : read_trajectories(inputs)) ++counts[std::string(datacycle::to_string(state.add(t)))];
    state.save(state_dir);
    std::cout << json(counts).dump() << "\n";
  });

  // build-sft
  auto* sft = app.add_subcommand("build-sft", "Emit SFT samples for trajectories as JSONL");
  sft->add_option("inputs", inputs, "Trajectory JSONL files")->required();
  sft->add_option("-o,--out", out_path, "Output file (default stdout)");
  sft->callback([&] {
    std::string text;
    for (const auto& t : read_trajectories(inputs))
      for (const auto& s : datacycle::build_sft_samples(t)) text += to_json(s).dump() + "\n";
    write_output(out_path, text);
  });

  // cycle
  auto* cycle = app.add_subcommand("cycle", "Run one data cycle on the state directory");
  std::string ckpt_in;
  int offline_tasks = 0, online_tasks = 12;
  cycle->add_option("--state", state_dir, "Data state directory");
  cycle->add_option("inputs", inputs, "New trajectory JSONL files");
  cycle->add_option("--checkpoint", ckpt_in, "Starting policy checkpoint (default: fresh policy)");
  cycle->add_option("--save", ckpt_out, "Where to write the resulting checkpoint");
  cycle->add_option("--suite", suite, "Validation suite size")->check(CLI::PositiveNumber);
  cycle->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  cycle->add_option("--offline-tasks", offline_tasks, "Offline GRPO tasks");
  cycle->add_option("--online-rounds", online_rounds, "Online GRPO rounds");
  cycle->add_option("--online-tasks", online_tasks, "Tasks per online round");
  cycle->callback([&] {
    auto state = datacycle::DataState::load(state_dir);
    datacycle::CycleConfig cc;
    cc.stages = stage_config(suite, threads, online_rounds);
    const auto start = ckpt_in.empty() ? policy::PolicyParams(cc.stages.policy) : policy::load_checkpoint(ckpt_in);
    datacycle::CycleInputs in;
    in.trajectories = read_trajectories(inputs);
    const auto cycle_no = static_cast<std::uint64_t>(state.reports.size() + 1);
    in.offline_tasks = pipeline::make_tasks(cycle_no, pipeline::kOfflineStream, offline_tasks, cc.stages.world);
    if (online_rounds > 0) {
      const auto wc = cc.stages.world;
      const int per_round = online_tasks;
      in.online_tasks = [cycle_no, wc, per_round](int round, int relax) {
        return pipeline::make_tasks(derive_seed(cycle_no, static_cast<std::uint64_t>(round)),
                                    pipeline::kOnlineStream + relax, per_round, pipeline::relaxed(wc, relax));
      };
      in.online_rounds = online_rounds;
    }
    auto res = datacycle::run_cycle(start, cc, state, in, pipeline::suite(cc.stages));
    state.save(state_dir);
    if (!ckpt_out.empty()) policy::save_checkpoint(res.params, ckpt_out);
    std::cout << json(res.report).dump(2) << "\n";
  });

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the review API over the state directory");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--state", state_dir, "Data state directory");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->callback([&] {
    auto state = datacycle::DataState::load(state_dir);
    datacycle::ReviewApi api(state, std::filesystem::path(state_dir));
    if (port == 0) {
      port = api.bind_any(host);
      if (port <= 0) throw Error("cannot bind " + host);
    } else if (!api.bind(host, port)) {
      throw Error("cannot bind " + host + ":" + std::to_string(port));
    }
    g_api = &api;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cerr << "listening on http://" << host << ":" << port << "\n";
    api.listen_after_bind();
    g_api = nullptr;
  });

  // clean
  auto* clean = app.add_subcommand("clean", "Simplify an HTML page; prints the cleaned markup");
  clean->add_option("input", in_path, "HTML file, - for stdin");
  clean->add_option("-o,--out", out_path, "Output file (default stdout)");
  clean->callback([&] {
    const auto c = parking::simplify_html(read_file(in_path));
    write_output(out_path, c.markup + "\n");
    std::cerr << "bytes " << c.original_bytes << " -> " << c.cleaned_bytes << ", reduction " << c.ratio() << "\n";
  });

  // synth
  auto* synth = app.add_subcommand("synth", "Synthesize an extraction program from labeled examples and register it");
  std::string fields_path, examples_path, pattern, registry_path = "registry.json";
  synth->add_option("input", in_path, "Example HTML page")->required();
  synth->add_option("--fields", fields_path, "JSON array of field specs")->required();
  synth->add_option("--examples", examples_path, "JSON array of {field, path|selector, positive}")->required();
  synth->add_option("--pattern", pattern, "URL pattern to register under")->required();
  synth->add_option("--registry", registry_path, "Registry file");
  synth->callback([&] {
    const auto c = parking::simplify_html(read_file(in_path));
    const auto specs = json::parse(read_file(fields_path)).get<std::vector<parking::FieldSpec>>();
    const auto examples = read_examples(json::parse(read_file(examples_path)), c);
    auto prog = parking::synthesize_program(c, specs, examples);
    const auto report = parking::validate(prog, c.doc());
    auto reg = parking::Registry::load(registry_path);
    reg.register_program(pattern, prog);
    reg.save(registry_path);
    std::cout << json{{"program", prog}, {"validation", to_json(report)}}.dump(2) << "\n";
  });

  // extract
  auto* extract = app.add_subcommand("extract", "Run the registered program for a URL");
  std::string root = ".";
  std::vector<std::string> urls;
  extract->add_option("urls", urls, "URLs to extract")->required();
  extract->add_option("--registry", registry_path, "Registry file");
  extract->add_option("--root", root, "Directory serving host/path files");
  extract->callback([&] {
    const auto reg = parking::Registry::load(registry_path);
    const auto fetch = parking::file_fetcher(root);
    for (const auto& url : urls) {
      auto hit = reg.lookup(url);
      if (!hit) throw Error("no program registered for " + url);
      const auto doc = parking::simplify_html(fetch(url)).doc();
      const auto data = parking::run_program(hit->second, doc);
      std::cout << json{{"url", url}, {"pattern", hit->first}, {"fields", data},
                        {"validation", to_json(parking::validate(hit->second, data))}}
                       .dump()
                << "\n";
    }
  });

  // health
  auto* health = app.add_subcommand("health", "Validate the program for each URL against the live page; repair on failure");
  health->add_option("urls", urls, "URLs to check")->required();
  health->add_option("--registry", registry_path, "Registry file");
  health->add_option("--root", root, "Directory serving host/path files");
  int health_status = 0;
  health->callback([&] {
    auto reg = parking::Registry::load(registry_path);
    const auto fetch = parking::file_fetcher(root);
    for (const auto& url : urls) {
      const auto rep = parking::health_check_and_repair(reg, url, fetch(url));
      if (rep.status == parking::Health::unhealthy) health_status = 2;
      std::cout << json{{"url", url},
                        {"status", parking::kHealthNames[static_cast<int>(rep.status)]},
                        {"repaired", rep.repaired},
                        {"version", rep.version},
                        {"validation", to_json(rep.validation)},
                        {"notes", rep.notes}}
                       .dump()
                << "\n";
    }
    reg.save(registry_path);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return parse_status ? parse_status : health_status;
}
