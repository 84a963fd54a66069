#include <chrono>
#include <cmath>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "minidroid/agent.hpp"
#include "minidroid/error.hpp"
#include "minidroid/gateway.hpp"
#include "minidroid/json_text.hpp"

using namespace minidroid;

namespace {

volatile std::sig_atomic_t g_stop = 0;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RunOptions {
  std::string scenario;
  std::optional<long long> ticks;
  std::string chat_script;
  std::string trace_out;
  std::optional<int> serve;
  std::string config;
  std::optional<double> realtime;
  std::string snapshot_out;
};

int run(const RunOptions& o) {
  core::AgentConfig config = o.config.empty() ? core::AgentConfig{} : core::AgentConfig::load(o.config);
  const std::string scenario = o.scenario.empty() ? config.scenario : o.scenario;
  if (scenario.empty()) throw Error(ErrorCode::validation, "no scenario given (--scenario or scenario= in config)");
  core::Agent agent(world::load_scenario_file(scenario), config);

  std::vector<core::ChatScriptLine> script;
  if (!o.chat_script.empty()) script = core::parse_chat_script(read_file(o.chat_script));
  std::size_t next_line = 0;

  std::ofstream trace;
  if (!o.trace_out.empty()) {
    trace.open(o.trace_out, std::ios::binary);
    if (!trace) throw Error(ErrorCode::io, "cannot write " + o.trace_out);
  }

  const std::optional<int> port = o.serve ? o.serve : (config.gateway_port ? std::optional<int>(config.gateway_port)
                                                                            : std::nullopt);
  std::unique_ptr<gateway::Server> server;
  if (port) {
    server = std::make_unique<gateway::Server>(agent.inbox(), gateway::ServerOptions{"127.0.0.1", *port});
    server->start();
    std::cerr << "gateway listening on 127.0.0.1:" << server->port() << "\n";
    std::signal(SIGINT, [](int) { g_stop = 1; });
    std::signal(SIGTERM, [](int) { g_stop = 1; });
  }
  // Serving without a tick budget runs until interrupted, paced for viewers.
  const long long ticks = o.ticks.value_or(server ? -1 : 1000);
  const double hz = o.realtime.value_or(server ? 10.0 : 0.0);
  // State frames are capped at 20 per second in realtime mode.
  int publish_every = config.state_every;
  if (hz > 20.0) publish_every = std::max(publish_every, static_cast<int>(std::ceil(hz / 20.0)));
  if (server) server->publish(agent.snapshot());

  auto next_deadline = std::chrono::steady_clock::now();
  for (long long i = 0; (ticks < 0 || i < ticks) && !g_stop; ++i) {
    while (next_line < script.size() && script[next_line].tick <= agent.world().tick) {
      agent.inject_chat("human", script[next_line++].text);
    }
    const auto t = agent.tick();
    if (trace) trace << core::dump(t);
    if (server && agent.world().tick % publish_every == 0) server->publish(agent.snapshot());
    if (hz > 0.0) {
      next_deadline += std::chrono::microseconds(static_cast<long long>(1e6 / hz));
      std::this_thread::sleep_until(next_deadline);
    }
  }
  if (server) server->stop();

  const auto snap = agent.snapshot(!o.snapshot_out.empty());
  if (!o.snapshot_out.empty()) {
    std::ofstream out(o.snapshot_out, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + o.snapshot_out);
    out << json_text(snap.doc) << "\n";
  }
  const auto& pose = agent.world().agent_pose;
  std::cout << "tick " << agent.world().tick << " pose " << pose.x << " " << pose.y << " " << pose.yaw << "\n";
  for (const auto& c : snap.doc["chats"]) {
    std::cout << "[" << c["tick"].get<long long>() << "] " << c["speaker"].get<std::string>() << ": "
              << c["text"].get<std::string>() << "\n";
  }
  return 0;
}

int parse(const std::string& utterance, const std::string& templates, bool verbose) {
  const auto parser = templates.empty() ? nlp::TemplateParser::with_default_templates()
                                        : nlp::TemplateParser::from_table(read_file(templates));
  const auto r = parser.parse(utterance);
  std::cout << dsl::to_canonical(r.lf) << "\n";
  if (verbose) {
    if (r.matched_template) {
      std::cerr << "template " << *r.matched_template << ": "
                << parser.templates()[static_cast<std::size_t>(*r.matched_template)].pattern_text() << "\n";
    } else {
      std::cerr << "no template matched\n";
    }
    for (const auto& [name, span] : r.bindings) std::cerr << "  " << name << " = [" << span.start << ", " << span.end << ")\n";
  }
  return 0;
}

int query(const std::string& filters_text, const std::string& snapshot_path) {
  const auto filters = memory::parse_filters(filters_text);
  const auto problems = memory::check(filters);
  if (!problems.empty()) throw Error(ErrorCode::validation, problems.front());
  const auto doc = nlohmann::json::parse(read_file(snapshot_path));
  const std::string memory_text = doc.contains("memory") ? json_text(doc["memory"]) : json_text(doc);
  auto store = memory::MemoryStore::load(memory_text);
  for (const auto& id : store.query(filters, 0)) {
    const auto* node = store.peek(id);
    std::cout << id.hex() << " " << memory::to_string(node->node_type) << " "
              << json_text(memory::payload_to_json(node->payload)) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"minidroid agent"};
  app.require_subcommand(1);

  RunOptions ro;
  auto* run_cmd = app.add_subcommand("run", "Run the agent loop on a scenario");
  run_cmd->add_option("--scenario", ro.scenario, "Scenario file");
  run_cmd->add_option("--ticks", ro.ticks, "Number of ticks (default 1000; unbounded when serving)");
  run_cmd->add_option("--chat-script", ro.chat_script, "Lines of '<tick> <utterance>'");
  run_cmd->add_option("--trace", ro.trace_out, "Write the tick trace here");
  run_cmd->add_option("--serve", ro.serve, "Serve the gateway protocol on this port");
  run_cmd->add_option("--config", ro.config, "key=value config file");
  run_cmd->add_option("--realtime", ro.realtime, "Pace the loop at this many ticks per second");
  run_cmd->add_option("--snapshot", ro.snapshot_out, "Write the final snapshot, memory included");

  std::string utterance, templates;
  bool verbose = false;
  auto* parse_cmd = app.add_subcommand("parse", "Print the canonical logical form of an utterance");
  parse_cmd->add_option("utterance", utterance)->required();
  parse_cmd->add_option("--templates", templates, "Template table to use instead of the shipped one");
  parse_cmd->add_flag("-v,--verbose", verbose, "Report the matched template and slot spans");

  std::string filters_text, snapshot_path;
  auto* query_cmd = app.add_subcommand("query", "Run a filters query against a snapshot file");
  query_cmd->add_option("filters", filters_text, "Filters document")->required();
  query_cmd->add_option("--snapshot", snapshot_path, "Snapshot or memory dump file")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return run(ro);
    if (*parse_cmd) return parse(utterance, templates, verbose);
    if (*query_cmd) return query(filters_text, snapshot_path);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what();
    if (e.location()) std::cerr << " (at " << e.location() << ")";
    std::cerr << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
