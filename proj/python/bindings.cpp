#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "minidroid/agent.hpp"
#include "minidroid/dsl.hpp"
#include "minidroid/error.hpp"
#include "minidroid/gateway.hpp"
#include "minidroid/memory.hpp"
#include "minidroid/nlparser.hpp"

namespace py = pybind11;
using namespace minidroid;

namespace {

std::string parse(const std::string& text, const std::optional<std::string>& table) {
  const auto parser = table ? nlp::TemplateParser::from_table(*table) : nlp::TemplateParser::with_default_templates();
  return dsl::to_canonical(parser.parse(text).lf);
}

std::vector<std::string> violations(const std::string& lf_text) {
  std::vector<std::string> out;
  for (const auto& v : dsl::validate(dsl::from_canonical(lf_text))) out.push_back(v.path + ": " + v.rule);
  return out;
}

std::vector<std::string> query(const std::string& dump, const std::string& filters_text) {
  auto store = memory::MemoryStore::load(dump);
  std::vector<std::string> out;
  for (const auto& id : store.query(memory::parse_filters(filters_text), 0)) out.push_back(id.hex());
  return out;
}

std::string roundtrip_message(const std::string& text) { return gateway::encode(gateway::decode(text)); }

class PyAgent {
 public:
  PyAgent(const std::string& scenario, const std::string& config)
      : agent_(world::load_scenario(scenario), core::AgentConfig::parse(config)) {}

  std::string tick() { return core::dump(agent_.tick()); }

  std::string run(int n) {
    py::gil_scoped_release release;
    std::string out;
    for (int i = 0; i < n; ++i) out += core::dump(agent_.tick());
    return out;
  }

  void chat(const std::string& text, const std::string& speaker) { agent_.inject_chat(speaker, text); }

  void teleop(const std::string& command) {
    if (!core::is_teleop_command(command)) throw Error(ErrorCode::validation, "unknown teleop command " + command);
    agent_.inbox().push(core::TeleopMessage{command});
  }

  void tag(const std::string& memid, const std::string& tag) {
    const auto id = memory::Memid::parse(memid);
    if (!id) throw Error(ErrorCode::validation, "bad memid " + memid);
    agent_.inbox().push(core::TagMessage{*id, tag});
  }

  std::string snapshot(bool include_memory) const { return agent_.snapshot(include_memory).doc.dump(); }
  std::string memory_dump() const { return agent_.memory().dump(); }
  Tick current_tick() const { return agent_.world().tick; }
  std::tuple<double, double, double> pose() const {
    const auto& p = agent_.world().agent_pose;
    return {p.x, p.y, p.yaw};
  }

 private:
  core::Agent agent_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Deterministic modular embodied agent";

  // Registered base first: later translators are tried first.
  auto& error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", error.ptr());

  m.def("parse", &parse, py::arg("text"), py::arg("templates") = py::none(),
        "Canonical logical form for an utterance");
  m.def("violations", &violations, py::arg("lf"), "Validation problems of a canonical logical form");
  m.def("canonical", [](const std::string& lf) { return dsl::to_canonical(dsl::from_canonical(lf)); }, py::arg("lf"));
  m.def("query", &query, py::arg("memory_dump"), py::arg("filters"), "Memids matching a filters document");
  m.def("roundtrip_message", &roundtrip_message, py::arg("text"));
  m.def("default_templates", [] { return std::string(nlp::default_template_table()); });

  py::class_<PyAgent>(m, "Agent")
      .def(py::init<const std::string&, const std::string&>(), py::arg("scenario"), py::arg("config") = "")
      .def("tick", &PyAgent::tick, "Runs one tick; returns its trace lines")
      .def("run", &PyAgent::run, py::arg("ticks"))
      .def("chat", &PyAgent::chat, py::arg("text"), py::arg("speaker") = "human")
      .def("teleop", &PyAgent::teleop, py::arg("command"))
      .def("tag", &PyAgent::tag, py::arg("memid"), py::arg("tag"))
      .def("snapshot", &PyAgent::snapshot, py::arg("include_memory") = false)
      .def("memory_dump", &PyAgent::memory_dump)
      .def_property_readonly("current_tick", &PyAgent::current_tick)
      .def_property_readonly("pose", &PyAgent::pose);
}
