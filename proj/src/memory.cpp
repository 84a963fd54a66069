#include "minidroid/memory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "minidroid/error.hpp"
#include "minidroid/json_text.hpp"

namespace minidroid::memory {

using nlohmann::json;

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

json vec_json(Vec2 v) { return json::array({v.x, v.y}); }
json pose_json(const Pose& p) { return json::array({p.x, p.y, p.yaw}); }

Vec2 json_vec(const json& j) {
  if (!j.is_array() || j.size() != 2) throw ParseError("expected [x, y]", 0);
  return {j[0].get<double>(), j[1].get<double>()};
}

Pose json_pose(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ParseError("expected [x, y, yaw]", 0);
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

Memid json_memid(const json& j) {
  auto m = Memid::parse(j.get<std::string>());
  if (!m) throw ParseError("malformed memid '" + j.get<std::string>() + "'", 0);
  return *m;
}

}  // namespace

std::string Memid::hex() const {
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(hi),
                static_cast<unsigned long long>(lo));
  return buf;
}

std::optional<Memid> Memid::parse(std::string_view hex) {
  if (hex.size() != 32) return std::nullopt;
  Memid m;
  for (std::size_t i = 0; i < 32; ++i) {
    const char c = hex[i];
    std::uint64_t d;
    if (c >= '0' && c <= '9') {
      d = static_cast<std::uint64_t>(c - '0');
    } else if (c >= 'a' && c <= 'f') {
      d = static_cast<std::uint64_t>(c - 'a' + 10);
    } else {
      return std::nullopt;
    }
    std::uint64_t& half = i < 16 ? m.hi : m.lo;
    half = (half << 4) | d;
  }
  return m;
}

std::string TriplePayload::object_text() const {
  if (const auto* m = std::get_if<Memid>(&object)) return m->hex();
  return std::get<std::string>(object);
}

std::optional<Vec2> MemoryNode::position() const {
  if (const auto* r = std::get_if<ReferenceObjectPayload>(&payload)) return r->position;
  if (const auto* s = std::get_if<SelfPayload>(&payload)) return s->pose.position();
  if (const auto* p = std::get_if<PlayerPayload>(&payload)) return p->pose.position();
  return std::nullopt;
}

json payload_to_json(const Payload& payload) {
  return std::visit(
      [](const auto& p) -> json {
        using T = std::decay_t<decltype(p)>;
        json j = json::object();
        if constexpr (std::is_same_v<T, ReferenceObjectPayload>) {
          j["position"] = vec_json(p.position);
          j["radius"] = p.radius;
          j["class_label"] = p.class_label;
          j["feature_vec"] = p.feature_vec;
          j["last_seen_tick"] = p.last_seen_tick;
          if (p.track_id) j["track_id"] = *p.track_id;
        } else if constexpr (std::is_same_v<T, SelfPayload>) {
          j["pose"] = pose_json(p.pose);
          if (p.held_track_id) j["held_track_id"] = *p.held_track_id;
        } else if constexpr (std::is_same_v<T, PlayerPayload>) {
          j["name"] = p.name;
          j["pose"] = pose_json(p.pose);
          j["last_seen_tick"] = p.last_seen_tick;
          if (p.attention) j["attention"] = vec_json(*p.attention);
          j["attention_tick"] = p.attention_tick;
        } else if constexpr (std::is_same_v<T, TriplePayload>) {
          j["subject"] = p.subject.hex();
          j["predicate"] = p.predicate;
          if (const auto* m = std::get_if<Memid>(&p.object)) {
            j["object"] = {{"memid", m->hex()}};
          } else {
            j["object"] = {{"literal", std::get<std::string>(p.object)}};
          }
          j["confidence"] = p.confidence;
        } else if constexpr (std::is_same_v<T, ChatPayload>) {
          j["speaker"] = p.speaker;
          j["text"] = p.text;
        } else if constexpr (std::is_same_v<T, TaskPayload>) {
          j["task_id"] = p.task_id;
          j["kind"] = p.kind;
          j["status"] = p.status;
          j["priority"] = p.priority;
          j["description"] = p.description;
          j["children"] = json::array();
          for (const auto& c : p.children) j["children"].push_back({{"kind", c.kind}, {"status", c.status}});
        } else if constexpr (std::is_same_v<T, ProgramPayload>) {
          j["lf_text"] = p.lf_text;
          j["outcome"] = p.outcome;
        } else if constexpr (std::is_same_v<T, SetPayload>) {
          j["name"] = p.name;
          j["members"] = json::array();
          for (const auto& m : p.members) j["members"].push_back(m.hex());
        } else {
          j["source_memid"] = p.source_memid.hex();
          j["source_type"] = std::string(to_string(p.source_type));
          j["snapshot"] = p.snapshot;
          j["archived_at_tick"] = p.archived_at_tick;
        }
        return j;
      },
      payload);
}

Payload payload_from_json(NodeType type, const json& j) {
  try {
    switch (type) {
      case NodeType::ReferenceObject: {
        ReferenceObjectPayload p;
        p.position = json_vec(j.at("position"));
        p.radius = j.at("radius").get<double>();
        p.class_label = j.at("class_label").get<std::string>();
        p.feature_vec = j.at("feature_vec").get<world::FeatureVec>();
        p.last_seen_tick = j.at("last_seen_tick").get<Tick>();
        if (j.contains("track_id")) p.track_id = j["track_id"].get<int>();
        return p;
      }
      case NodeType::Self: {
        SelfPayload p;
        p.pose = json_pose(j.at("pose"));
        if (j.contains("held_track_id")) p.held_track_id = j["held_track_id"].get<int>();
        return p;
      }
      case NodeType::Player: {
        PlayerPayload p;
        p.name = j.at("name").get<std::string>();
        p.pose = json_pose(j.at("pose"));
        p.last_seen_tick = j.at("last_seen_tick").get<Tick>();
        if (j.contains("attention")) p.attention = json_vec(j["attention"]);
        p.attention_tick = j.at("attention_tick").get<Tick>();
        return p;
      }
      case NodeType::Triple: {
        TriplePayload p;
        p.subject = json_memid(j.at("subject"));
        p.predicate = j.at("predicate").get<std::string>();
        const auto& o = j.at("object");
        if (o.contains("memid")) {
          p.object = json_memid(o["memid"]);
        } else {
          p.object = o.at("literal").get<std::string>();
        }
        p.confidence = j.at("confidence").get<double>();
        return p;
      }
      case NodeType::Chat:
        return ChatPayload{j.at("speaker").get<std::string>(), j.at("text").get<std::string>()};
      case NodeType::Task: {
        TaskPayload p;
        p.task_id = j.at("task_id").get<int>();
        p.kind = j.at("kind").get<std::string>();
        p.status = j.at("status").get<std::string>();
        p.priority = j.at("priority").get<int>();
        p.description = j.at("description").get<std::string>();
        for (const auto& c : j.at("children")) {
          p.children.push_back({c.at("kind").get<std::string>(), c.at("status").get<std::string>()});
        }
        return p;
      }
      case NodeType::Program:
        return ProgramPayload{j.at("lf_text").get<std::string>(), j.at("outcome").get<std::string>()};
      case NodeType::Set: {
        SetPayload p;
        p.name = j.at("name").get<std::string>();
        for (const auto& m : j.at("members")) p.members.push_back(json_memid(m));
        return p;
      }
      case NodeType::Archive: {
        ArchivePayload p;
        p.source_memid = json_memid(j.at("source_memid"));
        auto t = node_type_from_string(j.at("source_type").get<std::string>());
        if (!t) throw ParseError("unknown source_type", 0);
        p.source_type = *t;
        p.snapshot = j.at("snapshot").get<std::string>();
        p.archived_at_tick = j.at("archived_at_tick").get<Tick>();
        return p;
      }
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("payload: ") + e.what(), 0);
  }
  throw ParseError("payload: unknown node type", 0);
}

Payload archived_payload(const ArchivePayload& a) {
  return payload_from_json(a.source_type, json::parse(a.snapshot));
}

MemoryStore::MemoryStore(std::uint64_t seed) : seed_(seed) {}

Memid MemoryStore::next_memid() {
  // The low word is a bijection of the counter, so ids never repeat.
  ++counter_;
  return Memid{mix64(seed_ + 0x9e3779b97f4a7c15ULL) | 1ULL, mix64(counter_)};
}

void MemoryStore::validate_payload(NodeType type, const Payload& payload) const {
  if (node_type_of(payload) != type) {
    throw Error(ErrorCode::validation, "payload does not match node type " + std::string(to_string(type)));
  }
  if (const auto* r = std::get_if<ReferenceObjectPayload>(&payload)) {
    double n2 = 0.0;
    for (double c : r->feature_vec) n2 += c * c;
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-6) throw Error(ErrorCode::validation, "feature_vec is not unit-norm");
    if (!(r->radius > 0.0)) throw Error(ErrorCode::validation, "reference object radius must be positive");
    if (r->class_label.empty()) throw Error(ErrorCode::validation, "reference object needs a class label");
  } else if (const auto* t = std::get_if<TriplePayload>(&payload)) {
    if (!contains(t->subject)) throw Error(ErrorCode::not_found, "triple subject " + t->subject.hex() + " not found");
    if (t->predicate.empty()) throw Error(ErrorCode::validation, "triple predicate is empty");
    if (!(t->confidence >= 0.0 && t->confidence <= 1.0)) {
      throw Error(ErrorCode::validation, "triple confidence outside [0, 1]");
    }
  }
}

MemoryStore::Seq MemoryStore::insert(MemoryNode node) {
  const Seq seq = next_seq_++;
  by_memid_.emplace(node.memid, seq);
  by_type_[static_cast<std::size_t>(node.node_type)].insert(seq);
  auto [it, _] = rows_.emplace(seq, std::move(node));
  if (it->second.node_type == NodeType::Triple) index_triple(it->second, seq);
  return seq;
}

void MemoryStore::index_triple(const MemoryNode& node, Seq seq) {
  const auto& t = std::get<TriplePayload>(node.payload);
  by_pred_value_[{t.predicate, t.object_text()}][t.subject].insert(seq);
  triples_by_subject_[t.subject].insert(seq);
  if (const auto* m = std::get_if<Memid>(&t.object)) triples_by_object_[*m].insert(seq);
}

void MemoryStore::unindex_triple(const MemoryNode& node, Seq seq) {
  const auto& t = std::get<TriplePayload>(node.payload);
  auto pv = by_pred_value_.find({t.predicate, t.object_text()});
  if (pv != by_pred_value_.end()) {
    auto subj = pv->second.find(t.subject);
    if (subj != pv->second.end()) {
      subj->second.erase(seq);
      if (subj->second.empty()) pv->second.erase(subj);
    }
    if (pv->second.empty()) by_pred_value_.erase(pv);
  }
  if (auto it = triples_by_subject_.find(t.subject); it != triples_by_subject_.end()) {
    it->second.erase(seq);
    if (it->second.empty()) triples_by_subject_.erase(it);
  }
  if (const auto* m = std::get_if<Memid>(&t.object)) {
    if (auto it = triples_by_object_.find(*m); it != triples_by_object_.end()) {
      it->second.erase(seq);
      if (it->second.empty()) triples_by_object_.erase(it);
    }
  }
}

void MemoryStore::touch(MemoryNode& node, Tick tick) {
  node.last_accessed_tick = std::max(node.last_accessed_tick, tick);
}

Memid MemoryStore::create_node(NodeType type, Payload payload, Tick tick) {
  if (type == NodeType::Archive) {
    throw Error(ErrorCode::validation, "archive nodes are created through archive()");
  }
  validate_payload(type, payload);
  MemoryNode node{next_memid(), type, tick, tick, std::move(payload)};
  const Memid id = node.memid;
  insert(std::move(node));
  return id;
}

const MemoryNode* MemoryStore::peek(const Memid& id) const {
  auto it = by_memid_.find(id);
  return it == by_memid_.end() ? nullptr : &rows_.at(it->second);
}

MemoryNode MemoryStore::get_node(const Memid& id, Tick tick) {
  auto it = by_memid_.find(id);
  if (it == by_memid_.end()) throw Error(ErrorCode::not_found, "memid " + id.hex() + " not found");
  MemoryNode& node = rows_.at(it->second);
  touch(node, tick);
  return node;
}

Memid MemoryStore::add_triple(const Memid& subject, const std::string& predicate,
                              std::variant<Memid, std::string> object, Tick tick, double confidence) {
  return create_node(NodeType::Triple, TriplePayload{subject, predicate, std::move(object), confidence}, tick);
}

bool MemoryStore::has_triple(const Memid& subject, std::string_view predicate, std::string_view object_text) const {
  auto pv = by_pred_value_.find({std::string(predicate), std::string(object_text)});
  return pv != by_pred_value_.end() && pv->second.count(subject) > 0;
}

std::vector<std::pair<std::string, std::string>> MemoryStore::triples_about(const Memid& subject) const {
  std::vector<std::pair<std::string, std::string>> out;
  auto it = triples_by_subject_.find(subject);
  if (it == triples_by_subject_.end()) return out;
  for (Seq seq : it->second) {
    const auto& t = std::get<TriplePayload>(rows_.at(seq).payload);
    out.emplace_back(t.predicate, t.object_text());
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

Memid MemoryStore::archive(const Memid& id, Tick tick) {
  auto it = by_memid_.find(id);
  if (it == by_memid_.end()) throw Error(ErrorCode::not_found, "memid " + id.hex() + " not found");
  const MemoryNode& src = rows_.at(it->second);
  if (src.node_type == NodeType::Archive) throw Error(ErrorCode::invalid_target, "cannot archive an archive");
  ArchivePayload a{src.memid, src.node_type, json_text(payload_to_json(src.payload)), tick};
  MemoryNode node{next_memid(), NodeType::Archive, tick, tick, std::move(a)};
  const Memid out = node.memid;
  insert(std::move(node));
  return out;
}

std::vector<Memid> MemoryStore::query(const FiltersClause& filters, Tick tick) {
  // Candidate rows: intersect tag postings when present, else the type
  // index, else everything.
  std::vector<Seq> candidates;
  if (!filters.tags.empty()) {
    std::optional<std::set<Memid>> subjects;
    for (const auto& tag : filters.tags) {
      std::set<Memid> hits;
      if (auto pv = by_pred_value_.find(tag); pv != by_pred_value_.end()) {
        for (const auto& [subject, _] : pv->second) {
          if (!subjects || subjects->count(subject)) hits.insert(subject);
        }
      }
      subjects = std::move(hits);
      if (subjects->empty()) break;
    }
    for (const auto& m : *subjects) {
      if (auto it = by_memid_.find(m); it != by_memid_.end()) candidates.push_back(it->second);
    }
  } else if (filters.node_type) {
    const auto& s = by_type_[static_cast<std::size_t>(*filters.node_type)];
    candidates.assign(s.begin(), s.end());
  } else {
    candidates.reserve(rows_.size());
    for (const auto& [seq, _] : rows_) candidates.push_back(seq);
  }

  struct Hit {
    Seq seq;
    double dist;
  };
  std::vector<Hit> hits;
  for (Seq seq : candidates) {
    const MemoryNode& node = rows_.at(seq);
    if (filters.node_type && node.node_type != *filters.node_type) continue;
    double dist = 0.0;
    if (filters.within || filters.selector) {
      const auto pos = node.position();
      if (!pos) continue;
      if (filters.within && !(distance(*pos, filters.within->center) <= filters.within->distance)) continue;
      if (filters.selector) dist = distance(*pos, filters.selector->point);
    }
    hits.push_back({seq, dist});
  }

  auto by_age = [&](const Hit& a, const Hit& b) {
    const Tick ta = rows_.at(a.seq).created_tick;
    const Tick tb = rows_.at(b.seq).created_tick;
    return ta != tb ? ta < tb : a.seq < b.seq;
  };
  if (filters.selector) {
    const bool asc = filters.selector->kind == SelectorKind::argmin;
    std::sort(hits.begin(), hits.end(), [&](const Hit& a, const Hit& b) {
      if (a.dist != b.dist) return asc ? a.dist < b.dist : a.dist > b.dist;
      return by_age(a, b);
    });
  } else {
    std::sort(hits.begin(), hits.end(), by_age);
  }
  if (filters.limit && static_cast<std::int64_t>(hits.size()) > *filters.limit) {
    hits.resize(static_cast<std::size_t>(*filters.limit));
  }

  std::vector<Memid> out;
  out.reserve(hits.size());
  for (const auto& h : hits) {
    MemoryNode& node = rows_.at(h.seq);
    touch(node, tick);
    out.push_back(node.memid);
  }
  return out;
}

Memid MemoryStore::upsert_reference_object(const std::optional<Memid>& id, const ReferenceObjectPayload& payload,
                                           Tick tick) {
  if (!id) return create_node(NodeType::ReferenceObject, payload, tick);
  auto it = by_memid_.find(*id);
  if (it == by_memid_.end()) throw Error(ErrorCode::not_found, "memid " + id->hex() + " not found");
  MemoryNode& node = rows_.at(it->second);
  if (node.node_type != NodeType::ReferenceObject) {
    throw Error(ErrorCode::invalid_target, "memid " + id->hex() + " is not a reference object");
  }
  validate_payload(NodeType::ReferenceObject, payload);
  auto& ro = std::get<ReferenceObjectPayload>(node.payload);
  ro.position = payload.position;
  ro.radius = payload.radius;
  ro.feature_vec = payload.feature_vec;
  ro.last_seen_tick = payload.last_seen_tick;
  if (payload.track_id) ro.track_id = payload.track_id;
  touch(node, tick);
  return *id;
}

void MemoryStore::replace_payload(const Memid& id, Payload payload, Tick tick) {
  auto it = by_memid_.find(id);
  if (it == by_memid_.end()) throw Error(ErrorCode::not_found, "memid " + id.hex() + " not found");
  MemoryNode& node = rows_.at(it->second);
  if (node.node_type == NodeType::Archive) throw Error(ErrorCode::invalid_target, "archives are immutable");
  validate_payload(node.node_type, payload);
  if (node.node_type == NodeType::Triple) unindex_triple(node, it->second);
  node.payload = std::move(payload);
  if (node.node_type == NodeType::Triple) index_triple(node, it->second);
  touch(node, tick);
}

void MemoryStore::delete_node(const Memid& id) {
  auto it = by_memid_.find(id);
  if (it == by_memid_.end()) throw Error(ErrorCode::not_found, "memid " + id.hex() + " not found");
  std::set<Seq> doomed{it->second};
  if (auto s = triples_by_subject_.find(id); s != triples_by_subject_.end()) doomed.insert(s->second.begin(), s->second.end());
  if (auto o = triples_by_object_.find(id); o != triples_by_object_.end()) doomed.insert(o->second.begin(), o->second.end());
  for (Seq seq : doomed) {
    auto row = rows_.find(seq);
    if (row == rows_.end()) continue;
    if (row->second.node_type == NodeType::Triple) unindex_triple(row->second, seq);
    by_type_[static_cast<std::size_t>(row->second.node_type)].erase(seq);
    by_memid_.erase(row->second.memid);
    rows_.erase(row);
  }
}

std::vector<Memid> MemoryStore::of_type(NodeType type) const {
  std::vector<Memid> out;
  for (Seq seq : by_type_[static_cast<std::size_t>(type)]) out.push_back(rows_.at(seq).memid);
  return out;
}

std::vector<const MemoryNode*> MemoryStore::nodes() const {
  std::vector<const MemoryNode*> out;
  out.reserve(rows_.size());
  for (const auto& [_, node] : rows_) out.push_back(&node);
  return out;
}

std::string MemoryStore::dump() const {
  json doc;
  doc["format"] = "minidroid-memory/1";
  doc["seed"] = seed_;
  doc["counter"] = counter_;
  doc["nodes"] = json::array();
  for (const auto& [_, node] : rows_) {
    doc["nodes"].push_back({{"memid", node.memid.hex()},
                            {"node_type", std::string(to_string(node.node_type))},
                            {"created_tick", node.created_tick},
                            {"last_accessed_tick", node.last_accessed_tick},
                            {"payload", payload_to_json(node.payload)}});
  }
  return json_text(doc) + "\n";
}

MemoryStore MemoryStore::load(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("memory snapshot: ") + e.what(), e.byte);
  }
  try {
    if (doc.at("format") != "minidroid-memory/1") throw ParseError("memory snapshot: unsupported format", 0);
    MemoryStore store(doc.at("seed").get<std::uint64_t>());
    store.counter_ = doc.at("counter").get<std::uint64_t>();
    for (const auto& n : doc.at("nodes")) {
      auto type = node_type_from_string(n.at("node_type").get<std::string>());
      if (!type) throw ParseError("memory snapshot: unknown node_type", 0);
      MemoryNode node{json_memid(n.at("memid")), *type, n.at("created_tick").get<Tick>(),
                      n.at("last_accessed_tick").get<Tick>(), payload_from_json(*type, n.at("payload"))};
      if (store.contains(node.memid)) throw ParseError("memory snapshot: duplicate memid " + node.memid.hex(), 0);
      if (const auto* t = std::get_if<TriplePayload>(&node.payload); t && !store.contains(t->subject)) {
        throw ParseError("memory snapshot: dangling triple subject " + t->subject.hex(), 0);
      }
      store.insert(std::move(node));
    }
    return store;
  } catch (const json::exception& e) {
    throw ParseError(std::string("memory snapshot: ") + e.what(), 0);
  }
}

}  // namespace minidroid::memory
