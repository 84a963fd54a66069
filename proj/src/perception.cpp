#include "minidroid/perception.hpp"

#include <algorithm>
#include <cmath>

#include "minidroid/nlparser.hpp"

namespace minidroid::perception {

using memory::MemoryStore;
using memory::Memid;
using memory::NodeType;

double cosine(const world::FeatureVec& a, const world::FeatureVec& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

void perceive_fast(const world::WorldView& view, MemoryStore& memory, Tick tick, const PerceptionConfig& config) {
  const auto selves = memory.of_type(NodeType::Self);
  memory::SelfPayload self{view.agent_pose, std::nullopt};
  if (view.held) self.held_track_id = view.held->oid;
  if (selves.empty()) {
    memory.create_node(self, tick);
  } else if (std::get<memory::SelfPayload>(memory.peek(selves.front())->payload) != self) {
    memory.replace_payload(selves.front(), self, tick);
  }

  const auto players = memory.of_type(NodeType::Player);
  std::optional<memory::PlayerPayload> player;
  if (!players.empty()) player = std::get<memory::PlayerPayload>(memory.peek(players.front())->payload);
  const auto before = player;

  if (view.human) {
    if (!player) player = memory::PlayerPayload{config.player_name, {}, 0, std::nullopt, 0};
    player->pose = view.human->pose;
    player->last_seen_tick = tick;
    if (view.human->pointing_target) {
      player->attention = view.human->pointing_target;
      player->attention_tick = tick;
    }
  }
  if (player && player->attention && tick - player->attention_tick > config.attention_horizon) {
    player->attention.reset();
  }
  if (!player || player == before) return;
  if (players.empty()) {
    memory.create_node(*player, tick);
  } else {
    memory.replace_payload(players.front(), *player, tick);
  }
}

std::vector<Detection> detect(const world::WorldView& view) {
  std::vector<Detection> out;
  out.reserve(view.objects.size());
  for (const auto& obj : view.objects) {
    out.push_back({obj.class_label, obj.properties, obj.position, obj.radius, obj.features(), view.tick, obj.oid});
  }
  return out;
}

DedupDecision deduplicate(const Detection& d, const MemoryStore& memory, const PerceptionConfig& config,
                          const std::vector<Memid>& exclude) {
  DedupDecision best;
  bool found = false;
  for (const auto& id : memory.of_type(NodeType::ReferenceObject)) {
    if (std::find(exclude.begin(), exclude.end(), id) != exclude.end()) continue;
    const auto& ro = std::get<memory::ReferenceObjectPayload>(memory.peek(id)->payload);
    if (ro.class_label != d.class_label) continue;
    const double dist = distance(ro.position, d.position);
    const double sim = cosine(ro.feature_vec, d.feature_vec);
    if (!(dist < config.dedup_distance) || !(sim >= config.dedup_similarity)) continue;
    if (!found || sim > best.feature_similarity || (sim == best.feature_similarity && dist < best.distance)) {
      best = {Verdict::match, id, dist, sim};
      found = true;
    }
  }
  return best;
}

namespace {

void tag(MemoryStore& memory, const Memid& id, const std::string& predicate, const std::string& value, Tick tick) {
  if (!memory.has_triple(id, predicate, value)) memory.add_triple(id, predicate, value, tick);
}

}  // namespace

std::vector<DedupDecision> merge_detections(const std::vector<Detection>& detections, MemoryStore& memory, Tick tick,
                                            const PerceptionConfig& config) {
  std::vector<DedupDecision> decisions;
  std::vector<Memid> claimed;
  for (const auto& d : detections) {
    auto decision = deduplicate(d, memory, config, claimed);
    memory::ReferenceObjectPayload payload{d.position, d.radius, d.class_label, d.feature_vec, d.observed_tick,
                                           d.track_id};
    const Memid id = memory.upsert_reference_object(decision.memid, payload, tick);
    decision.memid = id;
    claimed.push_back(id);
    tag(memory, id, "has_tag", d.class_label, tick);
    for (const auto& p : d.properties) {
      tag(memory, id, "has_tag", p, tick);
      if (nlp::is_colour(p)) tag(memory, id, "has_colour", p, tick);
    }
    decisions.push_back(decision);
  }
  return decisions;
}

std::vector<DedupDecision> perceive_slow(const world::WorldView& view, MemoryStore& memory, Tick tick,
                                         const PerceptionConfig& config) {
  return merge_detections(detect(view), memory, tick, config);
}

}  // namespace minidroid::perception
