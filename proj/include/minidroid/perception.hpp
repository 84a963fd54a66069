#pragma once

#include <optional>
#include <string>
#include <vector>

#include "minidroid/memory.hpp"
#include "minidroid/world.hpp"

namespace minidroid::perception {

struct Detection {
  std::string class_label;
  std::vector<std::string> properties;
  Vec2 position;
  double radius = 0.0;
  world::FeatureVec feature_vec{};
  Tick observed_tick = 0;
  int track_id = 0;
};

struct PerceptionConfig {
  double dedup_distance = 0.75;    // epsilon
  double dedup_similarity = 0.9;   // tau
  Tick attention_horizon = 300;
  std::string player_name = "human";
};

enum class Verdict { match, new_object };

struct DedupDecision {
  Verdict verdict = Verdict::new_object;
  std::optional<memory::Memid> memid;  // set for match, and for new after merge
  double distance = 0.0;
  double feature_similarity = 0.0;
};

double cosine(const world::FeatureVec& a, const world::FeatureVec& b);

/// Updates the Self node, the Player node and the player's attention point.
void perceive_fast(const world::WorldView& view, memory::MemoryStore& memory, Tick tick,
                   const PerceptionConfig& config = {});

/// Simulated detector: one detection per visible object.
std::vector<Detection> detect(const world::WorldView& view);

/// Match against live ReferenceObjects of the same class within epsilon and
/// with cosine >= tau. Best similarity wins, then nearest, then oldest.
/// Memids in `exclude` are not considered.
DedupDecision deduplicate(const Detection& d, const memory::MemoryStore& memory, const PerceptionConfig& config = {},
                          const std::vector<memory::Memid>& exclude = {});

/// Upserts each detection and writes its tags. A node is matched by at most
/// one detection per batch.
std::vector<DedupDecision> merge_detections(const std::vector<Detection>& detections, memory::MemoryStore& memory,
                                            Tick tick, const PerceptionConfig& config = {});

std::vector<DedupDecision> perceive_slow(const world::WorldView& view, memory::MemoryStore& memory, Tick tick,
                                         const PerceptionConfig& config = {});

/// What the agent loop calls. slow() only produces detections; they are
/// merged into memory in the memory-update phase.
class PerceptionModule {
 public:
  virtual ~PerceptionModule() = default;
  virtual void fast(const world::WorldView& view, memory::MemoryStore& memory, Tick tick) = 0;
  virtual std::vector<Detection> slow(const world::WorldView& view) = 0;
};

class SimulatedPerception : public PerceptionModule {
 public:
  explicit SimulatedPerception(PerceptionConfig config = {}) : config_(std::move(config)) {}
  void fast(const world::WorldView& view, memory::MemoryStore& memory, Tick tick) override {
    perceive_fast(view, memory, tick, config_);
  }
  std::vector<Detection> slow(const world::WorldView& view) override { return detect(view); }

 private:
  PerceptionConfig config_;
};

}  // namespace minidroid::perception
