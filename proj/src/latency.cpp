#include <algorithm>
#include <cmath>

#include "canao/error.hpp"
#include "canao/perf_model.hpp"

namespace canao {

namespace {

void require_positive(double v, const char* field) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ConfigError(std::string("device profile: ") + field + " must be positive");
  }
}

void require_non_negative(double v, const char* field) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw ConfigError(std::string("device profile: ") + field + " must be non-negative");
  }
}

bool valid_tile(std::int64_t tile, std::int64_t extent) {
  if (tile == extent) return true;
  return tile >= 1 && tile < extent && (tile & (tile - 1)) == 0;
}

// Elements of one tensor touched by a single tile of the nest.
double tile_footprint(const Access& a, const std::vector<std::int64_t>& tiles,
                      const std::vector<std::int64_t>& extents) {
  if (a.opaque) {
    double fraction = 1.0;
    for (std::size_t l = 0; l < tiles.size(); ++l) {
      fraction *= static_cast<double>(tiles[l]) / static_cast<double>(extents[l]);
    }
    return static_cast<double>(numel(a.shape)) * fraction;
  }
  double n = 1.0;
  for (std::size_t d = 0; d < a.shape.size(); ++d) {
    const int loop = a.dim_loops[d];
    n *= loop < 0 ? 1.0 : static_cast<double>(tiles[static_cast<std::size_t>(loop)]);
  }
  return n;
}

}  // namespace

void check_profile(const DeviceProfile& p) {
  require_positive(p.peak_flops_per_s, "peak_flops_per_s");
  require_positive(p.mem_bandwidth_bytes_per_s, "mem_bandwidth_bytes_per_s");
  require_positive(p.noncontiguous_penalty, "noncontiguous_penalty");
  require_positive(p.intermediate_penalty, "intermediate_penalty");
  require_non_negative(p.per_block_overhead_s, "per_block_overhead_s");
  require_non_negative(static_cast<double>(p.cache_bytes), "cache_bytes");
  require_non_negative(p.cache_discount, "cache_discount");
  if (p.cache_discount >= 1.0) throw ConfigError("device profile: cache_discount must be below 1");
}

Json profile_to_json(const DeviceProfile& p) {
  Json doc = make_document("device_profile");
  doc["name"] = p.name;
  doc["peak_flops_per_s"] = p.peak_flops_per_s;
  doc["mem_bandwidth_bytes_per_s"] = p.mem_bandwidth_bytes_per_s;
  doc["noncontiguous_penalty"] = p.noncontiguous_penalty;
  doc["intermediate_penalty"] = p.intermediate_penalty;
  doc["per_block_overhead_s"] = p.per_block_overhead_s;
  doc["cache_bytes"] = p.cache_bytes;
  doc["cache_discount"] = p.cache_discount;
  return doc;
}

DeviceProfile profile_from_json(const Json& doc) {
  check_document(doc, "device_profile");
  auto num = [&](const char* key) {
    return get_as<double>(require(doc, key, ""), child_path("", key));
  };
  DeviceProfile p;
  p.name = get_as<std::string>(require(doc, "name", ""), "/name");
  p.peak_flops_per_s = num("peak_flops_per_s");
  p.mem_bandwidth_bytes_per_s = num("mem_bandwidth_bytes_per_s");
  p.noncontiguous_penalty = num("noncontiguous_penalty");
  p.intermediate_penalty = num("intermediate_penalty");
  p.per_block_overhead_s = num("per_block_overhead_s");
  if (doc.contains("cache_bytes")) {
    p.cache_bytes = get_as<std::int64_t>(doc["cache_bytes"], "/cache_bytes");
  }
  if (doc.contains("cache_discount")) p.cache_discount = num("cache_discount");
  check_profile(p);
  return p;
}

DeviceProfile load_profile(const std::string& path) {
  return profile_from_json(parse_json(read_text_file(path)));
}

Json tuning_to_json(const TuningConfig& tuning) {
  Json doc = make_document("tuning_config");
  Json blocks = Json::array();
  for (const auto& [id, t] : tuning.blocks) {
    blocks.push_back({{"block", id}, {"version", t.version}, {"tiles", t.tiles}, {"unroll", t.unroll}});
  }
  doc["blocks"] = std::move(blocks);
  return doc;
}

TuningConfig tuning_from_json(const Json& doc) {
  check_document(doc, "tuning_config");
  const Json& blocks = require(doc, "blocks", "");
  if (!blocks.is_array()) throw ParseError("/blocks", "expected an array");
  TuningConfig out;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = child_path("/blocks", i);
    const Json& j = blocks[i];
    const int id = get_as<int>(require(j, "block", p), child_path(p, "block"));
    BlockTuning t;
    t.version = get_as<int>(require(j, "version", p), child_path(p, "version"));
    t.tiles = get_as<std::vector<std::int64_t>>(require(j, "tiles", p), child_path(p, "tiles"));
    t.unroll = get_as<int>(require(j, "unroll", p), child_path(p, "unroll"));
    if (!out.blocks.emplace(id, std::move(t)).second) {
      throw ParseError(child_path(p, "block"), "duplicate block " + std::to_string(id));
    }
  }
  return out;
}

Json latency_to_json(const LatencyEstimate& e) {
  Json doc = make_document("latency_estimate");
  doc["total_s"] = e.total_s;
  Json blocks = Json::array();
  for (const BlockLatency& b : e.blocks) {
    blocks.push_back({{"block", b.block_id},
                      {"compute_s", b.compute_s},
                      {"memory_s", b.memory_s},
                      {"overhead_s", b.overhead_s}});
  }
  doc["blocks"] = std::move(blocks);
  return doc;
}

LatencyModel::LatencyModel(const FusedGraph& fused) {
  blocks_.reserve(fused.blocks().size());
  for (const FusedBlock& b : fused.blocks()) {
    Block out;
    out.nest = lower(b, fused.source());
    out.versions = enumerate_versions(out.nest);
    blocks_.push_back(std::move(out));
  }
}

TuningConfig LatencyModel::default_tuning() const {
  TuningConfig t;
  for (const Block& b : blocks_) t.blocks[b.nest.block_id] = BlockTuning{0, b.nest.extents, 1};
  return t;
}

void LatencyModel::check(const TuningConfig& tuning) const {
  for (const Block& b : blocks_) {
    const int id = b.nest.block_id;
    auto it = tuning.blocks.find(id);
    const std::string where = "block " + std::to_string(id) + ": ";
    if (it == tuning.blocks.end()) throw TuningError(where + "no tuning choice");
    const BlockTuning& t = it->second;
    if (t.version < 0 || t.version >= static_cast<int>(b.versions.size())) {
      throw TuningError(where + "version " + std::to_string(t.version) + " out of range");
    }
    if (t.tiles.size() != b.nest.extents.size()) {
      throw TuningError(where + "expected " + std::to_string(b.nest.extents.size()) + " tile sizes");
    }
    for (std::size_t l = 0; l < t.tiles.size(); ++l) {
      if (!valid_tile(t.tiles[l], b.nest.extents[l])) {
        throw TuningError(where + "invalid tile " + std::to_string(t.tiles[l]) + " for loop " +
                          std::to_string(l));
      }
    }
    if (std::find(std::begin(kUnrollFactors), std::end(kUnrollFactors), t.unroll) ==
        std::end(kUnrollFactors)) {
      throw TuningError(where + "invalid unroll factor " + std::to_string(t.unroll));
    }
  }
  for (const auto& [id, t] : tuning.blocks) {
    const bool known = std::any_of(blocks_.begin(), blocks_.end(),
                                   [id = id](const Block& b) { return b.nest.block_id == id; });
    if (!known) throw TuningError("block " + std::to_string(id) + ": no such block");
  }
}

BlockLatency LatencyModel::block_latency(const Block& block, const BlockTuning& choice,
                                         const DeviceProfile& device) const {
  const ScheduleVersion& v = block.versions[static_cast<std::size_t>(choice.version)];
  const CostBreakdown c = version_cost(v, device, block.nest.intermediate_bytes);
  BlockLatency out;
  out.block_id = block.nest.block_id;
  out.compute_s = c.compute_s;
  out.memory_s = c.memory_s;
  out.overhead_s = device.per_block_overhead_s;
  if (device.cache_bytes > 0 && device.cache_discount > 0.0) {
    double elems = tile_footprint(block.nest.write, choice.tiles, block.nest.extents);
    for (const Access& a : block.nest.accesses) {
      elems += tile_footprint(a, choice.tiles, block.nest.extents);
    }
    const double ws = static_cast<double>(choice.unroll) * elems * kElementBytes;
    const double cache = static_cast<double>(device.cache_bytes);
    if (ws <= cache) out.memory_s *= 1.0 - device.cache_discount * ws / cache;
  }
  return out;
}

LatencyEstimate LatencyModel::estimate(const DeviceProfile& device,
                                       const TuningConfig& tuning) const {
  check(tuning);
  LatencyEstimate e;
  for (const Block& b : blocks_) {
    BlockLatency l = block_latency(b, tuning.blocks.at(b.nest.block_id), device);
    e.total_s += std::max(l.compute_s, l.memory_s) + l.overhead_s;
    e.blocks.push_back(l);
  }
  return e;
}

LatencyEstimate LatencyModel::estimate(const DeviceProfile& device) const {
  return estimate(device, default_tuning());
}

LatencyEstimate estimate_latency(const FusedGraph& fused, const DeviceProfile& device,
                                 const TuningConfig& tuning) {
  return LatencyModel(fused).estimate(device, tuning);
}

LatencyEstimate estimate_unfused(const Graph& graph, const DeviceProfile& device) {
  return LatencyModel(FusedGraph(graph)).estimate(device);
}

double BlockSpace::size() const {
  double n = static_cast<double>(versions.size()) * static_cast<double>(unrolls.size());
  for (const auto& t : tiles) n *= static_cast<double>(t.size());
  return n;
}

double TuningSpace::size() const {
  if (blocks.empty()) return 0.0;
  double n = 1.0;
  for (const BlockSpace& b : blocks) n *= b.size();
  return n;
}

TuningSpace full_space(const LatencyModel& model) {
  TuningSpace space;
  for (const LatencyModel::Block& b : model.blocks()) {
    BlockSpace s;
    s.block_id = b.nest.block_id;
    for (std::size_t i = 0; i < b.versions.size(); ++i) s.versions.push_back(static_cast<int>(i));
    for (std::int64_t extent : b.nest.extents) {
      std::vector<std::int64_t> options;
      for (std::int64_t t = 1; t < extent; t *= 2) options.push_back(t);
      options.push_back(extent);
      s.tiles.push_back(std::move(options));
    }
    s.unrolls.assign(std::begin(kUnrollFactors), std::end(kUnrollFactors));
    space.blocks.push_back(std::move(s));
  }
  return space;
}

}  // namespace canao
