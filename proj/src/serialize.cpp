#include "canao/serialize.hpp"

#include "canao/error.hpp"

namespace canao {

namespace {

Json named_list(const std::vector<NamedValue>& values) {
  Json arr = Json::array();
  for (const NamedValue& v : values) arr.push_back({{"name", v.name}, {"node", v.node}});
  return arr;
}

std::vector<NamedValue> named_list_from(const Json& arr, const std::string& path) {
  if (!arr.is_array()) throw ParseError(path, "expected an array");
  std::vector<NamedValue> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string p = child_path(path, i);
    out.push_back({get_as<std::string>(require(arr[i], "name", p), child_path(p, "name")),
                   get_as<NodeId>(require(arr[i], "node", p), child_path(p, "node"))});
  }
  return out;
}

Json attrs_to_json(const Attrs& attrs) {
  Json obj = Json::object();
  for (const auto& [k, v] : attrs) obj[k] = v;
  return obj;
}

Attrs attrs_from_json(const Json& obj, const std::string& path) {
  if (!obj.is_object()) throw ParseError(path, "expected an object");
  Attrs attrs;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    attrs[it.key()] = get_as<std::vector<std::int64_t>>(it.value(), child_path(path, it.key()));
  }
  return attrs;
}

OpKind kind_from_json(const Json& j, const std::string& path) {
  const auto name = get_as<std::string>(j, path);
  auto kind = op_kind_from_string(name);
  if (!kind) throw ParseError(path, "unknown op kind \"" + name + "\"");
  return *kind;
}

}  // namespace

Json graph_to_json(const Graph& graph) {
  Json doc = make_document("graph");
  doc["inputs"] = named_list(graph.inputs());
  doc["weights"] = named_list(graph.weights());
  Json nodes = Json::array();
  for (const Node& n : graph.nodes()) {
    Json j = {{"id", n.id},
              {"kind", std::string(to_string(n.kind))},
              {"name", n.name},
              {"inputs", n.inputs},
              {"attrs", attrs_to_json(n.attrs)},
              {"shape", n.shape}};
    if (!n.literal.empty()) j["literal"] = n.literal;
    nodes.push_back(std::move(j));
  }
  doc["nodes"] = std::move(nodes);
  doc["outputs"] = named_list(graph.outputs());
  return doc;
}

Graph graph_from_json(const Json& doc) {
  check_document(doc, "graph");
  const Json& nodes = require(doc, "nodes", "");
  if (!nodes.is_array()) throw ParseError("/nodes", "expected an array");
  std::vector<Node> out;
  out.reserve(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string p = child_path("/nodes", i);
    const Json& j = nodes[i];
    Node n;
    n.id = get_as<NodeId>(require(j, "id", p), child_path(p, "id"));
    n.kind = kind_from_json(require(j, "kind", p), child_path(p, "kind"));
    n.name = get_as<std::string>(require(j, "name", p), child_path(p, "name"));
    n.inputs = get_as<std::vector<NodeId>>(require(j, "inputs", p), child_path(p, "inputs"));
    n.attrs = attrs_from_json(require(j, "attrs", p), child_path(p, "attrs"));
    n.shape = get_as<Shape>(require(j, "shape", p), child_path(p, "shape"));
    if (auto it = j.find("literal"); it != j.end()) {
      n.literal = get_as<std::vector<double>>(*it, child_path(p, "literal"));
    }
    out.push_back(std::move(n));
  }
  return Graph(std::move(out), named_list_from(require(doc, "inputs", ""), "/inputs"),
               named_list_from(require(doc, "weights", ""), "/weights"),
               named_list_from(require(doc, "outputs", ""), "/outputs"));
}

std::string serialize(const Graph& graph) { return graph_to_json(graph).dump(1) + "\n"; }

Graph deserialize_graph(std::string_view text) { return graph_from_json(parse_json(text)); }

Json expr_to_json(const Expr& e) {
  if (e.is_leaf()) return {{"ref", e.leaf}, {"shape", e.shape}};
  Json args = Json::array();
  for (const Expr& a : e.args) args.push_back(expr_to_json(a));
  Json j = {{"op", std::string(to_string(e.kind))}, {"args", std::move(args)}};
  if (!e.attrs.empty()) j["attrs"] = attrs_to_json(e.attrs);
  return j;
}

Expr expr_from_json(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ParseError(path, "expected an object");
  if (j.contains("ref")) {
    return Expr::ref(get_as<NodeId>(j["ref"], child_path(path, "ref")),
                     get_as<Shape>(require(j, "shape", path), child_path(path, "shape")));
  }
  const OpKind kind = kind_from_json(require(j, "op", path), child_path(path, "op"));
  const Json& args = require(j, "args", path);
  if (!args.is_array()) throw ParseError(child_path(path, "args"), "expected an array");
  std::vector<Expr> children;
  for (std::size_t i = 0; i < args.size(); ++i) {
    children.push_back(expr_from_json(args[i], child_path(child_path(path, "args"), i)));
  }
  Attrs attrs;
  if (auto it = j.find("attrs"); it != j.end()) {
    attrs = attrs_from_json(*it, child_path(path, "attrs"));
  }
  try {
    return Expr::op(kind, std::move(children), std::move(attrs));
  } catch (const ShapeError& e) {
    throw ParseError(path, e.what());
  }
}

Json fused_graph_to_json(const FusedGraph& fused) {
  Json doc = make_document("fused_graph");
  doc["graph"] = graph_to_json(fused.source());
  Json blocks = Json::array();
  for (const FusedBlock& b : fused.blocks()) {
    blocks.push_back({{"id", b.id},
                      {"output", b.output},
                      {"law", b.law ? Json(std::string(to_string(*b.law))) : Json(nullptr)},
                      {"members", b.members},
                      {"expr", expr_to_json(b.expr)}});
  }
  doc["blocks"] = std::move(blocks);
  return doc;
}

FusedGraph fused_graph_from_json(const Json& doc) {
  check_document(doc, "fused_graph");
  Graph source = graph_from_json(require(doc, "graph", ""));
  const Json& arr = require(doc, "blocks", "");
  if (!arr.is_array()) throw ParseError("/blocks", "expected an array");
  std::vector<FusedBlock> blocks;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string p = child_path("/blocks", i);
    const Json& j = arr[i];
    FusedBlock b;
    b.id = get_as<int>(require(j, "id", p), child_path(p, "id"));
    b.output = get_as<NodeId>(require(j, "output", p), child_path(p, "output"));
    const Json& law = require(j, "law", p);
    if (!law.is_null()) {
      auto l = fusion_law_from_string(get_as<std::string>(law, child_path(p, "law")));
      if (!l) throw ParseError(child_path(p, "law"), "unknown fusion law " + law.dump());
      b.law = *l;
    }
    b.members = get_as<std::vector<NodeId>>(require(j, "members", p), child_path(p, "members"));
    b.expr = expr_from_json(require(j, "expr", p), child_path(p, "expr"));
    b.inputs = leaves(b.expr);
    b.shape = b.expr.shape;
    blocks.push_back(std::move(b));
  }
  try {
    return FusedGraph(std::move(source), std::move(blocks));
  } catch (const ConflictError& e) {
    throw ParseError("/blocks", e.what());
  }
}

std::string serialize(const FusedGraph& fused) {
  return fused_graph_to_json(fused).dump(1) + "\n";
}

FusedGraph deserialize_fused_graph(std::string_view text) {
  return fused_graph_from_json(parse_json(text));
}

namespace {

Json counts_json(const LayerOpCount& c) { return {{"layers", c.layers}, {"ops", c.ops}}; }

LayerOpCount counts_from(const Json& j, const std::string& path) {
  return {get_as<std::int64_t>(require(j, "layers", path), child_path(path, "layers")),
          get_as<std::int64_t>(require(j, "ops", path), child_path(path, "ops"))};
}

}  // namespace

Json fusion_report_to_json(const FusionReport& report) {
  Json doc = make_document("fusion_report");
  doc["candidates"] = report.candidates;
  Json rows = Json::array();
  for (const FusionReportRow& r : report.rows) {
    rows.push_back({{"law", std::string(to_string(r.law))},
                    {"node_ids", r.node_ids},
                    {"before", counts_json(r.before)},
                    {"after", counts_json(r.after)},
                    {"compute_enlargement", r.metrics.compute_enlargement},
                    {"memory_reduction", r.metrics.memory_reduction},
                    {"pattern_before", r.pattern_before},
                    {"pattern_after", r.pattern_after}});
  }
  doc["rows"] = std::move(rows);
  doc["original"] = counts_json(report.original);
  doc["fused"] = counts_json(report.fused);
  doc["intermediate_bytes_before"] = report.intermediate_bytes_before;
  doc["intermediate_bytes_after"] = report.intermediate_bytes_after;
  return doc;
}

FusionReport fusion_report_from_json(const Json& doc) {
  check_document(doc, "fusion_report");
  FusionReport r;
  r.candidates = get_as<std::int64_t>(require(doc, "candidates", ""), "/candidates");
  const Json& rows = require(doc, "rows", "");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string p = child_path("/rows", i);
    const Json& j = rows[i];
    FusionReportRow row;
    auto law = fusion_law_from_string(get_as<std::string>(require(j, "law", p), p + "/law"));
    if (!law) throw ParseError(p + "/law", "unknown fusion law");
    row.law = *law;
    row.node_ids = get_as<std::vector<NodeId>>(require(j, "node_ids", p), p + "/node_ids");
    row.before = counts_from(require(j, "before", p), p + "/before");
    row.after = counts_from(require(j, "after", p), p + "/after");
    row.metrics.compute_enlargement =
        get_as<double>(require(j, "compute_enlargement", p), p + "/compute_enlargement");
    row.metrics.memory_reduction =
        get_as<std::int64_t>(require(j, "memory_reduction", p), p + "/memory_reduction");
    row.pattern_before = get_as<std::string>(require(j, "pattern_before", p), p + "/pattern_before");
    row.pattern_after = get_as<std::string>(require(j, "pattern_after", p), p + "/pattern_after");
    r.rows.push_back(std::move(row));
  }
  r.original = counts_from(require(doc, "original", ""), "/original");
  r.fused = counts_from(require(doc, "fused", ""), "/fused");
  r.intermediate_bytes_before =
      get_as<std::int64_t>(require(doc, "intermediate_bytes_before", ""), "/intermediate_bytes_before");
  r.intermediate_bytes_after =
      get_as<std::int64_t>(require(doc, "intermediate_bytes_after", ""), "/intermediate_bytes_after");
  return r;
}

}  // namespace canao
