#pragma once

#include <string>
#include <string_view>

#include "canao/fusion.hpp"
#include "canao/graph_ir.hpp"
#include "canao/json_io.hpp"

namespace canao {

// Document schemas are described in docs/formats.md.

Json graph_to_json(const Graph& graph);
Graph graph_from_json(const Json& doc);
std::string serialize(const Graph& graph);
Graph deserialize_graph(std::string_view text);

Json expr_to_json(const Expr& e);
Expr expr_from_json(const Json& j, const std::string& path);

Json fused_graph_to_json(const FusedGraph& fused);
FusedGraph fused_graph_from_json(const Json& doc);
std::string serialize(const FusedGraph& fused);
FusedGraph deserialize_fused_graph(std::string_view text);

Json fusion_report_to_json(const FusionReport& report);
FusionReport fusion_report_from_json(const Json& doc);

}  // namespace canao
