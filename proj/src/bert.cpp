#include "canao/bert.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "canao/error.hpp"

namespace canao {

std::string ArchitectureConfig::label() const {
  std::ostringstream os;
  os << "L-" << num_blocks << "_H-" << hidden_size << "_A-" << num_heads;
  return os.str();
}

void check_architecture(const ArchitectureConfig& arch) {
  if (arch.num_blocks < 1) throw ConfigError("number of blocks must be >= 1");
  if (arch.hidden_size <= 0 || arch.hidden_size % kHeadWidth != 0) {
    throw ConfigError("hidden size must be a multiple of 64");
  }
  if (arch.hidden_size < kMinHiddenSize) {
    throw ConfigError("constraint violated: hidden size ≥ 256");
  }
  if (arch.num_heads != arch.hidden_size / kHeadWidth) {
    throw ConfigError("head count must equal hidden size / 64");
  }
  if (arch.intermediate_size < 1) throw ConfigError("intermediate size must be >= 1");
  if (arch.seq_len < 1) throw ConfigError("sequence length must be >= 1");
  if (arch.vocab_size < 1) throw ConfigError("vocabulary size must be >= 1");
}

ArchitectureConfig make_architecture(std::int64_t blocks, std::int64_t hidden,
                                     std::int64_t intermediate,
                                     std::int64_t seq_len) {
  ArchitectureConfig arch;
  arch.num_blocks = blocks;
  arch.hidden_size = hidden;
  arch.num_heads = hidden / kHeadWidth;
  arch.intermediate_size = intermediate > 0 ? intermediate : 4 * hidden;
  arch.seq_len = seq_len;
  return arch;
}

namespace {

class BertBuilder {
 public:
  explicit BertBuilder(const ArchitectureConfig& arch) : arch_(arch) {}

  Graph build() {
    const auto s = arch_.seq_len, h = arch_.hidden_size;
    NodeId ids = b_.input("input_ids", {s});
    NodeId types = b_.input("token_type_ids", {s});
    NodeId mask = b_.input("attention_mask", {s});

    NodeId word = b_.weight("embeddings.word", {arch_.vocab_size, h});
    NodeId pos_table = b_.weight("embeddings.position", {s, h});
    NodeId type_table = b_.weight("embeddings.token_type", {2, h});
    std::vector<double> positions(static_cast<std::size_t>(s));
    std::iota(positions.begin(), positions.end(), 0.0);
    NodeId pos_ids = b_.literal("embeddings.position_ids", {s}, positions);

    NodeId x = b_.op(OpKind::Gather, {word, ids});
    NodeId p = b_.op(OpKind::Gather, {pos_table, pos_ids});
    NodeId t = b_.op(OpKind::Gather, {type_table, types});
    x = b_.op(OpKind::Add, {x, p});
    x = b_.op(OpKind::Add, {x, t});
    x = layer_norm(x, "embeddings.ln");

    for (std::int64_t i = 0; i < arch_.num_blocks; ++i) {
      x = block(x, mask, "block" + std::to_string(i));
    }

    NodeId cls = b_.op(OpKind::Slice, {x}, {{"axis", {0}}, {"begin", {0}}, {"end", {1}}});
    NodeId pooled = gelu(cls);
    NodeId logits = b_.op(OpKind::MatMul,
                          {pooled, b_.weight("classifier.w", {h, kNumLabels})});
    logits = b_.binary(OpKind::Add, logits, b_.weight("classifier.b", {kNumLabels}));
    b_.output("probs", softmax(logits));
    return b_.build();
  }

 private:
  NodeId dense(NodeId x, std::int64_t in, std::int64_t out, const std::string& name) {
    NodeId y = b_.op(OpKind::MatMul, {x, b_.weight(name + ".w", {in, out})});
    return b_.binary(OpKind::Add, y, b_.weight(name + ".b", {out}));
  }

  NodeId layer_norm(NodeId x, const std::string& name) {
    const double inv_h = 1.0 / static_cast<double>(arch_.hidden_size);
    NodeId sum = b_.op(OpKind::ReduceSum, {x}, {{"axis", {-1}}});
    NodeId mean = b_.binary(OpKind::Mul, sum, b_.scalar(inv_h));
    NodeId centered = b_.binary(OpKind::Sub, x, mean);
    NodeId sq = b_.op(OpKind::Power, {centered}, {{"exponent", {2}}});
    NodeId var = b_.binary(OpKind::Mul, b_.op(OpKind::ReduceSum, {sq}, {{"axis", {-1}}}),
                           b_.scalar(inv_h));
    var = b_.binary(OpKind::Add, var, b_.scalar(1e-12));
    NodeId rstd = b_.op(OpKind::Reciprocal, {b_.op(OpKind::Sqrt, {var})});
    NodeId y = b_.binary(OpKind::Mul, centered, rstd);
    y = b_.binary(OpKind::Mul, y, b_.weight(name + ".gamma", {arch_.hidden_size}));
    return b_.binary(OpKind::Add, y, b_.weight(name + ".beta", {arch_.hidden_size}));
  }

  // Reduced operands are broadcast explicitly even when the reduced axis has
  // extent 1, so the node count does not depend on seq_len.
  NodeId expand(NodeId reduced, NodeId like) {
    return b_.op(OpKind::Broadcast, {reduced}, {{"shape", b_.shape(like)}});
  }

  NodeId softmax(NodeId x) {
    NodeId mx = b_.op(OpKind::ReduceMax, {x}, {{"axis", {-1}}});
    NodeId e = b_.op(OpKind::Exp, {b_.op(OpKind::Sub, {x, expand(mx, x)})});
    NodeId inv = b_.op(OpKind::Reciprocal, {b_.op(OpKind::ReduceSum, {e}, {{"axis", {-1}}})});
    return b_.op(OpKind::Mul, {e, expand(inv, e)});
  }

  NodeId gelu(NodeId x) {
    NodeId u = b_.binary(OpKind::Mul, x, b_.scalar(1.0 / std::sqrt(2.0)));
    u = b_.binary(OpKind::Add, b_.op(OpKind::Erf, {u}), b_.scalar(1.0));
    u = b_.op(OpKind::Mul, {x, u});
    return b_.binary(OpKind::Mul, u, b_.scalar(0.5));
  }

  NodeId heads(NodeId x, std::vector<std::int64_t> perm) {
    const auto s = arch_.seq_len, a = arch_.num_heads;
    NodeId r = b_.op(OpKind::Reshape, {x}, {{"shape", {s, a, kHeadWidth}}});
    return b_.op(OpKind::Transpose, {r}, {{"perm", std::move(perm)}});
  }

  NodeId block(NodeId x, NodeId mask, const std::string& name) {
    const auto s = arch_.seq_len, h = arch_.hidden_size;
    NodeId q = heads(dense(x, h, h, name + ".q"), {1, 0, 2});
    NodeId k = heads(dense(x, h, h, name + ".k"), {1, 2, 0});
    NodeId v = heads(dense(x, h, h, name + ".v"), {1, 0, 2});

    NodeId scores = b_.op(OpKind::MatMul, {q, k});
    scores = b_.binary(OpKind::Mul, scores,
                       b_.scalar(1.0 / std::sqrt(static_cast<double>(kHeadWidth))));

    NodeId m = b_.op(OpKind::Reshape, {mask}, {{"shape", {1, s}}});
    m = b_.binary(OpKind::Sub, b_.scalar(1.0), m);
    m = b_.binary(OpKind::Mul, m, b_.scalar(-10000.0));
    std::vector<double> ones(static_cast<std::size_t>(s), 1.0);
    NodeId bias = b_.op(OpKind::MatMul, {b_.literal(name + ".mask_ones", {s, 1}, ones), m});
    scores = b_.binary(OpKind::Add, scores, bias);

    NodeId ctx = b_.op(OpKind::MatMul, {softmax(scores), v});
    ctx = b_.op(OpKind::Transpose, {ctx}, {{"perm", {1, 0, 2}}});
    ctx = b_.op(OpKind::Reshape, {ctx}, {{"shape", {s, h}}});

    NodeId attn = dense(ctx, h, h, name + ".attn_out");
    attn = b_.op(OpKind::Add, {attn, x});
    attn = layer_norm(attn, name + ".ln1");

    const auto inter = arch_.intermediate_size;
    NodeId ff = gelu(dense(attn, h, inter, name + ".ffn_in"));
    ff = dense(ff, inter, h, name + ".ffn_out");
    ff = b_.op(OpKind::Add, {ff, attn});
    return layer_norm(ff, name + ".ln2");
  }

  const ArchitectureConfig& arch_;
  GraphBuilder b_;
};

}  // namespace

Graph build_bert_graph(const ArchitectureConfig& arch) {
  check_architecture(arch);
  return BertBuilder(arch).build();
}

}  // namespace canao
