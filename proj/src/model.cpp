#include "stf/model.hpp"

#include "stf/ops.hpp"
#include "stf/patterns.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace stf {

namespace {

using ops::add;
using ops::broadcast;
using ops::concat;
using ops::mul;
using ops::permute;
using ops::reshape;
using ops::slice;
using ops::softmax;
using ops::sub;

void check_4d(const char* where, const Tensor& x) {
  if (x.rank() != 4) {
    throw std::invalid_argument(std::string(where) + ": expected a (B,T,N,C) window, got " +
                                to_string(x.shape()));
  }
}

}  // namespace

LayerStructure structure_from_string(const std::string& tag) {
  if (tag == "sequential") return LayerStructure::sequential;
  if (tag == "parallel") return LayerStructure::parallel;
  throw std::invalid_argument("model: unknown structure '" + tag +
                              "' (want sequential|parallel)");
}

FusionKind fusion_from_string(const std::string& tag) {
  if (tag == "add") return FusionKind::add;
  if (tag == "concat") return FusionKind::concat;
  if (tag == "gate") return FusionKind::gate;
  throw std::invalid_argument("model: unknown fusion '" + tag + "' (want add|concat|gate)");
}

std::string to_string(LayerStructure s) {
  return s == LayerStructure::sequential ? "sequential" : "parallel";
}

std::string to_string(FusionKind f) {
  switch (f) {
    case FusionKind::add: return "add";
    case FusionKind::concat: return "concat";
    default: return "gate";
  }
}

void ModelConfig::validate() const {
  if (hidden < 1 || layers < 0 || levels < 0 || input_steps < 1 || output_steps < 1 ||
      channels < 1 || nodes < 1 || span < 0) {
    throw std::invalid_argument("model config: all sizes must be positive");
  }
  if (output_steps != input_steps) {
    throw std::invalid_argument(
        "model config: the output head maps step to step, so output_steps must equal "
        "input_steps (got " +
        std::to_string(output_steps) + " vs " + std::to_string(input_steps) + ")");
  }
}

LinearLayer LinearLayer::init(std::int64_t in, std::int64_t out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(static_cast<std::size_t>(in * out));
  for (double& x : w) x = dist(rng);
  std::vector<double> b(static_cast<std::size_t>(out));
  for (double& x : b) x = dist(rng);
  return LinearLayer{Tensor::from_data({in, out}, std::move(w), true),
                     Tensor::from_data({out}, std::move(b), true)};
}

Tensor LinearLayer::apply(const Tensor& x) const {
  Tensor y = ops::linear(x, weight);
  return add(y, broadcast(bias, y.shape()));
}

Disentangled disentangle(const Tensor& x, const DisentangleGate& gate) {
  check_4d("disentangle", x);
  const auto b = x.dim(0), t = x.dim(1), n = x.dim(2);
  Tensor logits = gate.map.apply(x);                 // (B,T,N,2)
  Tensor probs = softmax(logits, -1);
  Tensor mu_i = slice(probs, -1, 0, 1);              // (B,T,N,1)
  // the exact complement keeps mu_i + mu_e = 1 and x_i + x_e = x bitwise
  Tensor mu_e = ops::add_scalar(ops::neg(mu_i), 1.0);
  Disentangled out;
  out.intrinsic = mul(broadcast(mu_i, x.shape()), x);
  out.environment = sub(x, out.intrinsic);
  out.mu_intrinsic = reshape(mu_i, {b, t, n});
  out.mu_environment = reshape(mu_e, {b, t, n});
  return out;
}

Tensor stlayer_forward(const STLayer& layer, const Tensor& h, const ModelConfig& config,
                       const CrossTimeAdjacency& cross_time) {
  check_4d("stlayer_forward", h);
  const auto b = h.dim(0), t = h.dim(1), n = h.dim(2), d = h.dim(3);

  auto spatial = [&](const Tensor& in) {
    Tensor q = layer.spatial.query(in);
    Tensor k = layer.spatial.key(in);
    Tensor v = layer.spatial.value(in);
    Tensor glo = global_attention(q, k, v);  // per (b,t) slice over nodes
    // local attention runs on the cross-time rows (t*N + n) of each sample
    Tensor loc = subtree_local_attention(reshape(q, {b, t * n, d}), reshape(k, {b, t * n, d}),
                                         reshape(v, {b, t * n, d}), cross_time, layer.subtree);
    return fuse_local_global(reshape(loc, {b, t, n, d}), glo, layer.subtree.global);
  };
  auto temporal = [&](const Tensor& in) {
    Tensor seq = permute(in, {0, 2, 1, 3});  // (B,N,T,D)
    Tensor q = layer.temporal.query(seq);
    Tensor k = layer.temporal.key(seq);
    Tensor v = layer.temporal.value(seq);
    Tensor out = temporal_attention(q, k, v, config.causal_temporal);
    return permute(out, {0, 2, 1, 3});
  };

  Tensor mixed;
  if (config.structure == LayerStructure::sequential) {
    mixed = temporal(spatial(h));
  } else {
    Tensor sp = spatial(h);
    Tensor te = temporal(h);
    switch (config.fusion) {
      case FusionKind::add:
        mixed = add(sp, te);
        break;
      case FusionKind::concat:
        mixed = layer.fuse_map.apply(concat({sp, te}, -1));
        break;
      case FusionKind::gate: {
        Tensor z = ops::sigmoid(layer.gate_map.apply(concat({sp, te}, -1)));
        mixed = add(mul(z, sp), mul(ops::add_scalar(ops::neg(z), 1.0), te));
        break;
      }
    }
  }
  return add(h, mixed);  // residual
}

BranchOutputs branch_forward(const Branch& branch, const Tensor& x,
                             const ModelConfig& config, const CrossTimeAdjacency& cross_time) {
  check_4d("branch_forward", x);
  Tensor h = branch.lift.apply(x);
  for (const STLayer& layer : branch.layers) {
    h = stlayer_forward(layer, h, config, cross_time);
  }
  // decoder: one linear layer over each node's whole (T, D) block
  const auto b = h.dim(0), t = h.dim(1), n = h.dim(2), d = h.dim(3);
  Tensor by_node = reshape(permute(h, {0, 2, 1, 3}), {b, n, t * d});
  Tensor z = permute(reshape(branch.decoder.apply(by_node), {b, n, t, d}), {0, 2, 1, 3});
  // readout: linear over the time axis, then mean pool over nodes
  Tensor by_time = permute(z, {0, 2, 3, 1});                       // (B,N,D,T)
  Tensor collapsed = reshape(ops::linear(by_time, branch.readout_time), {b, n, d});
  collapsed = add(collapsed, broadcast(branch.readout_bias, collapsed.shape()));
  Tensor pooled = ops::mean(collapsed, 1);                          // (B,D)
  return BranchOutputs{z, pooled};
}

Tensor fuse_prototypes(const Tensor& z_intrinsic, const Tensor& z_environment,
                       const Tensor& prototypes, const Tensor& membership) {
  check_4d("fuse_prototypes", z_intrinsic);
  if (z_intrinsic.shape() != z_environment.shape()) {
    throw std::invalid_argument("fuse_prototypes: branch outputs differ: " +
                                to_string(z_intrinsic.shape()) + " vs " +
                                to_string(z_environment.shape()));
  }
  const auto b = z_intrinsic.dim(0);
  const auto patterns = prototypes.dim(0);
  if (membership.rank() != 2 || membership.dim(0) != b || membership.dim(1) != patterns) {
    throw std::invalid_argument("fuse_prototypes: membership " + to_string(membership.shape()) +
                                " does not match batch " + std::to_string(b) + " x " +
                                std::to_string(patterns) + " patterns");
  }
  for (std::int64_t j = 0; j < b; ++j) {
    double sum = 0.0;
    bool binary = true;
    for (std::int64_t p = 0; p < patterns; ++p) {
      const double w = membership.at(j * patterns + p);
      binary = binary && (w == 0.0 || w == 1.0);
      sum += w;
    }
    if (!binary || sum != 1.0) {
      throw std::invalid_argument("fuse_prototypes: membership row " + std::to_string(j) +
                                  " is not one-hot");
    }
  }
  Tensor flat = reshape(prototypes, {patterns, prototypes.numel() / patterns});
  Tensor picked = reshape(ops::matmul(membership, flat), z_intrinsic.shape());
  return concat({add(z_intrinsic, picked), z_environment}, -1);
}

DualModel DualModel::init(const ModelConfig& config, const SensorGraph& graph,
                          std::uint64_t seed) {
  ModelConfig filled = config;
  if (filled.nodes == 0) filled.nodes = graph.node_count;
  filled.validate();
  if (filled.nodes != graph.node_count) {
    throw std::invalid_argument("model: config expects " + std::to_string(filled.nodes) +
                                " nodes but the graph has " +
                                std::to_string(graph.node_count));
  }
  std::mt19937_64 rng(seed);
  DualModel m;
  m.config = filled;
  m.gate.map = LinearLayer::init(filled.channels, 2, rng);
  auto make_branch = [&] {
    Branch br;
    br.lift = LinearLayer::init(filled.channels, filled.hidden, rng);
    for (std::int64_t l = 0; l < filled.layers; ++l) {
      STLayer layer;
      layer.spatial = ProjectionHead::init(filled.hidden, filled.hidden, rng);
      layer.subtree = SubtreeWeights::init(filled.levels);
      layer.temporal = ProjectionHead::init(filled.hidden, filled.hidden, rng);
      if (filled.structure == LayerStructure::parallel) {
        if (filled.fusion == FusionKind::concat) {
          layer.fuse_map = LinearLayer::init(2 * filled.hidden, filled.hidden, rng);
        } else if (filled.fusion == FusionKind::gate) {
          layer.gate_map = LinearLayer::init(2 * filled.hidden, filled.hidden, rng);
        }
      }
      br.layers.push_back(std::move(layer));
    }
    br.decoder = LinearLayer::init(filled.input_steps * filled.hidden,
                                   filled.input_steps * filled.hidden, rng);
    {
      const double bound = 1.0 / std::sqrt(static_cast<double>(filled.input_steps));
      std::uniform_real_distribution<double> dist(-bound, bound);
      std::vector<double> w(static_cast<std::size_t>(filled.input_steps));
      for (double& x : w) x = dist(rng);
      std::vector<double> bias(static_cast<std::size_t>(filled.hidden));
      for (double& x : bias) x = dist(rng);
      br.readout_time = Tensor::from_data({filled.input_steps, 1}, std::move(w), true);
      br.readout_bias = Tensor::from_data({filled.hidden}, std::move(bias), true);
    }
    return br;
  };
  m.intrinsic = make_branch();
  m.environment = make_branch();
  m.prototypes = init_prototypes(filled.input_steps, filled.nodes, filled.hidden, rng());
  m.output_head = LinearLayer::init(2 * filled.hidden, filled.channels, rng);
  m.cross_time = build_rct_adjacency(graph, filled.input_steps, filled.span);
  return m;
}

std::vector<std::pair<std::string, Tensor>> DualModel::parameters() {
  std::vector<std::pair<std::string, Tensor>> out;
  out.push_back({"gate.weight", gate.map.weight});
  out.push_back({"gate.bias", gate.map.bias});
  auto add_branch = [&out](const std::string& prefix, Branch& br) {
    out.push_back({prefix + ".lift.weight", br.lift.weight});
    out.push_back({prefix + ".lift.bias", br.lift.bias});
    for (std::size_t l = 0; l < br.layers.size(); ++l) {
      const std::string base = prefix + ".layer" + std::to_string(l);
      STLayer& layer = br.layers[l];
      out.push_back({base + ".spatial.query", layer.spatial.query_w});
      out.push_back({base + ".spatial.key", layer.spatial.key_w});
      out.push_back({base + ".spatial.value", layer.spatial.value_w});
      for (std::size_t k = 0; k < layer.subtree.level.size(); ++k) {
        out.push_back({base + ".subtree.w" + std::to_string(k), layer.subtree.level[k]});
      }
      out.push_back({base + ".subtree.wglo", layer.subtree.global});
      out.push_back({base + ".temporal.query", layer.temporal.query_w});
      out.push_back({base + ".temporal.key", layer.temporal.key_w});
      out.push_back({base + ".temporal.value", layer.temporal.value_w});
      if (layer.fuse_map.weight.defined()) {
        out.push_back({base + ".fuse.weight", layer.fuse_map.weight});
        out.push_back({base + ".fuse.bias", layer.fuse_map.bias});
      }
      if (layer.gate_map.weight.defined()) {
        out.push_back({base + ".gate.weight", layer.gate_map.weight});
        out.push_back({base + ".gate.bias", layer.gate_map.bias});
      }
    }
    out.push_back({prefix + ".decoder.weight", br.decoder.weight});
    out.push_back({prefix + ".decoder.bias", br.decoder.bias});
    out.push_back({prefix + ".readout.time", br.readout_time});
    out.push_back({prefix + ".readout.bias", br.readout_bias});
  };
  add_branch("ibranch", intrinsic);
  add_branch("ebranch", environment);
  out.push_back({"prototypes", prototypes});
  out.push_back({"head.weight", output_head.weight});
  out.push_back({"head.bias", output_head.bias});
  return out;
}

ForwardOutputs forward(const DualModel& model, const Tensor& x,
                       const std::vector<int>& pattern_ids) {
  check_4d("forward", x);
  const auto& cfg = model.config;
  if (x.dim(1) != cfg.input_steps || x.dim(2) != cfg.nodes || x.dim(3) != cfg.channels) {
    throw std::invalid_argument("forward: window " + to_string(x.shape()) +
                                " does not match the model (T=" +
                                std::to_string(cfg.input_steps) + ", N=" +
                                std::to_string(cfg.nodes) + ", C=" +
                                std::to_string(cfg.channels) + ")");
  }
  if (static_cast<std::int64_t>(pattern_ids.size()) != x.dim(0)) {
    throw std::invalid_argument("forward: " + std::to_string(pattern_ids.size()) +
                                " pattern ids for a batch of " + std::to_string(x.dim(0)));
  }
  ForwardOutputs out;
  Disentangled split = disentangle(x, model.gate);
  out.x_intrinsic = split.intrinsic;
  out.x_environment = split.environment;
  out.mu_intrinsic = split.mu_intrinsic;
  out.mu_environment = split.mu_environment;
  BranchOutputs ib = branch_forward(model.intrinsic, split.intrinsic, cfg, model.cross_time);
  BranchOutputs eb = branch_forward(model.environment, split.environment, cfg, model.cross_time);
  out.z_intrinsic = ib.representation;
  out.z_environment = eb.representation;
  out.g_intrinsic = ib.pooled;
  out.g_environment = eb.pooled;
  out.membership = one_hot_membership(pattern_ids);
  Tensor fused = fuse_prototypes(out.z_intrinsic, out.z_environment, model.prototypes,
                                 out.membership);
  out.prediction = model.output_head.apply(fused);
  return out;
}

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  for (const auto& [name, tensor] : params) {
    out << "param " << name << " " << tensor.rank();
    for (std::int64_t d : tensor.shape()) out << " " << d;
    out << "\n";
  }
  out << "payload\n";
  for (const auto& [name, tensor] : params) {
    out.write(reinterpret_cast<const char*>(tensor.values().data()),
              static_cast<std::streamsize>(tensor.numel() * sizeof(double)));
  }
}

void load_checkpoint(const std::string& path,
                     std::vector<std::pair<std::string, Tensor>>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string line;
  std::size_t index = 0;
  while (std::getline(in, line)) {
    if (line == "payload") break;
    std::istringstream row(line);
    std::string tag, name;
    int rank = 0;
    if (!(row >> tag >> name >> rank) || tag != "param") {
      throw std::runtime_error("checkpoint: bad manifest line '" + line + "'");
    }
    Shape shape(static_cast<std::size_t>(rank));
    for (auto& d : shape) row >> d;
    if (index >= params.size() || params[index].first != name ||
        params[index].second.shape() != shape) {
      throw std::runtime_error("checkpoint: manifest entry '" + name + "' " + to_string(shape) +
                               " does not match the model (expected '" +
                               (index < params.size() ? params[index].first : "<none>") + "')");
    }
    ++index;
  }
  if (index != params.size()) {
    throw std::runtime_error("checkpoint: manifest lists " + std::to_string(index) +
                             " tensors, model has " + std::to_string(params.size()));
  }
  for (auto& [name, tensor] : params) {
    in.read(reinterpret_cast<char*>(tensor.values().data()),
            static_cast<std::streamsize>(tensor.numel() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: payload truncated at '" + name + "'");
  }
}

}  // namespace stf
