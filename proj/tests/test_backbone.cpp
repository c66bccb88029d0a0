#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stf/autodiff.hpp"
#include "stf/losses.hpp"
#include "stf/model.hpp"
#include "stf/ops.hpp"
#include "stf/patterns.hpp"

#include <random>
#include <set>

using namespace stf;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> data(static_cast<std::size_t>(numel_of(shape)));
  for (double& v : data) v = dist(rng);
  return Tensor::from_data(std::move(shape), std::move(data));
}

ModelConfig tiny_config(std::int64_t nodes) {
  ModelConfig cfg;
  cfg.hidden = 4;
  cfg.layers = 1;
  cfg.levels = 1;
  cfg.input_steps = 3;
  cfg.output_steps = 3;
  cfg.channels = 1;
  cfg.nodes = nodes;
  return cfg;
}

}  // namespace

TEST_CASE("disentangling gate") {
  std::mt19937_64 rng(1);
  Tensor x = random_tensor({2, 3, 4, 2}, rng);
  SUBCASE("zero weights split evenly") {
    DisentangleGate gate;
    gate.map.weight = Tensor::zeros({2, 2}, true);
    gate.map.bias = Tensor::zeros({2}, true);
    Disentangled d = disentangle(x, gate);
    for (std::int64_t i = 0; i < d.mu_intrinsic.numel(); ++i) {
      CHECK(d.mu_intrinsic.at(i) == 0.5);
      CHECK(d.mu_environment.at(i) == 0.5);
    }
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      CHECK(d.intrinsic.at(i) == doctest::Approx(0.5 * x.at(i)).epsilon(1e-15));
    }
  }
  SUBCASE("halves sum back to the input at machine precision") {
    DisentangleGate gate;
    gate.map = LinearLayer::init(2, 2, rng);
    Disentangled d = disentangle(x, gate);
    for (std::int64_t i = 0; i < x.numel(); ++i) {
      const double sum = d.intrinsic.at(i) + d.environment.at(i);
      CHECK(std::abs(sum - x.at(i)) <= 1e-15 * std::max(1.0, std::abs(x.at(i))));
    }
    for (std::int64_t i = 0; i < d.mu_intrinsic.numel(); ++i) {
      const double sum = d.mu_intrinsic.at(i) + d.mu_environment.at(i);
      CHECK(std::abs(sum - 1.0) <= 1e-15);
      CHECK(d.mu_intrinsic.at(i) > 0.0);
      CHECK(d.mu_intrinsic.at(i) < 1.0);
    }
  }
}

TEST_CASE("stlayer wiring") {
  std::mt19937_64 rng(2);
  SensorGraph g = make_path_graph(4);
  SUBCASE("an empty stack is the identity on the lifted input") {
    ModelConfig cfg = tiny_config(4);
    cfg.layers = 0;
    DualModel m = DualModel::init(cfg, g, 3);
    Tensor x = random_tensor({2, 3, 4, 1}, rng);
    BranchOutputs out = branch_forward(m.intrinsic, x, cfg, m.cross_time);
    // the decoder mixes each node's (T,D) block as one linear layer
    Tensor lifted = m.intrinsic.lift.apply(x);
    Tensor by_node = ops::reshape(ops::permute(lifted, {0, 2, 1, 3}), {2, 4, 12});
    Tensor expected =
        ops::permute(ops::reshape(m.intrinsic.decoder.apply(by_node), {2, 4, 3, 4}),
                     {0, 2, 1, 3});
    for (std::int64_t i = 0; i < out.representation.numel(); ++i) {
      CHECK(out.representation.at(i) == expected.at(i));
    }
  }
  SUBCASE("parallel add with a zeroed temporal path is spatial plus residual") {
    ModelConfig cfg = tiny_config(4);
    cfg.structure = LayerStructure::parallel;
    cfg.fusion = FusionKind::add;
    DualModel m = DualModel::init(cfg, g, 4);
    STLayer& layer = m.intrinsic.layers[0];
    layer.temporal.value_w.values().setZero();
    Tensor h = random_tensor({2, 3, 4, 4}, rng);
    Tensor got = stlayer_forward(layer, h, cfg, m.cross_time);
    // rebuild the spatial half with the same parameters
    Tensor q = layer.spatial.query(h), k = layer.spatial.key(h), v = layer.spatial.value(h);
    Tensor glo = global_attention(q, k, v);
    Tensor loc = subtree_local_attention(ops::reshape(q, {2, 12, 4}),
                                         ops::reshape(k, {2, 12, 4}),
                                         ops::reshape(v, {2, 12, 4}), m.cross_time,
                                         layer.subtree);
    Tensor expected = ops::add(h, fuse_local_global(ops::reshape(loc, {2, 3, 4, 4}), glo,
                                                    layer.subtree.global));
    for (std::int64_t i = 0; i < got.numel(); ++i) {
      CHECK(got.at(i) == doctest::Approx(expected.at(i)).epsilon(1e-12));
    }
  }
  SUBCASE("every structure and fusion variant runs and differs from identity") {
    for (auto structure : {LayerStructure::sequential, LayerStructure::parallel}) {
      for (auto fusion : {FusionKind::add, FusionKind::concat, FusionKind::gate}) {
        ModelConfig cfg = tiny_config(4);
        cfg.structure = structure;
        cfg.fusion = fusion;
        DualModel m = DualModel::init(cfg, g, 5);
        Tensor h = random_tensor({1, 3, 4, 4}, rng);
        Tensor out = stlayer_forward(m.intrinsic.layers[0], h, cfg, m.cross_time);
        CHECK(out.shape() == h.shape());
        double delta = 0.0;
        for (std::int64_t i = 0; i < out.numel(); ++i) delta += std::abs(out.at(i) - h.at(i));
        CHECK(delta > 1e-6);
      }
    }
  }
  SUBCASE("unknown tags are rejected") {
    CHECK_THROWS_AS((void)structure_from_string("diagonal"), std::invalid_argument);
    CHECK_THROWS_AS((void)fusion_from_string("mean"), std::invalid_argument);
  }
}

TEST_CASE("branch readout") {
  std::mt19937_64 rng(6);
  SensorGraph g = make_path_graph(4);
  ModelConfig cfg = tiny_config(4);
  SUBCASE("node-constant inputs pool to the per-node vector") {
    DualModel m = DualModel::init(cfg, g, 7);
    // one channel value repeated across nodes at each (b,t)
    std::vector<double> data;
    std::mt19937_64 local(8);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int b = 0; b < 2; ++b) {
      for (int t = 0; t < 3; ++t) {
        const double v = dist(local);
        for (int n = 0; n < 4; ++n) data.push_back(v);
      }
    }
    Tensor x = Tensor::from_data({2, 3, 4, 1}, std::move(data));
    BranchOutputs out = branch_forward(m.intrinsic, x, cfg, m.cross_time);
    // mean over nodes of identical rows equals each row: compare pooled with a
    // manual readout of node 0
    Tensor z = out.representation;
    for (int b = 0; b < 2; ++b) {
      for (int d = 0; d < 4; ++d) {
        double manual = m.intrinsic.readout_bias.at(d);
        for (int t = 0; t < 3; ++t) {
          manual += m.intrinsic.readout_time.at(t) * z.at(((b * 3 + t) * 4 + 0) * 4 + d);
        }
        CHECK(out.pooled.at(b * 4 + d) == doctest::Approx(manual).epsilon(1e-9));
      }
    }
  }
  SUBCASE("pooled readout is invariant to node relabeling") {
    DualModel m = DualModel::init(cfg, g, 9);
    Tensor x = random_tensor({1, 3, 4, 1}, rng);
    BranchOutputs base = branch_forward(m.intrinsic, x, cfg, m.cross_time);
    // relabel nodes with a permutation, rebuild graph and inputs consistently
    std::vector<std::int64_t> perm = {2, 0, 3, 1};  // new n <- old perm[n]
    std::vector<std::int64_t> inverse(4);
    for (std::int64_t i = 0; i < 4; ++i) inverse[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i;
    std::vector<std::pair<std::int64_t, std::int64_t>> edges;
    for (auto [a, b] : g.edges) edges.push_back({inverse[static_cast<std::size_t>(a)],
                                                 inverse[static_cast<std::size_t>(b)]});
    SensorGraph g2 = SensorGraph::from_edges(4, edges);
    CrossTimeAdjacency ct2 = build_rct_adjacency(g2, cfg.input_steps, cfg.span);
    std::vector<double> moved(12);
    for (int t = 0; t < 3; ++t) {
      for (int n = 0; n < 4; ++n) {
        moved[static_cast<std::size_t>(t * 4 + n)] =
            x.at(t * 4 + perm[static_cast<std::size_t>(n)]);
      }
    }
    Tensor x2 = Tensor::from_data({1, 3, 4, 1}, std::move(moved));
    BranchOutputs permuted = branch_forward(m.intrinsic, x2, cfg, ct2);
    for (int d = 0; d < 4; ++d) {
      CHECK(permuted.pooled.at(d) == doctest::Approx(base.pooled.at(d)).epsilon(1e-9));
    }
  }
}

TEST_CASE("prototype fusion") {
  std::mt19937_64 rng(10);
  Tensor zi = random_tensor({3, 2, 2, 2}, rng);
  Tensor ze = random_tensor({3, 2, 2, 2}, rng);
  Tensor membership = one_hot_membership({3, 7, 3});
  SUBCASE("zero prototypes pass the concatenation through") {
    Tensor bank = Tensor::zeros({17, 2, 2, 2});
    Tensor fused = fuse_prototypes(zi, ze, bank, membership);
    CHECK(fused.shape() == Shape{3, 2, 2, 4});
    for (int b = 0; b < 3; ++b) {
      for (int t = 0; t < 2; ++t) {
        for (int n = 0; n < 2; ++n) {
          for (int d = 0; d < 2; ++d) {
            CHECK(fused.at(((b * 2 + t) * 2 + n) * 4 + d) == zi.at(((b * 2 + t) * 2 + n) * 2 + d));
            CHECK(fused.at(((b * 2 + t) * 2 + n) * 4 + 2 + d) ==
                  ze.at(((b * 2 + t) * 2 + n) * 2 + d));
          }
        }
      }
    }
  }
  SUBCASE("the assigned prototype lands on the intrinsic half") {
    Tensor bank = random_tensor({17, 2, 2, 2}, rng);
    Tensor fused = fuse_prototypes(zi, ze, bank, membership);
    for (int b : {0, 2}) {  // both carry pattern 3
      for (int i = 0; i < 8; ++i) {
        const int t = i / 4, n = (i / 2) % 2, d = i % 2;
        const double want = zi.at(((b * 2 + t) * 2 + n) * 2 + d) + bank.at(3 * 8 + i);
        CHECK(fused.at(((b * 2 + t) * 2 + n) * 4 + d) == doctest::Approx(want).epsilon(1e-15));
      }
    }
  }
  SUBCASE("rows that are not one-hot are rejected") {
    Tensor bad = Tensor::from_data({1, 17}, [] {
      std::vector<double> w(17, 0.0);
      w[2] = 0.5;
      w[3] = 0.5;
      return w;
    }());
    Tensor zi1 = random_tensor({1, 2, 2, 2}, rng);
    Tensor ze1 = random_tensor({1, 2, 2, 2}, rng);
    CHECK_THROWS_AS((void)fuse_prototypes(zi1, ze1, Tensor::zeros({17, 2, 2, 2}), bad),
                    std::invalid_argument);
  }
}

TEST_CASE("full forward pass") {
  std::mt19937_64 rng(11);
  SensorGraph g = make_path_graph(4);
  ModelConfig cfg = tiny_config(4);
  std::vector<int> ids = {3, 16};
  SUBCASE("deterministic under a fixed seed") {
    Tensor x = random_tensor({2, 3, 4, 1}, rng);
    DualModel a = DualModel::init(cfg, g, 42);
    DualModel b = DualModel::init(cfg, g, 42);
    ForwardOutputs fa = forward(a, x, ids);
    ForwardOutputs fb = forward(b, x, ids);
    for (std::int64_t i = 0; i < fa.prediction.numel(); ++i) {
      CHECK(fa.prediction.at(i) == fb.prediction.at(i));
    }
  }
  SUBCASE("output shape follows the contract") {
    ModelConfig wide = cfg;
    wide.input_steps = wide.output_steps = 4;
    wide.nodes = 3;
    SensorGraph g3 = make_path_graph(3);
    DualModel m = DualModel::init(wide, g3, 12);
    Tensor x = random_tensor({2, 4, 3, 1}, rng);
    ForwardOutputs out = forward(m, x, {0, 1});
    CHECK(out.prediction.shape() == Shape{2, 4, 3, 1});
    CHECK(out.g_intrinsic.shape() == Shape{2, 4});
    CHECK(out.z_environment.shape() == Shape{2, 4, 3, 4});
  }
  SUBCASE("zeroed head gives zero forecasts") {
    DualModel m = DualModel::init(cfg, g, 13);
    m.output_head.weight.values().setZero();
    m.output_head.bias.values().setZero();
    Tensor x = random_tensor({2, 3, 4, 1}, rng);
    ForwardOutputs out = forward(m, x, ids);
    for (std::int64_t i = 0; i < out.prediction.numel(); ++i) CHECK(out.prediction.at(i) == 0.0);
  }
  SUBCASE("branch parameters never alias") {
    DualModel m = DualModel::init(cfg, g, 14);
    std::set<const void*> seen;
    for (auto& [name, tensor] : m.parameters()) {
      CAPTURE(name);
      CHECK(seen.insert(tensor.node().get()).second);
    }
    // nudging an intrinsic-branch weight must leave the environment readout alone
    Tensor x = random_tensor({2, 3, 4, 1}, rng);
    ForwardOutputs before = forward(m, x, ids);
    m.intrinsic.decoder.weight.values() += 0.5;
    ForwardOutputs after = forward(m, x, ids);
    for (std::int64_t i = 0; i < before.g_environment.numel(); ++i) {
      CHECK(before.g_environment.at(i) == after.g_environment.at(i));
    }
    double moved = 0.0;
    for (std::int64_t i = 0; i < before.g_intrinsic.numel(); ++i) {
      moved += std::abs(before.g_intrinsic.at(i) - after.g_intrinsic.at(i));
    }
    CHECK(moved > 1e-9);
  }
  SUBCASE("node permutation permutes the forecasts") {
    DualModel m = DualModel::init(cfg, g, 15);
    Tensor x = random_tensor({2, 3, 4, 1}, rng);
    ForwardOutputs base = forward(m, x, ids);
    std::vector<std::int64_t> perm = {1, 3, 0, 2};
    std::vector<std::int64_t> inverse(4);
    for (std::int64_t i = 0; i < 4; ++i) inverse[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])] = i;
    std::vector<std::pair<std::int64_t, std::int64_t>> edges;
    for (auto [a, b] : g.edges) edges.push_back({inverse[static_cast<std::size_t>(a)],
                                                 inverse[static_cast<std::size_t>(b)]});
    SensorGraph g2 = SensorGraph::from_edges(4, edges);
    DualModel m2 = DualModel::init(cfg, g2, 15);  // same seed: same parameter draws
    // node-indexed parameters (the prototype bank) move with the relabeling
    for (int p = 0; p < 17; ++p) {
      for (int t = 0; t < 3; ++t) {
        for (int n = 0; n < 4; ++n) {
          for (int d = 0; d < 4; ++d) {
            m2.prototypes.values()[((p * 3 + t) * 4 + n) * 4 + d] =
                m.prototypes.at(((p * 3 + t) * 4 + perm[static_cast<std::size_t>(n)]) * 4 + d);
          }
        }
      }
    }
    std::vector<double> moved(x.numel());
    for (int b = 0; b < 2; ++b) {
      for (int t = 0; t < 3; ++t) {
        for (int n = 0; n < 4; ++n) {
          moved[static_cast<std::size_t>((b * 3 + t) * 4 + n)] =
              x.at((b * 3 + t) * 4 + perm[static_cast<std::size_t>(n)]);
        }
      }
    }
    ForwardOutputs permuted = forward(m2, Tensor::from_data({2, 3, 4, 1}, std::move(moved)), ids);
    for (int b = 0; b < 2; ++b) {
      for (int t = 0; t < 3; ++t) {
        for (int n = 0; n < 4; ++n) {
          CHECK(permuted.prediction.at((b * 3 + t) * 4 + n) ==
                doctest::Approx(base.prediction.at(
                    (b * 3 + t) * 4 + perm[static_cast<std::size_t>(n)])).epsilon(1e-9));
        }
      }
    }
  }
}

TEST_CASE("end-to-end gradients at the tiny config") {
  SensorGraph g = make_path_graph(4);
  ModelConfig cfg = tiny_config(4);
  cfg.levels = 1;
  DualModel model = DualModel::init(cfg, g, 77);
  std::mt19937_64 rng(78);
  Tensor x = random_tensor({2, 3, 4, 1}, rng);
  Tensor y = random_tensor({2, 3, 4, 1}, rng);
  std::vector<int> ids = {3, 16};
  LossWeights weights{0.05, 0.01, 0.1, 2};

  auto objective = [&](const std::vector<Tensor>&) {
    ForwardOutputs out = forward(model, x, ids);
    TotalLoss loss = total_loss(
        prediction_loss(out.prediction, y, weights.p_norm),
        filter_loss(out.g_intrinsic, out.g_environment),
        environment_loss(out.g_environment),
        dbi_loss(out.z_intrinsic, model.prototypes, ids), weights);
    return loss.total;
  };

  std::vector<Tensor> params;
  for (auto& [name, tensor] : model.parameters()) params.push_back(tensor);
  auto report = grad_check(objective, params);
  CHECK_MESSAGE(report.pass, "max rel error ", report.max_rel_error, " at ", report.worst);

  SUBCASE("input gradients also match") {
    auto from_input = [&](const std::vector<Tensor>& in) {
      ForwardOutputs out = forward(model, in[0], ids);
      return prediction_loss(out.prediction, y, 2);
    };
    auto input_report = grad_check(from_input, {x});
    CHECK_MESSAGE(input_report.pass, "max rel error ", input_report.max_rel_error);
  }
}

TEST_CASE("checkpoint round trip") {
  SensorGraph g = make_path_graph(4);
  ModelConfig cfg = tiny_config(4);
  DualModel a = DualModel::init(cfg, g, 21);
  DualModel b = DualModel::init(cfg, g, 22);  // different draws
  std::mt19937_64 rng(23);
  Tensor x = random_tensor({2, 3, 4, 1}, rng);
  std::vector<int> ids = {0, 15};

  auto pa = a.parameters();
  save_checkpoint("/tmp/stf_ckpt_test.bin", pa);
  auto pb = b.parameters();
  load_checkpoint("/tmp/stf_ckpt_test.bin", pb);

  ForwardOutputs fa = forward(a, x, ids);
  ForwardOutputs fb = forward(b, x, ids);
  for (std::int64_t i = 0; i < fa.prediction.numel(); ++i) {
    CHECK(fa.prediction.at(i) == fb.prediction.at(i));
  }

  SUBCASE("shape mismatches are rejected") {
    ModelConfig other = cfg;
    other.hidden = 8;
    DualModel c = DualModel::init(other, g, 24);
    auto pc = c.parameters();
    CHECK_THROWS_AS(load_checkpoint("/tmp/stf_ckpt_test.bin", pc), std::runtime_error);
  }
}
