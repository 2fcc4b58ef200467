// Copyright 2026 The exsum Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "exsum/nn.hpp"
#include "exsum/optimizer.hpp"
#include "exsum/tensor.hpp"
#include "support.hpp"

using namespace exsum;
using Catch::Approx;
using exsum_test::grad_check;

namespace {

Tensor random_param(Shape shape, Rng& rng, double scale = 1.0) {
  std::vector<double> vals(shape_size(shape));
  for (auto& v : vals) v = rng.uniform(-scale, scale);
  return Tensor::param(std::move(shape), std::move(vals));
}

}  // namespace

TEST_CASE("softmax of a symmetric row is uniform") {
  const Tensor x = Tensor::constant({1, 2}, {0.0, 0.0});
  const Tensor y = softmax(x);
  REQUIRE(y.values()[0] == Approx(0.5).margin(1e-15));
  REQUIRE(y.values()[1] == Approx(0.5).margin(1e-15));
}

TEST_CASE("softmax rows sum to one within 1e-12") {
  Rng rng(3);
  Tensor x = random_param({6, 9}, rng, 4.0);
  const Tensor y = softmax(x);
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 9; ++j) s += y.values()[i * 9 + j];
    REQUIRE(s == Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("embedding lookup of id 0 in the identity table is e0") {
  const Tensor table =
      Tensor::constant({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor out = embedding_lookup(table, {0});
  REQUIRE(out.values() == std::vector<double>{1, 0, 0});
}

TEST_CASE("cross entropy with saturated logits approaches zero") {
  // Logits massively favor the target at every position.
  Tensor logits = Tensor::constant({2, 3}, {50, 0, 0, 0, 0, 50});
  const Tensor loss = cross_entropy(logits, {0, 2}, /*pad_id=*/-1);
  REQUIRE(loss.item() == Approx(0.0).margin(1e-9));
}

TEST_CASE("cross entropy of uniform logits is log vocab size") {
  Tensor logits = Tensor::constant({3, 7}, std::vector<double>(21, 0.25));
  const Tensor loss = cross_entropy(logits, {1, 2, 3}, -1);
  REQUIRE(loss.item() == Approx(std::log(7.0)).margin(1e-12));
}

TEST_CASE("cross entropy ignores pad positions") {
  // Position 1 carries a wrong, high-loss target but is padded out.
  Tensor l2 = Tensor::constant({2, 3}, {50, 0, 0, 7, 7, 7});
  const Tensor loss = cross_entropy(l2, {0, 2}, /*pad_id=*/2);
  REQUIRE(loss.item() == Approx(0.0).margin(1e-9));
  REQUIRE_THROWS_AS(cross_entropy(l2, {2, 2}, 2), ShapeError);
}

TEST_CASE("backward of sum gives all-ones gradient") {
  Rng rng(5);
  Tensor x = random_param({3, 4}, rng);
  sum_all(x).backward();
  for (double g : x.grad()) REQUIRE(g == 1.0);
}

TEST_CASE("backward of x*x at x=3 gives 6") {
  Tensor x = Tensor::param({1}, {3.0});
  mul(x, x).backward();
  REQUIRE(x.grad()[0] == Approx(6.0));
}

TEST_CASE("backward requires a scalar") {
  Tensor x = Tensor::param({2}, {1.0, 2.0});
  REQUIRE_THROWS_AS(x.backward(), ShapeError);
}

TEST_CASE("repeated backward without zeroing accumulates") {
  Tensor x = Tensor::param({1}, {3.0});
  const Tensor y = mul(x, x);
  y.backward();
  y.backward();
  REQUIRE(x.grad()[0] == Approx(12.0));
  x.zero_grad();
  REQUIRE(x.grad()[0] == 0.0);
}

TEST_CASE("shape mismatches name the op") {
  Tensor a = Tensor::param({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::param({2, 2}, {1, 2, 3, 4});
  REQUIRE_THROWS_WITH(add(a, b), Catch::Matchers::ContainsSubstring("add"));
  REQUIRE_THROWS_WITH(matmul(a, a),
                      Catch::Matchers::ContainsSubstring("matmul"));
}

TEST_CASE("finite-difference checks per op") {
  Rng rng(11);

  SECTION("add/sub/mul/scale/relu chain") {
    Tensor a = random_param({3, 4}, rng);
    Tensor b = random_param({3, 4}, rng);
    auto f = [&] {
      return sum_all(mul(relu(add(a, scale(b, 0.7))), sub(a, b)));
    };
    auto res = grad_check(f, {a, b});
    INFO(res.worst);
    REQUIRE(res.ok);
  }

  SECTION("matmul and matmul_nt") {
    Tensor a = random_param({3, 5}, rng);
    Tensor b = random_param({5, 4}, rng);
    Tensor c = random_param({2, 5}, rng);
    auto f = [&] { return sum_all(matmul(a, b)); };
    REQUIRE(grad_check(f, {a, b}).ok);
    auto g = [&] { return sum_all(matmul_nt(a, c)); };
    REQUIRE(grad_check(g, {a, c}).ok);
  }

  SECTION("add_rowvec") {
    Tensor a = random_param({4, 3}, rng);
    Tensor v = random_param({3}, rng);
    auto f = [&] { return sum_all(mul(add_rowvec(a, v), a)); };
    REQUIRE(grad_check(f, {a, v}).ok);
  }

  SECTION("softmax") {
    Tensor a = random_param({3, 6}, rng, 2.0);
    Tensor w = random_param({3, 6}, rng);
    auto f = [&] { return sum_all(mul(softmax(a), w)); };
    auto res = grad_check(f, {a});
    INFO(res.worst);
    REQUIRE(res.ok);
  }

  SECTION("masked softmax") {
    Tensor a = random_param({4, 4}, rng, 2.0);
    Tensor w = random_param({4, 4}, rng);
    const auto mask = causal_mask(4);
    auto f = [&] { return sum_all(mul(softmax(a, &mask), w)); };
    REQUIRE(grad_check(f, {a}).ok);
  }

  SECTION("layer_norm") {
    Tensor a = random_param({3, 8}, rng, 2.0);
    Tensor gain = random_param({8}, rng);
    Tensor bias = random_param({8}, rng);
    Tensor w = random_param({3, 8}, rng);
    auto f = [&] { return sum_all(mul(layer_norm(a, gain, bias), w)); };
    auto res = grad_check(f, {a, gain, bias});
    INFO(res.worst);
    REQUIRE(res.ok);
  }

  SECTION("embedding_lookup with repeated ids") {
    Tensor table = random_param({5, 3}, rng);
    Tensor w = random_param({4, 3}, rng);
    auto f = [&] {
      return sum_all(mul(embedding_lookup(table, {1, 3, 1, 0}), w));
    };
    REQUIRE(grad_check(f, {table}).ok);
  }

  SECTION("take_row / slice_cols / concat_cols") {
    Tensor a = random_param({4, 6}, rng);
    auto f = [&] {
      const Tensor left = slice_cols(a, 0, 3);
      const Tensor right = slice_cols(a, 3, 3);
      const Tensor cat = concat_cols({right, left});
      return sum_all(mul(take_row(cat, 2), take_row(cat, 2)));
    };
    REQUIRE(grad_check(f, {a}).ok);
  }

  SECTION("stack_scalars and log_sum_exp") {
    Tensor a = random_param({1}, rng, 2.0);
    Tensor b = random_param({1}, rng, 2.0);
    Tensor c = random_param({1}, rng, 2.0);
    auto f = [&] { return log_sum_exp(stack_scalars({a, b, c})); };
    REQUIRE(grad_check(f, {a, b, c}).ok);
  }

  SECTION("cosine_similarity") {
    Tensor a = random_param({6}, rng);
    Tensor b = random_param({6}, rng);
    auto f = [&] { return cosine_similarity(a, b); };
    auto res = grad_check(f, {a, b});
    INFO(res.worst);
    REQUIRE(res.ok);
  }

  SECTION("cross_entropy") {
    Tensor logits = random_param({4, 5}, rng, 2.0);
    auto f = [&] { return cross_entropy(logits, {1, 4, 0, 2}, -1); };
    REQUIRE(grad_check(f, {logits}).ok);
  }

  SECTION("mean_all") {
    Tensor a = random_param({2, 3}, rng);
    auto f = [&] { return mean_all(mul(a, a)); };
    REQUIRE(grad_check(f, {a}).ok);
  }
}

TEST_CASE("two-layer network matches finite differences at 1e-4") {
  Rng rng(29);
  Tensor x = Tensor::constant({4, 6}, normal_init(24, 1.0, rng));
  Tensor w1 = random_param({6, 8}, rng, 0.5);
  Tensor b1 = random_param({8}, rng, 0.1);
  Tensor w2 = random_param({8, 3}, rng, 0.5);
  Tensor b2 = random_param({3}, rng, 0.1);
  auto f = [&] {
    const Tensor h = relu(add_rowvec(matmul(x, w1), b1));
    const Tensor logits = add_rowvec(matmul(h, w2), b2);
    return cross_entropy(logits, {0, 2, 1, 1}, -1);
  };
  auto res = grad_check(f, {w1, b1, w2, b2}, 1e-5, 1e-4);
  INFO(res.worst);
  REQUIRE(res.ok);
  REQUIRE(res.max_err < 1e-4);
}

TEST_CASE("attention weights form a distribution and backprop cleanly") {
  Rng rng(31);
  ParamStore store;
  auto mha = MultiHeadAttention::create(store, "attn", 8, 2, rng);
  Tensor x = random_param({5, 8}, rng, 0.8);
  AttnRecord rec;
  const auto mask = causal_mask(5);
  const Tensor out = mha.forward(x, x, x, &mask, &rec);
  REQUIRE(out.rows() == 5);
  REQUIRE(out.cols() == 8);
  double total = 0;
  for (double v : rec.last_query_row) total += v;
  REQUIRE(total == Approx(1.0).margin(1e-12));

  auto params = store.all();
  params.push_back(x);
  const Tensor w = Tensor::constant({5, 8}, normal_init(40, 1.0, rng));
  auto f = [&] { return sum_all(mul(mha.forward(x, x, x, &mask), w)); };
  auto res = grad_check(f, params, 1e-5, 1e-4, 8);
  INFO(res.worst);
  REQUIRE(res.ok);
}

TEST_CASE("dropout") {
  Rng init(1);
  Tensor x = random_param({10, 10}, init);

  SECTION("ratio zero is identity") {
    Rng rng(2);
    const Tensor y = dropout(x, 0.0, rng);
    REQUIRE(y.same_storage(x));
  }

  SECTION("seeded mask is reproducible and scales kept values") {
    Rng r1(7), r2(7);
    const Tensor y1 = dropout(x, 0.4, r1);
    const Tensor y2 = dropout(x, 0.4, r2);
    REQUIRE(y1.values() == y2.values());
    std::size_t zeros = 0;
    for (std::size_t i = 0; i < y1.size(); ++i) {
      if (y1.values()[i] == 0.0) {
        ++zeros;
      } else {
        REQUIRE(y1.values()[i] == Approx(x.values()[i] / 0.6));
      }
    }
    REQUIRE(zeros > 10);
    REQUIRE(zeros < 90);
  }
}

TEST_CASE("no-grad mode records nothing") {
  Tensor x = Tensor::param({1}, {2.0});
  Tensor y;
  {
    NoGradGuard guard;
    y = mul(x, x);
  }
  REQUIRE_FALSE(y.requires_grad());
  REQUIRE(y.item() == 4.0);
}

TEST_CASE("warmup schedule peaks at the configured maximum") {
  AdamConfig cfg;
  cfg.lr_max = 1e-3;
  cfg.warmup_steps = 100;
  REQUIRE(warmup_lr(cfg, 100) == Approx(1e-3).margin(1e-15));
  double prev = 0.0;
  for (std::size_t s = 1; s < 100; ++s) {
    const double lr = warmup_lr(cfg, s);
    REQUIRE(lr > prev);
    prev = lr;
  }
  REQUIRE(warmup_lr(cfg, 400) == Approx(1e-3 * std::sqrt(100.0 / 400.0)));
  REQUIRE(warmup_lr(cfg, 101) < 1e-3);
}

TEST_CASE("adam step descends on x^2 and zeroes gradients") {
  Tensor x = Tensor::param({1}, {1.0});
  AdamConfig cfg;
  cfg.lr_max = 0.1;
  cfg.warmup_steps = 1;
  Adam adam({x}, cfg);
  mul(x, x).backward();
  REQUIRE(x.grad()[0] == Approx(2.0));
  adam.step();
  REQUIRE(x.values()[0] < 1.0);
  REQUIRE(x.values()[0] > 0.0);
  REQUIRE(x.grad()[0] == 0.0);
  REQUIRE(adam.step_count() == 1);
}

TEST_CASE("adam rejects tensors without gradient buffers") {
  Tensor c = Tensor::constant({1}, {1.0});
  REQUIRE_THROWS_AS(Adam({c}, AdamConfig{}), ShapeError);
}

TEST_CASE("fixed seed gives bit-identical training trajectories") {
  auto run = [] {
    Rng rng(99);
    Tensor w = Tensor::param({4, 4}, normal_init(16, 0.5, rng));
    Tensor x = Tensor::constant({2, 4}, normal_init(8, 1.0, rng));
    AdamConfig cfg;
    cfg.lr_max = 1e-2;
    cfg.warmup_steps = 5;
    Adam adam({w}, cfg);
    for (int i = 0; i < 20; ++i) {
      const Tensor h = relu(matmul(x, w));
      sum_all(mul(h, h)).backward();
      adam.step();
    }
    return w.values();
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a == b);
}

TEST_CASE("checkpoint save/load round-trips bit-exactly") {
  Rng rng(13);
  ParamStore store;
  store.add("emb", {4, 3}, normal_init(12, 0.02, rng));
  store.add("w", {3, 3}, xavier_uniform(3, 3, rng));
  const auto dir = exsum_test::temp_dir("ckpt");
  nlohmann::json meta;
  meta["kind"] = "unit";
  meta["fingerprint"] = "deadbeef";
  save_checkpoint(store, meta, dir / "m.ckpt");

  ParamStore loaded;
  loaded.add("emb", {4, 3}, const_init(12, 0.0));
  loaded.add("w", {3, 3}, const_init(9, 0.0));
  const auto got_meta = load_checkpoint(loaded, dir / "m.ckpt");
  REQUIRE(got_meta["kind"] == "unit");
  REQUIRE(loaded.get("emb").values() == store.get("emb").values());
  REQUIRE(loaded.get("w").values() == store.get("w").values());

  ParamStore wrong;
  wrong.add("emb", {4, 2}, const_init(8, 0.0));
  wrong.add("w", {3, 3}, const_init(9, 0.0));
  REQUIRE_THROWS_AS(load_checkpoint(wrong, dir / "m.ckpt"), DataError);
  std::filesystem::remove_all(dir);
}
