#include <doctest.h>

#include <cmath>

#include "etp/autograd.hpp"
#include "etp/errors.hpp"
#include "etp/model.hpp"
#include "helpers.hpp"

using namespace etp;

namespace {

ArchSpec small_cnn() {
  ArchSpec arch;
  arch.input_shape = {1, 5, 5};
  LayerSpec conv;
  conv.kind = LayerKind::conv2d;
  conv.out = 4;
  conv.kernel = 3;
  conv.activation = Activation::relu;
  LayerSpec dense;
  dense.out = 2;
  arch.layers = {conv, dense};
  return arch;
}

}  // namespace

TEST_CASE("build an MLP") {
  const auto model = build_model(test::mlp({2, 8, 2}), 0);
  REQUIRE(model.layers.size() == 2);
  CHECK(model.layers[0].group_count() == 8);
  CHECK(model.layers[1].group_count() == 2);
  CHECK(model.layers[0].prunable);
  CHECK_FALSE(model.layers[1].prunable);
  CHECK(model.output_shape() == Shape{2});
  CHECK(parameter_count(model) == 2 * 8 + 8 + 8 * 2 + 2);
}

TEST_CASE("initialization is seeded") {
  const auto a = build_model(test::mlp({2, 8, 2}), 7);
  const auto b = build_model(test::mlp({2, 8, 2}), 7);
  const auto c = build_model(test::mlp({2, 8, 2}), 8);
  CHECK(a.layers[0].weight.data == b.layers[0].weight.data);
  CHECK(a.layers[0].weight.data != c.layers[0].weight.data);
  const double bound = std::sqrt(6.0 / 2.0);
  for (double v : a.layers[0].weight.data) CHECK(std::abs(v) <= bound);
}

TEST_CASE("conv then dense records a channel-major flatten") {
  const auto model = build_model(small_cnn(), 0);
  REQUIRE(model.flattens[1].has_value());
  const auto& fl = *model.flattens[1];
  CHECK(fl.channels == 4);
  CHECK(fl.height == 3);
  CHECK(fl.width == 3);
  CHECK(model.layers[1].input_width() == 36);
  for (std::size_t c = 0; c < 4; ++c) {
    REQUIRE(fl.channel_columns[c].size() == 9);
    for (std::size_t j = 0; j < 9; ++j) CHECK(fl.channel_columns[c][j] == c * 9 + j);
  }
}

TEST_CASE("incompatible adjacent layers") {
  auto arch = test::mlp({2, 8, 4, 2});
  arch.layers[2].in = 5;
  CHECK_THROWS_AS(build_model(arch, 0), ConstructionError);

  ModelGraph model;
  model.input_shape = {4};
  model.layers = {test::dense_layer(4, 8, std::vector<double>(32, 0.1)), test::dense_layer(2, 5, std::vector<double>(10))};
  CHECK_THROWS_AS(finalize_model(model), ConstructionError);
}

TEST_CASE("indexing") {
  const auto natural = assign_indexing(4, IndexingStrategy::natural, 0);
  CHECK(natural.assigned_indices == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(natural.pivot_index == 0);
  CHECK(natural.distances() == std::vector<std::size_t>{0, 1, 2, 3});

  const auto r1 = assign_indexing(16, IndexingStrategy::random, 42);
  const auto r2 = assign_indexing(16, IndexingStrategy::random, 42);
  CHECK(r1.assigned_indices == r2.assigned_indices);
  CHECK(r1.pivot_index == r1.assigned_indices[0]);
  CHECK(r1.distance(0) == 0);
  auto sorted = r1.assigned_indices;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);

  for (auto strategy : {IndexingStrategy::natural, IndexingStrategy::random}) {
    CHECK(assign_indexing(1, strategy, 3).distances() == std::vector<std::size_t>{0});
  }
}

TEST_CASE("distances stay below the group count") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto idx = assign_indexing(10, IndexingStrategy::random, seed);
    for (std::size_t i = 0; i < 10; ++i) {
      CHECK(idx.distance(i) < 10);
      CHECK(idx.distance(i) ==
            static_cast<std::size_t>(std::abs(static_cast<long>(idx.assigned_indices[i]) - static_cast<long>(idx.pivot_index))));
    }
  }
}

TEST_CASE("group norms") {
  CHECK(group_l2_norm(test::dense_layer(1, 2, {3, 4}), 0) == 5.0);
  CHECK_THROWS_AS(group_l2_norm(test::dense_layer(1, 2, {3, 4}), 1), IndexError);
  CHECK(group_l2_norm(test::dense_layer(1, 2, {3, 0}, {4}), 0) == 5.0);

  GroupedLayer conv;
  conv.kind = LayerKind::conv2d;
  conv.weight = Tensor({1, 2, 3, 3}, 1.0);
  CHECK(group_l2_norm(conv, 0) == doctest::Approx(std::sqrt(18.0)).epsilon(1e-15));

  ModelGraph model;
  model.input_shape = {2};
  model.layers = {test::dense_layer(2, 2, {0, 0, 1, 1}, {0, 1})};
  finalize_model(model);
  for (auto* p : parameters(model)) p->requires_grad = true;
  Tape tape;
  const auto params = bind_parameters(tape, model);
  auto n0 = group_l2_norm(params[0], 0);
  CHECK(n0.item() == 0.0);
  tape.backward(n0);
  for (double g : model.layers[0].weight.grad) CHECK(g == 0.0);
}

TEST_CASE("forward") {
  ModelGraph model;
  model.input_shape = {3};
  model.layers = {test::dense_layer(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}), test::dense_layer(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1})};
  finalize_model(model);
  const Tensor x = test::random_tensor({4, 3}, 5);
  CHECK(predict(model, x).data == x.data);
  CHECK_THROWS_AS(predict(model, Tensor({4, 2})), DimensionError);
}

TEST_CASE("coupled slices") {
  const auto mlp = build_model(test::mlp({2, 8, 4, 2}), 0);
  const auto s = coupled_slices(mlp, 0, 3);
  REQUIRE(s.size() == 1);
  CHECK(s[0].layer == 1);
  CHECK(s[0].axis == SliceAxis::dense_column);
  CHECK(s[0].indices == std::vector<std::size_t>{3});
  CHECK(coupled_slices(mlp, 2, 0).empty());
  CHECK_THROWS_AS(coupled_slices(mlp, 0, 8), IndexError);
  CHECK_THROWS_AS(coupled_slices(mlp, 5, 0), IndexError);

  const auto cnn = build_model(small_cnn(), 0);
  const auto c = coupled_slices(cnn, 0, 2);
  REQUIRE(c.size() == 1);
  CHECK(c[0].indices == std::vector<std::size_t>{18, 19, 20, 21, 22, 23, 24, 25, 26});
}

TEST_CASE("conv to conv coupling slices input channels") {
  ArchSpec arch;
  arch.input_shape = {2, 6, 6};
  LayerSpec c1;
  c1.kind = LayerKind::conv2d;
  c1.out = 3;
  c1.padding = 1;
  LayerSpec c2 = c1;
  c2.out = 2;
  LayerSpec d;
  d.out = 2;
  arch.layers = {c1, c2, d};
  const auto model = build_model(arch, 1);
  const auto s = coupled_slices(model, 0, 1);
  REQUIRE(s.size() == 1);
  CHECK(s[0].axis == SliceAxis::conv_input_channel);
  CHECK(s[0].indices == std::vector<std::size_t>{1});
}

TEST_CASE("zeroed group matches the model without it") {
  auto model = build_model(test::mlp({3, 6, 4, 2}), 4);
  auto& l0 = model.layers[0];
  const std::size_t g = 2;
  for (std::size_t j = 0; j < l0.input_width(); ++j) l0.weight.data[g * l0.input_width() + j] = 0.0;
  l0.bias.data[g] = 0.0;

  ModelGraph reduced = model;
  auto& r0 = reduced.layers[0];
  std::vector<double> w0, b0;
  for (std::size_t i = 0; i < 6; ++i) {
    if (i == g) continue;
    for (std::size_t j = 0; j < 3; ++j) w0.push_back(l0.weight.data[i * 3 + j]);
    b0.push_back(l0.bias.data[i]);
  }
  r0.weight = Tensor({5, 3}, w0);
  r0.bias = Tensor({5}, b0);
  auto& r1 = reduced.layers[1];
  std::vector<double> w1;
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      if (j != g) w1.push_back(model.layers[1].weight.data[i * 6 + j]);
    }
  }
  r1.weight = Tensor({4, 5}, w1);
  finalize_model(reduced);

  const Tensor x = test::random_tensor({10, 3}, 9);
  const Tensor a = predict(model, x), b = predict(reduced, x);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(std::abs(a.data[i] - b.data[i]) <= 1e-12);
}
