#include <doctest.h>

#include <cmath>

#include "etp/autograd.hpp"
#include "etp/errors.hpp"
#include "etp/gradcheck.hpp"
#include "etp/regularizer.hpp"
#include "helpers.hpp"

using namespace etp;

namespace {

// Three groups with norms 1, 2, 3.
GroupedLayer three_groups() { return test::dense_layer(3, 2, {1, 0, 0, 2, 3, 0}); }

RegularizerSpec spec_of(Scheme scheme, std::optional<double> base = std::nullopt) {
  RegularizerSpec spec;
  spec.scheme = scheme;
  spec.reg_coefficient = 1.0;
  spec.exp_base = base;
  return spec;
}

}  // namespace

TEST_CASE("exponential base rule") {
  CHECK(resolve_exp_base(5) == doctest::Approx(std::exp(1.0)).epsilon(1e-15));
  CHECK(std::abs(resolve_exp_base(256) - std::exp(5.0 / 256.0)) <= 1e-12);
  CHECK(resolve_exp_base(256) == doctest::Approx(1.019723).epsilon(1e-6));
  CHECK(resolve_exp_base(1) == doctest::Approx(148.4132).epsilon(1e-6));
  CHECK_THROWS_AS(resolve_exp_base(0), ContractError);

  const auto idx = assign_indexing(1, IndexingStrategy::natural, 0);
  CHECK(layer_distance_weights(spec_of(Scheme::exponential_etp), idx) == std::vector<double>{1.0});

  const auto wide = layer_distance_weights(spec_of(Scheme::exponential_etp), assign_indexing(256, IndexingStrategy::natural, 0));
  CHECK(std::abs(wide.back() / wide.front() - std::exp(5.0 * 255.0 / 256.0)) <= 1e-9);
}

TEST_CASE("distance weights") {
  CHECK(distance_weight(spec_of(Scheme::linear_torque), 0) == 0.0);
  CHECK(distance_weight(spec_of(Scheme::linear_torque), 7) == 7.0);
  for (double base : {1.01, 2.0, 148.0}) CHECK(distance_weight(spec_of(Scheme::exponential_etp, base), 0) == 1.0);
  CHECK(distance_weight(spec_of(Scheme::exponential_etp, 2.0), 3) == 8.0);
  CHECK(distance_weight(spec_of(Scheme::l1), 9) == 1.0);
  CHECK(distance_weight(spec_of(Scheme::none), 9) == 0.0);
  CHECK_THROWS_AS(distance_weight(spec_of(Scheme::exponential_etp), 1), ContractError);

  auto h = spec_of(Scheme::heaviside);
  h.heaviside_force = 10;
  h.heaviside_threshold = 3;
  CHECK(distance_weight(h, 2) == 0.0);
  CHECK(distance_weight(h, 3) == 10.0);
}

TEST_CASE("layer penalty") {
  const auto layer = three_groups();
  const auto idx = assign_indexing(3, IndexingStrategy::natural, 0);
  CHECK(std::abs(penalty_value(spec_of(Scheme::exponential_etp, 2.0), layer, idx) - 17.0) <= 1e-9);
  CHECK(std::abs(penalty_value(spec_of(Scheme::linear_torque), layer, idx) - 8.0) <= 1e-9);
  CHECK(penalty_value(spec_of(Scheme::l1), layer, idx) == doctest::Approx(6.0));

  const auto zeros = test::dense_layer(3, 2, std::vector<double>(6, 0.0));
  for (auto s : {Scheme::linear_torque, Scheme::exponential_etp, Scheme::l1, Scheme::none}) {
    CHECK(penalty_value(spec_of(s), zeros, idx) == 0.0);
  }

  ModelGraph model;
  model.input_shape = {2};
  model.layers = {layer};
  finalize_model(model);
  Tape tape;
  const auto params = bind_constants(tape, model);
  CHECK(penalty(spec_of(Scheme::exponential_etp, 2.0), params[0], idx).item() == doctest::Approx(17.0));
}

TEST_CASE("heaviside reference") {
  const auto layer = three_groups();
  const auto idx = assign_indexing(3, IndexingStrategy::natural, 0);
  CHECK(heaviside_reference_penalty(layer, idx, 2, 5) == doctest::Approx(15.0));
  CHECK(heaviside_reference_penalty(layer, idx, 3, 5) == 0.0);
  CHECK(heaviside_reference_penalty(layer, idx, 0, 5) == doctest::Approx(30.0));
}

TEST_CASE("total loss composition") {
  ModelGraph model;
  model.input_shape = {2};
  model.layers = {three_groups()};
  model.layers[0].prunable = true;
  finalize_model(model);
  const auto idx = assign_model_indexing(model, IndexingStrategy::natural, 0);

  Tape tape;
  const auto params = bind_constants(tape, model);
  const Var task = tape.constant(Tensor::scalar(1.0));
  auto spec = spec_of(Scheme::exponential_etp, 2.0);
  spec.reg_coefficient = 1e-3;
  CHECK(total_loss(task, spec, model, params, idx).item() == doctest::Approx(1.017).epsilon(1e-12));
  spec.reg_coefficient = 0.0;
  CHECK(total_loss(task, spec, model, params, idx).id() == task.id());
  CHECK(total_loss(task, spec_of(Scheme::none), model, params, idx).id() == task.id());
}

TEST_CASE("penalty gradient is weight(d) w / |w| per group") {
  ModelGraph model;
  model.input_shape = {3};
  model.layers = {test::dense_layer(4, 3, test::random_tensor({12}, 5).data, {0.1, -0.2, 0.3, 0.4})};
  model.layers[0].prunable = true;
  finalize_model(model);
  auto& layer = model.layers[0];
  layer.weight.requires_grad = layer.bias.requires_grad = true;
  const auto idx = assign_model_indexing(model, IndexingStrategy::natural, 0);
  const auto spec = spec_of(Scheme::exponential_etp);
  Tape tape;
  const auto params = bind_parameters(tape, model);
  tape.backward(model_penalty(spec, model, params, idx));
  const auto weights = layer_distance_weights(spec, idx[0]);
  for (std::size_t i = 0; i < 4; ++i) {
    const double n = group_l2_norm(layer, i);
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(layer.weight.grad[i * 3 + j] == doctest::Approx(weights[i] * layer.weight.data[i * 3 + j] / n).epsilon(1e-12));
    }
    CHECK(layer.bias.grad[i] == doctest::Approx(weights[i] * layer.bias.data[i] / n).epsilon(1e-12));
  }
}

TEST_CASE("random indexing only permutes the weights") {
  const auto layer = test::dense_layer(5, 1, {1, 2, 3, 4, 5});
  const auto spec = spec_of(Scheme::linear_torque);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto idx = assign_indexing(5, IndexingStrategy::random, seed);
    double expected = 0.0;
    for (std::size_t i = 0; i < 5; ++i) expected += static_cast<double>(i + 1) * static_cast<double>(idx.distance(i));
    CHECK(penalty_value(spec, layer, idx) == doctest::Approx(expected));
  }
}

TEST_CASE("scheme names") {
  for (auto s : {Scheme::none, Scheme::linear_torque, Scheme::heaviside, Scheme::exponential_etp, Scheme::l1}) {
    CHECK(parse_scheme(to_string(s)) == s);
  }
  CHECK_THROWS_AS(parse_scheme("cubic"), ConfigError);
}
