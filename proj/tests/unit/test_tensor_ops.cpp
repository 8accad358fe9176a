#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "dsk/checkpoint.hpp"
#include "dsk/ops.hpp"
#include "support.hpp"

using namespace dsk;
using dsk::testing::check_gradients;
using dsk::testing::random_tensor;

namespace {

// Contract each op's output with a fixed random vector so every output
// element contributes to the scalar being differentiated.
Tensor contract(const Tensor& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  return ops::sum(ops::mul(y, random_tensor(y.shape(), rng)));
}

constexpr double kTol = 1e-6;

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("shape mismatch is reported with both shapes") {
    Tensor a({2, 3}), b({3, 2});
    try {
      ops::add(a, b);
      FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2, 3]") != std::string::npos);
      CHECK(msg.find("[3, 2]") != std::string::npos);
    }
  }

  TEST_CASE("untracked inputs produce untracked outputs") {
    Rng rng(1);
    const Tensor x = random_tensor({4}, rng);
    CHECK_FALSE(ops::gelu(x).tracked());
  }

  TEST_CASE("gradient of a leaf not on the loss path is zero") {
    Tape tape;
    const Tensor a = tape.watch(Tensor({2}, {1.0, 2.0}));
    const Tensor b = tape.watch(Tensor({2}, {3.0, 4.0}));
    const auto g = tape.backward(ops::sum_sq(a));
    CHECK(g.of(b).empty());
    CHECK(g.dense(b) == std::vector<double>{0.0, 0.0});
    CHECK(g.dense(a) == std::vector<double>{2.0, 4.0});
  }

  TEST_CASE("elementwise ops match finite differences") {
    Rng rng(2);
    const std::vector<Tensor> in = {random_tensor({3, 5}, rng), random_tensor({3, 5}, rng)};
    auto check = [&](auto&& fn) {
      const auto r = check_gradients([&](const std::vector<Tensor>& v) { return contract(fn(v)); }, in, 10, rng);
      CHECK(r.max_rel_error < kTol);
    };
    check([](const std::vector<Tensor>& v) { return ops::add(v[0], v[1]); });
    check([](const std::vector<Tensor>& v) { return ops::sub(v[0], v[1]); });
    check([](const std::vector<Tensor>& v) { return ops::mul(v[0], v[1]); });
    check([](const std::vector<Tensor>& v) { return ops::scale(v[0], -1.7); });
    check([](const std::vector<Tensor>& v) { return ops::add_scalar(v[1], 0.3); });
    check([](const std::vector<Tensor>& v) { return ops::gelu(v[0]); });
  }

  TEST_CASE("scalar broadcasting matches finite differences") {
    Rng rng(3);
    const std::vector<Tensor> in = {Tensor::scalar(0.7), random_tensor({6}, rng)};
    const auto r = check_gradients(
        [](const std::vector<Tensor>& v) { return contract(ops::mul(v[0], ops::add(v[1], v[0]))); }, in, 10, rng);
    CHECK(r.max_rel_error < kTol);
  }

  TEST_CASE("reductions match finite differences") {
    Rng rng(4);
    const std::vector<Tensor> in = {random_tensor({4, 4}, rng)};
    for (auto fn : {&ops::sum, &ops::mean, &ops::sum_sq}) {
      const auto r = check_gradients([&](const std::vector<Tensor>& v) { return fn(v[0]); }, in, 10, rng);
      CHECK(r.max_rel_error < kTol);
    }
  }

  TEST_CASE("gelu values") {
    const Tensor y = ops::gelu(Tensor({3}, {0.0, 1.0, -1.0}));
    CHECK(y[0] == doctest::Approx(0.0));
    CHECK(y[1] == doctest::Approx(0.8413447460685429).epsilon(1e-14));
    CHECK(y[2] == doctest::Approx(-0.15865525393145707).epsilon(1e-14));
  }

  TEST_CASE("conv1d_circular against a direct sum") {
    Rng rng(5);
    const Tensor x = random_tensor({2, 8}, rng), w = random_tensor({3, 2, 3}, rng), b = random_tensor({3}, rng);
    for (std::size_t stride : {1u, 2u}) {
      const Tensor y = ops::conv1d_circular(x, w, b, stride);
      REQUIRE(y.shape() == Shape{3, 8 / stride});
      for (std::size_t o = 0; o < 3; ++o) {
        for (std::size_t l = 0; l < 8 / stride; ++l) {
          double s = b[o];
          for (std::size_t i = 0; i < 2; ++i) {
            for (std::size_t k = 0; k < 3; ++k) {
              s += w[(o * 2 + i) * 3 + k] * x[i * 8 + (l * stride + k + 8 - 1) % 8];
            }
          }
          CHECK(y[o * (8 / stride) + l] == doctest::Approx(s).epsilon(1e-13));
        }
      }
    }
  }

  TEST_CASE("conv1d_circular gradients") {
    Rng rng(6);
    for (std::size_t stride : {1u, 2u}) {
      for (std::size_t k : {1u, 3u, 5u}) {
        const std::vector<Tensor> in = {random_tensor({3, 12}, rng), random_tensor({4, 3, k}, rng),
                                        random_tensor({4}, rng)};
        const auto r = check_gradients(
            [&](const std::vector<Tensor>& v) { return contract(ops::conv1d_circular(v[0], v[1], v[2], stride)); },
            in, 12, rng);
        CHECK(r.max_rel_error < kTol);
      }
    }
  }

  TEST_CASE("group_norm standardizes each group and has correct gradients") {
    Rng rng(7);
    const Tensor x = random_tensor({4, 6}, rng, 3.0);
    const Tensor ones({4}, std::vector<double>(4, 1.0)), zeros({4});
    const Tensor y = ops::group_norm(x, 2, ones, zeros);
    for (std::size_t g = 0; g < 2; ++g) {
      double m = 0.0, v = 0.0;
      for (std::size_t i = 0; i < 12; ++i) m += y[g * 12 + i];
      m /= 12.0;
      for (std::size_t i = 0; i < 12; ++i) v += (y[g * 12 + i] - m) * (y[g * 12 + i] - m);
      CHECK(m == doctest::Approx(0.0).epsilon(1e-12));
      CHECK(v / 12.0 == doctest::Approx(1.0).epsilon(1e-5));
    }
    const std::vector<Tensor> in = {x, random_tensor({4}, rng), random_tensor({4}, rng)};
    const auto r = check_gradients(
        [](const std::vector<Tensor>& v) { return contract(ops::group_norm(v[0], 2, v[1], v[2])); }, in, 10, rng);
    CHECK(r.max_rel_error < kTol);
  }

  TEST_CASE("shape ops match finite differences") {
    Rng rng(8);
    const std::vector<Tensor> in = {random_tensor({2, 5}, rng), random_tensor({3, 5}, rng), random_tensor({2}, rng),
                                    random_tensor({4, 3}, rng), random_tensor({3}, rng), random_tensor({4}, rng)};
    const std::vector<std::size_t> idx = {0, 3, 3, 9, 4};
    const auto r = check_gradients(
        [&](const std::vector<Tensor>& v) {
          Tensor t = ops::add_channel_shift(v[0], v[2]);
          t = ops::concat_channels(t, v[1]);
          t = ops::upsample_nearest(t, 2);
          Tensor lin = ops::linear(v[3], v[4], v[5]);
          Tensor flat = ops::reshape(t, {50});
          return ops::add(contract(ops::gather(flat, idx)), contract(lin, 5));
        },
        in, 10, rng);
    CHECK(r.max_rel_error < kTol);
    CHECK(r.probes == 60);
  }

  TEST_CASE("checkpoint round trip is exact") {
    Rng rng(9);
    ParameterSet p;
    p.emplace("a.w", random_tensor({2, 3, 4}, rng));
    p.emplace("b", random_tensor({5}, rng));
    const auto back = decode_checkpoint(encode_checkpoint(p));
    REQUIRE(back.size() == 2);
    CHECK(back.at("a.w").shape() == Shape{2, 3, 4});
    CHECK(back.at("a.w").data() == p.at("a.w").data());
    CHECK(back.at("b").data() == p.at("b").data());
  }

  TEST_CASE("truncated checkpoint is rejected") {
    ParameterSet p;
    p.emplace("x", Tensor({3}, {1, 2, 3}));
    auto bytes = encode_checkpoint(p);
    bytes.resize(bytes.size() - 4);
    CHECK_THROWS(decode_checkpoint(bytes));
  }
}
