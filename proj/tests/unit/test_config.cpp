#include <doctest.h>

#include <filesystem>

#include "dsk/binary_io.hpp"
#include "dsk/config.hpp"
#include "dsk/dataset.hpp"
#include "dsk/errors.hpp"

using namespace dsk;

namespace {

std::string error_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("minimal document takes defaults") {
    const auto c = parse_config(R"({"version": 1})");
    CHECK(c.hf.n_grid == 192);
    CHECK(c.lf.n_grid == 48);
    CHECK(c.d_prime == 24);
    CHECK(c.ot.epsilon == 1e-3);
    CHECK(c.train.ema_decay == 0.95);
    CHECK(c.mask().stride == 8);
  }

  TEST_CASE("version is required and checked") {
    CHECK(error_of(R"({"seed": 1})").find("version") != std::string::npos);
    CHECK(error_of(R"({"version": 2})").find("version 2") != std::string::npos);
    CHECK(!error_of("{not json").empty());
  }

  TEST_CASE("unknown keys are rejected with their path") {
    CHECK(error_of(R"({"version": 1, "colour": 3})").find("colour") != std::string::npos);
    CHECK(error_of(R"({"version": 1, "train": {"unet": {"depth": 3}}})").find("train.unet.depth") !=
          std::string::npos);
  }

  TEST_CASE("type mismatches name the field") {
    CHECK(error_of(R"({"version": 1, "ot": {"epsilon": "small"}})").find("ot.epsilon") != std::string::npos);
    CHECK(error_of(R"({"version": 1, "seed": -4})").find("seed") != std::string::npos);
    CHECK(error_of(R"({"version": 1, "sampling": {"terminal_denoise": 1}})").find("sampling.terminal_denoise") !=
          std::string::npos);
  }

  TEST_CASE("cross-field validation") {
    CHECK(!error_of(R"({"version": 1, "selection": {"d_prime": 25}})").empty());
    CHECK(!error_of(R"({"version": 1, "train": {"unet": {"length": 96}}})").empty());
    CHECK(!error_of(R"({"version": 1, "ot": {"n_samples": 100000}})").empty());
    CHECK(!error_of(R"({"version": 1, "train": {"unet": {"channels": [16, 30]}}})").empty());
  }

  TEST_CASE("hash is stable, canonical and sensitive to every field") {
    const auto a = parse_config(R"({"version": 1, "seed": 5})");
    const auto b = parse_config(R"({"seed": 5, "version": 1, "ot": {"epsilon": 0.001}})");
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    CHECK(config_hash(parse_config(canonical_json(a))) == config_hash(a));
    CHECK(config_hash(parse_config(R"({"version": 1, "seed": 6})")) != config_hash(a));
    CHECK(config_hash(parse_config(R"({"version": 1, "seed": 5, "sampling": {"steps": 100}})")) != config_hash(a));
  }

  TEST_CASE("dataset file round trip and corruption") {
    SnapshotDataset ds(3, {1, 2, 3, 4, 5, 6});
    ds.metadata = R"({"fidelity":"high"})";
    const auto back = decode_dataset(encode_dataset(ds));
    CHECK(back.n_grid == 3);
    CHECK(back.size() == 2);
    CHECK(back.values == ds.values);
    CHECK(back.metadata == ds.metadata);
    auto bytes = encode_dataset(ds);
    CHECK_THROWS(decode_dataset(bytes.substr(0, bytes.size() - 3)));
    bytes[0] = 'X';
    CHECK_THROWS(decode_dataset(bytes));
    CHECK_THROWS(decode_dataset(encode_dataset(ds) + "extra"));
  }

  TEST_CASE("missing files are reported by path") {
    try {
      io::read_file("/nonexistent/dir/file.bin");
      FAIL("expected an exception");
    } catch (const std::exception& e) {
      CHECK(std::string(e.what()).find("/nonexistent/dir/file.bin") != std::string::npos);
    }
  }
}
