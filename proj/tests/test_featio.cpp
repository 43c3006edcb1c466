#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "support.hpp"
#include "tcape/featio.hpp"

using namespace tcape;
using namespace tcape::featio;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "tcape_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("container round trip is bit exact") {
  CounterRng rng(9);
  const Tensor t = testing::random_tensor({4, 8}, rng);
  CHECK(decode(encode(t)) == t);
  const auto dir = scratch("roundtrip");
  write_tensor(dir / "a.tfv", t);
  CHECK(read_tensor(dir / "a.tfv") == t);
  CHECK(load_features(dir / "a.tfv") == t);

  // f32 rounding is the only change on the single precision path.
  const Tensor back = decode(encode(t, Dtype::f32));
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == static_cast<double>(static_cast<float>(t[i])));
}

TEST_CASE("container layout is little endian") {
  const auto bytes = encode(Tensor::matrix({{1.0}}), Dtype::f64);
  REQUIRE(bytes.size() == 4 + 4 + 4 + 8 + 8);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "TFV1");
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 2);
  CHECK(bytes[12] == 1);
  CHECK(bytes[16] == 1);
  CHECK(bytes[27] == 0x3f);
  CHECK(bytes[26] == 0xf0);
}

TEST_CASE("decode errors are distinct") {
  auto bytes = encode(Tensor::matrix({{1, 2}}));
  auto kind_of = [](std::vector<std::uint8_t> b) {
    try {
      decode(b);
    } catch (const FormatError& e) {
      return e.kind();
    }
    FAIL("expected a format error");
    return FormatError::Kind::io;
  };
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK(kind_of(bad_magic) == FormatError::Kind::bad_magic);
  auto bad_dtype = bytes;
  bad_dtype[4] = 7;
  CHECK(kind_of(bad_dtype) == FormatError::Kind::bad_dtype);
  auto bad_rank = bytes;
  bad_rank[8] = 9;
  CHECK(kind_of(bad_rank) == FormatError::Kind::bad_rank);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK(kind_of(truncated) == FormatError::Kind::truncated);
  CHECK_THROWS_AS(read_tensor("/nonexistent/file.tfv"), FormatError);
}

TEST_CASE("crop averaging") {
  const auto dir = scratch("crops");
  CounterRng rng(2);
  const Tensor one = testing::random_tensor({3, 4}, rng);
  Tensor two({2, 3, 4});
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < one.size(); ++i) two[c * one.size() + i] = one[i];
  write_tensor(dir / "two.tfv", two);
  CHECK(load_features(dir / "two.tfv") == one);
  CHECK(load_feature_crops(dir / "two.tfv").size() == 2);

  Tensor pair({2, 1, 1});
  pair[0] = 1.0;
  pair[1] = 3.0;
  write_tensor(dir / "pair.tfv", pair);
  CHECK(load_features(dir / "pair.tfv")(0, 0) == 2.0);
}

TEST_CASE("snippet sampling") {
  CounterRng rng(4);
  const Tensor x150 = testing::random_tensor({150, 3}, rng);
  CHECK(sample_snippets(x150, 200) == x150);

  const Tensor x400 = testing::random_tensor({400, 3}, rng);
  const Tensor s = sample_snippets(x400, 200);
  REQUIRE(s.rows() == 200);
  for (std::size_t i = 0; i < 200; ++i)
    for (std::size_t d = 0; d < 3; ++d)
      CHECK(s(i, d) == doctest::Approx((x400(2 * i, d) + x400(2 * i + 1, d)) / 2).epsilon(1e-12));

  Tensor constant({337, 2}, 0.25);
  const Tensor pooled = sample_snippets(constant, 200);
  for (double v : pooled.storage()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

  // Global mean is preserved when T divides evenly.
  const Tensor x600 = testing::random_tensor({600, 2}, rng);
  const Tensor s600 = sample_snippets(x600, 200);
  for (std::size_t d = 0; d < 2; ++d) {
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < 600; ++i) a += x600(i, d) / 600.0;
    for (std::size_t i = 0; i < 200; ++i) b += s600(i, d) / 200.0;
    CHECK(std::fabs(a - b) < 1e-6);
  }
  CHECK_THROWS(sample_snippets(Tensor({0, 3}), 200));
  CHECK_THROWS(sample_snippets(x150, 0));
}

TEST_CASE("frame expansion") {
  CHECK(expand_to_frames(std::vector<double>{0.2}, 16) == std::vector<double>(16, 0.2));
  std::vector<double> expect(16, 0.1);
  expect.insert(expect.end(), 4, 0.9);
  CHECK(expand_to_frames(std::vector<double>{0.1, 0.9}, 20) == expect);
  CHECK(expand_to_frames(std::vector<double>{0.5}, 20) == std::vector<double>(20, 0.5));
  CHECK(expand_to_frames(std::vector<double>{0.1, 0.2, 0.3}, 5).size() == 5);
  CHECK_THROWS(expand_to_frames(std::vector<double>{}, 5));
  CHECK_THROWS(expand_to_frames(std::vector<double>{0.1}, 0));
}

TEST_CASE("manifest parsing and validation") {
  const auto dir = scratch("manifest");
  write_tensor(dir / "a.tfv", Tensor({2, 2}));
  write_tensor(dir / "b.tfv", Tensor({2, 2}));
  const std::string good =
      R"({"id":"a","features":"a.tfv","label":1,"class":"fighting","split":"train"})"
      "\n"
      R"({"id":"b","features":"b.tfv","label":0,"class":"normal","frames":"0000","split":"test"})"
      "\n";
  const Manifest m = Manifest::parse(good, dir);
  REQUIRE(m.videos.size() == 2);
  CHECK(m.videos[0].features == dir / "a.tfv");
  CHECK(m.videos[1].frames->size() == 4);
  CHECK(m.split(Split::test).size() == 1);
  CHECK(m.find("b")->label == 0);
  CHECK(Manifest::parse(m.serialize(dir), dir).videos[1].frames == m.videos[1].frames);

  auto rejects = [&](const std::string& line) { CHECK_THROWS(Manifest::parse(line + "\n", dir)); };
  rejects(R"({"id":"a","features":"a.tfv","label":0,"class":"fighting","split":"train"})");
  rejects(R"({"id":"a","features":"a.tfv","label":1,"class":"fighting","split":"train","extra":1})");
  rejects(R"({"id":"a","features":"missing.tfv","label":1,"class":"fighting","split":"train"})");
  rejects(R"({"id":"a","features":"a.tfv","label":1,"class":"fighting","frames":"01","split":"train"})");
  rejects(std::string(R"({"id":"a","features":"a.tfv","label":1,"class":"x","split":"train"})") + "\n" +
          R"({"id":"a","features":"b.tfv","label":1,"class":"x","split":"train"})");
}
