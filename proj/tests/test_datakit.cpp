#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "profs/datakit.hpp"

using namespace profs;

namespace {

SyntheticSpec tiny_spec() {
  SyntheticSpec s;
  s.num_classes = 5;
  s.per_class = 4;
  s.input_dim = 3;
  s.seed = 7;
  return s;
}

std::string error_of(const std::string& text) {
  try {
    parse_dataset(text);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("synthetic generation is seed-deterministic") {
  const Dataset a = gen_synthetic(tiny_spec());
  const Dataset b = gen_synthetic(tiny_spec());
  CHECK(a == b);
  CHECK(serialize(a) == serialize(b));
  SyntheticSpec other = tiny_spec();
  other.seed = 8;
  CHECK_FALSE(gen_synthetic(other) == a);
  CHECK(a.size() == 20);
  CHECK(a.num_classes() == 5);
  CHECK(a.input_dim() == 3);
  CHECK_NOTHROW(a.validate());
}

TEST_CASE("unwarped zero-spread clusters sit on separated means") {
  SyntheticSpec s = tiny_spec();
  s.cluster_spread = 0.0;
  s.warp = Warp::none;
  s.separation = 2.0;
  const Dataset d = gen_synthetic(s);
  for (int i = 0; i < d.size(); ++i)
    for (int j = i + 1; j < d.size(); ++j) {
      const double dist = (d.inputs.col(i) - d.inputs.col(j)).norm();
      if (d.labels[i] == d.labels[j])
        CHECK(dist == 0.0);
      else
        CHECK(dist >= 2.0);
    }
}

TEST_CASE("warped inputs lie in the open unit cube") {
  const Dataset d = gen_synthetic(tiny_spec());
  CHECK(d.inputs.cwiseAbs().maxCoeff() < 1.0);
}

TEST_CASE("synthetic spec validation") {
  SyntheticSpec s = tiny_spec();
  s.num_classes = 1;
  CHECK_THROWS_AS(gen_synthetic(s), ValidationError);
  s = tiny_spec();
  s.per_class = 1;
  CHECK_THROWS_AS(gen_synthetic(s), ValidationError);
  s = tiny_spec();
  s.separation = 0.0;
  CHECK_THROWS_AS(gen_synthetic(s), ValidationError);
}

TEST_CASE("zero-shot split keeps class sets disjoint") {
  const Dataset d = gen_synthetic(tiny_spec());
  const auto [train, test] = zero_shot_split(d, 0.5);
  // ceil(0.5 * 5) = 3 train classes, 2 test classes relabelled 1..2.
  CHECK(train.num_classes() == 3);
  CHECK(test.num_classes() == 2);
  CHECK(train.size() + test.size() == d.size());
  CHECK_NOTHROW(train.validate());
  CHECK_NOTHROW(test.validate());
  int ti = 0, si = 0;
  for (int i = 0; i < d.size(); ++i) {
    if (d.labels[i] <= 3) {
      CHECK(train.labels[ti] == d.labels[i]);
      CHECK(train.inputs.col(ti++) == d.inputs.col(i));
    } else {
      CHECK(test.labels[si] == d.labels[i] - 3);
      CHECK(test.inputs.col(si++) == d.inputs.col(i));
    }
  }
  CHECK_THROWS_AS(zero_shot_split(d, 1.0), ValidationError);
  CHECK_THROWS_AS(zero_shot_split(d, 0.0), ValidationError);
}

TEST_CASE("serialization round-trips bitwise") {
  const Dataset d = gen_synthetic(tiny_spec());
  const std::string text = serialize(d);
  CHECK(text.rfind("dim=3 classes=5 count=20\n", 0) == 0);
  const Dataset back = parse_dataset(text);
  CHECK(back == d);
  CHECK(serialize(back) == text);

  Dataset odd;
  odd.inputs.resize(1, 2);
  odd.inputs << 0.1, -1e-300;
  odd.labels = {1, 2};
  CHECK(parse_dataset(serialize(odd)) == odd);
}

TEST_CASE("save and load through a file") {
  const Dataset d = gen_synthetic(tiny_spec());
  const auto path = std::filesystem::temp_directory_path() / "profs_datakit_test.txt";
  save(d, path.string());
  CHECK(load(path.string()) == d);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load(path.string()), Error);
}

TEST_CASE("parse errors name the offending line") {
  CHECK(error_of("") .find("line 1") != std::string::npos);
  CHECK(error_of("dim=2 classes=1\n").find("line 1") != std::string::npos);
  CHECK(error_of("dim=2 classes=1 count=2\n1 0 0\n").find("line 3") != std::string::npos);
  CHECK(error_of("dim=2 classes=1 count=2\n1 0 0\n1 0 x\n").find("line 3") != std::string::npos);
  CHECK(error_of("dim=2 classes=1 count=1\nq 0 0\n").find("line 2") != std::string::npos);
  CHECK(error_of("dim=2 classes=1 count=1\n1 0 0\n1 0 0\n").find("line 3") != std::string::npos);
  // Wrong row width and non-contiguous labels are validation errors too.
  CHECK_FALSE(error_of("dim=2 classes=1 count=1\n1 0\n").empty());
  CHECK_FALSE(error_of("dim=1 classes=2 count=2\n1 0\n3 0\n").empty());
  CHECK_FALSE(error_of("dim=1 classes=3 count=2\n1 0\n2 0\n").empty());
}

TEST_CASE("warp names round-trip") {
  for (Warp w : {Warp::none, Warp::random_rotation_plus_tanh}) CHECK(parse_warp(to_string(w)) == w);
  CHECK_THROWS_AS(parse_warp("swirl"), ValidationError);
}
