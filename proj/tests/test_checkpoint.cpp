#include "doctest.h"
#include "ilm/checkpoint.hpp"
#include "ilm/errors.hpp"
#include "ilm/rng.hpp"

#include <filesystem>

using namespace ilm;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("checkpoint");

TEST_CASE("round-trip is exact for 64-bit values") {
  const fs::path path = fs::temp_directory_path() / "ilm_ckpt_roundtrip.json";
  Rng rng(123);
  std::vector<Parameter> params;
  Matrix m(7, 5);
  for (Eigen::Index r = 0; r < 7; ++r)
    for (Eigen::Index c = 0; c < 5; ++c) m(r, c) = rng.normal() * std::pow(10.0, rng.normal() * 3);
  params.emplace_back("a", m);
  params.emplace_back("tiny", Matrix::Constant(1, 1, 5e-324));  // smallest denormal
  params.emplace_back("big", Matrix::Constant(1, 1, 1.7976931348623157e308));

  std::vector<const Parameter*> cptrs;
  for (const auto& p : params) cptrs.push_back(&p);
  save_parameters(path, cptrs);

  std::vector<Parameter> loaded;
  loaded.emplace_back("a", Matrix::Zero(7, 5));
  loaded.emplace_back("tiny", Matrix::Zero(1, 1));
  loaded.emplace_back("big", Matrix::Zero(1, 1));
  auto lptrs = param_ptrs(loaded);
  load_parameters(path, lptrs);

  for (std::size_t i = 0; i < params.size(); ++i)
    CHECK((params[i].value.array() == loaded[i].value.array()).all());
  fs::remove(path);
}

TEST_CASE("name and shape mismatches are rejected") {
  const fs::path path = fs::temp_directory_path() / "ilm_ckpt_mismatch.json";
  std::vector<Parameter> params;
  params.emplace_back("w", Matrix::Ones(2, 2));
  std::vector<const Parameter*> cptrs{&params[0]};
  save_parameters(path, cptrs);

  std::vector<Parameter> wrong_name;
  wrong_name.emplace_back("v", Matrix::Ones(2, 2));
  auto p1 = param_ptrs(wrong_name);
  CHECK_THROWS_AS(load_parameters(path, p1), Error);

  std::vector<Parameter> wrong_shape;
  wrong_shape.emplace_back("w", Matrix::Ones(2, 3));
  auto p2 = param_ptrs(wrong_shape);
  CHECK_THROWS_AS(load_parameters(path, p2), Error);
  fs::remove(path);
}

TEST_SUITE_END();
