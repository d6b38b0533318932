#include <doctest.h>

#include <random>
#include <set>

#include "patchcert/ablation.hpp"
#include "support/oracles.hpp"

using namespace patchcert;

namespace {

std::set<int> retained_columns(const Mask& m) {
  std::set<int> out;
  for (int c = 0; c < m.width; ++c)
    if (m(0, c)) out.insert(c);
  return out;
}

}  // namespace

TEST_SUITE("ablation") {
  TEST_CASE("column ablation wraps around the right edge") {
    std::mt19937_64 rng(1);
    const Image x = oracle::random_image(5, 8, 1, rng);
    const auto z = column_ablation(x, 6, 4);
    CHECK(retained_columns(z.mask) == std::set<int>{6, 7, 0, 1});
    for (int r = 0; r < 5; ++r) {
      for (int c = 0; c < 8; ++c) {
        const bool kept = z.mask(r, c) != 0;
        CHECK(z.pixels.at(r, c, 0) == (kept ? x.at(r, c, 0) : 0.0f));
      }
    }
  }

  TEST_CASE("full-width column keeps the image intact") {
    std::mt19937_64 rng(2);
    const Image x = oracle::random_image(6, 6, 3, rng);
    for (int start = 0; start < 6; ++start) {
      const auto z = column_ablation(x, start, 6);
      CHECK(z.mask.count() == 36);
      CHECK(z.pixels == x);
    }
  }

  TEST_CASE("column of width four on a 32-pixel image") {
    const Image x(32, 32, 3);
    CHECK(column_ablation(x, 0, 4).mask.count() == 4u * 32u);
  }

  TEST_CASE("block ablation wraps in both axes") {
    const Image x(8, 8, 1);
    const auto z = block_ablation(x, 7, 7, 2);
    CHECK(z.mask.count() == 4);
    CHECK(z.mask(7, 7));
    CHECK(z.mask(7, 0));
    CHECK(z.mask(0, 7));
    CHECK(z.mask(0, 0));
  }

  TEST_CASE("block sizes") {
    CHECK(block_ablation(Image(8, 8, 1), 3, 5, 8).mask.count() == 64);
    CHECK(block_ablation(Image(224, 224, 1), 100, 200, 75).mask.count() == 75u * 75u);
  }

  TEST_CASE("out-of-range ablation parameters are rejected") {
    const Image x(8, 8, 1);
    CHECK_THROWS_AS(column_ablation(x, 8, 2), ParameterError);
    CHECK_THROWS_AS(column_ablation(x, -1, 2), ParameterError);
    CHECK_THROWS_AS(column_ablation(x, 0, 0), ParameterError);
    CHECK_THROWS_AS(column_ablation(x, 0, 9), ParameterError);
    CHECK_THROWS_AS(block_ablation(x, 8, 0, 2), ParameterError);
    CHECK_THROWS_AS(block_ablation(Image(4, 8, 1), 0, 0, 5), ParameterError);
    CHECK_THROWS_AS((AblationSpec{AblationKind::column, 2, 3, 3}.validate(8, 8)), ParameterError);
    CHECK_THROWS_AS((AblationSpec{AblationKind::column, 2, 0, 0}.validate(8, 8)), ParameterError);
    CHECK_THROWS_AS(ablation_kind_from_string("diagonal"), ParameterError);
  }

  TEST_CASE("image validation") {
    CHECK_THROWS_AS(Image(2, 2, 2, std::vector<float>(8, 0.0f)), ParameterError);
    CHECK_THROWS_AS(Image(2, 2, 1, std::vector<float>(3, 0.0f)), ParameterError);
    CHECK_THROWS_AS(Image(1, 1, 1, std::vector<float>{1.5f}), ParameterError);
    CHECK_NOTHROW(Image(1, 1, 1, std::vector<float>{1.0f}));
  }

  TEST_CASE("ablation set sizes") {
    const AblationSpec col{AblationKind::column, 19, 1, 0};
    CHECK(ablation_count(224, 224, col) == 224);
    CHECK(ablation_count(224, 224, AblationSpec{AblationKind::column, 19, 10, 0}) == 23);
    CHECK(ablation_count(224, 224, AblationSpec{AblationKind::block, 75, 1, 0}) == 50176);
    const Image x(4, 8, 1);
    CHECK(ablation_set(x, AblationSpec{AblationKind::column, 3, 1, 0}).size() == 8);
  }

  TEST_CASE("anchors ascend row-major from the offset") {
    const auto a = ablation_anchors(7, 9, AblationSpec{AblationKind::block, 2, 3, 1});
    const std::vector<Anchor> expected{{1, 1}, {1, 4}, {1, 7}, {4, 1}, {4, 4}, {4, 7}};
    CHECK(a == expected);
  }

  TEST_CASE("property: masks match the wrapped-window definition") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 300; ++trial) {
      const int h = std::uniform_int_distribution<int>(1, 12)(rng);
      const int w = std::uniform_int_distribution<int>(1, 12)(rng);
      const bool block = trial % 2 == 1;
      const int limit = block ? std::min(h, w) : w;
      AblationSpec spec{block ? AblationKind::block : AblationKind::column,
                        std::uniform_int_distribution<int>(1, limit)(rng),
                        std::uniform_int_distribution<int>(1, std::min(w, block ? h : w))(rng), 0};
      spec.offset = std::uniform_int_distribution<int>(0, spec.stride - 1)(rng);
      const auto anchors = ablation_anchors(h, w, spec);
      const auto refs = oracle::ablations(h, w, spec);
      REQUIRE(anchors.size() == refs.size());
      CHECK(ablation_count(h, w, spec) == refs.size());
      for (std::size_t i = 0; i < anchors.size(); ++i) {
        CHECK(anchors[i].top == refs[i].top);
        CHECK(anchors[i].left == refs[i].left);
        const Mask m = ablation_mask(h, w, spec, anchors[i]);
        std::size_t expected = 0;
        for (int r = 0; r < h; ++r) {
          for (int c = 0; c < w; ++c) {
            const bool in = oracle::hits(refs[i], h, w, spec, r, c, 1);
            expected += in;
            CHECK(static_cast<bool>(m(r, c)) == in);
          }
        }
        CHECK(m.count() == expected);
      }
    }
  }
}
