#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <set>

#include "doctest.h"
#include "test_util.hpp"
#include "visurf/errors.hpp"
#include "visurf/tasks.hpp"

using namespace visurf;
using namespace visurf::tasks;

TEST_CASE("dataset generation counts and determinism") {
  const Dataset d = generate_dataset(100, 0.1, 42);
  REQUIRE(d.instances.size() == 100);
  int empties = 0;
  for (const auto& inst : d.instances) {
    empties += inst.is_non_object() ? 1 : 0;
    CHECK(inst.is_non_object() == inst.gt_items.empty());
    CHECK(inst.gt_items == context_gt(inst.family, inst.context, 8, 6));
    for (int item : inst.gt_items) CHECK((item >= 0 && item < 6));
  }
  CHECK(empties == 10);

  const Dataset again = generate_dataset(100, 0.1, 42);
  REQUIRE(again.instances.size() == d.instances.size());
  for (size_t i = 0; i < d.instances.size(); ++i) {
    CHECK(again.instances[i].id == d.instances[i].id);
    CHECK(again.instances[i].context == d.instances[i].context);
    CHECK(again.instances[i].gt_items == d.instances[i].gt_items);
  }

  const Dataset none = generate_dataset(50, 0.0, 7);
  for (const auto& inst : none.instances) CHECK_FALSE(inst.is_non_object());

  CHECK_THROWS_AS(generate_dataset(0, 0.1, 1), ConfigError);
  CHECK_THROWS_AS(generate_dataset(10, 1.5, 1), ConfigError);
  CHECK_THROWS_AS(generate_dataset(10, 0.1, 1, TaskFamily::kPretrainHeld), ConfigError);
}

TEST_CASE("family maps share classes with deliberate conflicts") {
  // Held labels are non-empty everywhere; the post map empties class 0 and
  // swaps one item in the top two classes.
  for (int c = 0; c < 8; ++c) {
    const auto held = context_gt(TaskFamily::kPretrainHeld, c, 8, 6);
    CHECK(held.size() == 2);
    const auto post = context_gt(TaskFamily::kPostTrain, c, 8, 6);
    if (c == kNonObjectContext) {
      CHECK(post.empty());
    } else if (c >= 6) {
      CHECK(post.size() == 2);
      CHECK(post != held);
      std::vector<int> shared;
      std::set_intersection(post.begin(), post.end(), held.begin(), held.end(),
                            std::back_inserter(shared));
      CHECK(shared.size() == 1);
    } else {
      CHECK(post == held);
    }
  }
}

TEST_CASE("train/eval splits are id-disjoint and context-stratified") {
  const Dataset d = generate_dataset(300, 0.1, 9);
  const auto [train, eval] = split_train_eval(d, 0.25, 11);
  CHECK(train.instances.size() + eval.instances.size() == d.instances.size());
  std::set<int64_t> train_ids, eval_ids;
  for (const auto& inst : train.instances) train_ids.insert(inst.id);
  for (const auto& inst : eval.instances) eval_ids.insert(inst.id);
  for (int64_t id : eval_ids) CHECK(train_ids.count(id) == 0);
  CHECK(eval.instances.size() > 60);
  CHECK(eval.instances.size() < 90);
  CHECK(eval.non_object_fraction == doctest::Approx(0.1).epsilon(0.3));

  // Offsets keep independently generated datasets disjoint too.
  const Dataset offset = generate_dataset(50, 0.0, 9, TaskFamily::kPostTrain, 8, 6, 1000);
  for (const auto& inst : offset.instances) CHECK(inst.id >= 1000);
}

TEST_CASE("label serialization produces the tagged answer span") {
  using V = Vocab;
  CHECK(serialize_label({2, 0}, {true, true}).ids ==
        std::vector<int>{V::kAnsOpen, V::item(0), V::kSep, V::item(2), V::kAnsClose, V::kEos});
  CHECK(serialize_label({}, {false, true}).ids ==
        std::vector<int>{V::kAnsOpen, V::kAnsClose, V::kEos});
  CHECK(serialize_label({1}, {false, false}).ids ==
        std::vector<int>{V::kAnsOpen, V::item(1), V::kAnsClose, V::kEos});
  CHECK(serialize_label({2, 0}, {false, false}).ids ==
        std::vector<int>{V::kAnsOpen, V::item(2), V::item(0), V::kAnsClose, V::kEos});
  CHECK(serialize_label({0, 1}, {true, true}).terminated);
}

TEST_CASE("canonicalization picks the policy-preferred variant") {
  using V = Vocab;
  TabularPolicy uniform(Vocab(6), 2, 12);
  // Under a uniform policy the shorter no-separator forms win; the ASC/DESC
  // tie breaks toward ascending order.
  CHECK(canonicalize_label({0, 2}, uniform, 0).ids ==
        std::vector<int>{V::kAnsOpen, V::item(0), V::item(2), V::kAnsClose, V::kEos});

  TabularPolicy sep_lover(Vocab(6), 2, 12);
  for (int p = 0; p < 12; ++p)
    for (int i = 0; i < 6; ++i) sep_lover.theta().at(0, p, V::item(i), V::kSep) = 5.0;
  const TokenSequence aligned = canonicalize_label({0, 2}, sep_lover, 0);
  CHECK(std::count(aligned.ids.begin(), aligned.ids.end(), V::kSep) == 1);

  CHECK(canonicalize_label({}, uniform, 1).ids ==
        std::vector<int>{V::kAnsOpen, V::kAnsClose, V::kEos});
}

TEST_CASE("canonicalized labels always decode to the ground truth") {
  Rng rng(5);
  TabularPolicy policy(Vocab(6), 1, 12);
  test_util::randomize(policy, rng, 2.0);
  for (int mask = 0; mask < 64; ++mask) {
    std::vector<int> gt;
    for (int i = 0; i < 6; ++i)
      if (mask & (1 << i)) gt.push_back(i);
    const TokenSequence label = canonicalize_label(gt, policy, 0);
    const DecodeResult decoded = decode_answer(label);
    CHECK(decoded.format_ok);
    REQUIRE(decoded.items.has_value());
    CHECK(*decoded.items == gt);
  }
}

TEST_CASE("decoding accepts the grammar and extracts best-effort items") {
  using V = Vocab;
  {
    const DecodeResult r = decode_answer(TokenSequence{
        {V::kThinkOpen, V::item(3), V::kThinkClose, V::kAnsOpen, V::item(1), V::kAnsClose,
         V::kEos},
        true});
    CHECK(r.format_ok);
    CHECK(r.has_think);
    REQUIRE(r.items.has_value());
    CHECK(*r.items == std::vector<int>{1});
  }
  {
    const DecodeResult r =
        decode_answer(TokenSequence{{V::kAnsOpen, V::kAnsClose, V::kEos}, true});
    CHECK(r.format_ok);
    CHECK_FALSE(r.has_think);
    REQUIRE(r.items.has_value());
    CHECK(r.items->empty());
  }
  {
    const DecodeResult r = decode_answer(TokenSequence{{V::item(0), V::kEos}, true});
    CHECK_FALSE(r.format_ok);
    CHECK_FALSE(r.items.has_value());
  }
  {  // unmatched THINK_OPEN
    const DecodeResult r =
        decode_answer(TokenSequence{{V::kThinkOpen, V::item(2), V::kEos}, true});
    CHECK_FALSE(r.format_ok);
    CHECK_FALSE(r.items.has_value());
  }
  {  // malformed answer body still yields extracted items
    const DecodeResult r = decode_answer(
        TokenSequence{{V::kAnsOpen, V::item(1), V::kSep, V::kAnsClose, V::kEos}, true});
    CHECK_FALSE(r.format_ok);
    REQUIRE(r.items.has_value());
    CHECK(*r.items == std::vector<int>{1});
  }
  {  // junk inside the span extracts the empty set but fails the grammar
    const DecodeResult r = decode_answer(
        TokenSequence{{V::kAnsOpen, V::kEmpty, V::kAnsClose, V::kEos}, true});
    CHECK_FALSE(r.format_ok);
    REQUIRE(r.items.has_value());
    CHECK(r.items->empty());
  }
  {  // truncated sequences are never well-formed
    TokenSequence cut{{V::kAnsOpen, V::item(0), V::kAnsClose}, false};
    CHECK_FALSE(decode_answer(cut).format_ok);
  }
  {  // trailing content after the answer breaks the grammar
    const DecodeResult r = decode_answer(TokenSequence{
        {V::kAnsOpen, V::kAnsClose, V::kThinkOpen, V::kThinkClose, V::kEos}, true});
    CHECK_FALSE(r.format_ok);
  }
}

TEST_CASE("serialization round-trips through decoding for every variant") {
  for (int mask = 0; mask < 64; ++mask) {
    std::vector<int> gt;
    for (int i = 0; i < 6; ++i)
      if (mask & (1 << i)) gt.push_back(i);
    for (const SerializationVariant& variant : kVariantOrder) {
      const DecodeResult r = decode_answer(serialize_label(gt, variant));
      CHECK(r.format_ok);
      CHECK_FALSE(r.has_think);
      REQUIRE(r.items.has_value());
      CHECK(*r.items == gt);
    }
  }
}

TEST_CASE("datasets round-trip through JSON Lines") {
  const auto dir = test_util::scratch_dir("tasks_jsonl");
  const Dataset d = generate_dataset(60, 0.15, 77);
  const auto path = dir / "data.jsonl";
  save_jsonl(d, path);
  const Dataset loaded = load_jsonl(path);
  REQUIRE(loaded.instances.size() == d.instances.size());
  for (size_t i = 0; i < d.instances.size(); ++i) {
    CHECK(loaded.instances[i].id == d.instances[i].id);
    CHECK(loaded.instances[i].context == d.instances[i].context);
    CHECK(loaded.instances[i].gt_items == d.instances[i].gt_items);
    CHECK(loaded.instances[i].family == d.instances[i].family);
  }
  CHECK(loaded.non_object_fraction == doctest::Approx(0.15));
  CHECK_THROWS_AS(load_jsonl(dir / "missing.jsonl"), IoError);
}
