#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "chronoshift/errors.hpp"
#include "chronoshift/heap.hpp"
#include "support.hpp"

namespace chronoshift {
namespace {

using testing::make_state;

// Independent closure by repeated relaxation over the whole heap.
ObjectIdSet naive_closure(const State& s, const std::string& name) {
  std::set<ObjectId> seen{*s.ns.lookup(name)};
  bool grew = true;
  while (grew) {
    grew = false;
    s.heap.for_each([&](const HeapObject& o) {
      if (!seen.count(o.id)) return;
      o.for_each_child([&](ObjectId c) { grew |= seen.insert(c).second; });
    });
  }
  return {seen.begin(), seen.end()};
}

TEST(Heap, IdsAreNeverReused) {
  Heap h;
  ObjectId a = h.make_int(1);
  ObjectId b = h.make_int(1);
  EXPECT_NE(a, b);
  h.erase(b);
  ObjectId c = h.make_str("x");
  EXPECT_NE(c, b);
  EXPECT_GT(c.value, b.value);
}

TEST(Heap, InsertWithIdAdvancesAllocator) {
  Heap h;
  HeapObject o;
  o.id = ObjectId{40};
  o.kind = Kind::kInt;
  o.value = std::int64_t{3};
  h.insert_with_id(o);
  EXPECT_GT(h.make_none().value, 40u);
}

TEST(Heap, RecordFieldsStaySorted) {
  HeapObject o;
  o.kind = Kind::kRecord;
  o.set_field("b", ObjectId{2});
  o.set_field("a", ObjectId{1});
  o.set_field("b", ObjectId{3});
  ASSERT_EQ(o.fields.size(), 2u);
  EXPECT_EQ(o.fields[0].first, "a");
  EXPECT_EQ(*o.field("b"), ObjectId{3});
  EXPECT_TRUE(o.erase_field("a"));
  EXPECT_FALSE(o.erase_field("a"));
}

TEST(Heap, ReachableFollowsCyclesAndMatchesNaiveClosure) {
  State s = make_state(
      "a = list(1, 2)\nb = record{x: a, y: \"s\"}\nappend(a, b)\nc = map{\"k\": b}\nd = 5");
  for (std::string n : {"a", "b", "c", "d"}) {
    EXPECT_EQ(reachable(s, n), naive_closure(s, n)) << n;
  }
  EXPECT_THROW(reachable(s, "zz"), UnboundVariable);
}

TEST(Heap, DeepEqualIgnoresIdsButNotAliasing) {
  State a = make_state("x = \"v\"\nl = list(x, x)");
  State b = make_state("pad = 1\ndel pad\nx = \"v\"\nl = list(x, x)");
  collect_garbage(b);
  EXPECT_TRUE(deep_equal(a, b));
  State c = make_state("x = \"v\"\nl = list(x, \"v\")");
  EXPECT_FALSE(deep_equal(a, c));
  State d = make_state("x = \"v\"\nl = list(x, x)\ny = 1");
  EXPECT_FALSE(deep_equal(a, d));
  State e = make_state("x = \"w\"\nl = list(x, x)");
  EXPECT_FALSE(deep_equal(a, e));
}

TEST(Heap, DeepEqualDistinguishesEdgeOrderAndLabels) {
  EXPECT_FALSE(deep_equal(make_state("l = list(1, 2)"), make_state("l = list(2, 1)")));
  EXPECT_FALSE(deep_equal(make_state("r = record{a: 1}"), make_state("r = record{b: 1}")));
  EXPECT_FALSE(deep_equal(make_state("r = record{a: 1}"), make_state("r = map{\"a\": 1}")));
  EXPECT_FALSE(deep_equal(make_state("v = 1"), make_state("v = 1.0")));
}

TEST(Heap, GarbageCollectionFreesOnlyUnreachable) {
  State s = make_state("a = list(list(1), 2)\nb = a[0]\nc = list(3)");
  collect_garbage(s);  // temporaries such as the index literal
  std::size_t before = s.heap.size();
  EXPECT_EQ(collect_garbage(s), 0u);
  delete_binding(s, "a");
  EXPECT_EQ(s.heap.size(), before);
  std::size_t freed = collect_garbage(s);
  EXPECT_EQ(freed, 2u);  // outer list and the int 2; b keeps the inner list
  EXPECT_TRUE(s.heap.contains(*s.ns.lookup("b")));
  EXPECT_THROW(delete_binding(s, "a"), UnboundVariable);
}

TEST(Heap, ExtractComponentKeepsIds) {
  State s = make_state("a = list(1)\nb = record{l: a}\nc = 9");
  State part = extract_component(s, {"a", "b"});
  EXPECT_EQ(part.ns.names(), (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(*part.ns.lookup("a"), *s.ns.lookup("a"));
  EXPECT_EQ(part.heap.size(), reachable_from(s, {"a", "b"}).size());
  EXPECT_THROW(extract_component(s, {"nope"}), UnboundVariable);
}

TEST(Heap, TransplantUsesFreshIdsAndOverwritesBindings) {
  State into = make_state("a = 1\nkeep = 2");
  State frag = make_state("a = list(5, 6)");
  ObjectId old_a = *into.ns.lookup("a");
  transplant(frag, into);
  EXPECT_NE(*into.ns.lookup("a"), old_a);
  EXPECT_EQ(into.heap.at(*into.ns.lookup("a")).kind, Kind::kList);
  collect_garbage(into);
  EXPECT_TRUE(deep_equal(into, make_state("a = list(5, 6)\nkeep = 2")));
}

TEST(Heap, TransplantPreservesSharing) {
  State frag = make_state("x = list(1)\ny = record{p: x}");
  State into;
  transplant(frag, into);
  const HeapObject& y = into.heap.at(*into.ns.lookup("y"));
  EXPECT_EQ(*y.field("p"), *into.ns.lookup("x"));
}

TEST(Heap, RenderIsShortAndBounded) {
  State s = make_state("l = range_list(100)\nr = record{a: \"s\", b: none}");
  std::string l = render(s.heap, *s.ns.lookup("l"));
  EXPECT_LT(l.size(), 80u);
  EXPECT_NE(l.find("..."), std::string::npos);
  EXPECT_EQ(render(s.heap, *s.ns.lookup("r")), "record{a: \"s\", b: none}");
}

TEST(Heap, ClassNames) {
  Heap h;
  EXPECT_EQ(h.at(h.make_list({})).class_name(), "list");
  EXPECT_EQ(h.at(h.make_opaque("gen", true)).class_name(), "opaque:gen");
  EXPECT_TRUE(is_primitive(Kind::kStr));
  EXPECT_TRUE(is_container(Kind::kMap));
  EXPECT_FALSE(is_container(Kind::kOpaque));
}

}  // namespace
}  // namespace chronoshift
