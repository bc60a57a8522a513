#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <set>
#include <string>
#include <vector>

#include "nl2fol/corpus.hpp"
#include "nl2fol/fol.hpp"
#include "nl2fol/linearize.hpp"
#include "nl2fol/metric.hpp"
#include "nl2fol/util.hpp"

using namespace nl2fol;

namespace {

const std::string kWomenSentence = "three women are traveling by foot";
const std::string kWomen =
    "fol(1,some(A,some(B,some(C,and(r1by(B,A),and(n1foot(A),and(r1agent(B,C),"
    "and(v1travel(B),and(n1woman(C),some(D,and(card(C,D),and(c3number(D),"
    "n1numeral(D)))))))))))))";

std::vector<corpus::RawExample> women_corpus() { return {{kWomenSentence, kWomen}}; }

}  // namespace

TEST_CASE("vocabularies split by category with unk slots") {
  auto v = corpus::build_vocabs(women_corpus());
  CHECK(v.unary.tokens == std::vector<std::string>{corpus::kUnk, "n1foot", "v1travel", "n1woman",
                                                   "c3number", "n1numeral"});
  CHECK(v.binary.tokens == std::vector<std::string>{corpus::kUnk, "r1by", "r1agent", "card"});
  CHECK(v.scope.id("fol(") == 0);
  CHECK(v.scope.id(")") == 1);
  CHECK(v.scope.id("not(") == 2);
  CHECK(v.variable.size() == 27);
  CHECK(v.variable.id("A") == 0);
  CHECK(v.variable.id("Z") == 25);
  CHECK(v.category.size() == 5);
  // every sentence token is rare here, so the input vocab is just unk
  CHECK(v.input.size() == 1);
  CHECK(v.input.id("three") == 0);
}

TEST_CASE("single tiny example") {
  auto v = corpus::build_vocabs({{"a man", "fol(1,some(A,man(A)))"}});
  CHECK(v.unary.tokens == std::vector<std::string>{corpus::kUnk, "man"});
  CHECK(v.binary.tokens == std::vector<std::string>{corpus::kUnk});
}

TEST_CASE("encoding the worked example") {
  auto v = corpus::build_vocabs(women_corpus(), 1);
  auto e = corpus::encode_example(kWomenSentence, kWomen, v);
  CHECK(e.tokens.size() == 6);
  CHECK(e.input_ids.size() == 6);
  CHECK(e.input_ids[0] == v.input.id("three"));
  CHECK(e.target.size() == 21);
  CHECK(e.target_ids.size() == 21);
  CHECK(e.target.align.size() == 21);
  CHECK(e.target.tokens[0] == "fol(");
  CHECK(e.target_ids[0] == 0);
  CHECK(e.target.tokens[1] == "n1foot");
  CHECK(e.target_ids[1] == v.unary.id("n1foot"));
  CHECK(e.target_ids[2] == 0);  // variable A
}

TEST_CASE("encoding bounds") {
  auto v = corpus::build_vocabs(women_corpus());
  auto e = corpus::encode_example("a man", "fol(1,some(A,man(A)))", v);
  CHECK(e.target.size() == 4);
  CHECK(e.target_ids[1] == 0);  // man is out of vocabulary -> unk

  std::string longsent;
  for (int i = 0; i < 120; ++i) longsent += "word ";
  CHECK_THROWS_AS(corpus::encode_example(longsent, "fol(1,some(A,man(A)))", v),
                  lin::CapacityExceeded);
}

TEST_CASE("perturbation renames variables and nothing else") {
  auto v = corpus::build_vocabs(women_corpus(), 1);
  auto e = corpus::encode_example(kWomenSentence, kWomen, v);
  Rng rng(5);
  for (int round = 0; round < 200; ++round) {
    auto p = corpus::perturb_variables(e, v, rng);
    CHECK(p.target.categories == e.target.categories);
    CHECK(p.target.align == e.target.align);
    CHECK(p.tokens == e.tokens);
    for (std::size_t i = 0; i < e.target.size(); ++i)
      if (e.target.categories[i] != lin::Category::V) {
        CHECK(p.target.tokens[i] == e.target.tokens[i]);
      }
    auto r = metric::score(lin::delinearize(e.target), lin::delinearize(p.target));
    CHECK(r.f1 == 1.0);
    CHECK(r.exact);
  }
}

TEST_CASE("restricted profile yields single-entity positives") {
  Rng rng(11);
  corpus::GeneratorProfile profile;
  profile.max_entities = 1;
  profile.max_negation_depth = 0;
  auto items = corpus::synth_corpus(rng, 40, profile);
  CHECK(items.size() == 40);
  for (const auto& it : items) {
    CHECK(it.sentence.find(" is present") != std::string::npos);
    auto ts = lin::linearize(fol::parse_fol(it.fol));
    for (const auto& t : ts.tokens) CHECK(t != "not(");
  }
}

TEST_CASE("default profile covers negation and shared variables") {
  Rng rng(12);
  auto items = corpus::synth_corpus(rng, 1200);
  bool saw_not = false, saw_double_not = false, saw_subset = false;
  for (const auto& it : items) {
    if (it.fol.find("not(") != std::string::npos) saw_not = true;
    if (it.fol.find("all(") != std::string::npos) saw_double_not = true;
    if (it.fol.find("subset_of") != std::string::npos) saw_subset = true;
  }
  CHECK(saw_not);
  CHECK(saw_double_not);
  CHECK(saw_subset);
}

TEST_CASE("synthetic corpus is valid, distinct, and round-trips") {
  Rng rng(13);
  auto items = corpus::synth_corpus(rng, 2000);
  std::set<std::string> sentences;
  for (const auto& it : items) {
    sentences.insert(it.sentence);
    auto f = fol::normalize_universal(fol::parse_fol(it.fol));
    REQUIRE(fol::validate(f).ok());
    auto ts = lin::linearize(f, corpus::kMaxTargetLen);
    auto r = metric::score(f, lin::delinearize(ts));
    REQUIRE(r.f1 == 1.0);
  }
  CHECK(sentences.size() == items.size());
}

TEST_CASE("generation is seed-reproducible") {
  Rng a(99), b(99), c(100);
  auto x = corpus::synth_corpus(a, 300);
  auto y = corpus::synth_corpus(b, 300);
  auto z = corpus::synth_corpus(c, 300);
  REQUIRE(x.size() == y.size());
  bool same = true, diff = false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    same = same && x[i].sentence == y[i].sentence && x[i].fol == y[i].fol;
    diff = diff || x[i].sentence != z[i].sentence;
  }
  CHECK(same);
  CHECK(diff);
}

TEST_CASE("splits are disjoint on sentence text") {
  Rng rng(21);
  auto items = corpus::synth_corpus(rng, 500);
  Rng srng(22);
  auto s = corpus::split_corpus(items, srng, 0.1, 0.1);
  CHECK(s.dev.size() == 50);
  CHECK(s.test.size() == 50);
  CHECK(s.train.size() == 400);
  std::set<std::string> seen;
  for (const auto* part : {&s.train, &s.dev, &s.test})
    for (const auto& it : *part) CHECK(seen.insert(it.sentence).second);
}

TEST_CASE("jsonl round trip") {
  Rng rng(31);
  auto items = corpus::synth_corpus(rng, 50);
  std::string path = "test_corpus_tmp.jsonl";
  corpus::write_jsonl(path, items);
  auto back = corpus::read_jsonl(path);
  REQUIRE(back.size() == items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    CHECK(back[i].sentence == items[i].sentence);
    CHECK(back[i].fol == items[i].fol);
  }
  std::remove(path.c_str());
}

TEST_CASE("vocab serialization round trip and digest") {
  Rng rng(41);
  auto items = corpus::synth_corpus(rng, 300);
  auto v = corpus::build_vocabs(items);
  auto text = v.serialize();
  auto w = corpus::Vocabs::deserialize(text);
  CHECK(w.serialize() == text);
  CHECK(w.digest() == v.digest());
  CHECK(w.unary.tokens == v.unary.tokens);
  CHECK(w.input.has_unk);
  CHECK(w.variable.id(corpus::kNewVar) == 26);
}
