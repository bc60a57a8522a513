#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "nl2fol/autodiff.hpp"
#include "nl2fol/util.hpp"

using namespace nl2fol;
using ad::Mat;
using ad::Tape;
using ad::Var;

namespace {

Mat colvec(std::initializer_list<double> xs) {
  Mat m(static_cast<long>(xs.size()), 1);
  long i = 0;
  for (double x : xs) m(i++, 0) = x;
  return m;
}

}  // namespace

TEST_CASE("sum of squares gradient") {
  Tape t;
  Var x = t.constant(colvec({1, 2, 3}));
  Var root = t.sum(t.mul(x, x));
  CHECK(t.scalar(root) == doctest::Approx(14.0));
  t.backward(root);
  CHECK(t.grad(x)(0, 0) == doctest::Approx(2.0));
  CHECK(t.grad(x)(1, 0) == doctest::Approx(4.0));
  CHECK(t.grad(x)(2, 0) == doctest::Approx(6.0));
}

TEST_CASE("two-class cross entropy at uniform logits") {
  Tape t;
  Var logits = t.constant(colvec({0, 0}));
  Var loss = t.cross_entropy(logits, 0);
  CHECK(t.scalar(loss) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  t.backward(loss);
  CHECK(t.grad(logits)(0, 0) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(t.grad(logits)(1, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("softmax and sigmoid ranges") {
  Tape t;
  Var z = t.constant(colvec({1, 2, 3}));
  Var p = t.softmax(z);
  CHECK(t.value(p).sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(t.value(p)(0, 0) == doctest::Approx(0.09003057317038046).epsilon(1e-12));
  CHECK(t.value(p)(1, 0) == doctest::Approx(0.24472847105479767).epsilon(1e-12));
  CHECK(t.value(p)(2, 0) == doctest::Approx(0.6652409557748219).epsilon(1e-12));

  Var s = t.sigmoid(t.constant(colvec({-15, 0, 15})));
  for (int i = 0; i < 3; ++i) {
    CHECK(t.value(s)(i, 0) > 0.0);
    CHECK(t.value(s)(i, 0) < 1.0);
  }
  CHECK(t.value(s)(1, 0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("backward requires a scalar root and accumulates on repeat") {
  Tape t;
  Var x = t.constant(colvec({1, 2}));
  CHECK_THROWS_AS(t.backward(x), ad::NonScalarRoot);

  Var root = t.sum(x);
  t.backward(root);
  t.backward(root);
  CHECK(t.grad(x)(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("shape checks are eager") {
  Tape t;
  Var a = t.constant(colvec({1, 2}));
  Var b = t.constant(colvec({1, 2, 3}));
  Var w = t.constant(Mat::Identity(3, 3));
  CHECK_THROWS_AS(t.add(a, b), ad::ShapeError);
  CHECK_THROWS_AS(t.mul(a, b), ad::ShapeError);
  CHECK_THROWS_AS(t.matvec(w, a), ad::ShapeError);
  CHECK_THROWS_AS(t.rows(a, 1, 2), ad::ShapeError);
  CHECK_THROWS_AS(t.dot(a, b), ad::ShapeError);
  CHECK_THROWS_AS(t.cross_entropy(a, 2), ad::ShapeError);
}

TEST_CASE("param leaves accumulate across tapes") {
  ad::ParamStore store;
  ad::Param* p = store.raw("x", colvec({1, 2, 3}));
  for (int rep = 0; rep < 2; ++rep) {
    Tape t;
    Var x = t.leaf(p);
    t.backward(t.sum(t.mul(x, x)));
  }
  CHECK(p->grad(1, 0) == doctest::Approx(8.0));
  store.zero_grad();
  CHECK(p->grad.norm() == 0.0);
}

TEST_CASE("embedding lookup routes gradient to one row") {
  ad::ParamStore store;
  Mat table(3, 2);
  table << 1, 2, 3, 4, 5, 6;
  ad::Param* p = store.raw("table", table);
  Tape t;
  Var e = t.lookup(p, 1);
  CHECK(t.value(e)(0, 0) == doctest::Approx(3.0));
  CHECK(t.value(e)(1, 0) == doctest::Approx(4.0));
  t.backward(t.sum(e));
  CHECK(p->grad.row(0).norm() == 0.0);
  CHECK(p->grad.row(2).norm() == 0.0);
  CHECK(p->grad(1, 0) == doctest::Approx(1.0));
  CHECK(p->grad(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("linear layer gradient check at 1e-6") {
  ad::ParamStore store;
  Rng rng(11);
  store.dense("w", 4, 3, rng);
  store.raw("b", colvec({0.1, -0.2, 0.3, 0.05}));
  auto builder = [&](Tape& t) {
    Var x = t.constant(colvec({0.5, -1.0, 2.0}));
    Var y = t.add(t.matvec(t.leaf(store.at("w")), x), t.leaf(store.at("b")));
    return t.sum(t.mul(y, y));
  };
  auto report = ad::gradient_check(store, builder, 1e-5, 1e-6);
  CHECK(report.pass);
  CHECK(report.worst <= 1e-6);
}

TEST_CASE("lstm over five steps gradient check at 1e-4") {
  ad::ParamStore store;
  Rng rng(7);
  ad::LstmWeights w = ad::lstm_weights(store, "lstm", 3, 4, rng);
  // Zero biases make the check trivial at b; nudge them off zero.
  for (long i = 0; i < w.b->value.rows(); ++i) w.b->value(i, 0) = 0.01 * (i + 1);
  std::vector<Mat> inputs;
  Rng data(21);
  for (int s = 0; s < 5; ++s) {
    Mat x(3, 1);
    for (int i = 0; i < 3; ++i) x(i, 0) = data.uniform_real(-1.0, 1.0);
    inputs.push_back(x);
  }
  auto builder = [&](Tape& t) {
    ad::LstmState st = ad::lstm_zero_state(t, 4);
    Var acc = t.constant(Mat::Zero(1, 1));
    for (const Mat& x : inputs) {
      st = ad::lstm_cell(t, w, t.constant(x), st);
      acc = t.add(acc, t.sum(t.mul(st.h, st.h)));
    }
    return acc;
  };
  auto report = ad::gradient_check(store, builder, 1e-5, 1e-4);
  CHECK(report.pass);
}

TEST_CASE("attention-shaped composite gradient check") {
  // Exercises dot, concat, softmax, weighted_sum, scale_by, sigmoid,
  // tanh, rows, sub and binary_cross_entropy in one loss.
  ad::ParamStore store;
  Rng rng(13);
  store.dense("q", 4, 1, rng);
  store.dense("k", 4, 3, rng);
  store.dense("wg", 1, 4, rng);
  auto builder = [&](Tape& t) {
    Var q = t.leaf(store.at("q"));
    Var keys = t.leaf(store.at("k"));
    std::vector<Var> cols;
    for (int j = 0; j < 3; ++j) {
      Mat sel = Mat::Zero(3, 1);
      sel(j, 0) = 1.0;
      cols.push_back(t.tanh(t.matvec(keys, t.constant(sel))));
    }
    std::vector<Var> logits;
    for (int j = 0; j < 3; ++j) logits.push_back(t.dot(q, cols[j]));
    Var weights = t.softmax(t.concat(logits));
    Var ctx = t.weighted_sum(weights, cols);
    Var gate_logit = t.matvec(t.leaf(store.at("wg")), ctx);
    Var gate = t.sigmoid(gate_logit);
    Var one = t.constant(Mat::Ones(1, 1));
    Var mixed = t.add(t.scale_by(gate, ctx), t.scale_by(t.sub(one, gate), q));
    Var loss = t.sum(t.mul(mixed, mixed));
    return t.add(loss, t.binary_cross_entropy(gate_logit, 1.0));
  };
  auto report = ad::gradient_check(store, builder, 1e-5, 1e-4);
  CHECK(report.pass);
}

TEST_CASE("gradient check flags a corrupted derivative") {
  // A builder whose analytic pass and probe passes disagree stands in for a
  // broken backward rule: the reported gradients no longer match the probes.
  ad::ParamStore store;
  store.raw("x", colvec({0.7, -0.3}));
  int calls = 0;
  auto builder = [&](Tape& t) {
    ++calls;
    Var x = t.leaf(store.at("x"));
    Var y = t.mul(x, x);
    if (calls > 1) y = t.scale(y, 2.0);
    return t.sum(y);
  };
  auto report = ad::gradient_check(store, builder, 1e-5, 1e-4);
  CHECK_FALSE(report.pass);
  CHECK(report.worst > 0.1);
}

TEST_CASE("adam first step magnitude and zero-grad behaviour") {
  ad::ParamStore store;
  ad::Param* p = store.raw("w", Mat::Ones(1, 1));
  p->grad(0, 0) = 1.0;
  ad::Adam opt;
  opt.step(store);
  const double update = 1.0 - p->value(0, 0);
  CHECK(update == doctest::Approx(0.001).epsilon(1e-3));
  CHECK(p->grad(0, 0) == 0.0);

  // Zero gradient (and zero moments): only the decay multiplier moves it.
  ad::ParamStore idle;
  ad::Param* q = idle.raw("w", Mat::Ones(1, 1));
  ad::Adam opt2;
  opt2.step(idle);
  CHECK(q->value(0, 0) == doctest::Approx(1.0 - 0.001 * 1e-4).epsilon(1e-15));

  ad::ParamStore still;
  ad::Param* r = still.raw("w", Mat::Ones(1, 1));
  ad::Adam plain({.decay = 0.0});
  plain.step(still);
  CHECK(r->value(0, 0) == 1.0);
}

TEST_CASE("adam on a quadratic bowl is monotone after step 5") {
  ad::ParamStore store;
  ad::Param* p = store.raw("x", colvec({3.0, -2.0, 0.5}));
  Mat target = colvec({1.0, 1.0, 1.0});
  ad::Adam opt({.lr = 0.05});
  std::vector<double> losses;
  for (int step = 0; step < 100; ++step) {
    Tape t;
    Var x = t.leaf(p);
    Var d = t.sub(x, t.constant(target));
    Var loss = t.scale(t.sum(t.mul(d, d)), 0.5);
    losses.push_back(t.scalar(loss));
    t.backward(loss);
    opt.step(store);
  }
  for (std::size_t i = 5; i + 1 < losses.size(); ++i) CHECK(losses[i + 1] < losses[i]);
  CHECK(losses.back() < 0.05);
}

TEST_CASE("learning-rate decay mode shrinks the step size") {
  ad::ParamStore a, b;
  a.raw("w", Mat::Ones(1, 1));
  b.raw("w", Mat::Ones(1, 1));
  ad::Adam wd({.decay = 1e-4, .decay_is_lr = false});
  ad::Adam ld({.decay = 0.5, .decay_is_lr = true});
  for (int i = 0; i < 3; ++i) {
    a.at("w")->grad(0, 0) = 1.0;
    b.at("w")->grad(0, 0) = 1.0;
    wd.step(a);
    ld.step(b);
  }
  // 1/(1 + 0.5 t) scaling leaves the lr-decay run behind the plain run.
  CHECK(b.at("w")->value(0, 0) > a.at("w")->value(0, 0));
}

TEST_CASE("gradient clipping rescales to the threshold") {
  ad::ParamStore store;
  ad::Param* p = store.raw("w", Mat::Zero(2, 1));
  p->grad << 3.0, 4.0;
  store.clip_grad_norm(5.0);
  CHECK(store.grad_norm() == doctest::Approx(5.0));
  store.clip_grad_norm(1.0);
  CHECK(store.grad_norm() == doctest::Approx(1.0));
  CHECK(p->grad(0, 0) == doctest::Approx(0.6));
  CHECK(p->grad(1, 0) == doctest::Approx(0.8));
}

TEST_CASE("xavier init is seeded and bounded") {
  ad::ParamStore s1, s2;
  Rng r1(42), r2(42);
  ad::Param* a = s1.dense("w", 6, 4, r1);
  ad::Param* b = s2.dense("w", 6, 4, r2);
  CHECK(a->value == b->value);
  const double limit = std::sqrt(6.0 / (6 + 4));
  CHECK(a->value.maxCoeff() <= limit);
  CHECK(a->value.minCoeff() >= -limit);
  CHECK(a->value.cwiseAbs().maxCoeff() > 0.0);

  Rng r3(43);
  ad::Param* c = s1.dense("w2", 6, 4, r3);
  CHECK(a->value != c->value);
}

TEST_CASE("checkpoint round trip is bit exact") {
  ad::ParamStore store;
  Rng rng(5);
  store.dense("enc.w", 5, 7, rng);
  store.raw("odd", colvec({1.0 / 3.0, -0.0, 2.3e-308, 1.7976931348623157e308}));
  store.zeros("b", 4, 1);
  const std::string path = "checkpoint_test.bin";
  const std::string meta = "{\"variant\":\"sepheads-align\",\"seed\":7}";
  ad::save_checkpoint(path, store, meta);

  ad::ParamStore loaded;
  const std::string meta2 = ad::load_checkpoint(path, loaded);
  CHECK(meta2.find("sepheads-align") != std::string::npos);
  REQUIRE(loaded.params().size() == store.params().size());
  for (std::size_t i = 0; i < store.params().size(); ++i) {
    const ad::Param& x = *store.params()[i];
    const ad::Param& y = *loaded.params()[i];
    CHECK(x.name == y.name);
    REQUIRE(x.value.rows() == y.value.rows());
    REQUIRE(x.value.cols() == y.value.cols());
    for (long r = 0; r < x.value.rows(); ++r)
      for (long c = 0; c < x.value.cols(); ++c) CHECK(x.value(r, c) == y.value(r, c));
  }

  const std::string path2 = "checkpoint_test2.bin";
  ad::save_checkpoint(path2, loaded, meta2);
  CHECK(read_file(path) == read_file(path2));
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("checkpoint rejects foreign and truncated files") {
  const std::string path = "checkpoint_bad.bin";
  write_file(path, "definitely not a checkpoint");
  ad::ParamStore store;
  CHECK_THROWS(ad::load_checkpoint(path, store));
  std::remove(path.c_str());
}
