#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "mfpn/checkpoint.hpp"
#include "mfpn/common.hpp"
#include "mfpn/nn.hpp"
#include "mfpn/optim.hpp"
#include "mfpn/rng.hpp"
#include "mfpn/tape.hpp"

using namespace mfpn;

namespace {

// Independent oracle: direct translation of the convolution definition,
// no shared code with the tape kernels.
Tensor conv3x3_oracle(const Tensor& x, const Tensor& w, int stride) {
  const size_t cin = x.shape()[0], h = x.shape()[1], wd = x.shape()[2];
  const size_t cout = w.shape()[0];
  const size_t ho = (h + stride - 1) / stride, wo = (wd + stride - 1) / stride;
  Tensor out(Shape{cout, ho, wo});
  double* o = out.mutable_data();
  for (size_t co = 0; co < cout; ++co)
    for (size_t yo = 0; yo < ho; ++yo)
      for (size_t xo = 0; xo < wo; ++xo) {
        double acc = 0.0;
        for (size_t ci = 0; ci < cin; ++ci)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const long yi = static_cast<long>(yo) * stride + ky - 1;
              const long xi = static_cast<long>(xo) * stride + kx - 1;
              if (yi < 0 || yi >= static_cast<long>(h) || xi < 0 || xi >= static_cast<long>(wd))
                continue;
              acc += x[ci * h * wd + yi * wd + xi] * w[((co * cin + ci) * 3 + ky) * 3 + kx];
            }
        o[(co * ho + yo) * wo + xo] = acc;
      }
  return out;
}

Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(s));
  double* d = t.mutable_data();
  for (size_t i = 0; i < t.size(); ++i) d[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("matmul identity leaves any 3x3 matrix unchanged") {
  Rng rng(7);
  Tensor a = random_tensor({3, 3}, rng);
  Tensor id(Shape{3, 3});
  for (int i = 0; i < 3; ++i) id.mutable_data()[i * 3 + i] = 1.0;
  Tape t;
  Tensor out = t.matmul(t.leaf(id, false), t.leaf(a, false));
  CHECK(out.equals(a));
}

TEST_CASE("uniform logits give cross-entropy ln(K)") {
  for (size_t k : {2, 5, 10}) {
    Tape t;
    Tensor logits = Tensor::full({3, k}, 0.7);
    Tensor targets = Tensor(Shape{3}, {0.0, double(k - 1), double(k / 2)});
    Tensor ce = t.softmax_xent(t.leaf(logits, false), t.leaf(targets, false));
    for (size_t i = 0; i < 3; ++i) CHECK(ce[i] == doctest::Approx(std::log(double(k))).epsilon(1e-12));
  }
}

TEST_CASE("conv3x3 on a 5x5 ramp matches the nested-loop oracle") {
  Tensor x(Shape{1, 5, 5});
  for (size_t i = 0; i < 25; ++i) x.mutable_data()[i] = static_cast<double>(i);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0 / 9.0);
  Tensor expect = conv3x3_oracle(x, w, 1);
  Tape t;
  Tensor got = t.conv3x3(t.leaf(x, false), t.leaf(w, false), 1);
  REQUIRE(got.same_shape(expect));
  for (size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("conv3x3 matches oracle on random channels and both strides") {
  Rng rng(11);
  for (int stride : {1, 2}) {
    Tensor x = random_tensor({3, 6, 8}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng);
    Tensor expect = conv3x3_oracle(x, w, stride);
    Tape t;
    Tensor got = t.conv3x3(t.leaf(x, false), t.leaf(w, false), stride);
    REQUIRE(got.same_shape(expect));
    for (size_t i = 0; i < got.size(); ++i)
      CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("backward of mean(x*x) at x=[3] gives 6") {
  Tape t;
  Tensor x = t.leaf(Tensor::of({3.0}), true);
  Tensor loss = t.mean(t.mul(x, x));
  t.backward(loss);
  CHECK(t.grad(x)[0] == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("2-class cross-entropy gradient equals softmax minus onehot") {
  Tape t;
  Tensor logits = t.leaf(Tensor(Shape{1, 2}, {0.3, -1.1}), true);
  Tensor target = Tensor(Shape{1}, {1.0});
  Tensor ce = t.mean(t.softmax_xent(logits, t.leaf(target, false)));
  t.backward(ce);
  const Tensor& g = t.grad(logits);
  const double p0 = std::exp(0.3) / (std::exp(0.3) + std::exp(-1.1));
  CHECK(g[0] == doctest::Approx(p0).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx((1.0 - p0) - 1.0).epsilon(1e-12));
}

TEST_CASE("two-layer net gradients match central finite differences") {
  // 10 parameters: 2x3 weight, 2 bias, 1x2 weight, then tanh/mean pipeline
  Rng rng(5);
  Tensor input = random_tensor({3}, rng);
  Tensor theta = random_tensor({11}, rng);
  auto f = [&](Tape& t, const Tensor& p) {
    Tensor w1 = t.reshape(t.slice(p, 0, 0, 6), {2, 3});
    Tensor b1 = t.slice(p, 0, 6, 8);
    Tensor w2 = t.reshape(t.slice(p, 0, 8, 10), {1, 2});
    Tensor b2 = t.slice(p, 0, 10, 11);
    Tensor h = t.tanh(t.add(t.matmul(w1, t.leaf(input, false)), b1));
    Tensor y = t.add(t.matmul(w2, h), b2);
    return t.mean(t.mul(y, y));
  };
  CHECK(grad_check(f, theta, 1e-4) < 1e-5);
}

TEST_CASE("grad_check: sum has exactly-ones gradient") {
  Rng rng(13);
  Tensor p = random_tensor({6}, rng);
  auto f = [](Tape& t, const Tensor& x) {
    return t.mul(t.mean(x), Tensor::scalar(static_cast<double>(x.size())));
  };
  CHECK(grad_check(f, p, 1e-4) < 1e-10);
}

TEST_CASE("grad_check: sigmoid-then-mean on a random 4-vector") {
  Rng rng(17);
  Tensor p = random_tensor({4}, rng);
  auto f = [](Tape& t, const Tensor& x) { return t.mean(t.sigmoid(x)); };
  CHECK(grad_check(f, p, 1e-4) < 1e-3);
}

TEST_CASE("grad_check flags an intentionally wrong gradient") {
  // mean(x * detach(x)) claims gradient x, true gradient is 2x
  Rng rng(19);
  Tensor p = random_tensor({4}, rng, 0.5, 1.5);
  auto f = [](Tape& t, const Tensor& x) {
    Tensor detached = t.leaf(x, false);  // same values, no grad path
    return t.mean(t.mul(x, detached));
  };
  CHECK(grad_check(f, p, 1e-4) > 0.1);
}

TEST_CASE("sgd_step basics") {
  SUBCASE("lr = 0 leaves params unchanged") {
    Tensor p = Tensor::of({1.0, -2.0});
    Tensor orig = p;
    SgdOptimizer opt(0.0, 0.9);
    opt.step({&p}, {Tensor::of({3.0, 4.0})});
    CHECK(p.equals(orig));
  }
  SUBCASE("single step arithmetic") {
    Tensor p = Tensor::of({1.0});
    SgdOptimizer opt(0.5, 0.0);
    opt.step({&p}, {Tensor::of({2.0})});
    CHECK(p[0] == doctest::Approx(0.0).epsilon(1e-15));
  }
  SUBCASE("3 momentum steps on f(p)=p^2 match a hand-run loop") {
    // oracle: plain loop over v <- 0.9 v + 2p, p <- p - 0.1 v
    double pv = 1.0, vv = 0.0;
    std::vector<double> expect;
    for (int i = 0; i < 3; ++i) {
      vv = 0.9 * vv + 2.0 * pv;
      pv -= 0.1 * vv;
      expect.push_back(pv);
    }
    Tensor p = Tensor::of({1.0});
    SgdOptimizer opt(0.1, 0.9);
    for (int i = 0; i < 3; ++i) {
      Tape t;
      Tensor x = t.leaf(p, true);
      Tensor loss = t.mean(t.mul(x, x));
      t.backward(loss);
      opt.step({&p}, {t.grad(x)});
      CHECK(p[0] == doctest::Approx(expect[i]).epsilon(1e-14));
    }
  }
  SUBCASE("shape mismatch rejected") {
    Tensor p = Tensor::of({1.0, 2.0});
    SgdOptimizer opt(0.1, 0.0);
    CHECK_THROWS_AS(opt.step({&p}, {Tensor::of({1.0})}), Error);
  }
}

TEST_CASE("grad_check over the full op suite stays below 1e-5") {
  Rng rng(23);
  const double eps = 1e-4;
  for (int rep = 0; rep < 20; ++rep) {
    // matmul
    {
      Tensor a = random_tensor({3, 4}, rng);
      Tensor b = random_tensor({4, 2}, rng);
      auto fa = [&](Tape& t, const Tensor& x) { return t.mean(t.matmul(x, t.leaf(b, false))); };
      auto fb = [&](Tape& t, const Tensor& x) { return t.mean(t.matmul(t.leaf(a, false), x)); };
      CHECK(grad_check(fa, a, eps) < 1e-5);
      CHECK(grad_check(fb, b, eps) < 1e-5);
    }
    // conv, both strides, both inputs
    {
      Tensor x = random_tensor({2, 4, 6}, rng);
      Tensor w = random_tensor({3, 2, 3, 3}, rng);
      for (int stride : {1, 2}) {
        auto fx = [&](Tape& t, const Tensor& p) {
          return t.mean(t.conv3x3(p, t.leaf(w, false), stride));
        };
        auto fw = [&](Tape& t, const Tensor& p) {
          return t.mean(t.conv3x3(t.leaf(x, false), p, stride));
        };
        CHECK(grad_check(fx, x, eps) < 1e-5);
        CHECK(grad_check(fw, w, eps) < 1e-5);
      }
    }
    // elementwise + broadcasts
    {
      Tensor a = random_tensor({2, 3}, rng);
      Tensor b = random_tensor({3}, rng);
      auto f1 = [&](Tape& t, const Tensor& p) { return t.mean(t.add(p, t.leaf(b, false))); };
      auto f2 = [&](Tape& t, const Tensor& p) { return t.mean(t.add(t.leaf(a, false), p)); };
      auto f3 = [&](Tape& t, const Tensor& p) { return t.mean(t.mul(p, p)); };
      CHECK(grad_check(f1, a, eps) < 1e-5);
      CHECK(grad_check(f2, b, eps) < 1e-5);
      CHECK(grad_check(f3, a, eps) < 1e-5);
    }
    // activations; relu points kept away from the kink
    {
      Tensor x = random_tensor({5}, rng);
      for (size_t i = 0; i < x.size(); ++i)
        if (std::abs(x[i]) < 0.05) x.mutable_data()[i] = 0.1;
      auto fs = [](Tape& t, const Tensor& p) { return t.mean(t.sigmoid(p)); };
      auto ft = [](Tape& t, const Tensor& p) { return t.mean(t.tanh(p)); };
      auto fr = [](Tape& t, const Tensor& p) { return t.mean(t.relu(p)); };
      CHECK(grad_check(fs, x, eps) < 1e-5);
      CHECK(grad_check(ft, x, eps) < 1e-5);
      CHECK(grad_check(fr, x, eps) < 1e-5);
    }
    // concat + slice + reshape
    {
      Tensor a = random_tensor({2, 3}, rng);
      auto f = [&](Tape& t, const Tensor& p) {
        Tensor c = t.concat({p, p}, 1);
        Tensor s = t.slice(c, 1, 1, 5);
        return t.mean(t.reshape(s, {8}));
      };
      CHECK(grad_check(f, a, eps) < 1e-5);
    }
    // softmax_xent, both layouts
    {
      Tensor logits = random_tensor({4, 3}, rng);
      Tensor targets(Shape{4}, {0.0, 2.0, 1.0, 2.0});
      auto f = [&](Tape& t, const Tensor& p) {
        return t.mean(t.softmax_xent(p, t.leaf(targets, false)));
      };
      CHECK(grad_check(f, logits, eps) < 1e-5);
      Tensor planar = random_tensor({3, 2, 2}, rng);
      Tensor tplanar(Shape{2, 2}, {0.0, 1.0, 2.0, 1.0});
      auto f2 = [&](Tape& t, const Tensor& p) {
        return t.mean(t.softmax_xent(p, t.leaf(tplanar, false)));
      };
      CHECK(grad_check(f2, planar, eps) < 1e-5);
    }
    // mse + mean
    {
      Tensor a = random_tensor({6}, rng);
      Tensor b = random_tensor({6}, rng);
      auto f = [&](Tape& t, const Tensor& p) { return t.mse(p, t.leaf(b, false)); };
      auto f2 = [&](Tape& t, const Tensor& p) { return t.mse(t.leaf(a, false), p); };
      CHECK(grad_check(f, a, eps) < 1e-5);
      CHECK(grad_check(f2, b, eps) < 1e-5);
    }
  }
}

TEST_CASE("softmax rows sum to one and cross-entropy is nonnegative") {
  Rng rng(29);
  for (int rep = 0; rep < 50; ++rep) {
    Tensor logits = random_tensor({3, 6}, rng, -4.0, 4.0);
    Tensor targets(Shape{3}, {1.0, 0.0, 5.0});
    Tape t;
    Tensor bound = t.leaf(logits, true);
    Tensor ce = t.softmax_xent(bound, t.leaf(targets, false));
    for (size_t i = 0; i < 3; ++i) CHECK(ce[i] >= 0.0);
    // probe row sums through the gradient identity: sum_k p_k = 1 + sum_k dCE/dl_k
    t.backward(t.mean(ce));
    const Tensor& g = t.grad(bound);
    for (size_t i = 0; i < 3; ++i) {
      double s = 0.0;
      for (size_t k = 0; k < 6; ++k) s += g[i * 6 + k] * 3.0;  // undo the mean
      CHECK(std::abs(s) < 1e-9);  // softmax sums to 1 => gradient row sums to 0
    }
  }
}

TEST_CASE("forward and backward are bit-deterministic") {
  Rng rng(31);
  Tensor x = random_tensor({2, 6, 6}, rng);
  Tensor w = random_tensor({2, 2, 3, 3}, rng);
  auto run = [&]() {
    Tape t;
    Tensor xb = t.leaf(x, true);
    Tensor wb = t.leaf(w, true);
    Tensor y = t.relu(t.conv3x3(xb, wb, 1));
    Tensor loss = t.mse(y, t.leaf(Tensor(y.shape()), false));
    t.backward(loss);
    return std::pair{t.grad(xb), t.grad(wb)};
  };
  auto [g1x, g1w] = run();
  auto [g2x, g2w] = run();
  CHECK(g1x.equals(g2x));
  CHECK(g1w.equals(g2w));
}

TEST_CASE("disjoint tapes do not interact") {
  Tape t1, t2;
  Tensor x1 = t1.leaf(Tensor::of({2.0}), true);
  Tensor x2 = t2.leaf(Tensor::of({5.0}), true);
  Tensor l1 = t1.mean(t1.mul(x1, x1));
  Tensor l2 = t2.mean(t2.mul(x2, x2));
  t2.backward(l2);
  t1.backward(l1);
  CHECK(t1.grad(x1)[0] == doctest::Approx(4.0));
  CHECK(t2.grad(x2)[0] == doctest::Approx(10.0));
  // a tensor from tape 1 used on tape 2 joins as a constant
  Tensor cross = t2.mul(x1, x2);
  CHECK(cross[0] == doctest::Approx(10.0));
}

TEST_CASE("op errors carry the offending shapes") {
  Tape t;
  Tensor a = t.leaf(Tensor(Shape{2, 3}), false);
  Tensor b = t.leaf(Tensor(Shape{2, 3}), false);
  CHECK_THROWS_WITH_AS(t.matmul(a, b), doctest::Contains("[2,3]"), Error);
  CHECK_THROWS_AS(t.add(a, t.leaf(Tensor(Shape{4}), false)), Error);
  CHECK_THROWS_AS(t.backward(a), Error);  // non-scalar loss
  Tensor logits = t.leaf(Tensor(Shape{1, 2}), false);
  CHECK_THROWS_WITH_AS(t.softmax_xent(logits, t.leaf(Tensor(Shape{1}, {7.0}), false)),
                       doctest::Contains("out of range"), Error);
}

TEST_CASE("checked mode rejects non-finite outputs") {
  Tape t;
  t.set_check_finite(true);
  Tensor big = t.leaf(Tensor::of({1e308}), false);
  CHECK_THROWS_AS(t.mul(big, big), Error);
  Tape loose;
  Tensor prod = loose.mul(loose.leaf(Tensor::of({1e308}), false),
                          loose.leaf(Tensor::of({1e308}), false));
  CHECK(std::isinf(prod[0]));
}

TEST_CASE("upsample2x replicates pixels") {
  Tensor x(Shape{1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tape t;
  Tensor up = upsample2x(t, t.leaf(x, false));
  REQUIRE(up.shape() == Shape{1, 4, 4});
  const double expect[16] = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  for (size_t i = 0; i < 16; ++i) CHECK(up[i] == expect[i]);
  // and gradients flow back through it
  Rng rng(37);
  Tensor p = random_tensor({1, 2, 2}, rng);
  auto f = [](Tape& tt, const Tensor& v) { return tt.mean(upsample2x(tt, v)); };
  CHECK(grad_check(f, p, 1e-4) < 1e-10);
}

TEST_CASE("checkpoint container round-trips bitwise and rejects bad magic") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "mfpn_ckpt_test";
  fs::create_directories(dir);
  const std::string path = (dir / "model.mfpn").string();

  Rng rng(41);
  TensorMap m;
  m["lom.c1.w"] = random_tensor({4, 3, 3, 3}, rng);
  m["lom.c1.b"] = random_tensor({4}, rng);
  m["scalar"] = Tensor::scalar(0.123456789012345678);
  save_checkpoint(path, m);
  TensorMap back = load_checkpoint(path);
  REQUIRE(back.size() == m.size());
  for (const auto& [k, v] : m) {
    REQUIRE(back.count(k) == 1);
    CHECK(back[k].equals(v));
  }

  // saving the loaded map again produces identical bytes
  const std::string path2 = (dir / "model2.mfpn").string();
  save_checkpoint(path2, back);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);

  const std::string bad = (dir / "bad.mfpn").string();
  {
    std::ofstream os(bad, std::ios::binary);
    os << "NOPE0000";
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(bad), doctest::Contains("bad magic"), Error);
  fs::remove_all(dir);
}
