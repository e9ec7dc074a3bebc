#include <doctest.h>

#include <numeric>

#include "mgnn/temporal/temporal.hpp"
#include "support.hpp"

using namespace mgnn;
using namespace mgnn::temporal;
using testsupport::random_matrix;

TEST_CASE("positional encoding table") {
  const auto pe = positional_encoding<double>(4, 6);
  CHECK(pe(0, 0) == 0.0);
  CHECK(pe(0, 1) == 1.0);
  CHECK(pe(3, 2) == doctest::Approx(std::sin(3 / std::pow(10000.0, 2.0 / 6))));
  CHECK(pe(3, 5) == doctest::Approx(std::cos(3 / std::pow(10000.0, 4.0 / 6))));
}

TEST_CASE("encode_window") {
  std::mt19937_64 eng(11);
  SUBCASE("zeroed attention and FFN weights leave the residual path") {
    Rng rng(1);
    auto p = TemporalParams<double>::init(8, 2, 16, rng);
    p.positional = false;
    for (auto* m : {&p.Wq, &p.Wk, &p.Wv, &p.Wo, &p.W1, &p.W2}) m->setZero();
    // identity norms: rows with zero mean and unit variance pass through LN unchanged
    RowVector<double> row(8);
    row << 1, -1, 1, -1, 1, -1, 1, -1;
    const Matrix<double> X = row.replicate(5, 1);
    p.eps = 0;
    const auto out = encode_window(X, p);
    CHECK((out.transpose() - row).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("width must divide into heads") {
    Rng rng(1);
    CHECK_THROWS_AS(TemporalParams<double>::init(10, 8, 16, rng), ConfigError);
  }
  SUBCASE("window width checked") {
    Rng rng(1);
    const auto p = TemporalParams<double>::init(8, 2, 16, rng);
    CHECK_THROWS_AS(encode_window(Matrix<double>::Zero(3, 7).eval(), p), ShapeMismatch);
  }
  SUBCASE("full-sequence reference oracle") {
    for (int trial = 0; trial < 20; ++trial) {
      const Index T = 1 + trial % 12;
      auto p = testsupport::random_temporal<double>(eng, 16, 4, 24);
      p.positional = trial % 2 == 0;
      const Matrix<double> X = random_matrix<double>(eng, T, 16);
      const auto got = encode_window(X, p);
      const auto want = testsupport::ref_encode_window(X, p);
      for (Index i = 0; i < 16; ++i) CHECK(std::abs(got[i] - want[i]) < 1e-10);
    }
  }
  SUBCASE("without positions, reordering the earlier rows changes nothing") {
    auto p = testsupport::random_temporal<double>(eng, 16, 8, 32);
    p.positional = false;
    Matrix<double> X = random_matrix<double>(eng, 10, 16);
    const auto a = encode_window(X, p);
    std::vector<Index> perm(9);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), eng);
    Matrix<double> Y = X;
    for (Index i = 0; i < 9; ++i) Y.row(i) = X.row(perm[i]);
    CHECK((encode_window(Y, p) - a).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("with positions, order matters") {
    auto p = testsupport::random_temporal<double>(eng, 16, 8, 32);
    Matrix<double> X = random_matrix<double>(eng, 10, 16);
    Matrix<double> Y = X;
    Y.row(0).swap(Y.row(5));
    CHECK((encode_window(Y, p) - encode_window(X, p)).cwiseAbs().maxCoeff() > 1e-6);
  }
}

TEST_CASE("decide") {
  SUBCASE("zero weights give uniform scores") {
    DecisionParams<double> p{Matrix<double>::Zero(14, 8), Vector<double>::Zero(14)};
    const auto s = decide(Vector<double>::Ones(8).eval(), p);
    for (Index i = 0; i < 14; ++i) CHECK(s[i] == doctest::Approx(1.0 / 14).epsilon(1e-15));
  }
  SUBCASE("dominant logit") {
    DecisionParams<double> p{Matrix<double>::Zero(3, 1), Vector<double>(3)};
    p.b << 10, -10, -10;
    const auto s = decide(Vector<double>::Zero(1).eval(), p);
    CHECK(s[0] > 1 - 1e-8);
    CHECK(s[1] < 1e-8);
    CHECK(s.sum() == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("exp/sum oracle and shift invariance") {
    std::mt19937_64 eng(12);
    for (int trial = 0; trial < 20; ++trial) {
      DecisionParams<double> p{random_matrix<double>(eng, 5, 6, 3), random_matrix<double>(eng, 5, 1, 3)};
      const Vector<double> f = random_matrix<double>(eng, 6, 1);
      const auto s = decide(f, p);
      std::vector<double> z(5);
      double mx = -1e300, sum = 0;
      for (int i = 0; i < 5; ++i) {
        z[i] = p.b[i];
        for (int k = 0; k < 6; ++k) z[i] += p.W(i, k) * f[k];
        mx = std::max(mx, z[i]);
      }
      for (double v : z) sum += std::exp(v - mx);
      for (int i = 0; i < 5; ++i) CHECK(std::abs(s[i] - std::exp(z[i] - mx) / sum) < 1e-15);
      auto shifted = p;
      shifted.b.array() += 123.0;
      CHECK((decide(f, shifted) - s).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("decompose") {
  SUBCASE("all mass on normal") {
    Vector<double> s = Vector<double>::Zero(4);
    s[0] = 1;
    const auto d = decompose(s);
    CHECK(d.p_normal == 1);
    CHECK(d.p_abnormal == 0);
    CHECK(d.conditional_undefined);
    for (double c : d.conditional) CHECK(c == doctest::Approx(1.0 / 3));
  }
  SUBCASE("arithmetic") {
    const auto d = decompose((Vector<double>(3) << 0.5, 0.25, 0.25).finished());
    CHECK(d.p_abnormal == 0.5);
    CHECK(d.conditional == std::vector<double>{0.5, 0.5});
    CHECK_FALSE(d.conditional_undefined);
  }
  SUBCASE("conditional sums to one") {
    std::mt19937_64 eng(13);
    for (int trial = 0; trial < 50; ++trial) {
      const Vector<double> z = random_matrix<double>(eng, 7, 1, 4);
      const Vector<double> s = nn::softmax_rows(z.transpose()).row(0).transpose();
      const auto d = decompose(s);
      CHECK(std::accumulate(d.conditional.begin(), d.conditional.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));
      CHECK(std::abs(d.p_abnormal - (1 - d.p_normal)) < 1e-6);
    }
  }
}

TEST_CASE("temporal and decision gradients match central differences") {
  std::mt19937_64 eng(14);
  for (int trial = 0; trial < 4; ++trial) {
    auto p = testsupport::random_temporal<double>(eng, 8, 2, 12);
    p.positional = trial % 2 == 0;
    DecisionParams<double> dp{random_matrix<double>(eng, 4, 8), random_matrix<double>(eng, 4, 1)};
    Matrix<double> X = random_matrix<double>(eng, 5, 8);
    const Vector<double> c = random_matrix<double>(eng, 4, 1);

    // loss = c . softmax(W encode(X) + b)
    WindowCache<double> cache;
    const Vector<double> f = encode_window(X, p, &cache);
    const Vector<double> s = decide(f, dp);
    const Matrix<double> dz =
        nn::softmax_rows_backward<double>(s.transpose(), c.transpose()).transpose();  // column
    auto gd = dp.zeros_like();
    gd.W = dz * f.transpose();
    gd.b = dz;
    const Vector<double> df = dp.W.transpose() * dz;
    auto gp = p.zeros_like();
    Matrix<double> dX = encode_window_backward(df, p, cache, gp);

    auto loss = [&] { return c.dot(decide(encode_window(X, p), dp)); };
    double worst = 0;
    TemporalParams<double>::each_trainable(
        [&](const std::string&, auto& param, auto& grad) {
          worst = std::max(worst, testsupport::check_gradient(param, grad, loss));
        },
        "", p, gp);
    worst = std::max(worst, testsupport::check_gradient(dp.W, gd.W, loss));
    worst = std::max(worst, testsupport::check_gradient(dp.b, gd.b, loss));
    worst = std::max(worst, testsupport::check_gradient(X, dX, loss));
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("dropout is inert without an rng and masks consistently with one") {
  std::mt19937_64 eng(15);
  auto p = testsupport::random_temporal<double>(eng, 8, 2, 12);
  p.dropout = 0.5;
  const Matrix<double> X = random_matrix<double>(eng, 4, 8);
  const auto plain = encode_window(X, p);
  p.dropout = 0;
  CHECK(encode_window(X, p) == plain);
  p.dropout = 0.5;
  Rng r1(3), r2(3);
  WindowCache<double> c;
  const auto a = encode_window(X, p, &c, &r1);
  CHECK(a == encode_window<double>(X, p, nullptr, &r2));
  CHECK(c.drop1.size() == 8);
  for (Index i = 0; i < 8; ++i) CHECK((c.drop1[i] == 0.0 || c.drop1[i] == 2.0));
}
