#include <doctest.h>

#include <cmath>

#include "fcre/errors.hpp"
#include "fcre/losses.hpp"
#include "helpers.hpp"

using namespace fcre;
using namespace fcre::test;

namespace {

Matrix random_rows(std::size_t n, std::size_t d, RngState& rng, bool unit = false) {
  Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      m(i, c) = rng.uniform(-1.0, 1.0);
      sq += m(i, c) * m(i, c);
    }
    if (unit) {
      const double inv = 1.0 / std::sqrt(sq);
      for (std::size_t c = 0; c < d; ++c) m(i, c) *= inv;
    }
  }
  return m;
}

// Long-double recomputation of the batch InfoNCE expression.
double info_nce_oracle(const Matrix& gphi, const Matrix& glm, const Matrix& w, double tau) {
  const std::size_t B = gphi.rows();
  long double total = 0.0L;
  for (std::size_t i = 0; i < B; ++i) {
    std::vector<long double> scores(B);
    for (std::size_t j = 0; j < B; ++j) {
      long double s = 0.0L;
      for (std::size_t r = 0; r < gphi.cols(); ++r) {
        long double wg = 0.0L;
        for (std::size_t c = 0; c < glm.cols(); ++c) {
          wg += static_cast<long double>(w(r, c)) * glm(j, c);
        }
        s += static_cast<long double>(gphi(i, r)) * wg;
      }
      scores[j] = s / tau;
    }
    long double denom = 0.0L;
    for (long double s : scores) denom += std::exp(s - scores[i]);
    total += -std::log(denom);  // log(h(i,i)/sum_j h(i,j))
  }
  return static_cast<double>(total / B);
}

}  // namespace

TEST_CASE("info_nce with a zero critic is exactly -ln B") {
  RngState rng(1);
  for (std::size_t B : {2u, 4u, 8u}) {
    const Matrix gphi = random_rows(B, 3, rng);
    const Matrix glm = random_rows(B, 5, rng);
    const Matrix w(3, 5);
    const InfoNceResult r = info_nce(gphi, glm, w, 1.0);
    CHECK(std::abs(r.value + std::log(static_cast<double>(B))) <= 1e-12);
    for (std::size_t i = 0; i < r.d_w.size(); ++i) CHECK(std::isfinite(r.d_w[i]));
  }
}

TEST_CASE("info_nce singleton batch is exactly zero") {
  RngState rng(2);
  const Matrix gphi = random_rows(1, 4, rng);
  const Matrix glm = random_rows(1, 6, rng);
  const Matrix w = random_rows(4, 6, rng);
  const InfoNceResult r = info_nce(gphi, glm, w, 0.7);
  CHECK(r.value == 0.0);
}

TEST_CASE("info_nce diagonal two-batch matches the scalar oracle") {
  Matrix gphi(2, 2);
  gphi(0, 0) = 1.0;
  gphi(1, 1) = 1.0;
  Matrix glm(2, 2);
  glm(0, 0) = 1.0;
  glm(1, 1) = 1.0;
  Matrix w(2, 2);
  w(0, 0) = w(1, 1) = 1.0;  // identity-padded critic
  const InfoNceResult r = info_nce(gphi, glm, w, 1.0);
  // each term log(e / (e + 1))
  const double want = static_cast<double>(std::log(std::exp(1.0L) / (std::exp(1.0L) + 1.0L)));
  CHECK(r.value == doctest::Approx(want).epsilon(1e-14));
  CHECK(r.value == doctest::Approx(-0.313262).epsilon(1e-5));

  const InfoNceResult mi = mi_loss(gphi, glm, w, 1.0);
  CHECK(mi.value == doctest::Approx(-want).epsilon(1e-14));
}

TEST_CASE("info_nce is never positive and matches the long-double oracle") {
  RngState rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t B = 1 + rng.below(6);
    const std::size_t dp = 2 + rng.below(4);
    const std::size_t dl = 2 + rng.below(6);
    const Matrix gphi = random_rows(B, dp, rng);
    const Matrix glm = random_rows(B, dl, rng);
    const Matrix w = random_rows(dp, dl, rng);
    const double tau = 0.25 + rng.uniform() * 2.0;
    const InfoNceResult r = info_nce(gphi, glm, w, tau);
    CHECK(r.value <= 0.0);
    CHECK(r.value == doctest::Approx(info_nce_oracle(gphi, glm, w, tau)).epsilon(1e-10));
    CHECK(mi_loss(gphi, glm, w, tau).value >= 0.0);
  }
}

TEST_CASE("info_nce rejects mismatched batches") {
  RngState rng(4);
  CHECK_THROWS_AS(
      info_nce(random_rows(3, 2, rng), random_rows(2, 4, rng), Matrix(2, 4), 1.0), ShapeError);
}

TEST_CASE("info_nce full gradient matches finite differences") {
  RngState rng(5);
  double worst = 0.0;
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t B = 2 + rng.below(3);
    const std::size_t dp = 2 + rng.below(3);
    const std::size_t dl = 3 + rng.below(3);
    Matrix gphi = random_rows(B, dp, rng);
    Matrix glm = random_rows(B, dl, rng);
    Matrix w = random_rows(dp, dl, rng);
    const double tau = 0.5 + rng.uniform();
    const InfoNceResult r = info_nce(gphi, glm, w, tau);

    const std::vector<double> x0 = flatten({&gphi, &glm, &w});
    auto f = [&](const std::vector<double>& x) {
      Matrix a = gphi, b = glm, c = w;
      unflatten(x, {&a, &b, &c});
      return info_nce(a, b, c, tau).value;
    };
    worst = std::max(worst, max_grad_err(f, x0, flatten({&r.d_gphi, &r.d_glm, &r.d_w})));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("ce_proto on an aligned feature against an orthogonal negative") {
  Matrix protos(2, 3);
  protos(0, 0) = 1.0;  // label prototype
  protos(1, 1) = 1.0;  // orthogonal
  const Matrix f = Matrix::row({1.0, 0.0, 0.0});
  const ProtoLossResult r = ce_proto(f, protos, 0);
  // sims = [1, 0]: loss = log(e + 1) - 1
  const double want = static_cast<double>(std::log(std::exp(1.0L) + 1.0L) - 1.0L);
  CHECK(r.value == doctest::Approx(want).epsilon(1e-14));
  CHECK(r.value == doctest::Approx(0.313262).epsilon(1e-5));
}

TEST_CASE("ce_proto over identical prototypes is ln n") {
  RngState rng(6);
  for (std::size_t n : {2u, 3u, 7u}) {
    Matrix protos(n, 4);
    const Matrix proto = random_rows(1, 4, rng);
    for (std::size_t i = 0; i < n; ++i) protos.set_row(i, proto);
    const Matrix f = random_rows(1, 4, rng);
    const ProtoLossResult r = ce_proto(f, protos, 1);
    CHECK(r.value == doctest::Approx(std::log(static_cast<double>(n))).epsilon(1e-12));
  }
}

TEST_CASE("ce_proto value is shift-invariant in its similarity space") {
  // independent oracle: -log softmax over cosines, evaluated with several
  // uniform shifts (the result must not depend on the shift)
  RngState rng(7);
  const Matrix protos = random_rows(4, 5, rng);
  const Matrix f = random_rows(1, 5, rng);
  const ProtoLossResult r = ce_proto(f, protos, 2);
  for (double shift : {0.0, -3.0, 11.0}) {
    std::vector<long double> sims;
    for (std::size_t l = 0; l < protos.rows(); ++l) {
      sims.push_back(static_cast<long double>(cosine(f, protos.row_copy(l))) + shift);
    }
    long double denom = 0.0L;
    for (long double s : sims) denom += std::exp(s - sims[2]);
    CHECK(r.value == doctest::Approx(static_cast<double>(std::log(denom))).epsilon(1e-12));
  }
}

TEST_CASE("ce_proto gradient check") {
  RngState rng(8);
  double worst = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 2 + rng.below(4);
    const std::size_t d = 2 + rng.below(4);
    Matrix protos = random_rows(n, d, rng);
    Matrix f = random_rows(1, d, rng);
    const std::size_t label = rng.below(n);
    const ProtoLossResult r = ce_proto(f, protos, label);
    const std::vector<double> x0 = flatten({&f, &protos});
    auto fn = [&](const std::vector<double>& x) {
      Matrix ff = f, pp = protos;
      unflatten(x, {&ff, &pp});
      return ce_proto(ff, pp, label).value;
    };
    worst = std::max(worst, max_grad_err(fn, x0, flatten({&r.d_f, &r.d_protos})));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("loss_cc basics") {
  Matrix f(1, 2), p(1, 2);
  f(0, 0) = 1.0;
  CHECK(loss_cc(f, f).value == 0.0);
  const PairLossResult r = loss_cc(f, p);
  CHECK(r.value == doctest::Approx(1.0));
  CHECK(r.d_features(0, 0) == doctest::Approx(1.0));
  CHECK(r.d_refs(0, 0) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(loss_cc(Matrix(2, 2), Matrix(1, 2)), ShapeError);
}

TEST_CASE("loss_cc gradient check away from the kink") {
  RngState rng(9);
  double worst = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + rng.below(4);
    const std::size_t d = 2 + rng.below(4);
    Matrix feats = random_rows(n, d, rng);
    Matrix refs = random_rows(n, d, rng);
    const PairLossResult r = loss_cc(feats, refs);
    const std::vector<double> x0 = flatten({&feats, &refs});
    auto fn = [&](const std::vector<double>& x) {
      Matrix ff = feats, pp = refs;
      unflatten(x, {&ff, &pp});
      return loss_cc(ff, pp).value;
    };
    worst = std::max(worst, max_grad_err(fn, x0, flatten({&r.d_features, &r.d_refs})));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("similar_prototypes screening") {
  // brute-force oracle over a hand-built configuration
  Matrix protos(4, 3);
  protos(0, 0) = 1.0;                 // label
  protos(1, 1) = 1.0;                 // orthogonal negative
  protos(2, 2) = 1.0;                 // orthogonal negative
  protos(3, 0) = protos(3, 1) = 1.0;  // 45 degrees from f
  const Matrix f = Matrix::row({1.0, 0.0, 0.0});

  SUBCASE("saturated threshold includes everything") {
    const auto psim = similar_prototypes(f, protos, 0, 2.0);
    CHECK(psim == std::vector<std::size_t>{0, 3, 1, 2});
  }
  SUBCASE("zero threshold keeps label and most similar negative") {
    const auto psim = similar_prototypes(f, protos, 0, 0.0);
    CHECK(psim == std::vector<std::size_t>{0, 3});
  }
  SUBCASE("argmax ties break toward the lowest index") {
    Matrix ortho(3, 3);
    ortho(0, 0) = 1.0;
    ortho(1, 1) = 1.0;  // cos 0
    ortho(2, 2) = 1.0;  // cos 0 (tie)
    const auto psim = similar_prototypes(f, ortho, 0, 0.0);
    CHECK(psim == std::vector<std::size_t>{0, 1});
  }
  SUBCASE("fewer than two prototypes returns the label only") {
    Matrix single(1, 3);
    single(0, 0) = 1.0;
    CHECK(similar_prototypes(f, single, 0, 5.0) == std::vector<std::size_t>{0});
  }
}

TEST_CASE("similar_prototypes matches a brute-force oracle on random data") {
  RngState rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(5);
    Matrix protos = random_rows(n, 4, rng);
    const Matrix f = random_rows(1, 4, rng);
    const std::size_t label = rng.below(n);
    const double alpha = rng.uniform() * 1.5;

    std::vector<double> sims;
    for (std::size_t l = 0; l < n; ++l) sims.push_back(cosine(f, protos.row_copy(l)));
    std::vector<std::size_t> want{label};
    std::size_t most = label == 0 ? 1 : 0;
    for (std::size_t s = 0; s < n; ++s) {
      if (s != label && sims[s] > sims[most]) most = s;
    }
    want.push_back(most);
    for (std::size_t s = 0; s < n; ++s) {
      if (s != label && s != most && sims[label] - sims[s] < alpha) want.push_back(s);
    }
    CHECK(similar_prototypes(f, protos, label, alpha) == want);
  }
}

TEST_CASE("loss_fc special cases and gradient") {
  Matrix single(1, 3);
  single(0, 0) = 1.0;
  const Matrix f = Matrix::row({1.0, 0.0, 0.0});
  CHECK(loss_fc(f, single, 0, 1.0).value == 0.0);

  // two prototypes at equal similarity: ln 2
  Matrix pair(2, 3);
  pair(0, 0) = pair(0, 1) = 1.0;
  pair(1, 0) = pair(1, 1) = 1.0;
  const ProtoLossResult r = loss_fc(f, pair, 0, 1.0);
  CHECK(r.value == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  RngState rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 3 + rng.below(3);
    Matrix protos = random_rows(n, 4, rng);
    Matrix ff = random_rows(1, 4, rng);
    const std::size_t label = rng.below(n);
    const double alpha = 0.3 + rng.uniform();
    // membership held fixed across the probe
    const auto psim = similar_prototypes(ff, protos, label, alpha);
    if (psim.size() < 2) continue;
    const ProtoLossResult g = restricted_ce_proto(ff, protos, label, psim);
    const std::vector<double> x0 = flatten({&ff, &protos});
    auto fn = [&](const std::vector<double>& x) {
      Matrix f2 = ff, p2 = protos;
      unflatten(x, {&f2, &p2});
      return restricted_ce_proto(f2, p2, label, psim).value;
    };
    worst = std::max(worst, max_grad_err(fn, x0, flatten({&g.d_f, &g.d_protos})));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("loss_dc basics") {
  ProtoStack pm;
  pm.rels = {0};
  pm.vecs = Matrix(1, 2);
  pm.vecs(0, 1) = 1.0;  // prototype [0, 1]
  Matrix feats(1, 2);
  feats(0, 0) = 1.0;  // orthogonal feature
  const DcLossResult r = loss_dc(feats, {0}, pm);
  CHECK(r.value == doctest::Approx(1.0));  // |cos(f,p) - cos(p,p)| = |0 - 1|

  // features equal to their prototypes: exactly zero
  Matrix same(1, 2);
  same(0, 1) = 1.0;
  CHECK(loss_dc(same, {0}, pm).value == 0.0);

  CHECK_THROWS_AS(loss_dc(feats, {0}, ProtoStack{}), ConfigError);
  CHECK_THROWS_AS(loss_dc(feats, {5}, pm), ProtocolError);
}

TEST_CASE("loss_dc gradient check") {
  RngState rng(12);
  double worst = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = 2 + rng.below(3);
    const std::size_t n = 1 + rng.below(3);
    const std::size_t d = 3 + rng.below(3);
    ProtoStack pm;
    pm.vecs = random_rows(m, d, rng);
    for (std::size_t i = 0; i < m; ++i) pm.rels.push_back(static_cast<int>(i));
    Matrix feats = random_rows(n, d, rng);
    std::vector<int> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back(static_cast<int>(rng.below(m)));
    const DcLossResult r = loss_dc(feats, labels, pm);
    const std::vector<double> x0 = flatten({&feats});
    auto fn = [&](const std::vector<double>& x) {
      Matrix f2 = feats;
      unflatten(x, {&f2});
      return loss_dc(f2, labels, pm).value;
    };
    worst = std::max(worst, max_grad_err(fn, x0, flatten({&r.d_features})));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("ce_linear uniform, saturated, shifted and checked") {
  const Matrix h = Matrix::row({0.3, -0.2});
  CHECK(ce_linear(h, Matrix(2, 2), Matrix(1, 2), 0).value ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Matrix w(2, 1);
  w(0, 0) = 10.0;
  const Matrix h1 = Matrix::row({1.0});
  CHECK(ce_linear(h1, w, Matrix(1, 2), 0).value < 1e-4);

  // adding a constant to every logit via the bias leaves the value unchanged
  RngState rng(13);
  Matrix wr = random_rows(3, 4, rng);
  Matrix br = random_rows(1, 3, rng);
  const Matrix hr = random_rows(1, 4, rng);
  const double base = ce_linear(hr, wr, br, 1).value;
  Matrix shifted = br;
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += 7.5;
  CHECK(ce_linear(hr, wr, shifted, 1).value == doctest::Approx(base).epsilon(1e-12));

  CHECK_THROWS_AS(ce_linear(hr, wr, br, 3), IndexError);

  double worst = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = 2 + rng.below(4);
    const std::size_t d = 2 + rng.below(4);
    Matrix w2 = random_rows(m, d, rng);
    Matrix b2 = random_rows(1, m, rng);
    Matrix h2 = random_rows(1, d, rng);
    const std::size_t label = rng.below(m);
    const LinearCeResult r = ce_linear(h2, w2, b2, label);
    const std::vector<double> x0 = flatten({&h2, &w2, &b2});
    auto fn = [&](const std::vector<double>& x) {
      Matrix hh = h2, ww = w2, bb = b2;
      unflatten(x, {&hh, &ww, &bb});
      return ce_linear(hh, ww, bb, label).value;
    };
    worst = std::max(worst, max_grad_err(fn, x0, flatten({&r.d_h, &r.d_w, &r.d_b})));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("loss_fd identity, orthogonality and gradient") {
  Matrix a(1, 2);
  a(0, 0) = 1.0;
  CHECK(loss_fd(a, a).value == doctest::Approx(0.0));
  Matrix b(1, 2);
  b(0, 1) = 1.0;
  CHECK(loss_fd(a, b).value == doctest::Approx(1.0));

  RngState rng(14);
  double worst = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 1 + rng.below(4);
    const std::size_t d = 2 + rng.below(4);
    const Matrix old_f = random_rows(n, d, rng, true);
    Matrix new_f = random_rows(n, d, rng, true);
    const FdLossResult r = loss_fd(old_f, new_f);
    const std::vector<double> x0 = flatten({&new_f});
    auto fn = [&](const std::vector<double>& x) {
      Matrix nn = new_f;
      unflatten(x, {&nn});
      return loss_fd(old_f, nn).value;
    };
    worst = std::max(worst, max_grad_err(fn, x0, flatten({&r.d_new})));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("loss_pd identity and empty set are zero") {
  RngState rng(15);
  const Matrix logits = random_rows(3, 5, rng);
  CHECK(loss_pd(logits, logits, {0, 2, 4}).value == doctest::Approx(0.0));
  CHECK(loss_pd(logits, random_rows(3, 5, rng), {}).value == 0.0);
}

TEST_CASE("loss_pd gradient check") {
  RngState rng(16);
  double worst = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t B = 1 + rng.below(3);
    const std::size_t m = 3 + rng.below(3);
    const Matrix old_l = random_rows(B, m, rng);
    Matrix new_l = random_rows(B, m, rng);
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < m; ++c) {
      if (rng.uniform() < 0.7) cols.push_back(c);
    }
    if (cols.size() < 2) cols = {0, 1};
    const double temp = 1.0 + rng.uniform() * 2.0;
    const PdLossResult r = loss_pd(old_l, new_l, cols, temp);
    const std::vector<double> x0 = flatten({&new_l});
    auto fn = [&](const std::vector<double>& x) {
      Matrix nn = new_l;
      unflatten(x, {&nn});
      return loss_pd(old_l, nn, cols, temp).value;
    };
    worst = std::max(worst, max_grad_err(fn, x0, flatten({&r.d_new})));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("mcl with one positive and no negatives is exactly zero") {
  CplConfig cfg;
  const Matrix z = Matrix::row({1.0, 0.0});
  Matrix pos(1, 2);
  pos(0, 0) = 1.0;
  const MclResult r = mcl(z, pos, Matrix(0, 2), cfg);
  CHECK(r.value == 0.0);
  for (std::size_t i = 0; i < r.d_z.size(); ++i) CHECK(r.d_z[i] == 0.0);
}

TEST_CASE("mcl matches an independent scalar evaluation") {
  CplConfig cfg;
  cfg.margin = 0.25;
  cfg.k = 0.1;
  cfg.tau = 1.0;
  const Matrix z = Matrix::row({1.0, 0.0});
  Matrix pos(1, 2);
  pos(0, 0) = 1.0;  // s_p = 1
  Matrix neg(1, 2);
  neg(0, 0) = -1.0;  // s_n = -1

  // oracle: a_p = m + k = 0.35, t_p = 0.35; a_n = 1 - m - k = 0.65,
  // t_n = -0.65; L = log(exp(t_p) + exp(t_n)) - t_p
  const long double tp = 0.35L, tn = -0.65L;
  const double want = static_cast<double>(std::log(std::exp(tp) + std::exp(tn)) - tp);
  const MclResult r = mcl(z, pos, neg, cfg);
  CHECK(r.value == doctest::Approx(want).epsilon(1e-14));

  CHECK_THROWS_AS(mcl(z, Matrix(0, 2), neg, cfg), ConfigError);
}

TEST_CASE("mcl gradient check") {
  RngState rng(17);
  CplConfig cfg;
  cfg.margin = 0.25;
  cfg.k = 0.1;
  cfg.tau = 0.4;
  double worst = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t d = 3 + rng.below(3);
    Matrix z = random_rows(1, d, rng, true);
    Matrix pos = random_rows(1 + rng.below(3), d, rng, true);
    Matrix neg = random_rows(rng.below(4), d, rng, true);
    const MclResult r = mcl(z, pos, neg, cfg);
    std::vector<Matrix*> inputs{&z, &pos};
    std::vector<const Matrix*> grads{&r.d_z, &r.d_pos};
    if (neg.rows() > 0) {
      inputs.push_back(&neg);
      grads.push_back(&r.d_neg);
    }
    const std::vector<double> x0 = flatten(const_ptrs(inputs));
    auto fn = [&](const std::vector<double>& x) {
      Matrix zz = z, pp = pos, nn = neg;
      std::vector<Matrix*> rebuilt{&zz, &pp};
      if (neg.rows() > 0) rebuilt.push_back(&nn);
      unflatten(x, rebuilt);
      return mcl(zz, pp, nn, cfg).value;
    };
    worst = std::max(worst, max_grad_err(fn, x0, flatten(grads)));
  }
  CHECK(worst < 1e-4);
}
