#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ovd/ils.hpp"
#include "ovd/optim.hpp"
#include "ovd/rng.hpp"

using namespace ovd;

namespace {

std::vector<Proposal> proposals_from_scores(const std::vector<double>& s) {
  std::vector<Proposal> out;
  for (size_t i = 0; i < s.size(); ++i)
    out.push_back(Proposal{Box{0, 0, double(i + 1), 1}, s[i]});
  return out;
}

// full-sort oracle with the same tie rule
std::vector<size_t> sort_oracle(const std::vector<Proposal>& p) {
  std::vector<size_t> idx(p.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    if (p[a].score != p[b].score) return p[a].score > p[b].score;
    return a < b;
  });
  return idx;
}

}  // namespace

TEST_SUITE("ils") {

TEST_CASE("topk fixtures") {
  const auto p = proposals_from_scores({0.2, 0.9, 0.5});
  const auto top2 = select_class_agnostic_topk(p, 2);
  REQUIRE(top2.size() == 2);
  CHECK(top2[0].score == 0.9);
  CHECK(top2[1].score == 0.5);

  const auto all = select_class_agnostic_topk(p, 10);
  REQUIRE(all.size() == 3);
  CHECK(all[0].score == 0.9);
  CHECK(all[2].score == 0.2);
}

TEST_CASE("topk equals full-sort oracle on 1000 random sets") {
  std::mt19937_64 g = rng::engine(31);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = rng::uniform_int(g, 1, 30);
    std::vector<double> scores(static_cast<size_t>(n));
    for (double& s : scores)
      s = rng::uniform_int(g, 0, 9) / 10.0;  // coarse grid forces ties
    const auto p = proposals_from_scores(scores);
    const int k = rng::uniform_int(g, 1, 8);
    const auto got = select_class_agnostic_topk(p, k);
    const auto oracle = sort_oracle(p);
    REQUIRE(got.size() == std::min<size_t>(static_cast<size_t>(k), p.size()));
    for (size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].score == p[oracle[i]].score);
      CHECK(got[i].box.x2 == p[oracle[i]].box.x2);  // identity, not just score
    }
  }
}

TEST_CASE("top1 fixtures and ties") {
  const auto p = proposals_from_scores({0.2, 0.9, 0.5});
  CHECK(select_class_specific_top1_index(p) == 1);
  const auto tied = proposals_from_scores({0.7, 0.7});
  CHECK(select_class_specific_top1_index(tied) == 0);
  CHECK_THROWS_AS(select_class_specific_top1({}), EmptyCandidates);
}

TEST_CASE("top1 equals linear-scan oracle on 1000 random sets") {
  std::mt19937_64 g = rng::engine(32);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = rng::uniform_int(g, 1, 25);
    std::vector<double> scores(static_cast<size_t>(n));
    for (double& s : scores) s = rng::uniform_int(g, 0, 9) / 10.0;
    const auto p = proposals_from_scores(scores);
    size_t best = 0;
    for (size_t i = 1; i < p.size(); ++i)
      if (p[i].score > p[best].score) best = i;
    CHECK(select_class_specific_top1_index(p) == static_cast<int>(best));
    CHECK(select_class_specific_top1(p).score >=
          *std::max_element(scores.begin(), scores.end()) - 1e-15);
  }
}

TEST_CASE("pms_loss hand values") {
  // N=1, C=1, cosine 1, tau_b 50, positive label: ln(1 + e^-50)
  Eigen::MatrixXd row(1, 3);
  row << 1, 0, 0;
  const TextBank bank = make_text_bank(row);
  Eigen::MatrixXd emb(1, 3);
  emb << 2, 0, 0;  // cosine 1 regardless of scale
  const PmsResult r = pms_loss(emb, bank, {0}, 50.0);
  CHECK(r.loss == doctest::Approx(std::log1p(std::exp(-50.0))).epsilon(1e-6));

  // orthogonal negative class at cosine 0 contributes ln 2
  Eigen::MatrixXd rows2(2, 2);
  rows2 << 1, 0, 0, 1;
  const TextBank bank2 = make_text_bank(rows2);
  Eigen::MatrixXd emb2(1, 2);
  emb2 << 1, 0;
  const PmsResult r2 = pms_loss(emb2, bank2, {0}, 50.0);
  // positive at cosine 1 is ~0; negative at cosine 0 is exactly ln 2
  CHECK(r2.loss == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("pms_loss approaches 0 as alignment becomes perfect") {
  Eigen::MatrixXd rows(2, 2);
  rows << 1, 0, -1, 0;  // anti-aligned pair: cos(+e) = 1, cos(-e) = -1
  Eigen::MatrixXd raw = rows;
  const TextBank bank{raw, true};  // rows already unit
  Eigen::MatrixXd emb(1, 2);
  emb << 1, 0;
  const PmsResult r = pms_loss(emb, bank, {0}, 50.0);
  CHECK(r.loss < 1e-9);
}

TEST_CASE("pms_loss gradient matches finite differences") {
  std::mt19937_64 g = rng::engine(33);
  const int n = 3, c = 4, d = 8;
  const TextBank bank = make_text_bank(rng::gaussian_matrix(g, c, d));
  const Eigen::MatrixXd embs = rng::gaussian_matrix(g, n, d);
  std::vector<int> labels(n);
  for (int& y : labels) y = rng::uniform_int(g, 0, c - 1);
  const PmsResult r = pms_loss(embs, bank, labels, 5.0);

  Eigen::VectorXd x0(n * d);
  Eigen::Index at = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x0[at++] = embs(i, j);
  const Eigen::VectorXd fd = finite_diff_grad(
      [&](const Eigen::VectorXd& x) {
        Eigen::MatrixXd m(n, d);
        Eigen::Index k = 0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) m(i, j) = x[k++];
        return pms_loss(m, bank, labels, 5.0).loss;
      },
      x0, 1e-5);
  at = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) {
      CHECK(r.grad_embs(i, j) ==
            doctest::Approx(fd[at]).epsilon(1e-4).scale(1.0));
      ++at;
    }
}

TEST_CASE("pms_loss input validation") {
  std::mt19937_64 g = rng::engine(34);
  const TextBank bank = make_text_bank(rng::gaussian_matrix(g, 3, 4));
  const Eigen::MatrixXd embs = rng::gaussian_matrix(g, 2, 4);
  CHECK_THROWS_AS(pms_loss(embs, bank, {0, 3}, 50.0), IndexOutOfRange);
  CHECK_THROWS_AS(pms_loss(embs, bank, {0}, 50.0), DimensionMismatch);
  CHECK_THROWS_AS(pms_loss(rng::gaussian_matrix(g, 2, 5), bank, {0, 1}, 50.0),
                  DimensionMismatch);
}

TEST_CASE("ils_objective branches") {
  const IlsWeights w{0.1};
  CHECK(ils_objective(BatchKind::classification, DetLosses{}, 2.0, w) ==
        doctest::Approx(0.2));
  // detection branch ignores pms entirely
  CHECK(ils_objective(BatchKind::detection, DetLosses{0.0, 0.5, 1.5}, 99.0,
                      w) == doctest::Approx(2.0));
  // alpha 0 silences classification batches
  CHECK(ils_objective(BatchKind::classification, DetLosses{}, 123.0,
                      IlsWeights{0.0}) == 0.0);
}

}  // TEST_SUITE
