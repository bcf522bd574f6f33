#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "clclsa/errors.hpp"
#include "clclsa/losses.hpp"
#include "clclsa/train.hpp"
#include "oracles.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

using namespace clclsa;
using testing::random_tensor;

TEST_CASE("total loss arithmetic") {
    const LossWeights w{0.1, 1.0, 0.01, 9.0};
    const auto b = total_loss(1.0, 2.0, 3.0, 4.0, w);
    CHECK(b.total == doctest::Approx(4.24).epsilon(1e-15));
    CHECK(std::abs(b.total - (b.l_clf + w.lambda_al * b.l_al + w.lambda_co * b.l_co + w.lambda_cl * b.l_cl)) < 1e-12);
    CHECK(total_loss(1.5, 2.0, 3.0, 4.0, LossWeights{0, 0, 0, 9}).total == 1.5);
    // a zero weight makes the total independent of that part
    const LossWeights no_co{0.1, 0.0, 0.01, 9.0};
    CHECK(total_loss(1, 2, 3, 4, no_co).total == total_loss(1, 2, 300, 4, no_co).total);
    CHECK_THROWS_AS(total_loss(1, std::numeric_limits<double>::quiet_NaN(), 0, 0, w), NumericError);
    try {
        total_loss(1, 2, std::numeric_limits<double>::infinity(), 0, w);
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("l_co") != std::string::npos);
    }
    CHECK_THROWS_AS((LossWeights{-0.1, 0, 0, 9}).validate(), InvalidArgument);
    CHECK(kLambdaGrid == std::array<double, 6>{0.0, 0.01, 0.02, 0.05, 0.1, 1.0});
}

TEST_CASE("contrastive pair loss") {
    RngStream rng(1, "contrastive");
    for (int t = 0; t < 50; ++t) {
        const std::size_t r = 1 + rng.below(8), c = 1 + rng.below(8);
        const Tensor p = oracle::random_distribution(r, c, rng);
        for (double alpha : {0.0, 1.0, 9.0}) {
            const double lib = loss_contrastive_pair(p, alpha);
            CHECK(std::abs(lib - oracle::contrastive_pair(p, alpha)) < 1e-10);
            if (r == c) CHECK(loss_contrastive_pair(transpose(p), alpha) == lib);
        }
    }
    for (std::size_t d : {1, 2, 5, 8}) {
        const Tensor u(d, d, 1.0 / static_cast<double>(d * d));
        for (double alpha : {0.0, 1.0, 9.0})
            CHECK(std::abs(loss_contrastive_pair(u, alpha) + 2.0 * alpha * std::log(static_cast<double>(d))) < 1e-12);
    }
    // identity-like P: I = ln D, H_row = H_col = ln D
    const std::size_t d = 4;
    Tensor diag(d, d);
    for (std::size_t i = 0; i < d; ++i) diag(i, i) = 0.25;
    CHECK(loss_contrastive_pair(diag, 1.0) == doctest::Approx(-3.0 * std::log(4.0)).epsilon(1e-12));

    CHECK_THROWS_AS(loss_contrastive_pair(Tensor(2, 2, 0.3), 1.0), InvalidArgument);
    Tensor neg = Tensor::from_rows({{0.6, -0.1}, {0.25, 0.25}});
    CHECK_THROWS_AS(loss_contrastive_pair(neg, 1.0), InvalidArgument);
}

TEST_CASE("joint distribution") {
    RngStream rng(2, "joint");
    for (int t = 0; t < 20; ++t) {
        const std::size_t n = 1 + rng.below(6);
        const Tensor zi = random_tensor(n, 1 + rng.below(5), rng, 3.0);
        const Tensor zk = random_tensor(n, 1 + rng.below(5), rng, 3.0);
        const Tensor p = joint_distribution(zi, zk);
        double s = 0.0;
        for (double v : p.values()) {
            CHECK(v >= 0.0);
            s += v;
        }
        CHECK(std::abs(s - 1.0) < 1e-12);
        CHECK(joint_distribution(zk, zi) == transpose(p));

        // oracle: mean of outer products of row softmaxes
        const Tensor a = softmax_rows(zi), b = softmax_rows(zk);
        Tensor q(a.cols(), b.cols());
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t d = 0; d < a.cols(); ++d)
                for (std::size_t e = 0; e < b.cols(); ++e) q(d, e) += a(j, d) * b(j, e) / static_cast<double>(n);
        for (std::size_t i = 0; i < q.size(); ++i) CHECK(std::abs(q[i] - p[i]) < 1e-14);
    }
    CHECK_THROWS_AS(joint_distribution(Tensor(2, 3), Tensor(3, 3)), ShapeError);
}

TEST_CASE("classification loss") {
    const Tensor probs = Tensor::from_rows({{0.7, 0.2, 0.1}, {0.1, 0.8, 0.1}, {0.3, 0.3, 0.4}});
    const std::vector<int> labels{0, 1, 0};
    const double expected = -(std::log(0.7) + std::log(0.8) + std::log(0.3));
    CHECK(loss_classification(probs, labels, Reduction::Sum) == doctest::Approx(expected).epsilon(1e-15));
    CHECK(loss_classification(probs, labels, Reduction::Mean) == doctest::Approx(expected / 3.0).epsilon(1e-15));
    const Tensor certain = Tensor::from_rows({{0.0, 1.0}});
    const std::vector<int> wrong{0};
    CHECK(loss_classification(certain, wrong) == doctest::Approx(-std::log(1e-12)));
    const std::vector<int> out_of_range{5, 0, 0};
    CHECK_THROWS_AS(loss_classification(probs, out_of_range), InvalidArgument);
}

TEST_CASE("auxiliary loss against a per-view loop") {
    const auto cfg = testing::tiny_config();
    Model model(cfg, 3);
    RngStream rng(4, "aux");
    const auto views = testing::random_views(cfg, 5, rng);
    const auto mask = testing::mixed_mask();
    const std::vector<int> labels{0, 1, 2, 0, 1};
    for (Reduction red : {Reduction::Mean, Reduction::Sum}) {
        Graph g(Mode::Eval);
        const auto fwd = forward_batch(g, model, views, mask, ForwardOptions{});
        const double lib = g.value(loss_auxiliary(g, fwd, labels, red)).item();
        double expected = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
            const auto rows = mask.observed_subjects(i);
            const Tensor& probs = g.value(fwd.views[i].aux_probs);
            const Tensor& matt = g.value(fwd.views[i].view_attention);
            double view_total = 0.0;
            for (std::size_t r = 0; r < rows.size(); ++r) {
                double top = 0.0;
                for (double v : probs.row(r)) top = std::max(top, v);
                view_total += (matt(r, 0) - top) * (matt(r, 0) - top) - std::log(probs(r, labels[rows[r]]));
            }
            expected += red == Reduction::Mean ? view_total / static_cast<double>(rows.size()) : view_total;
        }
        CHECK(lib == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("auxiliary confidence target carries no gradient") {
    // with the classification part removed by label choice being irrelevant,
    // compare gradients of aux-classifier weights with and without fixed targets
    const auto cfg = testing::tiny_config();
    Model model(cfg, 5);
    RngStream rng(6, "aux");
    const auto views = testing::random_views(cfg, 5, rng);
    const auto mask = testing::mixed_mask();
    const std::vector<int> labels{0, 1, 2, 0, 1};
    std::vector<Tensor> g1, g2;
    {
        Graph g(Mode::Eval);
        const auto fwd = forward_batch(g, model, views, mask, ForwardOptions{});
        g.backward(loss_auxiliary(g, fwd, labels, Reduction::Mean));
        g1 = g.parameter_gradients(model.params());
    }
    {
        Graph g(Mode::Eval);
        const auto fwd = forward_batch(g, model, views, mask, ForwardOptions{});
        const auto fixed = aux_confidence(g, fwd);
        g.backward(loss_auxiliary(g, fwd, labels, Reduction::Mean, fixed));
        g2 = g.parameter_gradients(model.params());
    }
    for (std::size_t p = 0; p < g1.size(); ++p) CHECK(g1[p] == g2[p]);
}


TEST_CASE("cross-omics loss matches the triple loop") {
    const auto s = oracle::cross_setup(testing::tiny_config(), testing::mixed_mask(), 7);
    CHECK(s.recompute_gap < 1e-12);
    CHECK(std::abs(s.lib_mean - oracle::cross_omics(s.pred, s.z, testing::mixed_mask(), true)) < 1e-10);
    CHECK(std::abs(s.lib_sum - oracle::cross_omics(s.pred, s.z, testing::mixed_mask(), false)) < 1e-10);
}

TEST_CASE("two-view sum form equals the per-subject pair expression exactly") {
    ObservationMask mask(6, 2, true);
    mask.set(1, 0, false);
    mask.set(4, 1, false);
    const auto s = oracle::cross_setup(testing::tiny_config(2), mask, 8);
    double per_subject = 0.0;
    for (std::size_t j = 0; j < 6; ++j) {
        if (!mask.complete(j)) continue;
        per_subject += oracle::squared_distance(s.pred[0][1].row(j), s.z[0].row(j)) +
               oracle::squared_distance(s.pred[1][0].row(j), s.z[1].row(j));
    }
    CHECK(s.lib_sum == per_subject);
}

TEST_CASE("cross-omics loss ignores missing views") {
    // Changing the stored cells of missing views changes nothing.
    const auto cfg = testing::tiny_config();
    Model model(cfg, 9);
    RngStream rng(10, "views");
    auto views = testing::random_views(cfg, 5, rng);
    const auto mask = testing::mixed_mask();
    auto loss = [&] {
        Graph g(Mode::Train);
        const auto fwd = forward_batch(g, model, views, mask, ForwardOptions{true, nullptr});
        return g.value(loss_cross_omics(g, fwd.completion, mask, Reduction::Mean)).item() +
               g.value(loss_contrastive(g, fwd.completion.latents, mask, 9.0)).item();
    };
    const double before = loss();
    views[2].row(2)[0] += 100.0;
    views[0].row(3)[1] -= 50.0;
    CHECK(loss() == before);
}

TEST_CASE("contrastive loss skips pairs with fewer than two shared subjects") {
    ObservationMask mask(3, 2, true);
    mask.set(0, 1, false);
    mask.set(1, 0, false);
    Graph g;
    RngStream rng(11, "z");
    const std::vector<Var> latents{g.constant(random_tensor(3, 4, rng)), g.constant(random_tensor(3, 4, rng))};
    CHECK(g.value(loss_contrastive(g, latents, mask, 9.0)).item() == 0.0);
}

TEST_CASE("full objective gradients match finite differences") {
    for (Reduction red : {Reduction::Mean, Reduction::Sum}) {
        const auto check = oracle::objective_gradient_check(LossWeights{0.1, 1.0, 0.01, 9.0}, red, 21);
        CAPTURE(check.worst_parameter);
        CHECK(check.max_relative_error < 1e-4);
    }
}
