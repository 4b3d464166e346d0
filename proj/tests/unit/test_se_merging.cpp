#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "core_math/error.hpp"
#include "core_math/rng.hpp"
#include "merging/merging.hpp"
#include "nn_model/model.hpp"
#include "se_merging/se_merging.hpp"
#include "support.hpp"

using namespace mergelab;
using namespace mergelab::se;

namespace {

// Independent oracle for the coefficient chain, written from the formulas.
std::vector<double> oracle_coefficients(const std::vector<double>& d, double lambda) {
    const double lo = *std::min_element(d.begin(), d.end()), hi = *std::max_element(d.begin(), d.end());
    std::vector<double> s(d.size()), out(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) s[i] = hi - d[i] + lo;
    const double smin = *std::min_element(s.begin(), s.end()), smax = *std::max_element(s.begin(), s.end());
    double z = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double n = smax > smin ? (s[i] - smin) / (smax - smin) : 1.0;
        out[i] = std::exp(n);
        z += out[i];
    }
    for (auto& v : out) v = v / z * double(d.size()) * lambda;
    return out;
}

const nn::ModelSpec kSpec{{3, 4, 2}, nn::Activation::Tanh};

std::vector<TaskVector> random_taus(const ParamVector& pt, std::size_t n, std::uint64_t seed, double scale) {
    std::vector<TaskVector> taus;
    for (std::size_t t = 0; t < n; ++t)
        taus.push_back({testing::random_params(kSpec, seed + 31 * t, scale), pt.index().fingerprint()});
    return taus;
}

double l2(const std::vector<float>& a, const std::vector<float>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
    return std::sqrt(s);
}

}  // namespace

TEST_SUITE("rescale coefficients") {
    TEST_CASE("worked 2-task example") {
        const std::vector<double> d{1.0, 3.0};
        const auto r = similarity_from_distances(d, 0.3, 1);
        CHECK(r.similarities == std::vector<double>{3.0, 1.0});
        CHECK(r.normalized == std::vector<double>{1.0, 0.0});
        const double e = std::numbers::e;
        CHECK(r.coefficients[0] == doctest::Approx(0.6 * e / (e + 1)).epsilon(1e-12));
        CHECK(r.coefficients[1] == doctest::Approx(0.6 / (e + 1)).epsilon(1e-12));
        CHECK(std::abs(r.coefficients[0] - 0.4387) < 5e-4);
        CHECK(std::abs(r.coefficients[1] - 0.1613) < 5e-4);
        CHECK(r.predicted_task == 0);
    }

    TEST_CASE("single task returns lambda") {
        CHECK(rescale_coefficients(std::vector<double>{4.2}, 1, 0.3) == std::vector<double>{0.3});
    }

    TEST_CASE("equal distances give lambda for every task") {
        for (std::size_t T : {2u, 3u, 4u, 7u}) {
            const auto c = rescale_coefficients(std::vector<double>(T, 1.5), T, 0.3);
            for (double v : c) CHECK(v == doctest::Approx(0.3).epsilon(1e-15));
        }
    }

    TEST_CASE("[0,1,2] gives strictly decreasing coefficients summing to 0.9") {
        const auto c = rescale_coefficients(std::vector<double>{0, 1, 2}, 3, 0.3);
        CHECK(c[0] > c[1]);
        CHECK(c[1] > c[2]);
        CHECK(c[0] + c[1] + c[2] == doctest::Approx(0.9).epsilon(1e-12));
        const auto o = oracle_coefficients({0, 1, 2}, 0.3);
        for (int i = 0; i < 3; ++i) CHECK(c[i] == doctest::Approx(o[i]).epsilon(1e-12));
    }

    TEST_CASE("input validation") {
        CHECK_THROWS_AS(rescale_coefficients(std::vector<double>{1, 2}, 3, 0.3), Error);
        CHECK_THROWS_AS(rescale_coefficients(std::vector<double>{1, -2}, 2, 0.3), Error);
        CHECK_THROWS_AS(rescale_coefficients(std::vector<double>{1, NAN}, 2, 0.3), Error);
        CHECK_THROWS_AS(rescale_coefficients(std::vector<double>{}, 0, 0.3), Error);
    }

    TEST_CASE("budget, rank reversal and oracle agreement on random vectors") {
        for (std::uint64_t s = 0; s < 300; ++s) {
            CounterRng r(s, 41);
            const std::size_t T = 1 + r.below(8);
            std::vector<double> d(T);
            for (auto& v : d) v = r.uniform(0.0, 10.0);
            const double lambda = r.uniform(0.05, 1.0);
            const auto c = rescale_coefficients(d, T, lambda);
            double sum = 0;
            for (double v : c) sum += v;
            REQUIRE(std::abs(sum - T * lambda) <= 1e-6);
            const auto o = oracle_coefficients(d, lambda);
            for (std::size_t i = 0; i < T; ++i) {
                REQUIRE(c[i] == doctest::Approx(o[i]).epsilon(1e-12));
                for (std::size_t j = 0; j < T; ++j)
                    if (d[i] < d[j]) REQUIRE(c[i] > c[j]);
            }
        }
    }
}

TEST_SUITE("se merger") {
    TEST_CASE("T=1 collapses to the single scaled expert") {
        const auto pt = testing::random_params(kSpec, 1);
        auto taus = random_taus(pt, 1, 2, 0.5);
        const SeMerger m(kSpec, pt, taus, {});
        const auto expert = merge::task_arithmetic(pt, taus, 0.3);
        for (std::uint64_t s = 0; s < 20; ++s) {
            const auto x = testing::random_vector(3, 100 + s);
            const auto out = m.infer(x);
            CHECK(out.report.coefficients == std::vector<double>{0.3});
            const auto ref = nn::forward(kSpec, expert, x);
            for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(out.logits.values[k] - ref.values[k]) <= 1e-6);
        }
    }

    TEST_CASE("equal distances reproduce static task arithmetic") {
        const auto pt = testing::random_params(kSpec, 3);
        auto one = random_taus(pt, 1, 4, 0.5);
        const std::vector<TaskVector> taus{one[0], one[0], one[0]};
        const SeMerger m(kSpec, pt, taus, {});
        const auto stat = merge::task_arithmetic(pt, taus, 0.3);
        for (std::uint64_t s = 0; s < 20; ++s) {
            const auto x = testing::random_vector(3, 200 + s);
            const auto out = m.infer(x);
            for (double c : out.report.coefficients) CHECK(c == doctest::Approx(0.3).epsilon(1e-12));
            const auto ref = nn::forward(kSpec, stat, x);
            for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(out.logits.values[k] - ref.values[k]) <= 1e-6);
        }
    }

    TEST_CASE("a merged model near expert 1 shifts weight and logits toward expert 1") {
        const auto pt = testing::random_params(kSpec, 5, 0.5);
        // tau_2 is tiny, so theta_PT + 0.3 (tau_1 + tau_2) sits next to theta_PT + 0.3 tau_1.
        std::vector<TaskVector> taus{{testing::random_params(kSpec, 6, 1.0), pt.index().fingerprint()},
                                     {testing::random_params(kSpec, 7, 0.01), pt.index().fingerprint()}};
        const SeMerger m(kSpec, pt, taus, {});
        const auto x = testing::random_vector(3, 8);
        const auto out = m.infer(x);
        const auto& c = out.report.coefficients;
        CHECK(out.report.distances[0] < out.report.distances[1]);
        CHECK(out.report.predicted_task == 0);
        CHECK(c[0] > 0.3);
        CHECK(0.3 > c[1]);
        const auto expert1 = nn::forward(kSpec, axpy(1.0, taus[0].delta, pt), x).values;
        const auto stat = nn::forward(kSpec, m.merged(), x).values;
        CHECK(l2(out.logits.values, expert1) < l2(stat, expert1));
    }

    TEST_CASE("merged model equal to one scaled expert gives zero distance and top coefficient") {
        const auto pt = testing::random_params(kSpec, 9);
        const auto taus = random_taus(pt, 3, 10, 0.5);
        const auto experts = scaled_experts(pt, taus, 0.3);
        const auto x = testing::random_vector(3, 11);
        const auto d = representation_distances(kSpec, x, experts[1], experts, 1);
        CHECK(d[1] == 0.0);
        const auto r = similarity_from_distances(d, 0.3, 1);
        CHECK(r.predicted_task == 1);
        CHECK(*std::max_element(r.coefficients.begin(), r.coefficients.end()) == r.coefficients[1]);
    }

    TEST_CASE("delta-form re-merge matches the direct form") {
        const auto pt = testing::random_params(kSpec, 12);
        const auto taus = random_taus(pt, 4, 13, 0.3);
        const SeMerger m(kSpec, pt, taus, {});
        auto scratch = m.make_scratch();
        for (std::uint64_t s = 0; s < 50; ++s) {
            const auto x = testing::random_vector(3, 300 + s);
            const auto rep = m.similarity(x);
            m.rescaled_params(rep.coefficients, scratch.params);
            const auto direct = m.rescaled_params_direct(rep.coefficients);
            for (std::size_t i = 0; i < direct.size(); ++i)
                REQUIRE(std::abs(scratch.params.values()[i] - direct.values()[i]) <= 1e-6);
        }
    }

    TEST_CASE("uniform coefficients reproduce the static merge parameters") {
        const auto pt = testing::random_params(kSpec, 14);
        for (std::size_t T : {2u, 3u, 4u}) {
            const auto taus = random_taus(pt, T, 15, 0.4);
            const SeMerger m(kSpec, pt, taus, {});
            auto scratch = m.make_scratch();
            m.rescaled_params(rescale_coefficients(std::vector<double>(T, 2.0), T, 0.3), scratch.params);
            for (std::size_t i = 0; i < pt.size(); ++i)
                REQUIRE(std::abs(scratch.params.values()[i] - m.merged().values()[i]) <= 1e-7);
        }
    }

    TEST_CASE("layer and metric options") {
        const auto pt = testing::random_params(kSpec, 16);
        const auto taus = random_taus(pt, 2, 17, 0.4);
        SeOptions o;
        CHECK(SeMerger(kSpec, pt, taus, o).layer() == 1);
        o.layer = 2;
        CHECK(SeMerger(kSpec, pt, taus, o).layer() == 2);
        o.layer = 3;
        CHECK_THROWS_AS(SeMerger(kSpec, pt, taus, o), Error);
        o.layer = 1;
        o.metric = DistanceMetric::Cosine;
        const SeMerger cm(kSpec, pt, taus, o);
        for (double d : cm.similarity(testing::random_vector(3, 18)).distances) CHECK((d >= 0.0 && d <= 2.0));
    }
}

TEST_SUITE("se evaluate") {
    TEST_CASE("one correctly classified sample gives accuracy 1") {
        const auto pt = testing::random_params(kSpec, 19);
        const auto taus = random_taus(pt, 2, 20, 0.4);
        const SeMerger m(kSpec, pt, taus, {});
        data::Split split;
        split.dim = 3;
        split.inputs = testing::random_vector(3, 21);
        const auto pred = nn::argmax(m.infer(split.inputs).logits.values);
        split.labels = {static_cast<std::uint8_t>(pred)};
        const auto ev = se_evaluate(split, 0, m);
        CHECK(ev.mean_accuracy == 1.0);
        REQUIRE(ev.samples.size() == 1);
        CHECK(ev.samples[0].correct);
    }

    TEST_CASE("results do not depend on the thread count; csv layout") {
        const auto suite = data::generate_suite(testing::small_suite(2, 8, 7));
        const nn::ModelSpec spec{{8, 6, 4}, nn::Activation::Tanh};
        const auto pt = testing::random_params(spec, 22, 0.3);
        std::vector<TaskVector> taus{{testing::random_params(spec, 23, 0.2), pt.index().fingerprint()},
                                     {testing::random_params(spec, 24, 0.2), pt.index().fingerprint()}};
        const SeMerger m(spec, pt, taus, {});
        const auto a = se_evaluate(suite, m, 1), b = se_evaluate(suite, m, 4);
        CHECK(a.per_task_accuracy == b.per_task_accuracy);
        const auto csv = sample_report_csv(a, 2);
        CHECK(csv == sample_report_csv(b, 2));
        CHECK(csv.rfind("sample_id,true_task,predicted_task,d_1,d_2,lambda_1,lambda_2,correct\n", 0) == 0);
        CHECK(a.samples.size() == 2 * 64);
    }
}
