#include <doctest.h>

#include <bit>
#include <cmath>
#include <sstream>

#include "core_math/error.hpp"
#include "core_math/io_util.hpp"
#include "diagnostics/diagnostics.hpp"
#include "merging/merging.hpp"
#include "se_merging/se_merging.hpp"
#include "trainer/trainer.hpp"
#include "support.hpp"

using namespace mergelab;

namespace {

nn::ModelSpec spec8() { return {{8, 12, 10, 4}, nn::Activation::Tanh}; }

struct Fixture {
    data::TaskSuite suite;
    ParamVector pt;
    std::vector<TaskVector> taus;
};

// Random experts are enough for the structural properties tested here.
Fixture fixture(std::size_t tasks = 3) {
    Fixture f{data::generate_suite(testing::small_suite(tasks, 8, 11)), testing::random_params(spec8(), 1, 0.5), {}};
    for (std::size_t t = 0; t < tasks; ++t) {
        const auto ft = testing::random_params(spec8(), 100 + t, 0.5);
        f.taus.push_back(merge::task_vector(ft, f.pt));
    }
    return f;
}

data::TaskSuite single_task(const data::TaskSuite& s) {
    data::TaskSuite one = s;
    one.tasks.resize(1);
    one.probe_accuracy.resize(1);
    one.config.tasks = 1;
    return one;
}

std::size_t count_lines(const std::string& s) {
    std::size_t n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

}  // namespace

TEST_SUITE("acc@k") {
    TEST_CASE("distance rank is stable on ties") {
        const std::vector<double> d{0.5, 0.2, 0.5, 0.1};
        CHECK(diag::distance_rank(d, 3) == 1);
        CHECK(diag::distance_rank(d, 1) == 2);
        CHECK(diag::distance_rank(d, 0) == 3);
        CHECK(diag::distance_rank(d, 2) == 4);
        const std::vector<double> flat{1.0, 1.0, 1.0};
        for (std::size_t t = 0; t < 3; ++t) CHECK(diag::distance_rank(flat, t) == int(t) + 1);
    }

    TEST_CASE("monotone in k and equal to 1 at k = T") {
        const auto f = fixture();
        const std::vector<int> layers{1, 2, 3};
        const auto r = diag::acc_at_k(f.suite, spec8(), f.pt, f.taus, 0.3, layers);
        for (std::size_t t = 0; t < 3; ++t)
            for (int l : layers) {
                double prev = 0.0;
                for (int k = 1; k <= 3; ++k) {
                    const double a = r.acc(t, l, k);
                    CHECK(a >= prev);
                    CHECK(a >= 0.0);
                    prev = a;
                }
                CHECK(r.acc(t, l, 3) == 1.0);
            }
        CHECK_THROWS_AS(r.acc(0, 1, 0), Error);
        CHECK_THROWS_AS(r.acc(0, 1, 4), Error);
        CHECK_THROWS_AS(r.acc(0, 7, 1), Error);
        CHECK(r.csv().rfind("task,layer,k,acc\n", 0) == 0);
        CHECK(count_lines(r.csv()) == 1 + 3 * 3 * 3);
    }

    TEST_CASE("a single task is always identified") {
        const auto f = fixture(2);
        const auto one = single_task(f.suite);
        const std::vector<TaskVector> tau1{f.taus[0]};
        const std::vector<int> layers{2};
        CHECK(diag::acc_at_k(one, spec8(), f.pt, tau1, 0.3, layers).acc(0, 2, 1) == 1.0);
    }

    TEST_CASE("a merged model equal to one comparison model ranks that task first") {
        const auto f = fixture();
        const auto comparison = se::scaled_experts(f.pt, f.taus, 0.3);
        const std::vector<int> layers{2, 3};
        for (std::size_t i = 0; i < 3; ++i) {
            const auto r = diag::acc_at_k(f.suite, spec8(), comparison[i], comparison, layers);
            for (int l : layers) CHECK(r.acc(i, l, 1) == 1.0);
        }
    }

    TEST_CASE("acc@k and SE-Merging share bitwise-identical distances") {
        const auto f = fixture();
        se::SeOptions opt;
        const se::SeMerger merger(spec8(), f.pt, f.taus, opt);
        const std::vector<int> layers{merger.layer()};
        const auto r = diag::acc_at_k(f.suite, spec8(), f.pt, f.taus, 0.3, layers);
        for (std::size_t t = 0; t < 3; ++t)
            for (std::size_t i = 0; i < f.suite.tasks[t].test.size(); ++i) {
                const auto x = f.suite.tasks[t].test.x(i);
                const auto a = merger.similarity(x).distances;
                const auto b = se::representation_distances(spec8(), x, merger.merged(), merger.comparison_models(),
                                                            merger.layer());
                REQUIRE(a.size() == b.size());
                for (std::size_t j = 0; j < a.size(); ++j)
                    REQUIRE(std::bit_cast<std::uint64_t>(a[j]) == std::bit_cast<std::uint64_t>(b[j]));
                REQUIRE(r.ranks[0][t][i] == diag::distance_rank(a, t));
            }
    }

    TEST_CASE("thread count does not change the report") {
        const auto f = fixture();
        const std::vector<int> layers{1, 2};
        const auto a = diag::acc_at_k(f.suite, spec8(), f.pt, f.taus, 0.3, layers, DistanceMetric::L2, 1);
        const auto b = diag::acc_at_k(f.suite, spec8(), f.pt, f.taus, 0.3, layers, DistanceMetric::L2, 4);
        CHECK(a.ranks == b.ranks);
    }
}

TEST_SUITE("representation bias") {
    TEST_CASE("zero when the merged model is theta_PT + lambda tau_i with one task") {
        const auto f = fixture(2);
        const auto one = single_task(f.suite);
        const std::vector<TaskVector> tau1{f.taus[0]};
        const auto merged = merge::task_arithmetic(f.pt, tau1, 0.3);
        const auto b = diag::representation_bias(one, spec8(), merged, f.pt, tau1, 0.3);
        REQUIRE(b.size() == 1);
        CHECK(b[0] == 0.0);
    }

    TEST_CASE("matches a mean-l1 oracle") {
        const auto f = fixture();
        const auto merged = merge::task_arithmetic(f.pt, f.taus, 0.3);
        const auto comparison = se::scaled_experts(f.pt, f.taus, 0.3);
        const auto b = diag::representation_bias(f.suite, spec8(), merged, f.pt, f.taus, 0.3);
        for (std::size_t t = 0; t < 3; ++t) {
            const auto& test = f.suite.tasks[t].test;
            double sum = 0;
            for (std::size_t i = 0; i < test.size(); ++i) {
                const auto a = testing::reference_layers(spec8(), merged, test.x(i)).back();
                const auto c = testing::reference_layers(spec8(), comparison[t], test.x(i)).back();
                for (std::size_t k = 0; k < a.size(); ++k) sum += std::abs(a[k] - c[k]);
            }
            CHECK(b[t] == doctest::Approx(sum / double(test.size())).epsilon(1e-4));
        }
    }

    TEST_CASE("SE bias collapses to zero for a single task") {
        const auto f = fixture(2);
        const auto one = single_task(f.suite);
        const se::SeMerger merger(spec8(), f.pt, {f.taus[0]}, se::SeOptions{});
        const auto b = diag::representation_bias_se(one, merger);
        CHECK(b[0] == 0.0);
    }

    TEST_CASE("bias report csv") {
        diag::BiasReport r;
        r.tasks = 2;
        r.add("task_arithmetic", {0.5, 0.25});
        r.add("se_merging", {0.125, 0.0});
        const auto csv = r.csv();
        CHECK(csv.rfind("task,config,bias\n", 0) == 0);
        CHECK(count_lines(csv) == 5);
        CHECK_THROWS_AS(r.add("bad", {1.0}), Error);
    }
}

TEST_SUITE("disentanglement") {
    TEST_CASE("one task gives an exactly zero residual") {
        const auto f = fixture(2);
        const auto one = single_task(f.suite);
        const std::vector<TaskVector> tau1{f.taus[0]};
        const std::vector<double> alphas{0.7};
        const auto r = diag::disentanglement_residual(one, spec8(), f.pt, tau1, alphas);
        CHECK(r.residual[0] == 0.0);
        CHECK(r.mean_ratio == 0.0);
    }

    TEST_CASE("all-zero alphas give an exactly zero residual") {
        const auto f = fixture();
        const std::vector<double> alphas{0.0, 0.0, 0.0};
        const auto far = data::far_field_samples(f.suite, 16, 2);
        const auto r = diag::disentanglement_residual(f.suite, spec8(), f.pt, f.taus, alphas, far);
        for (double v : r.residual) CHECK(v == 0.0);
        CHECK(r.far_field_residual == 0.0);
        CHECK(r.far_field_ratio == 0.0);
    }

    TEST_CASE("positive for interfering random task vectors and validated") {
        const auto f = fixture();
        const std::vector<double> alphas{0.3, 0.3, 0.3};
        const auto r = diag::disentanglement_residual(f.suite, spec8(), f.pt, f.taus, alphas);
        for (std::size_t t = 0; t < 3; ++t) {
            CHECK(r.residual[t] > 0.0);
            CHECK(r.ratio[t] == doctest::Approx(r.residual[t] / r.logit_norm[t]));
        }
        const std::vector<double> wrong{0.3};
        CHECK_THROWS_AS(diag::disentanglement_residual(f.suite, spec8(), f.pt, f.taus, wrong), Error);
    }
}

TEST_SUITE("export") {
    TEST_CASE("row count is models times total test samples") {
        const auto f = fixture();
        std::vector<std::pair<std::string, ParamVector>> models{{"merged", merge::task_arithmetic(f.pt, f.taus, 0.3)}};
        for (std::size_t t = 0; t < 3; ++t)
            models.emplace_back("expert_" + std::to_string(t + 1), f.pt);
        const auto path = testing::scratch_dir("export") / "reps.csv";
        const auto rows = diag::export_representations(f.suite, spec8(), models, 2, path);
        std::size_t total = 0;
        for (const auto& t : f.suite.tasks) total += t.test.size();
        CHECK(rows == 4 * total);
        const auto text = read_file(path);
        CHECK(count_lines(text) == rows + 1);
        const auto header = text.substr(0, text.find('\n'));
        CHECK(header.rfind("model_name,task_id,sample_id,v_1,", 0) == 0);
        CHECK(header.find("v_10") != std::string::npos);
        CHECK(header.find("v_11") == std::string::npos);
    }

    TEST_CASE("one model on one sample gives one row") {
        const auto f = fixture(2);
        auto one = single_task(f.suite);
        one.tasks[0].test.inputs.resize(8);
        one.tasks[0].test.labels.resize(1);
        const std::vector<std::pair<std::string, ParamVector>> models{{"pt", f.pt}};
        const auto path = testing::scratch_dir("export_one") / "reps.csv";
        CHECK(diag::export_representations(one, spec8(), models, 3, path) == 1);
        const auto text = read_file(path);
        CHECK(count_lines(text) == 2);
        CHECK(text.find("\npt,1,0,") != std::string::npos);
    }
}
