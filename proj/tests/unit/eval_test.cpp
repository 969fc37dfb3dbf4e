#include <snake/error.hpp>
#include <snake/eval/diagnostics.hpp>
#include <snake/eval/metrics.hpp>
#include <snake/expert/expert.hpp>
#include <snake/fusion/fusion.hpp>
#include <snake/nn/random.hpp>

#include <support/oracles.hpp>
#include <support/toy_data.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace snake;

using snake::testing::naive_metrics;
using snake::testing::quadratic_gd;

namespace
{
	expert::LabeledDataset labelled(std::vector<std::size_t> per_class)
	{
		std::vector<std::string> names;
		for (std::size_t c = 0; c < per_class.size(); c++)
			names.push_back("c" + std::to_string(c));
		expert::LabeledDataset d( { "t" }, { expert::LabelMap(names) }, 2);
		std::size_t id = 0;
		for (std::size_t c = 0; c < per_class.size(); c++)
			for (std::size_t i = 0; i < per_class[c]; i++, id++)
				d.add( { { static_cast<double>(id), static_cast<double>(c) }, { c }, "", "f" + std::to_string(id) });
		return d;
	}

	/// L = c/2 |w|^2 has gradient c w.
	eval::GradientFn quadratic_gradient(double c)
	{
		return [c](std::span<const double> w)
		{
			std::vector<double> g(w.begin(), w.end());
			for (double &v : g)
				v *= c;
			return g;
		};
	}

}

TEST(Split, ThousandSamples)
{
	const auto d = labelled( { 400, 350, 250 });
	const auto split = eval::split_dataset(d, { }, 9);
	EXPECT_EQ(split.train.size(), 750u);
	EXPECT_EQ(split.validation.size(), 100u);
	EXPECT_EQ(split.test.size(), 150u);
	EXPECT_TRUE(split.warnings.empty());
}

TEST(Split, DeterministicPartition)
{
	nn::CounterStream rng(3);
	for (int trial = 0; trial < 30; trial++)
	{
		std::vector<std::size_t> sizes;
		const std::size_t classes = 1 + rng.next_below(5);
		for (std::size_t c = 0; c < classes; c++)
			sizes.push_back(rng.next_below(60));
		if (std::accumulate(sizes.begin(), sizes.end(), std::size_t(0)) == 0)
			sizes[0] = 1;
		const auto d = labelled(sizes);
		const double train = 0.5 + 0.4 * rng.next_uniform();
		const double val = (1.0 - train) * rng.next_uniform();
		const eval::SplitRatios ratios { train, val, 1.0 - train - val };
		const std::uint64_t seed = rng.next_below(1000);
		const auto a = eval::split_indices(d, ratios, seed);
		const auto b = eval::split_indices(d, ratios, seed);
		EXPECT_EQ(a, b);
		std::multiset<std::size_t> all;
		for (const auto &part : a)
			all.insert(part.begin(), part.end());
		ASSERT_EQ(all.size(), d.size());
		std::size_t expect = 0;
		for (std::size_t i : all)
			EXPECT_EQ(i, expect++);
		const auto n = static_cast<double>(d.size());
		EXPECT_EQ(a[0].size(), static_cast<std::size_t>(std::llround(n * train)));
		EXPECT_EQ(a[1].size(), static_cast<std::size_t>(std::llround(n * val)));
	}
}

TEST(Split, StratifiedWithinOne)
{
	const auto d = labelled( { 120, 40, 16, 8 });
	const auto idx = eval::split_indices(d, { }, 4);
	const auto counts = d.class_counts(0);
	for (std::size_t part = 0; part < 3; part++)
	{
		const double ratio = static_cast<double>(idx[part].size()) / static_cast<double>(d.size());
		std::vector<std::size_t> got(counts.size(), 0);
		for (std::size_t i : idx[part])
			got[d[i].labels[0]]++;
		for (std::size_t c = 0; c < counts.size(); c++)
			EXPECT_LE(std::abs(static_cast<double>(got[c]) - ratio * static_cast<double>(counts[c])), 1.0 + 1e-9) << "part " << part << " class " << c;
	}
	EXPECT_NE(eval::split_indices(d, { }, 5)[0], idx[0]);
}

TEST(Split, TinyClassFallsBackWithWarning)
{
	const auto d = labelled( { 50, 2 });
	std::vector<std::string> warnings;
	const auto idx = eval::split_indices(d, { }, 1, &warnings);
	ASSERT_EQ(warnings.size(), 1u);
	EXPECT_NE(warnings[0].find("c1"), std::string::npos);
	EXPECT_EQ(idx[0].size() + idx[1].size() + idx[2].size(), 52u);
}

TEST(Split, RatiosMustSumToOne)
{
	const auto d = labelled( { 10 });
	EXPECT_THROW(eval::split_dataset(d, { 0.75, 0.10, 0.20 }, 1), ConfigError);
	EXPECT_THROW(eval::split_dataset(d, { 1.2, -0.1, -0.1 }, 1), ConfigError);
	EXPECT_NO_THROW(eval::split_dataset(d, { 0.75, 0.10, 0.15 }, 1));
}

TEST(Metrics, HandComputedConfusion)
{
	const std::vector<std::size_t> truth = { 0, 0, 1, 1 };
	const std::vector<std::size_t> pred = { 0, 1, 1, 1 };
	const auto m = eval::compute_metrics(truth, pred, 2);
	EXPECT_EQ(m.confusion, (std::vector<std::vector<std::size_t>> { { 1, 1 }, { 0, 2 } }));
	EXPECT_DOUBLE_EQ(m.accuracy, 0.75);
	EXPECT_DOUBLE_EQ(m.macro_precision, (1.0 + 2.0 / 3.0) / 2.0);
	EXPECT_DOUBLE_EQ(m.macro_recall, (0.5 + 1.0) / 2.0);
	EXPECT_DOUBLE_EQ(m.macro_f1, (2.0 / 3.0 + 0.8) / 2.0);
}

TEST(Metrics, AllCorrectIsOne)
{
	const std::vector<std::size_t> truth = { 2, 0, 1, 2, 2 };
	const auto m = eval::compute_metrics(truth, truth, 4);
	EXPECT_EQ(m.accuracy, 1.0);
	EXPECT_EQ(m.macro_precision, 1.0);
	EXPECT_EQ(m.macro_f1, 1.0);
	EXPECT_EQ(m.included, (std::vector<bool> { true, true, true, false }));
}

TEST(Metrics, MatchesNaiveOracle)
{
	nn::CounterStream rng(12);
	for (int trial = 0; trial < 100; trial++)
	{
		const std::size_t classes = 2 + rng.next_below(5);
		const std::size_t n = 1 + rng.next_below(50);
		std::vector<std::size_t> truth(n), pred(n);
		for (std::size_t i = 0; i < n; i++)
		{
			truth[i] = rng.next_below(classes);
			pred[i] = rng.next_uniform() < 0.5 ? truth[i] : rng.next_below(classes);
		}
		const auto m = eval::compute_metrics(truth, pred, classes);
		const auto o = naive_metrics(truth, pred, classes);
		EXPECT_NEAR(m.accuracy, o.accuracy, 1e-12);
		EXPECT_NEAR(m.macro_precision, o.precision, 1e-12);
		EXPECT_NEAR(m.macro_recall, o.recall, 1e-12);
		EXPECT_NEAR(m.macro_f1, o.f1, 1e-12);
		std::size_t diag = 0, total = 0;
		for (std::size_t c = 0; c < classes; c++)
		{
			diag += m.confusion[c][c];
			for (std::size_t v : m.confusion[c])
				total += v;
		}
		EXPECT_EQ(total, n);
		EXPECT_DOUBLE_EQ(m.accuracy, static_cast<double>(diag) / static_cast<double>(n));
		for (double v : { m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1 })
		{
			EXPECT_GE(v, 0.0);
			EXPECT_LE(v, 1.0);
		}
	}
}

TEST(Metrics, InputErrors)
{
	const std::vector<std::size_t> a = { 0, 1 }, b = { 0 }, bad = { 0, 5 };
	EXPECT_THROW(eval::compute_metrics(a, b, 2), DimensionError);
	EXPECT_THROW(eval::compute_metrics(a, bad, 2), DataError);
	EXPECT_THROW(eval::compute_metrics(std::vector<std::size_t> { }, std::vector<std::size_t> { }, 2), DataError);
	const auto model = expert::make_expert("e", "t", expert::LabelMap( { "a", "b" }), 1, snake::testing::tiny_shape(), 8);
	const expert::LabeledDataset empty( { "t" }, { model.label_map }, 24);
	EXPECT_THROW(eval::evaluate(model, empty), DataError);
}

TEST(Metrics, CsvOutputs)
{
	const auto dir = std::filesystem::temp_directory_path() / "snake_eval_csv";
	std::filesystem::create_directories(dir);
	const std::vector<std::size_t> truth = { 0, 0, 1, 1 }, pred = { 0, 1, 1, 1 };
	const auto m = eval::compute_metrics(truth, pred, 2);
	eval::write_metrics_csv(dir / "m.csv", { { "task", m } });
	eval::write_confusion_csv(dir / "c.csv", m, expert::LabelMap( { "x", "y" }));
	std::ifstream c(dir / "c.csv");
	std::string line;
	std::getline(c, line);
	EXPECT_EQ(line, "truth,x,y");
	std::getline(c, line);
	EXPECT_EQ(line, "x,1,1");
	std::filesystem::remove_all(dir);
}

TEST(Lipschitz, QuadraticRecoversConstant)
{
	nn::CounterStream rng(2);
	for (int trial = 0; trial < 20; trial++)
	{
		const double c = 0.1 + 10.0 * rng.next_uniform();
		std::vector<std::vector<double>> snaps(2 + rng.next_below(4), std::vector<double>(5));
		for (auto &s : snaps)
			for (double &v : s)
				v = rng.next_normal();
		EXPECT_NEAR(eval::estimate_lipschitz(quadratic_gradient(c), snaps), c, 1e-9);
		EXPECT_NEAR(eval::estimate_lipschitz(quadratic_gradient(2 * c), snaps), 2 * eval::estimate_lipschitz(quadratic_gradient(c), snaps), 1e-9);
	}
}

TEST(Lipschitz, MonotoneInSnapshotSet)
{
	// Non-quadratic loss: sum of w^4 / 4 has gradient w^3.
	const eval::GradientFn cubic = [](std::span<const double> w)
	{
		std::vector<double> g(w.begin(), w.end());
		for (double &v : g)
			v = v * v * v;
		return g;
	};
	nn::CounterStream rng(5);
	std::vector<std::vector<double>> snaps;
	double previous = 0.0;
	for (int i = 0; i < 12; i++)
	{
		snaps.push_back( { rng.next_normal(), rng.next_normal() });
		if (snaps.size() < 2)
			continue;
		const double c = eval::estimate_lipschitz(cubic, snaps);
		EXPECT_GE(c, previous);
		previous = c;
	}
}

TEST(Lipschitz, ParamSetSnapshots)
{
	nn::ParamSet a("p"), b("p");
	a.add("w", nn::Tensor::vector( { 1.0, 2.0 }));
	b.add("w", nn::Tensor::vector( { -1.0, 0.5 }));
	EXPECT_NEAR(eval::estimate_lipschitz(quadratic_gradient(3.0), std::vector<nn::ParamSet> { a, b }), 3.0, 1e-12);
}

TEST(Lipschitz, Errors)
{
	const std::vector<std::vector<double>> one = { { 1.0 } };
	const std::vector<std::vector<double>> same = { { 1.0 }, { 1.0 } };
	EXPECT_THROW(eval::estimate_lipschitz(quadratic_gradient(1), one), DataError);
	EXPECT_THROW(eval::estimate_lipschitz(quadratic_gradient(1), same), DataError);
}

TEST(Convergence, QuadraticExamples)
{
	const double c = 2.0;
	const auto good = quadratic_gd(c, 0.5 / c, 3.0, 40);
	const auto r = eval::check_convergence(good.trace, c, good.snapshots);
	EXPECT_EQ(r.verdict, eval::Verdict::Pass);
	EXPECT_TRUE(r.increases.empty());
	EXPECT_TRUE(r.bound_breaches.empty());
	ASSERT_EQ(r.bound_curve.size(), 40u);
	EXPECT_NEAR(r.z_hat, 1.0 / std::pow(3.0 - good.snapshots.back()[0], 2), 1e-12);
	const double expected_bound = 1.0 / (r.z_hat * (0.5 / c) * (1.0 - 0.25));
	EXPECT_NEAR(r.bound_curve[0], expected_bound, 1e-12 * expected_bound);
	EXPECT_NEAR(r.bound_curve[9], expected_bound / 10.0, 1e-12 * expected_bound);

	const auto bad = quadratic_gd(c, 3.0 / c, 3.0, 40);
	const auto rb = eval::check_convergence(bad.trace, c, bad.snapshots);
	EXPECT_EQ(rb.verdict, eval::Verdict::Violation);
	EXPECT_EQ(rb.increases.size(), 40u);
	EXPECT_FALSE(rb.bound_defined);
}

TEST(Convergence, SoundOnQuadraticFamily)
{
	nn::CounterStream rng(20);
	for (int seed = 0; seed < 20; seed++)
	{
		const double c = 0.05 + 20.0 * rng.next_uniform();
		const double w0 = (rng.next_uniform() < 0.5 ? -1.0 : 1.0) * (0.1 + 10.0 * rng.next_uniform());
		const std::size_t steps = 5 + rng.next_below(100);
		const double safe = (0.01 + 0.99 * rng.next_uniform()) / c;
		const auto run = quadratic_gd(c, safe, w0, steps);
		const auto r = eval::check_convergence(run.trace, c, run.snapshots);
		EXPECT_EQ(r.verdict, eval::Verdict::Pass) << "c=" << c << " alpha*c=" << safe * c << " " << r.note;
		const auto edge = quadratic_gd(c, 1.0 / c, w0, steps);
		EXPECT_EQ(eval::check_convergence(edge.trace, c, edge.snapshots).verdict, eval::Verdict::Pass);
		const double divergent = (2.0 + 1e-6 + 2.0 * rng.next_uniform()) / c;
		const auto d = quadratic_gd(c, divergent, w0, steps);
		EXPECT_EQ(eval::check_convergence(d.trace, c, d.snapshots).verdict, eval::Verdict::Violation) << "alpha*c=" << divergent * c;
	}
}

TEST(Convergence, AdamTraceIsOutsideTheTheorem)
{
	auto run = quadratic_gd(1.0, 0.5, 2.0, 10);
	run.trace.full_batch_gd = false;
	run.trace.losses[4] = run.trace.losses[3] * 2.0;
	const auto r = eval::check_convergence(run.trace, 1.0, run.snapshots);
	EXPECT_EQ(r.verdict, eval::Verdict::AssumptionsNotMet);
	EXPECT_EQ(r.increases, (std::vector<std::size_t> { 4 }));
	EXPECT_EQ(eval::verdict_name(r.verdict), "ASSUMPTIONS-NOT-MET");
}

TEST(Convergence, StepAboveInverseConstantIsUndefined)
{
	const auto run = quadratic_gd(1.0, 1.5, 2.0, 10);
	const auto r = eval::check_convergence(run.trace, 1.0, run.snapshots);
	EXPECT_TRUE(r.increases.empty());
	EXPECT_FALSE(r.bound_defined);
	EXPECT_TRUE(r.bound_curve.empty());
	EXPECT_EQ(r.verdict, eval::Verdict::AssumptionsNotMet);
}

TEST(Convergence, Errors)
{
	eval::LossTrace empty;
	empty.learning_rate = 0.1;
	EXPECT_THROW(eval::check_convergence(empty, 1.0, { }), DataError);
	const auto run = quadratic_gd(1.0, 0.5, 2.0, 3);
	EXPECT_THROW(eval::check_convergence(run.trace, 0.0, run.snapshots), DataError);
	EXPECT_THROW(eval::check_convergence(run.trace, 1.0, { { 1.0 } }), DataError);
}

TEST(Anomaly, HealthyRunNotFlagged)
{
	const std::vector<double> losses = { 2.0, 1.5, 1.2, 1.0, 0.9, 0.85, 0.84 };
	const auto r = eval::detect_gate_anomaly(losses, { { "A", 0.93, 100 }, { "B", 0.90, 80 } });
	EXPECT_FALSE(r.flagged);
	EXPECT_TRUE(r.loss_increase_epochs.empty());
	EXPECT_NEAR(r.gap, 0.03, 1e-12);
}

TEST(Anomaly, LossRisingFromEpochFive)
{
	const std::vector<double> losses = { 2.0, 1.5, 1.2, 1.0, 1.1, 1.3, 1.6, 2.0 };
	const auto r = eval::detect_gate_anomaly(losses, { { "A", 0.9, 10 }, { "B", 0.9, 10 } });
	EXPECT_TRUE(r.flagged);
	EXPECT_EQ(r.loss_increase_epochs, (std::vector<std::size_t> { 5, 6, 7, 8 }));
}

TEST(Anomaly, IncreaseInsideGraceIgnored)
{
	const std::vector<double> losses = { 2.0, 2.2, 1.2, 1.0, 0.9 };
	EXPECT_FALSE(eval::detect_gate_anomaly(losses, { { "A", 0.9, 10 }, { "B", 0.9, 10 } }).flagged);
}

TEST(Anomaly, DomainGapFromConfusionOracle)
{
	// Domain A: 19 of 20 correct; domain B: 8 of 20 correct.
	std::vector<std::size_t> truth, pred;
	std::vector<std::string> domains;
	for (int i = 0; i < 20; i++)
	{
		truth.push_back(i % 3);
		pred.push_back(i == 0 ? (i % 3 + 1) % 3 : i % 3);
		domains.push_back("A");
	}
	for (int i = 0; i < 20; i++)
	{
		truth.push_back(i % 2);
		pred.push_back(i < 8 ? i % 2 : 1 - i % 2);
		domains.push_back("B");
	}
	const auto per_domain = eval::per_domain_accuracy(truth, pred, domains);
	ASSERT_EQ(per_domain.size(), 2u);
	EXPECT_DOUBLE_EQ(per_domain[0].accuracy, 0.95);
	EXPECT_DOUBLE_EQ(per_domain[1].accuracy, 0.40);
	const std::vector<double> losses = { 1.0, 0.9, 0.8, 0.7, 0.6 };
	const auto r = eval::detect_gate_anomaly(losses, per_domain);
	EXPECT_TRUE(r.flagged);
	EXPECT_NEAR(r.gap, 0.55, 1e-12);
	EXPECT_TRUE(r.loss_increase_epochs.empty());
}

TEST(Anomaly, SingleDomainSkipsGapAndShortTraceFails)
{
	const std::vector<double> losses = { 1.0, 0.9, 0.8, 0.7, 0.6 };
	const auto r = eval::detect_gate_anomaly(losses, { { "A", 0.2, 10 } });
	EXPECT_FALSE(r.gap_checked);
	EXPECT_FALSE(r.flagged);
	ASSERT_FALSE(r.notes.empty());
	const std::vector<double> short_trace = { 1.0, 0.9, 0.8, 0.7 };
	EXPECT_THROW(eval::detect_gate_anomaly(short_trace, { }), DataError);
}

TEST(TowerDescent, SmallModelPassesAndLeavesModelUntouched)
{
	const auto data = snake::testing::blobs("app", { "chat", "mail", "video" }, 10, 24, 8, 0.1);
	nn::TrainConfig cfg;
	cfg.epochs = 3;
	cfg.batch_size = 8;
	cfg.seed = 2;
	expert::ExpertOptions opt;
	opt.shape = snake::testing::tiny_shape();
	opt.hidden = 12;
	auto trained = expert::train_expert(data, nullptr, cfg, opt).model;
	fusion::FusionOptions fo;
	fo.seed = 4;
	fo.tower_hidden = 10;
	std::vector<expert::ExpertModel> pool = { trained };
	const auto model = fusion::configure_fusion(pool, { fusion::TaskRelation::independent( { 0 }, pool) }, fo);
	const auto before = model;

	eval::TowerDescentOptions o;
	o.steps = 20;
	o.probes = 20;
	const auto run = eval::tower_gradient_descent(model, data, "app", o);
	EXPECT_EQ(model, before);
	ASSERT_EQ(run.trace.losses.size(), 21u);
	ASSERT_EQ(run.snapshots.size(), 21u);
	EXPECT_GT(run.c_probe, 0.0);
	EXPECT_GE(run.c_hat, run.c_probe);
	EXPECT_GE(run.attempts, 1u);
	EXPECT_LE(run.attempts, o.restarts + 1);
	EXPECT_NEAR(run.trace.learning_rate * run.c_probe, 0.5, 1e-12);
	EXPECT_LT(run.trace.losses.back(), run.trace.losses.front());
	EXPECT_EQ(run.report.verdict, eval::Verdict::Pass) << eval::format_convergence(run.report) << " c_probe " << run.c_probe;
	EXPECT_THROW(eval::tower_gradient_descent(model, data, "missing", o), Error);
}
