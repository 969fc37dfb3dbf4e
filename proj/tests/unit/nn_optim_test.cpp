#include "support/grad_check.hpp"

#include <snake/error.hpp>
#include <snake/nn/encoder.hpp>
#include <snake/nn/optim.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace snake::nn;

namespace
{
	Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double lo = 0.0, double hi = 1.0)
	{
		CounterStream rng(seed);
		Tensor t = Tensor::matrix(r, c);
		for (double &x : t.data())
			x = lo + (hi - lo) * rng.next_uniform();
		return t;
	}

	/// Gradients of a fixed cross-entropy loss on a small classifier.
	Gradients classifier_gradients(const ParamSet &head, const Tensor &x, const std::vector<std::size_t> &labels)
	{
		Tape tape;
		CounterStream stream(0);
		const Var logits = dense_head_forward(tape, head, tape.constant(x), false, stream, 0.0);
		return tape.backward(ops::softmax_cross_entropy(logits, labels));
	}
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged)
{
	ParamSet p = make_dense_head_params("h", 6, 4, 3, 1);
	const ParamSet before = p;
	Gradients zeros;
	for (const auto &e : p.entries())
		zeros.emplace(p.key(e.name), Tensor(e.value.shape()));
	AdamState state;
	for (int i = 0; i < 3; i++)
		adam_step(p, zeros, state, 1e-3);
	EXPECT_EQ(p, before);
	EXPECT_EQ(state.step, 3u);
}

TEST(Adam, FirstStepMovesEachCoordinateByLearningRate)
{
	// m1 = (1-b1) g, v1 = (1-b2) g^2; bias correction gives m/v^.5 = sign(g) * |g| / (|g| + eps')
	ParamSet p("p");
	p.add("w", Tensor( { 4 }, std::vector<double> { 1.0, -2.0, 0.5, 3.0 }));
	const std::vector<double> g = { 0.3, -4.0, 1e-3, 2.0 };
	Gradients grads;
	grads.emplace("p/w", Tensor( { 4 }, g));
	AdamState state;
	const double lr = 1e-3;
	adam_step(p, grads, state, lr);
	const std::vector<double> start = { 1.0, -2.0, 0.5, 3.0 };
	for (std::size_t i = 0; i < 4; i++)
	{
		const double m_hat = (1.0 - 0.9) * g[i] / (1.0 - 0.9);
		const double v_hat = (1.0 - 0.999) * g[i] * g[i] / (1.0 - 0.999);
		const double expected = start[i] - lr * m_hat / (std::sqrt(v_hat) + 1e-8);
		EXPECT_NEAR(p.get("w")[i], expected, 1e-15);
		EXPECT_NEAR(std::abs(p.get("w")[i] - start[i]), lr, 1e-8);
	}
}

TEST(Adam, ConstantGradientKeepsStepNearLearningRate)
{
	ParamSet p("p");
	p.add("w", Tensor( { 1 }, 0.0));
	Gradients grads;
	grads.emplace("p/w", Tensor( { 1 }, 0.7));
	AdamState state;
	double previous = 0.0;
	for (int i = 0; i < 20; i++)
	{
		adam_step(p, grads, state, 0.01);
		EXPECT_NEAR(previous - p.get("w")[0], 0.01, 1e-9);
		previous = p.get("w")[0];
	}
}

TEST(Adam, FiveStepsBitIdentical)
{
	const Tensor x = random_matrix(10, 6, 3);
	const std::vector<std::size_t> labels = { 0, 1, 2, 0, 1, 2, 0, 1, 2, 0 };
	auto run = [&]()
	{
		ParamSet p = make_dense_head_params("h", 6, 5, 3, 9);
		AdamState state;
		for (int i = 0; i < 5; i++)
			adam_step(p, classifier_gradients(p, x, labels), state, 1e-2);
		return p;
	};
	const ParamSet a = run(), b = run();
	EXPECT_EQ(a, b);
	EXPECT_NE(a, make_dense_head_params("h", 6, 5, 3, 9));
}

TEST(Adam, FrozenSetsAndMissingEntriesUntouched)
{
	ParamSet a = make_dense_head_params("a", 4, 3, 2, 1), b = make_dense_head_params("b", 4, 3, 2, 2);
	b.set_frozen(true);
	const ParamSet a0 = a, b0 = b;
	Gradients grads;
	for (const ParamSet *s : { &a, &b })
		for (const auto &e : s->entries())
			grads.emplace(s->key(e.name), Tensor(e.value.shape(), 1.0));
	grads.erase("a/w1");
	AdamState state;
	std::vector<ParamSet*> sets = { &a, &b };
	adam_step(sets, grads, state, 0.1);
	EXPECT_EQ(b, b0);
	EXPECT_EQ(a.get("w1"), a0.get("w1"));
	EXPECT_NE(a.get("b1"), a0.get("b1"));
}

TEST(Adam, ShapeMismatchThrows)
{
	ParamSet p("p");
	p.add("w", Tensor( { 3 }));
	Gradients grads;
	grads.emplace("p/w", Tensor( { 4 }));
	AdamState state;
	EXPECT_THROW(adam_step(p, grads, state, 0.1), snake::DimensionError);
	EXPECT_THROW(sgd_step(p, grads, 0.1), snake::DimensionError);
}

TEST(Sgd, ZeroRateAndScalarArithmetic)
{
	ParamSet p("p");
	p.add("w", Tensor( { 1 }, 1.0));
	Gradients grads;
	grads.emplace("p/w", Tensor( { 1 }, 2.0));
	sgd_step(p, grads, 0.0);
	EXPECT_EQ(p.get("w")[0], 1.0);
	sgd_step(p, grads, 0.1);
	EXPECT_DOUBLE_EQ(p.get("w")[0], 0.8);
}

TEST(Sgd, QuadraticBowlMonotoneDescent)
{
	// L(w) = 0.5 * sum_i c_i w_i^2 ; GD with lr < 1/max c contracts every coordinate by (1 - lr c_i).
	const std::vector<double> curvature = { 0.5, 2.0, 8.0, 1.0 };
	ParamSet p("p");
	p.add("w", Tensor( { 4 }, std::vector<double> { 3.0, -1.0, 0.25, 2.0 }));
	const double lr = 0.9 / 8.0;
	auto loss = [&](const Tensor &w)
	{
		double l = 0.0;
		for (std::size_t i = 0; i < 4; i++)
			l += 0.5 * curvature[i] * w[i] * w[i];
		return l;
	};
	const Tensor w0 = p.get("w");
	double previous = loss(w0);
	for (int step = 1; step <= 100; step++)
	{
		Tensor g( { 4 });
		for (std::size_t i = 0; i < 4; i++)
			g[i] = curvature[i] * p.get("w")[i];
		Gradients grads;
		grads.emplace("p/w", g);
		sgd_step(p, grads, lr);
		const double current = loss(p.get("w"));
		EXPECT_LT(current, previous) << "step " << step;
		previous = current;
		for (std::size_t i = 0; i < 4; i++)
			EXPECT_NEAR(p.get("w")[i], w0[i] * std::pow(1.0 - lr * curvature[i], step), 1e-12);
	}
}

TEST(TrainConfig, DefaultsAndValidation)
{
	TrainConfig cfg;
	EXPECT_EQ(cfg.learning_rate, 1e-3);
	EXPECT_EQ(cfg.batch_size, 32u);
	EXPECT_EQ(cfg.epochs, 50u);
	EXPECT_EQ(cfg.dropout_rate, 0.2);
	EXPECT_NO_THROW(cfg.validate());
	cfg.dropout_rate = 1.0;
	EXPECT_THROW(cfg.validate(), snake::ConfigError);
	cfg = TrainConfig { };
	cfg.learning_rate = 0.0;
	EXPECT_THROW(cfg.validate(), snake::ConfigError);
	cfg = TrainConfig { };
	cfg.epochs = 0;
	EXPECT_THROW(cfg.validate(), snake::ConfigError);
}

TEST(Encoder, OutputShapeAndEvalDeterminism)
{
	const EncoderShape shape;
	const ParamSet enc = make_encoder_params("enc", shape, 4);
	const Tensor x = random_matrix(1, 912, 8);
	const auto a = encoder_forward(enc, shape, x.data());
	const auto b = encoder_forward(enc, shape, x.data());
	EXPECT_EQ(a.size(), 912u);
	EXPECT_EQ(a, b);
	for (double v : a)
		EXPECT_TRUE(std::isfinite(v));
	EXPECT_THROW((void) encoder_forward(enc, shape, std::vector<double>(911, 0.0)), snake::DimensionError);
	const auto t1 = encoder_forward(enc, shape, x.data(), true, 1);
	const auto t2 = encoder_forward(enc, shape, x.data(), true, 1);
	const auto t3 = encoder_forward(enc, shape, x.data(), true, 2);
	EXPECT_EQ(t1, t2);
	EXPECT_NE(t1, t3);
	EXPECT_NE(t1, a);
}

TEST(Encoder, AttentionRowsAreProbabilityVectors)
{
	const EncoderShape shape;
	const ParamSet enc = make_encoder_params("enc", shape, 6);
	const Tensor x = random_matrix(3, 912, 12);
	Tape tape;
	CounterStream stream(0);
	std::vector<Tensor> probs;
	(void) encoder_forward(tape, enc, shape, tape.constant(x), false, stream, 0.2, &probs);
	ASSERT_EQ(probs.size(), 3u * shape.heads);
	for (const Tensor &p : probs)
	{
		ASSERT_EQ(p.rows(), shape.tokens);
		ASSERT_EQ(p.cols(), shape.tokens);
		for (std::size_t r = 0; r < p.rows(); r++)
		{
			double sum = 0.0;
			for (std::size_t c = 0; c < p.cols(); c++)
			{
				EXPECT_GE(p.at(r, c), 0.0);
				sum += p.at(r, c);
			}
			EXPECT_NEAR(sum, 1.0, 1e-12);
		}
	}
}

TEST(Dropout, EvalIdentityAndTrainMeanPreserved)
{
	Tape tape;
	const Tensor x( { 1, 200000 }, 1.0);
	const Var in = tape.constant(x);
	CounterStream stream(77);
	EXPECT_EQ(ops::dropout(in, 0.2, stream, false).id, in.id);
	const Var out = ops::dropout(in, 0.2, stream, true);
	const Tensor &y = tape.value(out);
	std::size_t kept = 0;
	for (double v : y.data())
	{
		EXPECT_TRUE(v == 0.0 || std::abs(v - 1.25) < 1e-15);
		kept += v != 0.0;
	}
	const double mean = std::accumulate(y.data().begin(), y.data().end(), 0.0) / static_cast<double>(y.size());
	// binomial standard error of the mean is about 0.0028 here
	EXPECT_NEAR(mean, 1.0, 0.015);
	EXPECT_NEAR(static_cast<double>(kept) / static_cast<double>(y.size()), 0.8, 0.012);
}

TEST(GradientCheck, FullSizeExpertOnTenSamples)
{
	const EncoderShape shape;
	ParamSet enc = make_encoder_params("enc", shape, 31);
	ParamSet head = make_dense_head_params("head", 912, 256, 4, 32);
	const Tensor x = random_matrix(10, 912, 33);
	const std::vector<std::size_t> labels = { 0, 1, 2, 3, 0, 1, 2, 3, 0, 1 };
	const auto r = snake::testing::check_gradients( { &enc, &head }, [&](Tape &t)
	{
		CounterStream stream(3);
		const Var h = encoder_forward(t, enc, shape, t.constant(x), true, stream, 0.2);
		return ops::softmax_cross_entropy(dense_head_forward(t, head, h, true, stream, 0.2), labels);
	}, 12);
	EXPECT_LT(r.max_relative_error, 1e-4) << r.worst;
	EXPECT_GT(r.checked, 200u);
}
