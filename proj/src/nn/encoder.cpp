#include <snake/nn/encoder.hpp>
#include <snake/error.hpp>

#include <cmath>

namespace snake::nn
{
	void EncoderShape::validate() const
	{
		if (tokens == 0 || width == 0 || heads == 0 || width % heads != 0 || feed_forward == 0)
			throw ConfigError("invalid encoder geometry: " + std::to_string(tokens) + " tokens x " + std::to_string(width) + " with "
					+ std::to_string(heads) + " heads");
	}

	ParamSet make_encoder_params(std::string name, const EncoderShape &shape, std::uint64_t seed)
	{
		shape.validate();
		CounterStream rng(derive_seed(seed, 0x656e63));
		const std::size_t d = shape.width, f = shape.feed_forward;
		ParamSet p(std::move(name));
		p.add("wq", xavier_uniform(d, d, rng));
		p.add("bq", Tensor( { d }));
		p.add("wk", xavier_uniform(d, d, rng));
		p.add("bk", Tensor( { d }));
		p.add("wv", xavier_uniform(d, d, rng));
		p.add("bv", Tensor( { d }));
		p.add("wo", xavier_uniform(d, d, rng));
		p.add("bo", Tensor( { d }));
		p.add("ln1_gamma", Tensor( { d }, 1.0));
		p.add("ln1_beta", Tensor( { d }));
		p.add("ff1_w", xavier_uniform(f, d, rng));
		p.add("ff1_b", Tensor( { f }));
		p.add("ff2_w", xavier_uniform(d, f, rng));
		p.add("ff2_b", Tensor( { d }));
		p.add("ln2_gamma", Tensor( { d }, 1.0));
		p.add("ln2_beta", Tensor( { d }));
		return p;
	}

	void check_encoder_params(const ParamSet &params, const EncoderShape &shape)
	{
		shape.validate();
		const std::size_t d = shape.width, f = shape.feed_forward;
		const auto expect = [&](const char *name, std::vector<std::size_t> dims)
		{
			if (!params.contains(name) || params.get(name).shape() != dims)
				throw DimensionError("encoder parameter '" + std::string(name) + "' missing or not " + shape_to_string(dims));
		};
		for (const char *w : { "wq", "wk", "wv", "wo" })
			expect(w, { d, d });
		for (const char *b : { "bq", "bk", "bv", "bo", "ln1_gamma", "ln1_beta", "ff2_b", "ln2_gamma", "ln2_beta" })
			expect(b, { d });
		expect("ff1_w", { f, d });
		expect("ff1_b", { f });
		expect("ff2_w", { d, f });
	}

	Tensor positional_encoding(std::size_t tokens, std::size_t width)
	{
		Tensor pe = Tensor::matrix(tokens, width);
		for (std::size_t pos = 0; pos < tokens; pos++)
			for (std::size_t i = 0; i < width; i++)
			{
				const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(width);
				const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
				pe.at(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
			}
		return pe;
	}

	Var encoder_forward(Tape &tape, const ParamSet &params, const EncoderShape &shape, Var input, bool train_mode, CounterStream &dropout,
			double dropout_rate, std::vector<Tensor> *attention_probs)
	{
		const Tensor &in = tape.value(input);
		if (in.rank() != 2 || in.cols() != shape.input_dim())
			throw DimensionError("encoder expects [batch x " + std::to_string(shape.input_dim()) + "], got " + shape_to_string(in.shape()));
		const std::size_t batch = in.rows();
		const std::size_t rows = batch * shape.tokens;

		const Tensor pe = positional_encoding(shape.tokens, shape.width);
		Tensor tiled = Tensor::matrix(rows, shape.width);
		for (std::size_t r = 0; r < rows; r++)
			for (std::size_t c = 0; c < shape.width; c++)
				tiled.at(r, c) = pe.at(r % shape.tokens, c);

		auto param = [&](const char *name)
		{
			return tape.parameter(params, name);
		};

		Var x = ops::reshape(input, { rows, shape.width });
		x = ops::add(x, tape.constant(std::move(tiled)));

		const Var q = ops::linear(x, param("wq"), param("bq"));
		const Var k = ops::linear(x, param("wk"), param("bk"));
		const Var v = ops::linear(x, param("wv"), param("bv"));
		Var attended = ops::attention(q, k, v, shape.tokens, shape.heads, attention_probs);
		attended = ops::linear(attended, param("wo"), param("bo"));
		attended = ops::dropout(attended, dropout_rate, dropout, train_mode);
		x = ops::layer_norm(ops::add(x, attended), param("ln1_gamma"), param("ln1_beta"));

		Var ff = ops::relu(ops::linear(x, param("ff1_w"), param("ff1_b")));
		ff = ops::linear(ff, param("ff2_w"), param("ff2_b"));
		ff = ops::dropout(ff, dropout_rate, dropout, train_mode);
		x = ops::layer_norm(ops::add(x, ff), param("ln2_gamma"), param("ln2_beta"));

		return ops::reshape(x, { batch, shape.input_dim() });
	}

	std::vector<double> encoder_forward(const ParamSet &params, const EncoderShape &shape, std::span<const double> input, bool train_mode,
			std::uint64_t seed, double dropout_rate)
	{
		Tape tape;
		CounterStream stream(seed);
		const Var in = tape.constant(Tensor( { 1, input.size() }, std::vector<double>(input.begin(), input.end())));
		const Var out = encoder_forward(tape, params, shape, in, train_mode, stream, dropout_rate);
		const Tensor &result = tape.value(out);
		return std::vector<double>(result.data().begin(), result.data().end());
	}

	Tensor encode_batch(const ParamSet &params, const EncoderShape &shape, const Tensor &inputs)
	{
		Tape tape;
		CounterStream stream(0);
		const Var out = encoder_forward(tape, params, shape, tape.constant(inputs), false, stream, 0.0);
		return tape.value(out);
	}

	ParamSet make_dense_head_params(std::string name, std::size_t in, std::size_t hidden, std::size_t out, std::uint64_t seed)
	{
		CounterStream rng(derive_seed(seed, 0x68656164));
		ParamSet p(std::move(name));
		p.add("w1", fan_in_uniform(hidden, in, rng));
		p.add("b1", Tensor( { hidden }));
		p.add("w2", fan_in_uniform(out, hidden, rng));
		p.add("b2", Tensor( { out }));
		return p;
	}

	Var dense_head_forward(Tape &tape, const ParamSet &params, Var input, bool train_mode, CounterStream &dropout, double dropout_rate)
	{
		Var h = ops::linear(input, tape.parameter(params, "w1"), tape.parameter(params, "b1"));
		h = ops::dropout(ops::relu(h), dropout_rate, dropout, train_mode);
		return ops::linear(h, tape.parameter(params, "w2"), tape.parameter(params, "b2"));
	}

	Tensor dense_head_logits(const ParamSet &params, const Tensor &inputs)
	{
		Tape tape;
		CounterStream stream(0);
		const Var out = dense_head_forward(tape, params, tape.constant(inputs), false, stream, 0.0);
		return tape.value(out);
	}
}
