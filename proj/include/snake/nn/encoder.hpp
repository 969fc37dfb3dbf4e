#pragma once

#include <snake/nn/ops.hpp>
#include <snake/nn/params.hpp>
#include <snake/nn/tape.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace snake::nn
{
	/// Geometry of the single-layer transformer encoder. The flat input is read as
	/// `tokens` rows of `width` features; attention splits `width` across `heads`.
	struct EncoderShape
	{
			std::size_t tokens = 24;
			std::size_t width = 38;
			std::size_t heads = 2;
			std::size_t feed_forward = 152;

			std::size_t input_dim() const noexcept
			{
				return tokens * width;
			}
			std::size_t head_dim() const noexcept
			{
				return width / heads;
			}
			void validate() const;

			friend bool operator==(const EncoderShape&, const EncoderShape&) = default;
	};

	ParamSet make_encoder_params(std::string name, const EncoderShape &shape, std::uint64_t seed);
	/// Throws unless `params` has the tensor layout `shape` implies.
	void check_encoder_params(const ParamSet &params, const EncoderShape &shape);

	/// Sinusoidal position table [tokens x width].
	Tensor positional_encoding(std::size_t tokens, std::size_t width);

	/// Records the encoder on `tape`. `input` is [batch x input_dim]; the result has the
	/// same shape. Post-norm layout: x + PE -> MHA -> dropout -> add&norm -> FFN(ReLU)
	/// -> dropout -> add&norm.
	Var encoder_forward(Tape &tape, const ParamSet &params, const EncoderShape &shape, Var input, bool train_mode, CounterStream &dropout, double dropout_rate,
			std::vector<Tensor> *attention_probs = nullptr);

	/// Eval/train forward of one flat vector on a private tape.
	std::vector<double> encoder_forward(const ParamSet &params, const EncoderShape &shape, std::span<const double> input, bool train_mode = false, std::uint64_t seed = 0,
			double dropout_rate = 0.2);

	/// Eval-mode forward of a [batch x input_dim] matrix.
	Tensor encode_batch(const ParamSet &params, const EncoderShape &shape, const Tensor &inputs);

	/// Two-layer classifier [in -> hidden -> out] with ReLU and dropout between layers.
	ParamSet make_dense_head_params(std::string name, std::size_t in, std::size_t hidden, std::size_t out, std::uint64_t seed);
	Var dense_head_forward(Tape &tape, const ParamSet &params, Var input, bool train_mode, CounterStream &dropout, double dropout_rate);
	/// Eval-mode logits for a [batch x in] matrix.
	Tensor dense_head_logits(const ParamSet &params, const Tensor &inputs);
}
