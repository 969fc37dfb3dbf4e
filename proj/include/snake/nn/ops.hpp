#pragma once

#include <snake/nn/random.hpp>
#include <snake/nn/tape.hpp>

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

// Differentiable ops recorded on a Tape. Matrices are [rows x cols], row-major;
// a minibatch occupies the rows.
namespace snake::nn::ops
{
	/// x [m x k], w [n x k], b [n]  ->  x w^T + b  [m x n]
	Var linear(Var x, Var w, Var b);
	Var add(Var a, Var b);
	Var scale(Var x, double factor);
	Var relu(Var x);
	/// Inverted dropout; identity (same Var) when !train or rate == 0.
	Var dropout(Var x, double rate, CounterStream &stream, bool train);
	/// Per-row normalization with learned gain/shift of length cols.
	Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
	Var reshape(Var x, std::vector<std::size_t> shape);
	/// Row-wise softmax.
	Var softmax(Var x);

	/// Scaled dot-product self-attention over consecutive blocks of seq_len rows.
	/// q, k, v are [batch*seq_len x d]; heads split d evenly. When probs_out is set it
	/// receives the attention matrices as [batch][head][seq_len x seq_len].
	Var attention(Var q, Var k, Var v, std::size_t seq_len, std::size_t heads, std::vector<Tensor> *probs_out = nullptr);

	/// Mean over rows of -log(max(softmax(logits)[label], 1e-12)).
	Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels);

	/// out[b] = sum_j weights[b][j] * inputs[j][b]; inputs all [B x D], weights [B x m].
	Var mix(const std::vector<Var> &inputs, Var weights);

	/// sum_k factors[k] * terms[k] for scalar terms.
	Var weighted_sum(const std::vector<Var> &terms, std::span<const double> factors);
}
