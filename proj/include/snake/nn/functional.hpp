#pragma once

#include <snake/nn/tensor.hpp>

#include <cstddef>
#include <span>
#include <vector>

// Tape-free forward primitives used at inference time and as test oracles.
namespace snake::nn
{
	/// y = W x + b with W [out x in].
	std::vector<double> linear_forward(const Tensor &weights, const Tensor &bias, std::span<const double> input);
	std::vector<double> relu(std::span<const double> input);
	std::vector<double> softmax(std::span<const double> logits);

	/// -log(max(p[label], 1e-12)).
	double cross_entropy(std::span<const double> probabilities, std::size_t label);

	/// Index of the largest entry; ties resolve to the lowest index.
	std::size_t argmax(std::span<const double> values);

	inline constexpr double probability_floor = 1e-12;
}
