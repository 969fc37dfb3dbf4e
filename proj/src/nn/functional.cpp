#include <snake/nn/functional.hpp>
#include <snake/nn/kernels.hpp>
#include <snake/error.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace snake::nn
{
	std::vector<double> linear_forward(const Tensor &weights, const Tensor &bias, std::span<const double> input)
	{
		if (weights.rank() != 2 || weights.cols() != input.size() || bias.size() != weights.rows())
			throw DimensionError("linear: weights " + shape_to_string(weights.shape()) + ", bias " + shape_to_string(bias.shape()) + ", input "
					+ std::to_string(input.size()));
		std::vector<double> result(weights.rows());
		for (std::size_t j = 0; j < result.size(); j++)
			result[j] = kernels::dot(weights.row(j), input) + bias[j];
		return result;
	}

	std::vector<double> relu(std::span<const double> input)
	{
		std::vector<double> result(input.begin(), input.end());
		for (double &x : result)
			x = std::max(x, 0.0);
		return result;
	}

	std::vector<double> softmax(std::span<const double> logits)
	{
		if (logits.empty())
			throw DimensionError("softmax of an empty vector");
		const double shift = *std::max_element(logits.begin(), logits.end());
		std::vector<double> result(logits.size());
		double sum = 0.0;
		for (std::size_t i = 0; i < logits.size(); i++)
		{
			result[i] = std::exp(logits[i] - shift);
			sum += result[i];
		}
		for (double &p : result)
			p /= sum;
		return result;
	}

	double cross_entropy(std::span<const double> probabilities, std::size_t label)
	{
		if (label >= probabilities.size())
			throw DataError("label index " + std::to_string(label) + " out of range for " + std::to_string(probabilities.size()) + " classes");
		return -std::log(std::max(probabilities[label], probability_floor));
	}

	std::size_t argmax(std::span<const double> values)
	{
		if (values.empty())
			throw DimensionError("argmax of an empty vector");
		std::size_t best = 0;
		for (std::size_t i = 1; i < values.size(); i++)
			if (values[i] > values[best])
				best = i;
		return best;
	}
}
