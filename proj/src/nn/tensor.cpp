#include <snake/nn/tensor.hpp>
#include <snake/error.hpp>

#include <algorithm>
#include <functional>
#include <numeric>

namespace snake::nn
{
	std::size_t volume(const std::vector<std::size_t> &shape) noexcept
	{
		return std::accumulate(shape.begin(), shape.end(), std::size_t { 1 }, std::multiplies<>());
	}
	std::string shape_to_string(const std::vector<std::size_t> &shape)
	{
		std::string result = "[";
		for (std::size_t i = 0; i < shape.size(); i++)
		{
			if (i > 0)
				result += ", ";
			result += std::to_string(shape[i]);
		}
		return result + "]";
	}

	Tensor::Tensor(std::vector<std::size_t> shape, double fill) :
			m_shape(std::move(shape)),
			m_data(volume(m_shape), fill)
	{
	}
	Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data) :
			m_shape(std::move(shape)),
			m_data(std::move(data))
	{
		if (m_data.size() != volume(m_shape))
			throw DimensionError("tensor data length " + std::to_string(m_data.size()) + " does not match shape " + shape_to_string(m_shape));
	}
	Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill)
	{
		return Tensor( { rows, cols }, fill);
	}
	Tensor Tensor::vector(std::vector<double> values)
	{
		const std::size_t n = values.size();
		return Tensor( { n }, std::move(values));
	}

	std::size_t Tensor::rows() const noexcept
	{
		return m_shape.size() >= 2 ? m_shape.front() : 1;
	}
	std::size_t Tensor::cols() const noexcept
	{
		return m_shape.empty() ? 1 : m_shape.back();
	}
	double& Tensor::at(std::size_t r, std::size_t c)
	{
		return m_data[r * cols() + c];
	}
	double Tensor::at(std::size_t r, std::size_t c) const
	{
		return m_data[r * cols() + c];
	}
	std::span<double> Tensor::row(std::size_t r)
	{
		return std::span<double>(m_data).subspan(r * cols(), cols());
	}
	std::span<const double> Tensor::row(std::size_t r) const
	{
		return std::span<const double>(m_data).subspan(r * cols(), cols());
	}
	Tensor Tensor::reshaped(std::vector<std::size_t> shape) const
	{
		if (volume(shape) != m_data.size())
			throw DimensionError("cannot reshape " + shape_to_string(m_shape) + " to " + shape_to_string(shape));
		return Tensor(std::move(shape), m_data);
	}
	void Tensor::fill(double value) noexcept
	{
		std::fill(m_data.begin(), m_data.end(), value);
	}
}
