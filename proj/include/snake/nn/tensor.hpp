#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace snake::nn
{
	/// Dense fp64 tensor in row-major order. Rank 1 and rank 2 cover everything the
	/// encoder, heads, gates and towers need.
	class Tensor
	{
		public:
			Tensor() = default;
			explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
			Tensor(std::vector<std::size_t> shape, std::vector<double> data);

			static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
			static Tensor vector(std::vector<double> values);

			const std::vector<std::size_t>& shape() const noexcept
			{
				return m_shape;
			}
			std::size_t rank() const noexcept
			{
				return m_shape.size();
			}
			std::size_t size() const noexcept
			{
				return m_data.size();
			}
			bool empty() const noexcept
			{
				return m_data.empty();
			}
			/// Leading extent; 1 for rank-1 tensors.
			std::size_t rows() const noexcept;
			/// Trailing extent.
			std::size_t cols() const noexcept;

			std::span<double> data() noexcept
			{
				return m_data;
			}
			std::span<const double> data() const noexcept
			{
				return m_data;
			}
			double* ptr() noexcept
			{
				return m_data.data();
			}
			const double* ptr() const noexcept
			{
				return m_data.data();
			}

			double& operator[](std::size_t i) noexcept
			{
				return m_data[i];
			}
			double operator[](std::size_t i) const noexcept
			{
				return m_data[i];
			}
			double& at(std::size_t r, std::size_t c);
			double at(std::size_t r, std::size_t c) const;

			std::span<double> row(std::size_t r);
			std::span<const double> row(std::size_t r) const;

			/// Same data, new extents with identical element count.
			Tensor reshaped(std::vector<std::size_t> shape) const;
			void fill(double value) noexcept;
			bool same_shape(const Tensor &other) const noexcept
			{
				return m_shape == other.m_shape;
			}

			friend bool operator==(const Tensor &a, const Tensor &b) = default;

		private:
			std::vector<std::size_t> m_shape;
			std::vector<double> m_data;
	};

	std::size_t volume(const std::vector<std::size_t> &shape) noexcept;
	std::string shape_to_string(const std::vector<std::size_t> &shape);
}
