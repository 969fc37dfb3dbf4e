#pragma once

#include <snake/nn/random.hpp>
#include <snake/nn/tensor.hpp>

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace snake::nn
{
	/// Gradient tensors keyed by "<param-set name>/<parameter name>".
	using Gradients = std::map<std::string, Tensor>;

	/// Named parameter tensors of one network. Names are unique and shapes are fixed
	/// once a tensor is added; only values change afterwards.
	class ParamSet
	{
		public:
			struct Entry
			{
					std::string name;
					Tensor value;
			};

			ParamSet() = default;
			explicit ParamSet(std::string name);

			const std::string& name() const noexcept
			{
				return m_name;
			}
			void rename(std::string name)
			{
				m_name = std::move(name);
			}

			void add(std::string name, Tensor init);
			bool contains(std::string_view name) const noexcept;
			const Tensor& get(std::string_view name) const;
			/// Overwrites values; the shape must match the registered one.
			void assign(std::string_view name, const Tensor &value);
			std::span<double> mutable_data(std::string_view name);

			const std::vector<Entry>& entries() const noexcept
			{
				return m_entries;
			}
			std::size_t tensor_count() const noexcept
			{
				return m_entries.size();
			}
			std::size_t parameter_count() const noexcept;

			/// Gradient map key for a parameter of this set.
			std::string key(std::string_view param) const;

			bool frozen() const noexcept
			{
				return m_frozen;
			}
			void set_frozen(bool f) noexcept
			{
				m_frozen = f;
			}

			/// All values concatenated in entry order.
			std::vector<double> flatten() const;
			void unflatten(std::span<const double> values);

			friend bool operator==(const ParamSet &a, const ParamSet &b) noexcept;

		private:
			std::size_t index_of(std::string_view name) const;

			std::string m_name;
			std::vector<Entry> m_entries;
			bool m_frozen = false;
	};

	/// Glorot-uniform matrix [fan_out x fan_in] drawn from a counter stream.
	Tensor xavier_uniform(std::size_t fan_out, std::size_t fan_in, CounterStream &rng);
	/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) matrix [fan_out x fan_in].
	Tensor fan_in_uniform(std::size_t fan_out, std::size_t fan_in, CounterStream &rng);

	/// Gradient entries of one set flattened in entry order; absent entries contribute zeros.
	std::vector<double> flatten_gradients(const ParamSet &set, const Gradients &grads);
}
