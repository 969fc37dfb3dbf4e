#include <snake/nn/params.hpp>
#include <snake/error.hpp>

#include <algorithm>
#include <cmath>

namespace snake::nn
{
	ParamSet::ParamSet(std::string name) :
			m_name(std::move(name))
	{
	}

	void ParamSet::add(std::string name, Tensor init)
	{
		if (contains(name))
			throw ConfigError("duplicate parameter '" + name + "' in set '" + m_name + "'");
		m_entries.push_back(Entry { std::move(name), std::move(init) });
	}
	bool ParamSet::contains(std::string_view name) const noexcept
	{
		return std::any_of(m_entries.begin(), m_entries.end(), [&](const Entry &e)
		{	return e.name == name;});
	}
	std::size_t ParamSet::index_of(std::string_view name) const
	{
		for (std::size_t i = 0; i < m_entries.size(); i++)
			if (m_entries[i].name == name)
				return i;
		throw ConfigError("no parameter '" + std::string(name) + "' in set '" + m_name + "'");
	}
	const Tensor& ParamSet::get(std::string_view name) const
	{
		return m_entries[index_of(name)].value;
	}
	void ParamSet::assign(std::string_view name, const Tensor &value)
	{
		Tensor &target = m_entries[index_of(name)].value;
		if (!target.same_shape(value))
			throw DimensionError("parameter '" + std::string(name) + "' has shape " + shape_to_string(target.shape()) + ", got "
					+ shape_to_string(value.shape()));
		target = value;
	}
	std::span<double> ParamSet::mutable_data(std::string_view name)
	{
		return m_entries[index_of(name)].value.data();
	}
	std::size_t ParamSet::parameter_count() const noexcept
	{
		std::size_t result = 0;
		for (const Entry &e : m_entries)
			result += e.value.size();
		return result;
	}
	std::string ParamSet::key(std::string_view param) const
	{
		return m_name + "/" + std::string(param);
	}
	std::vector<double> ParamSet::flatten() const
	{
		std::vector<double> result;
		result.reserve(parameter_count());
		for (const Entry &e : m_entries)
			result.insert(result.end(), e.value.data().begin(), e.value.data().end());
		return result;
	}
	void ParamSet::unflatten(std::span<const double> values)
	{
		if (values.size() != parameter_count())
			throw DimensionError("flat parameter vector of length " + std::to_string(values.size()) + " for set of "
					+ std::to_string(parameter_count()));
		std::size_t offset = 0;
		for (Entry &e : m_entries)
		{
			std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), e.value.size(), e.value.data().begin());
			offset += e.value.size();
		}
	}
	bool operator==(const ParamSet &a, const ParamSet &b) noexcept
	{
		if (a.m_name != b.m_name || a.m_entries.size() != b.m_entries.size())
			return false;
		for (std::size_t i = 0; i < a.m_entries.size(); i++)
			if (a.m_entries[i].name != b.m_entries[i].name || !(a.m_entries[i].value == b.m_entries[i].value))
				return false;
		return true;
	}

	Tensor xavier_uniform(std::size_t fan_out, std::size_t fan_in, CounterStream &rng)
	{
		const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
		Tensor result = Tensor::matrix(fan_out, fan_in);
		for (double &w : result.data())
			w = (2.0 * rng.next_uniform() - 1.0) * limit;
		return result;
	}

	Tensor fan_in_uniform(std::size_t fan_out, std::size_t fan_in, CounterStream &rng)
	{
		const double limit = 1.0 / std::sqrt(static_cast<double>(fan_in));
		Tensor result = Tensor::matrix(fan_out, fan_in);
		for (double &w : result.data())
			w = (2.0 * rng.next_uniform() - 1.0) * limit;
		return result;
	}

	std::vector<double> flatten_gradients(const ParamSet &set, const Gradients &grads)
	{
		std::vector<double> result;
		result.reserve(set.parameter_count());
		for (const ParamSet::Entry &e : set.entries())
		{
			const auto it = grads.find(set.key(e.name));
			if (it == grads.end())
				result.insert(result.end(), e.value.size(), 0.0);
			else
				result.insert(result.end(), it->second.data().begin(), it->second.data().end());
		}
		return result;
	}
}
