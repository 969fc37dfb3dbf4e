#include <snake/nn/optim.hpp>
#include <snake/error.hpp>

#include <cmath>

namespace snake::nn
{
	namespace
	{
		void check_shape(const ParamSet::Entry &e, const Tensor &g, const std::string &key)
		{
			if (!e.value.same_shape(g))
				throw DimensionError("gradient for '" + key + "' has shape " + shape_to_string(g.shape()) + ", parameter has "
						+ shape_to_string(e.value.shape()));
		}
	}

	void adam_step(std::span<ParamSet* const> sets, const Gradients &grads, AdamState &state, double learning_rate)
	{
		state.step++;
		const double t = static_cast<double>(state.step);
		const double correction1 = 1.0 - std::pow(state.beta1, t);
		const double correction2 = 1.0 - std::pow(state.beta2, t);
		for (ParamSet *set : sets)
		{
			if (set->frozen())
				continue;
			for (const ParamSet::Entry &e : set->entries())
			{
				const std::string key = set->key(e.name);
				const auto it = grads.find(key);
				if (it == grads.end())
					continue;
				const Tensor &g = it->second;
				check_shape(e, g, key);
				Tensor &m = state.first_moment.try_emplace(key, e.value.shape(), 0.0).first->second;
				Tensor &v = state.second_moment.try_emplace(key, e.value.shape(), 0.0).first->second;
				std::span<double> w = set->mutable_data(e.name);
				for (std::size_t i = 0; i < w.size(); i++)
				{
					m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
					v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
					const double m_hat = m[i] / correction1;
					const double v_hat = v[i] / correction2;
					w[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
				}
			}
		}
	}
	void adam_step(ParamSet &set, const Gradients &grads, AdamState &state, double learning_rate)
	{
		ParamSet *sets[] = { &set };
		adam_step(sets, grads, state, learning_rate);
	}

	void sgd_step(std::span<ParamSet* const> sets, const Gradients &grads, double learning_rate)
	{
		for (ParamSet *set : sets)
		{
			if (set->frozen())
				continue;
			for (const ParamSet::Entry &e : set->entries())
			{
				const std::string key = set->key(e.name);
				const auto it = grads.find(key);
				if (it == grads.end())
					continue;
				check_shape(e, it->second, key);
				std::span<double> w = set->mutable_data(e.name);
				for (std::size_t i = 0; i < w.size(); i++)
					w[i] -= learning_rate * it->second[i];
			}
		}
	}
	void sgd_step(ParamSet &set, const Gradients &grads, double learning_rate)
	{
		ParamSet *sets[] = { &set };
		sgd_step(sets, grads, learning_rate);
	}

	void TrainConfig::validate() const
	{
		if (!(learning_rate > 0.0))
			throw ConfigError("learning rate must be positive");
		if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
			throw ConfigError("dropout rate must lie in [0, 1)");
		if (epochs < 1)
			throw ConfigError("epochs must be at least 1");
		if (batch_size < 1)
			throw ConfigError("batch size must be at least 1");
	}
}
