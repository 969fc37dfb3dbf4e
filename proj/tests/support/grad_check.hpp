#pragma once

#include <snake/nn/params.hpp>
#include <snake/nn/tape.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace snake::testing
{
	struct GradCheckResult
	{
			double max_relative_error = 0.0;
			std::string worst;
			std::size_t checked = 0;
	};

	/// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true gradient is
	/// ~0 from being judged on finite-difference round-off alone.
	inline double relative_error(double analytic, double numeric, double floor = 1e-6)
	{
		return std::abs(analytic - numeric) / std::max( { std::abs(analytic), std::abs(numeric), floor });
	}

	/// Central finite differences against the tape's reverse sweep. `build` records the
	/// loss on a fresh tape and must read the current values of `sets`. Tensors larger
	/// than `max_per_tensor` are probed at evenly strided entries.
	inline GradCheckResult check_gradients(const std::vector<nn::ParamSet*> &sets, const std::function<nn::Var(nn::Tape&)> &build,
			std::size_t max_per_tensor = 64, double h = 1e-5)
	{
		nn::Gradients analytic;
		{
			nn::Tape tape;
			analytic = tape.backward(build(tape));
		}
		const auto loss_at = [&]()
		{
			nn::Tape tape;
			return tape.value(build(tape))[0];
		};

		GradCheckResult result;
		for (nn::ParamSet *set : sets)
		{
			if (set->frozen())
				continue;
			for (const auto &entry : set->entries())
			{
				const std::string key = set->key(entry.name);
				const std::size_t n = entry.value.size();
				const std::size_t stride = std::max<std::size_t>(1, n / max_per_tensor);
				for (std::size_t i = 0; i < n; i += stride)
				{
					auto data = set->mutable_data(entry.name);
					const double original = data[i];
					data[i] = original + h;
					const double up = loss_at();
					set->mutable_data(entry.name)[i] = original - h;
					const double down = loss_at();
					set->mutable_data(entry.name)[i] = original;
					const double numeric = (up - down) / (2.0 * h);
					const auto it = analytic.find(key);
					const double a = (it == analytic.end()) ? 0.0 : it->second[i];
					const double err = relative_error(a, numeric);
					result.checked++;
					if (err > result.max_relative_error)
					{
						result.max_relative_error = err;
						result.worst = key + "[" + std::to_string(i) + "] analytic=" + std::to_string(a) + " numeric=" + std::to_string(numeric);
					}
				}
			}
		}
		return result;
	}
}
