#pragma once

#include <snake/nn/params.hpp>

#include <cstdint>
#include <map>
#include <span>
#include <string>

namespace snake::nn
{
	struct AdamState
	{
			double beta1 = 0.9;
			double beta2 = 0.999;
			double epsilon = 1e-8;
			std::uint64_t step = 0;
			std::map<std::string, Tensor> first_moment;
			std::map<std::string, Tensor> second_moment;
	};

	/// One bias-corrected Adam update over every non-frozen set. Parameters without
	/// a gradient entry are left untouched, moments included.
	void adam_step(std::span<ParamSet* const> sets, const Gradients &grads, AdamState &state, double learning_rate);
	void adam_step(ParamSet &set, const Gradients &grads, AdamState &state, double learning_rate);

	/// w <- w - lr * grad
	void sgd_step(std::span<ParamSet* const> sets, const Gradients &grads, double learning_rate);
	void sgd_step(ParamSet &set, const Gradients &grads, double learning_rate);

	/// Hyper-parameters of one training run. Defaults are the expert setting:
	/// Adam at 1e-3, dropout 0.2, batch 32, 50 epochs.
	struct TrainConfig
	{
			double learning_rate = 1e-3;
			std::size_t batch_size = 32;
			std::size_t epochs = 50;
			double dropout_rate = 0.2;
			std::uint64_t seed = 0;

			void validate() const;
	};
}
