#pragma once

#include <snake/nn/params.hpp>
#include <snake/nn/tensor.hpp>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace snake::nn
{
	class Tape;

	/// Handle to a value recorded on a Tape.
	struct Var
	{
			const Tape *tape = nullptr;
			std::size_t id = 0;
	};

	/// Reverse-mode trace of one forward computation. Every op appends a node holding
	/// its output and a closure that pushes the output gradient back to its inputs.
	/// Parameters from frozen sets enter as constants and never receive gradients.
	class Tape
	{
		public:
			using BackwardFn = std::function<void(Tape&, std::size_t)>;

			Tape() = default;
			Tape(const Tape&) = delete;
			Tape& operator=(const Tape&) = delete;

			Var constant(Tensor value);
			Var parameter(const ParamSet &set, std::string_view name);

			/// Appends an op output. The node requires a gradient iff any input does.
			Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
			Var record(Tensor value, const std::vector<Var> &inputs, BackwardFn backward);

			const Tensor& value(Var v) const;
			const Tensor& value(std::size_t id) const
			{
				return m_nodes[id].value;
			}
			bool requires_grad(Var v) const;
			bool requires_grad(std::size_t id) const
			{
				return m_nodes[id].requires_grad;
			}
			/// Gradient buffer of a node, zero-initialized on first touch.
			Tensor& grad(std::size_t id);
			bool has_grad(std::size_t id) const
			{
				return m_nodes[id].has_grad;
			}
			std::size_t size() const noexcept
			{
				return m_nodes.size();
			}

			/// Runs the reverse sweep from a scalar loss. A tape can be swept once.
			/// Trainable parameters unreachable from the loss get no entry.
			Gradients backward(Var loss);

		private:
			struct Node
			{
					Tensor value;
					Tensor grad;
					bool requires_grad = false;
					bool has_grad = false;
					BackwardFn backward;
					std::string param_key;
			};

			void check(Var v) const;

			std::vector<Node> m_nodes;
			bool m_consumed = false;
	};
}
