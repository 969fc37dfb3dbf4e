#include <snake/nn/tape.hpp>
#include <snake/error.hpp>

namespace snake::nn
{
	void Tape::check(Var v) const
	{
		if (v.tape != this || v.id >= m_nodes.size())
			throw Error("variable does not belong to this tape");
	}

	Var Tape::constant(Tensor value)
	{
		m_nodes.push_back(Node { std::move(value), Tensor(), false, false, nullptr, std::string() });
		return Var { this, m_nodes.size() - 1 };
	}
	Var Tape::parameter(const ParamSet &set, std::string_view name)
	{
		const bool trainable = !set.frozen();
		m_nodes.push_back(Node { set.get(name), Tensor(), trainable, false, nullptr, trainable ? set.key(name) : std::string() });
		return Var { this, m_nodes.size() - 1 };
	}

	Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward)
	{
		return record(std::move(value), std::vector<Var>(inputs), std::move(backward));
	}
	Var Tape::record(Tensor value, const std::vector<Var> &inputs, BackwardFn backward)
	{
		if (m_consumed)
			throw Error("cannot record onto a tape that has already been swept");
		bool needs = false;
		for (const Var &v : inputs)
		{
			check(v);
			needs = needs || m_nodes[v.id].requires_grad;
		}
		m_nodes.push_back(Node { std::move(value), Tensor(), needs, false, needs ? std::move(backward) : nullptr, std::string() });
		return Var { this, m_nodes.size() - 1 };
	}

	const Tensor& Tape::value(Var v) const
	{
		check(v);
		return m_nodes[v.id].value;
	}
	bool Tape::requires_grad(Var v) const
	{
		check(v);
		return m_nodes[v.id].requires_grad;
	}
	Tensor& Tape::grad(std::size_t id)
	{
		Node &node = m_nodes[id];
		if (!node.has_grad)
		{
			node.grad = Tensor(node.value.shape(), 0.0);
			node.has_grad = true;
		}
		return node.grad;
	}

	Gradients Tape::backward(Var loss)
	{
		if (loss.tape != this || loss.id >= m_nodes.size())
			throw Error("backward: loss is detached from this tape");
		if (m_consumed)
			throw Error("backward: tape was already swept");
		if (m_nodes[loss.id].value.size() != 1)
			throw DimensionError("backward: loss must be a scalar, got shape " + shape_to_string(m_nodes[loss.id].value.shape()));
		m_consumed = true;

		Gradients result;
		if (!m_nodes[loss.id].requires_grad)
			return result;
		grad(loss.id)[0] = 1.0;
		for (std::size_t id = loss.id + 1; id-- > 0;)
		{
			Node &node = m_nodes[id];
			if (!node.requires_grad || !node.has_grad)
				continue;
			if (node.backward)
				node.backward(*this, id);
			else if (!node.param_key.empty())
			{
				auto [it, inserted] = result.try_emplace(node.param_key, node.grad);
				if (!inserted)
					for (std::size_t i = 0; i < node.grad.size(); i++)
						it->second[i] += node.grad[i];
			}
		}
		return result;
	}
}
