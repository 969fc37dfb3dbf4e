#include <snake/fusion/fusion.hpp>
#include <snake/error.hpp>
#include <snake/nn/functional.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <optional>
#include <set>

namespace snake::fusion
{
	namespace
	{
		constexpr std::size_t inference_chunk = 256;

		const expert::ExpertModel& pool_expert(const std::vector<expert::ExpertModel> &pool, std::size_t j)
		{
			if (j >= pool.size())
				throw ConfigError("relation references expert " + std::to_string(j) + " of a pool of " + std::to_string(pool.size()));
			return pool[j];
		}

		void check_subset(const std::vector<std::size_t> &subset, std::size_t experts)
		{
			if (subset.empty())
				throw ConfigError("gate expert subset S is empty");
			for (std::size_t i = 0; i < subset.size(); i++)
			{
				if (subset[i] >= experts)
					throw ConfigError("gate subset references expert " + std::to_string(subset[i]) + " of " + std::to_string(experts));
				if (i > 0 && subset[i] <= subset[i - 1])
					throw ConfigError("gate subset must be strictly ascending");
			}
		}

		std::vector<std::size_t> sorted_unique(std::vector<std::size_t> v)
		{
			std::sort(v.begin(), v.end());
			if (std::adjacent_find(v.begin(), v.end()) != v.end())
				throw ConfigError("an expert appears twice in one relation");
			return v;
		}

		nn::Tensor gather_rows(const nn::Tensor &source, std::span<const std::size_t> rows)
		{
			const std::size_t cols = source.cols();
			nn::Tensor out = nn::Tensor::matrix(rows.size(), cols);
			for (std::size_t i = 0; i < rows.size(); i++)
				std::memcpy(out.ptr() + i * cols, source.ptr() + rows[i] * cols, cols * sizeof(double));
			return out;
		}

		nn::Tensor row_block(const nn::Tensor &source, std::size_t start, std::size_t count)
		{
			std::vector<std::size_t> rows(count);
			std::iota(rows.begin(), rows.end(), start);
			return gather_rows(source, rows);
		}

		std::vector<bool> used_experts(const FusedModel &model)
		{
			std::vector<bool> used(model.experts.size(), false);
			for (const GateConfig &g : model.gates)
				for (std::size_t j : g.subset)
					used[j] = true;
			return used;
		}

		/// Eval-mode representations of every used expert (empty tensors for unused ones).
		std::vector<nn::Tensor> representations(const FusedModel &model, const nn::Tensor &inputs)
		{
			const auto used = used_experts(model);
			std::vector<nn::Tensor> reps(model.experts.size());
			for (std::size_t j = 0; j < model.experts.size(); j++)
				if (used[j])
					reps[j] = expert::expert_representations(model.experts[j], inputs);
			return reps;
		}

		void check_tower(const Tower &t, std::size_t input_dim)
		{
			const auto expect = [&](const char *name, std::vector<std::size_t> dims)
			{
				if (!t.layers.contains(name) || t.layers.get(name).shape() != dims)
					throw ConfigError("tower '" + t.task_id + "' tensor '" + name + "' has the wrong shape");
			};
			if (!t.layers.contains("w1"))
				throw ConfigError("tower '" + t.task_id + "' has no w1");
			const std::size_t hidden = t.layers.get("w1").rows();
			expect("w1", { hidden, input_dim });
			expect("b1", { hidden });
			expect("w2", { t.labels.size(), hidden });
			expect("b2", { t.labels.size() });
			if (!(t.dropout_rate >= 0.0 && t.dropout_rate < 1.0))
				throw ConfigError("tower dropout must lie in [0,1)");
		}

		struct TaskColumns
		{
				std::vector<std::size_t> columns; ///< dataset task index per model task
		};

		TaskColumns map_tasks(const FusedModel &model, const expert::LabeledDataset &data)
		{
			TaskColumns out;
			for (const Tower &t : model.towers)
			{
				const auto idx = data.find_task(t.task_id);
				if (!idx)
					throw DataError("dataset has no labels for task '" + t.task_id + "'");
				if (data.label_map(*idx) != t.labels)
					throw DataError("dataset labels for task '" + t.task_id + "' differ from the tower's label map");
				out.columns.push_back(*idx);
			}
			if (data.feature_dim() != model.input_dim())
				throw DimensionError("dataset dimension " + std::to_string(data.feature_dim()) + " does not match model input " + std::to_string(model.input_dim()));
			return out;
		}

		/// Restores the frozen flag of expert encoders on scope exit.
		class FreezeGuard
		{
			public:
				FreezeGuard(FusedModel &model, bool unfreeze) :
						m_model(model)
				{
					for (auto &e : m_model.experts)
					{
						m_saved.push_back(e.encoder.frozen());
						if (unfreeze)
							e.encoder.set_frozen(false);
					}
				}
				~FreezeGuard()
				{
					for (std::size_t j = 0; j < m_model.experts.size(); j++)
						m_model.experts[j].encoder.set_frozen(m_saved[j]);
				}
				FreezeGuard(const FreezeGuard&) = delete;
				FreezeGuard& operator=(const FreezeGuard&) = delete;
			private:
				FusedModel &m_model;
				std::vector<bool> m_saved;
		};

		std::vector<TaskScore> score_block(const FusedModel &model, const nn::Tensor &inputs, const std::vector<nn::Tensor> *reps,
				const std::vector<std::vector<std::size_t>> &labels)
		{
			std::vector<TaskScore> out(model.task_count());
			const std::size_t rows = inputs.rows();
			for (std::size_t start = 0; start < rows; start += inference_chunk)
			{
				const std::size_t n = std::min(inference_chunk, rows - start);
				const nn::Tensor x = row_block(inputs, start, n);
				std::vector<nn::Tensor> block_reps;
				if (reps)
					for (const nn::Tensor &r : *reps)
						block_reps.push_back(r.size() ? row_block(r, start, n) : nn::Tensor());
				nn::Tape tape;
				nn::CounterStream stream(0);
				const auto logits = record_fused_logits(tape, model, x, reps ? &block_reps : nullptr, false, stream);
				for (std::size_t k = 0; k < logits.size(); k++)
				{
					const nn::Tensor &L = tape.value(logits[k]);
					for (std::size_t i = 0; i < n; i++)
					{
						const auto p = nn::softmax(L.row(i));
						const std::size_t y = labels[k][start + i];
						out[k].loss += nn::cross_entropy(p, y);
						out[k].accuracy += nn::argmax(p) == y ? 1.0 : 0.0;
					}
				}
			}
			for (TaskScore &s : out)
			{
				s.loss /= static_cast<double>(rows);
				s.accuracy /= static_cast<double>(rows);
			}
			return out;
		}
	}

	std::string_view gate_mode_name(GateMode m) noexcept
	{
		switch (m)
		{
			case GateMode::Default:
				return "default";
			case GateMode::TopK:
				return "topk";
			case GateMode::Trainable:
				return "trainable";
		}
		return "?";
	}

	GateMode parse_gate_mode(std::string_view name)
	{
		if (name == "default")
			return GateMode::Default;
		if (name == "topk")
			return GateMode::TopK;
		if (name == "trainable")
			return GateMode::Trainable;
		throw ConfigError("unknown gate mode '" + std::string(name) + "'");
	}

	GateConfig GateConfig::make_default(std::string task_id, std::size_t expert_count, std::size_t expert)
	{
		GateConfig g;
		g.task_id = std::move(task_id);
		g.mode = GateMode::Default;
		g.expert_count = expert_count;
		g.subset = { expert };
		check_subset(g.subset, expert_count);
		g.fixed_delta.assign(expert_count, 0.0);
		g.fixed_delta[expert] = 1.0;
		return g;
	}

	GateConfig GateConfig::make_topk(std::string task_id, std::size_t expert_count, std::vector<std::size_t> subset)
	{
		GateConfig g;
		g.task_id = std::move(task_id);
		g.mode = GateMode::TopK;
		g.expert_count = expert_count;
		g.subset = std::move(subset);
		check_subset(g.subset, expert_count);
		g.fixed_delta.assign(expert_count, 0.0);
		for (std::size_t j : g.subset)
			g.fixed_delta[j] = 1.0 / static_cast<double>(g.subset.size());
		return g;
	}

	GateConfig GateConfig::make_trainable(std::string task_id, std::size_t expert_count, std::vector<std::size_t> subset, std::size_t input_dim,
			std::string set_name)
	{
		GateConfig g;
		g.task_id = std::move(task_id);
		g.mode = GateMode::Trainable;
		g.expert_count = expert_count;
		g.subset = std::move(subset);
		check_subset(g.subset, expert_count);
		g.gate_linear = nn::ParamSet(std::move(set_name));
		g.gate_linear.add("w", nn::Tensor::matrix(g.subset.size(), input_dim));
		g.gate_linear.add("b", nn::Tensor( { g.subset.size() }));
		return g;
	}

	void GateConfig::validate(std::size_t experts, std::size_t input_dim) const
	{
		if (expert_count != experts)
			throw ConfigError("gate '" + task_id + "' was built for " + std::to_string(expert_count) + " experts, model has " + std::to_string(experts));
		check_subset(subset, experts);
		if (mode == GateMode::Trainable)
		{
			if (!gate_linear.contains("w") || gate_linear.get("w").shape() != std::vector<std::size_t> { subset.size(), input_dim } || !gate_linear.contains("b")
					|| gate_linear.get("b").shape() != std::vector<std::size_t> { subset.size() })
				throw ConfigError("trainable gate '" + task_id + "' has a malformed linear layer");
			return;
		}
		if (fixed_delta.size() != experts)
			throw ConfigError("gate '" + task_id + "' delta has the wrong length");
		if (mode == GateMode::Default && subset.size() != 1)
			throw ConfigError("default gate '" + task_id + "' must select exactly one expert");
		const double expected = 1.0 / static_cast<double>(subset.size());
		for (std::size_t j = 0; j < experts; j++)
		{
			const bool in_subset = std::binary_search(subset.begin(), subset.end(), j);
			if (fixed_delta[j] != (in_subset ? expected : 0.0))
				throw ConfigError("gate '" + task_id + "' delta breaks the " + std::string(gate_mode_name(mode)) + " contract");
		}
	}

	std::vector<double> GateConfig::weights(std::span<const double> x) const
	{
		if (mode != GateMode::Trainable)
			return fixed_delta;
		const auto logits = nn::linear_forward(gate_linear.get("w"), gate_linear.get("b"), x);
		const auto p = nn::softmax(logits);
		std::vector<double> delta(expert_count, 0.0);
		for (std::size_t i = 0; i < subset.size(); i++)
			delta[subset[i]] = p[i];
		return delta;
	}

	std::string_view fusion_mode_name(FusionMode m) noexcept
	{
		switch (m)
		{
			case FusionMode::Independent:
				return "I";
			case FusionMode::Expansion:
				return "II";
			case FusionMode::Refinement:
				return "III";
		}
		return "?";
	}

	FusionMode parse_fusion_mode(std::string_view name)
	{
		if (name == "I" || name == "independent")
			return FusionMode::Independent;
		if (name == "II" || name == "expansion")
			return FusionMode::Expansion;
		if (name == "III" || name == "refinement")
			return FusionMode::Refinement;
		throw ConfigError("unknown fusion mode '" + std::string(name) + "' (expected I, II or III)");
	}

	TaskRelation TaskRelation::independent(std::vector<std::size_t> experts, const std::vector<expert::ExpertModel> &pool)
	{
		TaskRelation r;
		r.mode = FusionMode::Independent;
		r.experts = std::move(experts);
		for (std::size_t j : r.experts)
			r.task_ids.push_back(pool_expert(pool, j).task_id);
		return r;
	}

	TaskRelation TaskRelation::expansion(std::string task_id, std::vector<std::size_t> experts, const std::vector<expert::ExpertModel> &pool)
	{
		TaskRelation r;
		r.mode = FusionMode::Expansion;
		r.experts = std::move(experts);
		r.task_ids = { std::move(task_id) };
		std::vector<std::string> names;
		for (std::size_t j : r.experts)
			for (const auto &n : pool_expert(pool, j).label_map.names())
				if (std::find(names.begin(), names.end(), n) == names.end())
					names.push_back(n);
		r.union_labels = expert::LabelMap(names);
		for (std::size_t j : r.experts)
		{
			std::vector<std::size_t> map;
			for (const auto &n : pool[j].label_map.names())
				map.push_back(r.union_labels.index_of(n));
			r.source_maps.push_back(std::move(map));
		}
		return r;
	}

	TaskRelation TaskRelation::refinement(std::string coarse_task, expert::LabelMap coarse, std::string fine_task, expert::LabelMap fine,
			std::vector<std::size_t> parent, std::vector<std::size_t> experts)
	{
		TaskRelation r;
		r.mode = FusionMode::Refinement;
		r.experts = std::move(experts);
		r.task_ids = { std::move(coarse_task), std::move(fine_task) };
		r.coarse_labels = std::move(coarse);
		r.fine_labels = std::move(fine);
		r.parent = std::move(parent);
		return r;
	}

	void TaskRelation::validate(const std::vector<expert::ExpertModel> &pool) const
	{
		if (experts.empty())
			throw ConfigError("relation references no experts");
		std::set<std::size_t> seen;
		for (std::size_t j : experts)
		{
			if (j >= pool.size())
				throw ConfigError("relation references expert " + std::to_string(j) + " of " + std::to_string(pool.size()));
			if (!seen.insert(j).second)
				throw ConfigError("an expert appears twice in one relation");
		}
		switch (mode)
		{
			case FusionMode::Independent:
				if (task_ids.size() != experts.size())
					throw ConfigError("mode I needs one task per expert");
				break;
			case FusionMode::Expansion:
			{
				if (task_ids.size() != 1)
					throw ConfigError("mode II fuses into exactly one task");
				if (source_maps.size() != experts.size())
					throw ConfigError("inconsistent union map: one source map per expert required");
				std::vector<bool> covered(union_labels.size(), false);
				for (std::size_t i = 0; i < experts.size(); i++)
				{
					const auto &map = source_maps[i];
					if (map.size() != pool[experts[i]].n_target())
						throw ConfigError("inconsistent union map: expert '" + pool[experts[i]].id + "' has " + std::to_string(pool[experts[i]].n_target())
								+ " labels but the map covers " + std::to_string(map.size()));
					std::set<std::size_t> targets;
					for (std::size_t v : map)
					{
						if (v >= union_labels.size())
							throw ConfigError("inconsistent union map: target outside the union label set");
						if (!targets.insert(v).second)
							throw ConfigError("inconsistent union map: two labels of expert '" + pool[experts[i]].id + "' merge into '" + union_labels.name(v) + "'");
						covered[v] = true;
					}
				}
				if (std::find(covered.begin(), covered.end(), false) != covered.end())
					throw ConfigError("inconsistent union map: a union label has no source");
				if (union_labels.size() < 2)
					throw ConfigError("mode II union needs at least two labels");
				break;
			}
			case FusionMode::Refinement:
			{
				if (task_ids.size() != 2 || task_ids[0] == task_ids[1])
					throw ConfigError("mode III needs distinct coarse and fine tasks");
				if (coarse_labels.size() < 2 || fine_labels.size() < 2)
					throw ConfigError("non-nested label maps: coarse and fine tasks need at least two labels");
				if (parent.size() != fine_labels.size())
					throw ConfigError("non-nested label maps: every fine label needs a coarse parent");
				std::vector<bool> has_child(coarse_labels.size(), false);
				for (std::size_t p : parent)
				{
					if (p >= coarse_labels.size())
						throw ConfigError("non-nested label maps: parent outside the coarse label set");
					has_child[p] = true;
				}
				if (std::find(has_child.begin(), has_child.end(), false) != has_child.end())
					throw ConfigError("non-nested label maps: a coarse label has no fine label");
				break;
			}
		}
	}

	std::size_t FusedModel::input_dim() const
	{
		if (experts.empty())
			throw ConfigError("fused model has no experts");
		return experts.front().input_dim();
	}

	std::vector<std::string> FusedModel::task_ids() const
	{
		std::vector<std::string> out;
		for (const Tower &t : towers)
			out.push_back(t.task_id);
		return out;
	}

	std::size_t FusedModel::task_index(std::string_view task_id) const
	{
		for (std::size_t k = 0; k < towers.size(); k++)
			if (towers[k].task_id == task_id)
				return k;
		throw ConfigError("fused model has no task '" + std::string(task_id) + "'");
	}

	void FusedModel::validate() const
	{
		const std::size_t dim = input_dim();
		for (const auto &e : experts)
		{
			e.validate();
			if (e.input_dim() != dim)
				throw DimensionError("experts disagree on input dimension");
			if (!e.frozen())
				throw ConfigError("fused experts must be locked");
		}
		if (gates.size() != towers.size() || loss_weights.size() != towers.size() || towers.empty())
			throw ConfigError("fused model needs one gate, tower and loss weight per task");
		std::set<std::string> ids;
		for (std::size_t k = 0; k < towers.size(); k++)
		{
			if (gates[k].task_id != towers[k].task_id)
				throw ConfigError("gate and tower " + std::to_string(k) + " serve different tasks");
			if (!ids.insert(towers[k].task_id).second)
				throw ConfigError("duplicate task '" + towers[k].task_id + "'");
			gates[k].validate(experts.size(), dim);
			check_tower(towers[k], dim);
			if (!(loss_weights[k] >= 0.0) || !std::isfinite(loss_weights[k]))
				throw ConfigError("loss weights must be finite and non-negative");
		}
		for (const auto &r : relations)
			r.validate(experts);
	}

	FusedModel configure_fusion(std::vector<expert::ExpertModel> experts, std::vector<TaskRelation> relations, const FusionOptions &options)
	{
		if (experts.empty())
			throw ConfigError("fusion needs at least one expert");
		if (relations.empty())
			throw ConfigError("fusion needs at least one task relation");
		FusedModel model;
		model.experts = std::move(experts);
		const std::size_t n = model.experts.size(), dim = model.experts.front().input_dim();
		for (std::size_t j = 0; j < n; j++)
		{
			auto &e = model.experts[j];
			if (e.input_dim() != dim)
				throw DimensionError("experts disagree on input dimension");
			e.encoder.rename("expert" + std::to_string(j) + ".encoder");
			e.head.rename("expert" + std::to_string(j) + ".head");
			e.set_frozen(true);
		}

		const auto add_task = [&](const std::string &task, const expert::LabelMap &labels, GateConfig gate)
		{
			const std::size_t k = model.towers.size();
			Tower t;
			t.task_id = task;
			t.labels = labels;
			t.dropout_rate = options.tower_dropout;
			t.layers = nn::make_dense_head_params("tower." + task, dim, options.tower_hidden, labels.size(), nn::derive_seed(options.seed, 0x746f77ULL + k));
			model.towers.push_back(std::move(t));
			model.gates.push_back(std::move(gate));
			model.loss_weights.push_back(1.0);
		};

		for (TaskRelation &r : relations)
		{
			r.validate(model.experts);
			switch (r.mode)
			{
				case FusionMode::Independent:
					for (std::size_t i = 0; i < r.experts.size(); i++)
						add_task(r.task_ids[i], model.experts[r.experts[i]].label_map, GateConfig::make_default(r.task_ids[i], n, r.experts[i]));
					break;
				case FusionMode::Expansion:
					add_task(r.task_ids[0], r.union_labels, GateConfig::make_topk(r.task_ids[0], n, sorted_unique(r.experts)));
					break;
				case FusionMode::Refinement:
					add_task(r.task_ids[0], r.coarse_labels,
							GateConfig::make_trainable(r.task_ids[0], n, sorted_unique(r.experts), dim, "gate." + r.task_ids[0]));
					add_task(r.task_ids[1], r.fine_labels, GateConfig::make_trainable(r.task_ids[1], n, sorted_unique(r.experts), dim, "gate." + r.task_ids[1]));
					break;
			}
		}
		model.relations = std::move(relations);
		for (const auto &[task, weight] : options.loss_weights)
			model.loss_weights.at(model.task_index(task)) = weight;
		model.validate();
		return model;
	}

	nn::Tensor concat_representations(std::span<const expert::ExpertModel> experts, std::span<const double> x)
	{
		if (experts.empty())
			throw ConfigError("no experts to stack");
		const std::size_t d = experts.front().input_dim();
		nn::Tensor out = nn::Tensor::matrix(experts.size(), d);
		for (std::size_t j = 0; j < experts.size(); j++)
		{
			if (experts[j].input_dim() != d)
				throw DimensionError("experts disagree on representation size");
			const auto r = expert::expert_representation(experts[j], x);
			std::copy(r.begin(), r.end(), out.ptr() + j * d);
		}
		return out;
	}

	std::vector<double> gate_output(const GateConfig &gate, const nn::Tensor &stacked, std::span<const double> x)
	{
		if (gate.subset.empty())
			throw ConfigError("gate expert subset S is empty");
		if (stacked.rank() != 2 || stacked.rows() != gate.expert_count)
			throw DimensionError("gate over " + std::to_string(gate.expert_count) + " experts got " + nn::shape_to_string(stacked.shape()));
		const auto delta = gate.weights(x);
		std::vector<double> out(stacked.cols(), 0.0);
		for (std::size_t j : gate.subset)
		{
			const auto row = stacked.row(j);
			for (std::size_t i = 0; i < out.size(); i++)
				out[i] += delta[j] * row[i];
		}
		return out;
	}

	std::vector<double> tower_forward(const Tower &tower, std::span<const double> gated, bool train_mode, std::uint64_t seed)
	{
		const std::size_t in = tower.layers.get("w1").cols();
		if (gated.size() != in)
			throw DimensionError("tower '" + tower.task_id + "' expects " + std::to_string(in) + " inputs, got " + std::to_string(gated.size()));
		nn::Tape tape;
		nn::CounterStream stream(seed);
		const nn::Var x = tape.constant(nn::Tensor( { 1, in }, std::vector<double>(gated.begin(), gated.end())));
		const nn::Var logits = nn::dense_head_forward(tape, tower.layers, x, train_mode, stream, tower.dropout_rate);
		return nn::softmax(tape.value(logits).data());
	}

	std::vector<nn::Var> record_fused_logits(nn::Tape &tape, const FusedModel &model, const nn::Tensor &inputs, const std::vector<nn::Tensor> *reps,
			bool train_mode, nn::CounterStream &dropout)
	{
		const std::size_t rows = inputs.rows();
		if (inputs.rank() != 2 || inputs.cols() != model.input_dim())
			throw DimensionError("fused model expects [batch x " + std::to_string(model.input_dim()) + "], got " + nn::shape_to_string(inputs.shape()));
		if (reps && reps->size() != model.experts.size())
			throw DimensionError("one representation block per expert required");
		const nn::Var x = tape.constant(inputs);
		std::vector<std::optional<nn::Var>> rep(model.experts.size());
		const auto representation = [&](std::size_t j)
		{
			if (!rep[j])
			{
				if (reps)
				{
					const nn::Tensor &r = (*reps)[j];
					if (r.rank() != 2 || r.rows() != rows || r.cols() != model.experts[j].input_dim())
						throw DimensionError("cached representation block has the wrong shape");
					rep[j] = tape.constant(r);
				}
				else
				{
					// experts run in eval mode inside the fusion, also when unfrozen
					nn::CounterStream unused(0);
					rep[j] = nn::encoder_forward(tape, model.experts[j].encoder, model.experts[j].shape, x, false, unused, 0.0);
				}
			}
			return *rep[j];
		};

		std::vector<nn::Var> logits;
		for (std::size_t k = 0; k < model.task_count(); k++)
		{
			const GateConfig &gate = model.gates[k];
			std::vector<nn::Var> inputs_s;
			for (std::size_t j : gate.subset)
				inputs_s.push_back(representation(j));
			nn::Var weights;
			if (gate.mode == GateMode::Trainable)
				weights = nn::ops::softmax(nn::ops::linear(x, tape.parameter(gate.gate_linear, "w"), tape.parameter(gate.gate_linear, "b")));
			else
			{
				nn::Tensor w = nn::Tensor::matrix(rows, gate.subset.size());
				for (std::size_t r = 0; r < rows; r++)
					for (std::size_t i = 0; i < gate.subset.size(); i++)
						w.at(r, i) = gate.fixed_delta[gate.subset[i]];
				weights = tape.constant(std::move(w));
			}
			const nn::Var gated = nn::ops::mix(inputs_s, weights);
			logits.push_back(nn::dense_head_forward(tape, model.towers[k].layers, gated, train_mode, dropout, model.towers[k].dropout_rate));
		}
		return logits;
	}

	nn::TrainConfig default_finetune_config(FusionMode mode)
	{
		nn::TrainConfig cfg;
		cfg.batch_size = 128;
		cfg.dropout_rate = 0.2;
		switch (mode)
		{
			case FusionMode::Independent:
				cfg.learning_rate = 1e-4;
				cfg.epochs = 5;
				break;
			case FusionMode::Expansion:
				cfg.learning_rate = 1e-3;
				cfg.epochs = 10;
				break;
			case FusionMode::Refinement:
				cfg.learning_rate = 1e-3;
				cfg.epochs = 10;
				break;
		}
		return cfg;
	}

	std::vector<FineTuneEpoch> fine_tune(FusedModel &model, const expert::LabeledDataset &train, const expert::LabeledDataset *validation,
			const nn::TrainConfig &cfg, const FineTuneOptions &options)
	{
		cfg.validate();
		model.validate();
		if (train.empty())
			throw DataError("fine-tune set is empty");
		const TaskColumns cols = map_tasks(model, train);
		std::optional<TaskColumns> val_cols;
		if (validation && !validation->empty())
			val_cols = map_tasks(model, *validation);

		const std::size_t K = model.task_count();
		std::vector<std::vector<std::size_t>> labels(K), val_labels(K);
		for (std::size_t k = 0; k < K; k++)
		{
			labels[k] = train.labels(cols.columns[k]);
			if (val_cols)
				val_labels[k] = validation->labels(val_cols->columns[k]);
		}
		const nn::Tensor features = train.features();
		const nn::Tensor val_features = val_cols ? validation->features() : nn::Tensor();

		FreezeGuard guard(model, options.unfreeze_experts);
		std::vector<nn::Tensor> cached, val_cached;
		if (!options.unfreeze_experts)
		{
			cached = representations(model, features);
			if (val_cols)
				val_cached = representations(model, val_features);
		}

		std::vector<nn::ParamSet*> sets;
		for (Tower &t : model.towers)
			sets.push_back(&t.layers);
		for (GateConfig &g : model.gates)
			if (g.mode == GateMode::Trainable)
				sets.push_back(&g.gate_linear);
		if (options.unfreeze_experts)
			for (auto &e : model.experts)
				sets.push_back(&e.encoder);

		nn::AdamState adam;
		std::vector<std::size_t> order(train.size());
		std::iota(order.begin(), order.end(), 0);
		std::vector<FineTuneEpoch> trace;
		for (std::size_t epoch = 1; epoch <= cfg.epochs; epoch++)
		{
			nn::CounterStream shuffler(nn::derive_seed(cfg.seed, 0x4654000000ULL + epoch));
			nn::shuffle(std::span<std::size_t>(order), shuffler);
			FineTuneEpoch stats;
			stats.epoch = epoch;
			stats.train_task_loss.assign(K, 0.0);
			std::size_t batches = 0;
			for (std::size_t start = 0; start < order.size(); start += cfg.batch_size)
			{
				const std::size_t n = std::min(cfg.batch_size, order.size() - start);
				const std::span<const std::size_t> rows(order.data() + start, n);
				const nn::Tensor x = gather_rows(features, rows);
				std::vector<nn::Tensor> batch_reps;
				if (!options.unfreeze_experts)
					for (const nn::Tensor &r : cached)
						batch_reps.push_back(r.size() ? gather_rows(r, rows) : nn::Tensor());

				nn::Tape tape;
				nn::CounterStream dropout(nn::derive_seed(cfg.seed, (epoch << 32) + batches));
				const auto logits = record_fused_logits(tape, model, x, options.unfreeze_experts ? nullptr : &batch_reps, true, dropout);
				std::vector<nn::Var> losses;
				for (std::size_t k = 0; k < K; k++)
				{
					std::vector<std::size_t> y(n);
					for (std::size_t i = 0; i < n; i++)
						y[i] = labels[k][rows[i]];
					losses.push_back(nn::ops::softmax_cross_entropy(logits[k], y));
					stats.train_task_loss[k] += tape.value(losses.back())[0];
				}
				const nn::Var total = nn::ops::weighted_sum(losses, model.loss_weights);
				const double value = tape.value(total)[0];
				if (!std::isfinite(value))
					throw Error("fine-tune loss became non-finite at epoch " + std::to_string(epoch));
				stats.train_loss += value;
				nn::adam_step(sets, tape.backward(total), adam, cfg.learning_rate);
				batches++;
			}
			stats.train_loss /= static_cast<double>(batches);
			for (double &l : stats.train_task_loss)
				l /= static_cast<double>(batches);
			stats.val_loss = std::numeric_limits<double>::quiet_NaN();
			if (val_cols)
			{
				const auto scores = score_block(model, val_features, options.unfreeze_experts ? nullptr : &val_cached, val_labels);
				stats.val_loss = 0.0;
				for (std::size_t k = 0; k < K; k++)
				{
					stats.val_task_loss.push_back(scores[k].loss);
					stats.val_accuracy.push_back(scores[k].accuracy);
					stats.val_loss += model.loss_weights[k] * scores[k].loss;
				}
			}
			trace.push_back(stats);
			if (options.on_epoch)
				options.on_epoch(stats);
		}
		return trace;
	}

	std::vector<nn::Tensor> fused_probabilities(const FusedModel &model, const nn::Tensor &inputs)
	{
		if (inputs.rank() != 2 || inputs.cols() != model.input_dim())
			throw DimensionError("fused model expects [batch x " + std::to_string(model.input_dim()) + "], got " + nn::shape_to_string(inputs.shape()));
		std::vector<nn::Tensor> out;
		for (const Tower &t : model.towers)
			out.push_back(nn::Tensor::matrix(inputs.rows(), t.labels.size()));
		for (std::size_t start = 0; start < inputs.rows(); start += inference_chunk)
		{
			const std::size_t n = std::min(inference_chunk, inputs.rows() - start);
			const nn::Tensor x = row_block(inputs, start, n);
			const auto reps = representations(model, x);
			nn::Tape tape;
			nn::CounterStream stream(0);
			const auto logits = record_fused_logits(tape, model, x, &reps, false, stream);
			for (std::size_t k = 0; k < logits.size(); k++)
			{
				const nn::Tensor &L = tape.value(logits[k]);
				for (std::size_t i = 0; i < n; i++)
				{
					const auto p = nn::softmax(L.row(i));
					std::copy(p.begin(), p.end(), out[k].ptr() + (start + i) * out[k].cols());
				}
			}
		}
		return out;
	}

	std::vector<Classification> classify_batch(const FusedModel &model, const nn::Tensor &inputs)
	{
		const auto probs = fused_probabilities(model, inputs);
		std::vector<Classification> out(inputs.rows());
		for (std::size_t i = 0; i < out.size(); i++)
			for (const nn::Tensor &P : probs)
			{
				out[i].labels.push_back(nn::argmax(P.row(i)));
				out[i].confidences.emplace_back(P.row(i).begin(), P.row(i).end());
			}
		return out;
	}

	Classification classify(const FusedModel &model, std::span<const double> x)
	{
		if (x.size() != model.input_dim())
			throw DimensionError("fused model expects " + std::to_string(model.input_dim()) + " features, got " + std::to_string(x.size()));
		return classify_batch(model, nn::Tensor( { 1, x.size() }, std::vector<double>(x.begin(), x.end()))).front();
	}

	std::vector<TaskScore> fused_scores(const FusedModel &model, const expert::LabeledDataset &data)
	{
		if (data.empty())
			throw DataError("empty evaluation set");
		const TaskColumns cols = map_tasks(model, data);
		std::vector<std::vector<std::size_t>> labels;
		for (std::size_t c : cols.columns)
			labels.push_back(data.labels(c));
		const nn::Tensor x = data.features();
		const auto reps = representations(model, x);
		return score_block(model, x, &reps, labels);
	}
}
