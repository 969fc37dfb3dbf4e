#pragma once

#include <snake/expert/expert.hpp>
#include <snake/nn/optim.hpp>
#include <snake/nn/params.hpp>
#include <snake/nn/tape.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace snake::fusion
{
	enum class GateMode
	{
		Default,
		TopK,
		Trainable
	};
	std::string_view gate_mode_name(GateMode m) noexcept;
	GateMode parse_gate_mode(std::string_view name);

	/// Per-task mixing vector over the expert pool.
	struct GateConfig
	{
			std::string task_id;
			GateMode mode = GateMode::Default;
			std::size_t expert_count = 0; ///< n, size of the pool
			std::vector<std::size_t> subset; ///< S, ascending
			std::vector<double> fixed_delta; ///< length n; Default and TopK only
			nn::ParamSet gate_linear; ///< Trainable only: w [|S| x input], b [|S|]

			/// One-hot on `expert`.
			static GateConfig make_default(std::string task_id, std::size_t expert_count, std::size_t expert);
			/// 1/|S| on S.
			static GateConfig make_topk(std::string task_id, std::size_t expert_count, std::vector<std::size_t> subset);
			/// softmax(W x + b) on S; W and b start at zero, so the first pass is uniform on S.
			static GateConfig make_trainable(std::string task_id, std::size_t expert_count, std::vector<std::size_t> subset, std::size_t input_dim,
					std::string set_name);

			/// Throws ConfigError for an empty or out-of-range S or a broken simplex.
			void validate(std::size_t experts, std::size_t input_dim) const;
			/// delta over all n experts for input x.
			std::vector<double> weights(std::span<const double> x) const;

			friend bool operator==(const GateConfig&, const GateConfig&) = default;
	};

	struct Tower
	{
			std::string task_id;
			expert::LabelMap labels;
			nn::ParamSet layers; ///< w1 [hidden x input], b1, w2 [classes x hidden], b2
			double dropout_rate = 0.2;

			friend bool operator==(const Tower&, const Tower&) = default;
	};

	enum class FusionMode
	{
		Independent, ///< Mode I
		Expansion, ///< Mode II
		Refinement ///< Mode III
	};
	std::string_view fusion_mode_name(FusionMode m) noexcept;
	/// Accepts "I", "II", "III" and the long names.
	FusionMode parse_fusion_mode(std::string_view name);

	/// Declared relation between the experts of one fusion.
	struct TaskRelation
	{
			FusionMode mode = FusionMode::Independent;
			std::vector<std::size_t> experts;
			/// Mode I: one task per expert; Mode II: the union task; Mode III: {coarse, fine}.
			std::vector<std::string> task_ids;
			/// Mode II: union label set and, per expert, expert label index -> union index.
			expert::LabelMap union_labels;
			std::vector<std::vector<std::size_t>> source_maps;
			/// Mode III: coarse and fine label sets and fine index -> coarse index.
			expert::LabelMap coarse_labels;
			expert::LabelMap fine_labels;
			std::vector<std::size_t> parent;

			/// Mode I over `experts`, tasks named after each expert's task.
			static TaskRelation independent(std::vector<std::size_t> experts, const std::vector<expert::ExpertModel> &pool);
			/// Mode II; the union keeps first-seen order and merges equal label names.
			static TaskRelation expansion(std::string task_id, std::vector<std::size_t> experts, const std::vector<expert::ExpertModel> &pool);
			static TaskRelation refinement(std::string coarse_task, expert::LabelMap coarse, std::string fine_task, expert::LabelMap fine,
					std::vector<std::size_t> parent, std::vector<std::size_t> experts);

			/// Throws ConfigError ("inconsistent union map", "non-nested label maps", ...).
			void validate(const std::vector<expert::ExpertModel> &pool) const;

			friend bool operator==(const TaskRelation&, const TaskRelation&) = default;
	};

	struct FusedModel
	{
			std::vector<expert::ExpertModel> experts;
			std::vector<GateConfig> gates; ///< gates[k] and towers[k] serve task k
			std::vector<Tower> towers;
			std::vector<TaskRelation> relations;
			std::vector<double> loss_weights; ///< alpha_k

			std::size_t task_count() const noexcept
			{
				return towers.size();
			}
			std::size_t input_dim() const;
			std::vector<std::string> task_ids() const;
			std::size_t task_index(std::string_view task_id) const;
			void validate() const;

			friend bool operator==(const FusedModel&, const FusedModel&) = default;
	};

	struct FusionOptions
	{
			std::uint64_t seed = 0;
			std::size_t tower_hidden = 256;
			double tower_dropout = 0.2;
			/// alpha_k by task id; tasks not listed get 1.
			std::vector<std::pair<std::string, double>> loss_weights;
	};

	/// Builds gates and fresh towers for the declared relations and locks the experts.
	FusedModel configure_fusion(std::vector<expert::ExpertModel> experts, std::vector<TaskRelation> relations, const FusionOptions &options = { });

	/// Row j = expert_representation(experts[j], x).
	nn::Tensor concat_representations(std::span<const expert::ExpertModel> experts, std::span<const double> x);
	/// sum_j delta_j * stacked[j].
	std::vector<double> gate_output(const GateConfig &gate, const nn::Tensor &stacked, std::span<const double> x);
	/// Class probabilities of one tower; `seed` drives dropout in train mode.
	std::vector<double> tower_forward(const Tower &tower, std::span<const double> gated, bool train_mode = false, std::uint64_t seed = 0);

	/// Records the fused forward on `tape` for a [batch x input] block and returns one
	/// logits Var per task. `representations`, when given, holds each expert's eval-mode
	/// output for the same rows and replaces the encoder passes.
	std::vector<nn::Var> record_fused_logits(nn::Tape &tape, const FusedModel &model, const nn::Tensor &inputs, const std::vector<nn::Tensor> *representations,
			bool train_mode, nn::CounterStream &dropout);

	struct FineTuneEpoch
	{
			std::size_t epoch = 0;
			double train_loss = 0.0; ///< mean minibatch L_total
			std::vector<double> train_task_loss;
			double val_loss = 0.0; ///< NaN without validation data
			std::vector<double> val_task_loss;
			std::vector<double> val_accuracy;
	};

	struct FineTuneOptions
	{
			bool unfreeze_experts = false;
			std::function<void(const FineTuneEpoch&)> on_epoch;
	};

	/// Mode defaults: I lr 1e-4 / batch 128 / 5 epochs; II lr 1e-3 / 128 / 10;
	/// III lr 1e-3 / 128 / 10. Dropout 0.2 throughout.
	nn::TrainConfig default_finetune_config(FusionMode mode);

	/// Minimizes L_total = sum_k alpha_k L_k over towers and trainable gates; experts
	/// stay bit-identical unless `unfreeze_experts`. Throws DataError before any update
	/// when `train` lacks a task or uses different label maps.
	std::vector<FineTuneEpoch> fine_tune(FusedModel &model, const expert::LabeledDataset &train, const expert::LabeledDataset *validation,
			const nn::TrainConfig &cfg, const FineTuneOptions &options = { });

	struct Classification
	{
			std::vector<std::size_t> labels; ///< argmax per task, lowest index on ties
			std::vector<std::vector<double>> confidences;
	};

	Classification classify(const FusedModel &model, std::span<const double> x);
	std::vector<Classification> classify_batch(const FusedModel &model, const nn::Tensor &inputs);
	/// Per-task probability matrices [batch x classes].
	std::vector<nn::Tensor> fused_probabilities(const FusedModel &model, const nn::Tensor &inputs);

	struct TaskScore
	{
			double loss = 0.0;
			double accuracy = 0.0;
	};
	/// Eval-mode loss and accuracy per model task on `data`.
	std::vector<TaskScore> fused_scores(const FusedModel &model, const expert::LabeledDataset &data);

	void save_fused(const FusedModel &model, const std::filesystem::path &path);
	FusedModel load_fused(const std::filesystem::path &path);
}
