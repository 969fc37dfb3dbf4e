#pragma once

#include <snake/expert/dataset.hpp>
#include <snake/io/container.hpp>
#include <snake/nn/encoder.hpp>
#include <snake/nn/optim.hpp>
#include <snake/nn/params.hpp>

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace snake::expert
{
	inline constexpr std::size_t default_hidden = 256;

	/// Transformer encoder (shared into fusion) plus a private dense head.
	struct ExpertModel
	{
			std::string id;
			std::string task_id;
			nn::EncoderShape shape;
			std::size_t hidden = default_hidden;
			nn::ParamSet encoder;
			nn::ParamSet head;
			LabelMap label_map;

			std::size_t input_dim() const noexcept
			{
				return shape.input_dim();
			}
			std::size_t n_target() const noexcept
			{
				return label_map.size();
			}
			bool frozen() const noexcept
			{
				return encoder.frozen() && head.frozen();
			}
			void set_frozen(bool f) noexcept
			{
				encoder.set_frozen(f);
				head.set_frozen(f);
			}
			/// Throws unless the parameter layout matches shape, hidden and label count.
			void validate() const;

			friend bool operator==(const ExpertModel&, const ExpertModel&) = default;
	};

	/// Freshly initialized expert for `labels`.
	ExpertModel make_expert(std::string id, std::string task_id, LabelMap labels, std::uint64_t seed, const nn::EncoderShape &shape = { },
			std::size_t hidden = default_hidden);

	struct EpochStats
	{
			std::size_t epoch = 0; ///< 1-based
			double train_loss = 0.0; ///< mean minibatch loss in train mode
			double val_loss = 0.0; ///< eval-mode loss on the validation set (NaN when none)
			double val_accuracy = 0.0;
	};

	struct TrainResult
	{
			ExpertModel model;
			std::vector<EpochStats> trace;
	};

	struct ExpertOptions
	{
			std::string id = "expert";
			nn::EncoderShape shape;
			std::size_t hidden = default_hidden;
			/// Called after every epoch; optional.
			std::function<void(const EpochStats&)> on_epoch;
	};

	/// Trains encoder and head with cross-entropy and Adam on a single-task dataset.
	/// Throws DataError("degenerate task") when the training set holds fewer than
	/// two classes.
	TrainResult train_expert(const LabeledDataset &train, const LabeledDataset *validation, const nn::TrainConfig &cfg, const ExpertOptions &options = { });

	/// Eval-mode encoder output f_j(x).
	std::vector<double> expert_representation(const ExpertModel &model, std::span<const double> x);
	/// Eval-mode encoder output for every row of `inputs` [batch x input_dim].
	nn::Tensor expert_representations(const ExpertModel &model, const nn::Tensor &inputs);

	/// Class probabilities; `hidden_out` receives the encoder activation of this pass.
	std::vector<double> expert_predict(const ExpertModel &model, std::span<const double> x, std::vector<double> *hidden_out = nullptr);
	/// Row-wise class probabilities [batch x n_target].
	nn::Tensor expert_predict_batch(const ExpertModel &model, const nn::Tensor &inputs);

	/// Mean cross-entropy and accuracy of an expert on a single-task dataset.
	std::pair<double, double> expert_loss_accuracy(const ExpertModel &model, const LabeledDataset &data);

	/// Header fields and tensors of one expert inside a container; shared with the
	/// fused-model format, which embeds experts by value.
	nlohmann::json expert_header(const ExpertModel &model);
	void add_expert_tensors(io::Container &c, const std::string &prefix, const ExpertModel &model);
	ExpertModel expert_from_container(const io::Container &c, const nlohmann::json &header, const std::string &prefix);

	void save_expert(const ExpertModel &model, const std::filesystem::path &path);
	ExpertModel load_expert(const std::filesystem::path &path);

	void write_loss_trace_csv(const std::filesystem::path &path, const std::vector<EpochStats> &trace);
}
