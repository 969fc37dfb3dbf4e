#pragma once

#include <snake/expert/dataset.hpp>
#include <snake/expert/expert.hpp>
#include <snake/fusion/fusion.hpp>

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace snake::eval
{
	struct SplitRatios
	{
			double train = 0.75;
			double validation = 0.10;
			double test = 0.15;

			void validate() const;
	};

	struct Split
	{
			expert::LabeledDataset train;
			expert::LabeledDataset validation;
			expert::LabeledDataset test;
			std::vector<std::string> warnings; ///< one per class that fell back to an unstratified draw
	};

	/// Disjoint, exhaustive, shuffled split. Totals are round(N*train), round(N*val)
	/// and the remainder; within those cuts every class (label tuple over all tasks)
	/// is spread proportionally. Classes with fewer than 3 samples are placed at random.
	Split split_dataset(const expert::LabeledDataset &data, const SplitRatios &ratios, std::uint64_t seed);
	/// Index form of split_dataset: {train, validation, test} sample indices.
	std::array<std::vector<std::size_t>, 3> split_indices(const expert::LabeledDataset &data, const SplitRatios &ratios, std::uint64_t seed,
			std::vector<std::string> *warnings = nullptr);

	struct Metrics
	{
			double accuracy = 0.0;
			double macro_precision = 0.0;
			double macro_recall = 0.0;
			double macro_f1 = 0.0;
			std::vector<std::vector<std::size_t>> confusion; ///< [truth][prediction]
			std::vector<bool> included; ///< classes present in truth or predictions
			std::size_t total = 0;
	};

	/// Macro averages skip classes absent from both truth and predictions.
	Metrics compute_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> predicted, std::size_t classes);

	/// Throws DataError for an empty test set.
	Metrics evaluate(const expert::ExpertModel &model, const expert::LabeledDataset &test);
	Metrics evaluate(const fusion::FusedModel &model, const expert::LabeledDataset &test, const std::string &task_id);

	/// Per-sample argmax predictions of a fused model for one task.
	std::vector<std::size_t> fused_predictions(const fusion::FusedModel &model, const expert::LabeledDataset &data, const std::string &task_id);

	void write_metrics_csv(const std::filesystem::path &path, const std::vector<std::pair<std::string, Metrics>> &rows);
	void write_confusion_csv(const std::filesystem::path &path, const Metrics &m, const expert::LabelMap &labels);
}
