#pragma once

#include <snake/nn/tensor.hpp>

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace snake::expert
{
	/// Ordered class names of one task; a label index is a position in this list.
	class LabelMap
	{
		public:
			LabelMap() = default;
			explicit LabelMap(std::vector<std::string> names);

			std::size_t size() const noexcept
			{
				return m_names.size();
			}
			const std::string& name(std::size_t index) const;
			std::optional<std::size_t> find(std::string_view name) const noexcept;
			/// Throws DataError for an unknown name.
			std::size_t index_of(std::string_view name) const;
			const std::vector<std::string>& names() const noexcept
			{
				return m_names;
			}

			friend bool operator==(const LabelMap&, const LabelMap&) = default;

		private:
			std::vector<std::string> m_names;
	};

	struct Sample
	{
			std::vector<double> features;
			std::vector<std::size_t> labels; ///< one index per dataset task
			std::string domain; ///< source dataset / capture the flow came from
			std::string flow_id;

			friend bool operator==(const Sample&, const Sample&) = default;
	};

	/// Flows with one label per declared task.
	class LabeledDataset
	{
		public:
			LabeledDataset() = default;
			LabeledDataset(std::vector<std::string> task_ids, std::vector<LabelMap> label_maps, std::size_t feature_dim);

			/// Throws DimensionError / DataError when the sample breaks the dataset contract.
			void add(Sample sample);

			std::size_t size() const noexcept
			{
				return m_samples.size();
			}
			bool empty() const noexcept
			{
				return m_samples.empty();
			}
			std::size_t feature_dim() const noexcept
			{
				return m_feature_dim;
			}
			std::size_t task_count() const noexcept
			{
				return m_task_ids.size();
			}
			const std::vector<std::string>& task_ids() const noexcept
			{
				return m_task_ids;
			}
			const std::vector<LabelMap>& label_maps() const noexcept
			{
				return m_label_maps;
			}
			const LabelMap& label_map(std::size_t task) const
			{
				return m_label_maps.at(task);
			}
			std::optional<std::size_t> find_task(std::string_view task_id) const noexcept;
			/// Throws DataError for an unknown task.
			std::size_t task_index(std::string_view task_id) const;

			const std::vector<Sample>& samples() const noexcept
			{
				return m_samples;
			}
			const Sample& operator[](std::size_t i) const
			{
				return m_samples[i];
			}

			/// Samples at `indices`, same tasks and label maps.
			LabeledDataset subset(std::span<const std::size_t> indices) const;
			/// Samples for which `keep` is true.
			template<typename Pred>
			LabeledDataset filter(Pred keep) const
			{
				std::vector<std::size_t> idx;
				for (std::size_t i = 0; i < m_samples.size(); i++)
					if (keep(m_samples[i]))
						idx.push_back(i);
				return subset(idx);
			}
			/// Single-task view of one task.
			LabeledDataset select_task(std::string_view task_id) const;
			/// Same samples with task `task_id` relabelled through `map` into `new_labels`.
			LabeledDataset relabel(std::string_view task_id, const LabelMap &new_labels, std::span<const std::size_t> map) const;

			/// Samples of task `task_id` whose label is in `kept`, relabelled to positions in `kept`.
			LabeledDataset restrict_labels(std::string_view task_id, const LabelMap &kept) const;

			/// [size x feature_dim] features of the given rows (all rows when empty).
			nn::Tensor features(std::span<const std::size_t> rows = { }) const;
			std::vector<std::size_t> labels(std::size_t task, std::span<const std::size_t> rows = { }) const;
			/// Samples per class of one task.
			std::vector<std::size_t> class_counts(std::size_t task) const;

			friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;

		private:
			std::vector<std::string> m_task_ids;
			std::vector<LabelMap> m_label_maps;
			std::size_t m_feature_dim = 0;
			std::vector<Sample> m_samples;
	};

	/// Concatenates datasets that share tasks, label maps and dimension.
	LabeledDataset concatenate(std::span<const LabeledDataset> parts);
}
