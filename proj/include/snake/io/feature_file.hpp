#pragma once

#include <snake/expert/dataset.hpp>

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace snake::io
{
	inline constexpr std::uint32_t feature_file_version = 1;

	/// Contents of a feature file. Labels are optional: an unlabelled table has no
	/// tasks and every sample's label list is empty.
	struct FeatureTable
	{
			std::size_t payload_bytes = 0;
			std::size_t packets = 0;
			std::vector<std::string> task_ids;
			std::vector<expert::LabelMap> label_maps;
			std::vector<expert::Sample> samples;

			std::size_t dimension() const noexcept
			{
				return payload_bytes + 4 * packets;
			}
			bool labelled() const noexcept
			{
				return !task_ids.empty();
			}
			/// Throws DataError for an unlabelled table.
			expert::LabeledDataset dataset() const;
			static FeatureTable from_dataset(const expert::LabeledDataset &data, std::size_t payload_bytes, std::size_t packets);

			friend bool operator==(const FeatureTable&, const FeatureTable&) = default;
	};

	/// "SNKF", u32 version, u64 header length, JSON header (geometry, tasks, label maps,
	/// flow ids, domains), then per sample its fp64 features and u32 label indices.
	std::string encode_feature_table(const FeatureTable &table);
	/// Throws FormatError on bad magic, version, truncation or inconsistent header.
	FeatureTable decode_feature_table(const std::string &bytes);

	void write_feature_file(const std::filesystem::path &path, const FeatureTable &table);
	FeatureTable read_feature_file(const std::filesystem::path &path);
}
