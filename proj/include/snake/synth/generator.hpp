#pragma once

#include <snake/expert/dataset.hpp>
#include <snake/ingest/features.hpp>
#include <snake/ingest/flow_record.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace snake::synth
{
	/// Statistical description of one traffic class.
	struct ClassProfile
	{
			std::string name;
			std::vector<std::size_t> labels; ///< one label index per task
			std::string domain;
			std::vector<double> payload_mean; ///< per byte position of the concatenated payload
			double payload_sigma = 0.0;
			std::vector<double> length_mean; ///< per packet position
			double length_sigma = 0.0;
			double window_mean = 0.0;
			double window_sigma = 0.0;
			double iat_log_mean = 0.0; ///< log-normal inter-arrival parameters, seconds
			double iat_log_sigma = 0.0;
			std::vector<double> forward_probability; ///< per packet position
			std::size_t min_packets = 1;
			std::size_t max_packets = 1;
			ingest::Protocol protocol = ingest::Protocol::TCP;

			void validate() const;
	};

	struct ClassSpec
	{
			std::string name;
			std::vector<std::string> labels; ///< one label name per task
			std::string domain = "synthetic";
	};

	/// Fine-to-coarse nesting between two tasks.
	struct Nesting
	{
			std::string coarse_task;
			std::string fine_task;
			std::vector<std::pair<std::string, std::string>> parent; ///< (fine label, coarse label)
	};

	struct GeneratorSpec
	{
			std::vector<std::string> tasks;
			std::vector<expert::LabelMap> label_maps;
			std::optional<Nesting> nesting;
			std::vector<ClassSpec> classes;
			std::size_t flows_per_class = 200;
			std::uint64_t seed = 0;
			/// Centroid distance between classes, in units of the per-feature noise.
			double separation = 3.0;
			double payload_sigma = 24.0;
			double length_sigma = 40.0;
			std::size_t min_packets = 8;
			std::size_t max_packets = 40;
			ingest::ExtractionConfig extraction;

			/// Throws ConfigError ("inconsistent nesting map" for nesting faults).
			void validate() const;
			std::size_t task_index(std::string_view task) const;
			/// Fine label index -> coarse label index; requires nesting.
			std::vector<std::size_t> parent_map() const;
	};

	/// Class profiles implied by the spec; a pure function of (spec, seed).
	std::vector<ClassProfile> build_profiles(const GeneratorSpec &spec);

	struct GeneratedData
	{
			expert::LabeledDataset dataset;
			std::vector<ingest::FlowRecord> flows; ///< same order as dataset samples
	};

	GeneratedData generate_dataset(const GeneratorSpec &spec);

	/// Parses the sectioned key-value spec format.
	GeneratorSpec parse_generator_spec(const std::string &text);
	GeneratorSpec load_generator_spec(const std::filesystem::path &path);
	/// Built-in specs: "separable3", "mode1", "mode2", "mode3".
	std::string preset_spec_text(std::string_view name);
	std::vector<std::string> preset_names();

	/// Reserved task id under which the labels CSV records a flow's source domain.
	inline constexpr std::string_view domain_column = "_domain";

	/// Writes the flow records and the `flow_id,task_id,label` CSV.
	void write_generated(const GeneratedData &data, const std::filesystem::path &flows_path, const std::filesystem::path &labels_path);
	void write_labels_csv(const expert::LabeledDataset &data, const std::filesystem::path &path);

	/// Joins flow records with a labels CSV into a dataset. Label maps come from `spec`
	/// when given, otherwise each task's names in sorted order. Throws DataError for a
	/// flow without a label for every task.
	expert::LabeledDataset dataset_from_records(const std::vector<ingest::FlowRecord> &flows, const std::filesystem::path &labels_path,
			const ingest::ExtractionConfig &cfg = { }, const GeneratorSpec *spec = nullptr);
}
