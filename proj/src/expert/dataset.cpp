#include <snake/expert/dataset.hpp>
#include <snake/error.hpp>

#include <algorithm>
#include <cstring>
#include <set>

namespace snake::expert
{
	LabelMap::LabelMap(std::vector<std::string> names) :
			m_names(std::move(names))
	{
		std::set<std::string> seen;
		for (const auto &n : m_names)
		{
			if (n.empty())
				throw ConfigError("label names must be non-empty");
			if (!seen.insert(n).second)
				throw ConfigError("duplicate label '" + n + "'");
		}
	}

	const std::string& LabelMap::name(std::size_t index) const
	{
		if (index >= m_names.size())
			throw DataError("label index " + std::to_string(index) + " out of range for " + std::to_string(m_names.size()) + " classes");
		return m_names[index];
	}

	std::optional<std::size_t> LabelMap::find(std::string_view name) const noexcept
	{
		const auto it = std::find(m_names.begin(), m_names.end(), name);
		if (it == m_names.end())
			return std::nullopt;
		return static_cast<std::size_t>(it - m_names.begin());
	}

	std::size_t LabelMap::index_of(std::string_view name) const
	{
		const auto idx = find(name);
		if (!idx)
			throw DataError("unknown label '" + std::string(name) + "'");
		return *idx;
	}

	LabeledDataset::LabeledDataset(std::vector<std::string> task_ids, std::vector<LabelMap> label_maps, std::size_t feature_dim) :
			m_task_ids(std::move(task_ids)),
			m_label_maps(std::move(label_maps)),
			m_feature_dim(feature_dim)
	{
		if (m_task_ids.size() != m_label_maps.size())
			throw ConfigError("dataset needs one label map per task");
		if (m_task_ids.empty())
			throw ConfigError("dataset needs at least one task");
		std::set<std::string> seen;
		for (const auto &t : m_task_ids)
			if (t.empty() || !seen.insert(t).second)
				throw ConfigError("task ids must be unique and non-empty");
		if (feature_dim == 0)
			throw ConfigError("feature dimension must be positive");
	}

	void LabeledDataset::add(Sample sample)
	{
		if (sample.features.size() != m_feature_dim)
			throw DimensionError("sample has " + std::to_string(sample.features.size()) + " features, dataset expects " + std::to_string(m_feature_dim));
		if (sample.labels.size() != m_task_ids.size())
			throw DataError("sample must carry a label for each of the " + std::to_string(m_task_ids.size()) + " tasks");
		for (std::size_t t = 0; t < m_task_ids.size(); t++)
			if (sample.labels[t] >= m_label_maps[t].size())
				throw DataError("label index out of range for task '" + m_task_ids[t] + "'");
		m_samples.push_back(std::move(sample));
	}

	std::optional<std::size_t> LabeledDataset::find_task(std::string_view task_id) const noexcept
	{
		const auto it = std::find(m_task_ids.begin(), m_task_ids.end(), task_id);
		if (it == m_task_ids.end())
			return std::nullopt;
		return static_cast<std::size_t>(it - m_task_ids.begin());
	}

	std::size_t LabeledDataset::task_index(std::string_view task_id) const
	{
		const auto idx = find_task(task_id);
		if (!idx)
			throw DataError("dataset has no labels for task '" + std::string(task_id) + "'");
		return *idx;
	}

	LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const
	{
		LabeledDataset out(m_task_ids, m_label_maps, m_feature_dim);
		out.m_samples.reserve(indices.size());
		for (std::size_t i : indices)
			out.m_samples.push_back(m_samples.at(i));
		return out;
	}

	LabeledDataset LabeledDataset::select_task(std::string_view task_id) const
	{
		const std::size_t t = task_index(task_id);
		LabeledDataset out( { m_task_ids[t] }, { m_label_maps[t] }, m_feature_dim);
		out.m_samples.reserve(m_samples.size());
		for (const Sample &s : m_samples)
			out.m_samples.push_back(Sample { s.features, { s.labels[t] }, s.domain, s.flow_id });
		return out;
	}

	LabeledDataset LabeledDataset::relabel(std::string_view task_id, const LabelMap &new_labels, std::span<const std::size_t> map) const
	{
		const std::size_t t = task_index(task_id);
		if (map.size() != m_label_maps[t].size())
			throw ConfigError("relabel map must cover every class of task '" + std::string(task_id) + "'");
		for (std::size_t v : map)
			if (v >= new_labels.size())
				throw ConfigError("relabel map points outside the new label set");
		LabeledDataset out = *this;
		out.m_label_maps[t] = new_labels;
		for (Sample &s : out.m_samples)
			s.labels[t] = map[s.labels[t]];
		return out;
	}

	LabeledDataset LabeledDataset::restrict_labels(std::string_view task_id, const LabelMap &kept) const
	{
		const std::size_t t = task_index(task_id);
		std::vector<std::optional<std::size_t>> remap(m_label_maps[t].size());
		for (std::size_t i = 0; i < kept.size(); i++)
			remap[m_label_maps[t].index_of(kept.name(i))] = i;
		LabeledDataset out(m_task_ids, m_label_maps, m_feature_dim);
		out.m_label_maps[t] = kept;
		for (const Sample &s : m_samples)
		{
			if (!remap[s.labels[t]])
				continue;
			Sample copy = s;
			copy.labels[t] = *remap[s.labels[t]];
			out.m_samples.push_back(std::move(copy));
		}
		return out;
	}

	nn::Tensor LabeledDataset::features(std::span<const std::size_t> rows) const
	{
		const std::size_t n = rows.empty() ? m_samples.size() : rows.size();
		nn::Tensor out = nn::Tensor::matrix(n, m_feature_dim);
		for (std::size_t r = 0; r < n; r++)
		{
			const Sample &s = m_samples.at(rows.empty() ? r : rows[r]);
			std::memcpy(out.ptr() + r * m_feature_dim, s.features.data(), m_feature_dim * sizeof(double));
		}
		return out;
	}

	std::vector<std::size_t> LabeledDataset::labels(std::size_t task, std::span<const std::size_t> rows) const
	{
		if (task >= m_task_ids.size())
			throw DataError("task index out of range");
		const std::size_t n = rows.empty() ? m_samples.size() : rows.size();
		std::vector<std::size_t> out(n);
		for (std::size_t r = 0; r < n; r++)
			out[r] = m_samples.at(rows.empty() ? r : rows[r]).labels[task];
		return out;
	}

	std::vector<std::size_t> LabeledDataset::class_counts(std::size_t task) const
	{
		std::vector<std::size_t> counts(label_map(task).size(), 0);
		for (const Sample &s : m_samples)
			counts[s.labels[task]]++;
		return counts;
	}

	LabeledDataset concatenate(std::span<const LabeledDataset> parts)
	{
		if (parts.empty())
			throw DataError("nothing to concatenate");
		LabeledDataset out(parts[0].task_ids(), parts[0].label_maps(), parts[0].feature_dim());
		for (const LabeledDataset &p : parts)
		{
			if (p.task_ids() != out.task_ids() || p.label_maps() != out.label_maps() || p.feature_dim() != out.feature_dim())
				throw DataError("datasets to concatenate disagree on tasks, labels or dimension");
			for (const Sample &s : p.samples())
				out.add(s);
		}
		return out;
	}
}
