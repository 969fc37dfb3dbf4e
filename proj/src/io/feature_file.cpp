#include <snake/io/feature_file.hpp>
#include <snake/error.hpp>
#include <snake/io/container.hpp>

#include <json.hpp>

#include <cstring>

namespace snake::io
{
	namespace
	{
		constexpr char magic[4] = { 'S', 'N', 'K', 'F' };
		constexpr std::size_t preamble = 4 + 4 + 8;
	}

	expert::LabeledDataset FeatureTable::dataset() const
	{
		if (!labelled())
			throw DataError("feature file carries no labels");
		expert::LabeledDataset d(task_ids, label_maps, dimension());
		for (const auto &s : samples)
			d.add(s);
		return d;
	}

	FeatureTable FeatureTable::from_dataset(const expert::LabeledDataset &data, std::size_t payload_bytes, std::size_t packets)
	{
		FeatureTable t;
		t.payload_bytes = payload_bytes;
		t.packets = packets;
		if (t.dimension() != data.feature_dim())
			throw DimensionError("dataset dimension " + std::to_string(data.feature_dim()) + " does not match " + std::to_string(payload_bytes) + " bytes + "
					+ std::to_string(packets) + " packets");
		t.task_ids = data.task_ids();
		t.label_maps = data.label_maps();
		t.samples = data.samples();
		return t;
	}

	std::string encode_feature_table(const FeatureTable &t)
	{
		nlohmann::json h;
		h["payload_bytes"] = t.payload_bytes;
		h["packets"] = t.packets;
		h["count"] = t.samples.size();
		h["tasks"] = t.task_ids;
		nlohmann::json maps = nlohmann::json::array();
		for (const auto &m : t.label_maps)
			maps.push_back(m.names());
		h["label_maps"] = std::move(maps);
		nlohmann::json ids = nlohmann::json::array(), domains = nlohmann::json::array();
		for (const auto &s : t.samples)
		{
			ids.push_back(s.flow_id);
			domains.push_back(s.domain);
		}
		h["flow_ids"] = std::move(ids);
		h["domains"] = std::move(domains);
		const std::string text = h.dump();

		std::string out(magic, 4);
		append_le(out, feature_file_version);
		append_le(out, static_cast<std::uint64_t>(text.size()));
		out += text;
		const std::size_t dim = t.dimension();
		for (const auto &s : t.samples)
		{
			if (s.features.size() != dim)
				throw DimensionError("sample '" + s.flow_id + "' has " + std::to_string(s.features.size()) + " features, expected " + std::to_string(dim));
			if (s.labels.size() != t.task_ids.size())
				throw DataError("sample '" + s.flow_id + "' has the wrong number of labels");
			for (double v : s.features)
				append_le(out, v);
			for (std::size_t l : s.labels)
				append_le(out, static_cast<std::uint32_t>(l));
		}
		return out;
	}

	FeatureTable decode_feature_table(const std::string &bytes)
	{
		if (bytes.size() < 4 || std::memcmp(bytes.data(), magic, 4) != 0)
			throw FormatError("not a feature file: bad magic (expected SNKF)");
		if (bytes.size() < preamble)
			throw FormatError("feature file truncated inside the preamble");
		const std::uint32_t version = load_le32(bytes.data() + 4);
		if (version != feature_file_version)
			throw FormatError("unsupported feature file version " + std::to_string(version));
		const std::uint64_t header_len = load_le64(bytes.data() + 8);
		if (header_len > bytes.size() - preamble)
			throw FormatError("feature file truncated inside the header");

		FeatureTable t;
		std::size_t count = 0;
		std::vector<std::string> ids, domains;
		try
		{
			const auto h = nlohmann::json::parse(bytes.begin() + preamble, bytes.begin() + static_cast<std::ptrdiff_t>(preamble + header_len));
			t.payload_bytes = h.at("payload_bytes").get<std::size_t>();
			t.packets = h.at("packets").get<std::size_t>();
			count = h.at("count").get<std::size_t>();
			t.task_ids = h.at("tasks").get<std::vector<std::string>>();
			for (const auto &m : h.at("label_maps"))
				t.label_maps.emplace_back(m.get<std::vector<std::string>>());
			ids = h.at("flow_ids").get<std::vector<std::string>>();
			domains = h.at("domains").get<std::vector<std::string>>();
		} catch (const nlohmann::json::exception &e)
		{
			throw FormatError(std::string("feature file header is malformed: ") + e.what());
		} catch (const ConfigError &e)
		{
			throw FormatError(std::string("feature file label map is invalid: ") + e.what());
		}
		if (t.label_maps.size() != t.task_ids.size() || ids.size() != count || domains.size() != count)
			throw FormatError("feature file header is inconsistent");

		const std::size_t dim = t.dimension();
		const std::size_t record = dim * 8 + t.task_ids.size() * 4;
		const std::size_t expected = preamble + header_len + count * record;
		if (bytes.size() < expected)
			throw FormatError("feature file truncated: expected " + std::to_string(expected) + " bytes, found " + std::to_string(bytes.size()));
		if (bytes.size() > expected)
			throw FormatError("feature file has " + std::to_string(bytes.size() - expected) + " trailing bytes");

		const char *p = bytes.data() + preamble + header_len;
		t.samples.resize(count);
		for (std::size_t i = 0; i < count; i++)
		{
			auto &s = t.samples[i];
			s.flow_id = std::move(ids[i]);
			s.domain = std::move(domains[i]);
			s.features.resize(dim);
			for (double &v : s.features)
			{
				v = load_le_double(p);
				p += 8;
			}
			for (std::size_t k = 0; k < t.task_ids.size(); k++)
			{
				const std::size_t l = load_le32(p);
				p += 4;
				if (l >= t.label_maps[k].size())
					throw FormatError("feature file label index out of range for sample '" + s.flow_id + "'");
				s.labels.push_back(l);
			}
		}
		return t;
	}

	void write_feature_file(const std::filesystem::path &path, const FeatureTable &table)
	{
		write_file(path, encode_feature_table(table));
	}

	FeatureTable read_feature_file(const std::filesystem::path &path)
	{
		return decode_feature_table(read_file(path));
	}
}
