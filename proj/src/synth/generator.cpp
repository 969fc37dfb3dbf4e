#include <snake/synth/generator.hpp>
#include <snake/error.hpp>
#include <snake/nn/random.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace snake::synth
{
	namespace
	{
		constexpr double byte_center = 127.5;
		constexpr double length_center = 600.0;
		constexpr double window_center = 16384.0;
		constexpr double window_sigma = 2048.0;
		constexpr double iat_log_center = -4.0;
		constexpr double iat_log_sigma = 0.3;
		constexpr double max_length = 1460.0;

		std::string cs_flow_id(const std::string &class_name, std::size_t k)
		{
			std::string digits = std::to_string(k);
			if (digits.size() < 6)
				digits.insert(0, 6 - digits.size(), '0');
			return class_name + "-" + digits;
		}

		double sign(nn::CounterStream &rng)
		{
			return rng.next_uniform() < 0.5 ? -1.0 : 1.0;
		}
	}

	void ClassProfile::validate() const
	{
		if (payload_sigma < 0.0 || length_sigma < 0.0 || window_sigma < 0.0 || iat_log_sigma < 0.0)
			throw ConfigError("class '" + name + "': noise scales must be non-negative");
		for (double p : forward_probability)
			if (p < 0.0 || p > 1.0)
				throw ConfigError("class '" + name + "': direction probabilities must lie in [0,1]");
		if (min_packets == 0 || min_packets > max_packets)
			throw ConfigError("class '" + name + "': invalid packet count range");
	}

	std::size_t GeneratorSpec::task_index(std::string_view task) const
	{
		const auto it = std::find(tasks.begin(), tasks.end(), task);
		if (it == tasks.end())
			throw ConfigError("unknown task '" + std::string(task) + "'");
		return static_cast<std::size_t>(it - tasks.begin());
	}

	std::vector<std::size_t> GeneratorSpec::parent_map() const
	{
		if (!nesting)
			throw ConfigError("generator spec has no nesting");
		const std::size_t coarse = task_index(nesting->coarse_task), fine = task_index(nesting->fine_task);
		std::vector<std::optional<std::size_t>> parent(label_maps[fine].size());
		for (const auto &[f, c] : nesting->parent)
		{
			const auto fi = label_maps[fine].find(f);
			const auto ci = label_maps[coarse].find(c);
			if (!fi || !ci)
				throw ConfigError("inconsistent nesting map: unknown label in '" + f + ":" + c + "'");
			if (parent[*fi] && *parent[*fi] != *ci)
				throw ConfigError("inconsistent nesting map: '" + f + "' has two parents");
			parent[*fi] = *ci;
		}
		std::vector<std::size_t> out(parent.size());
		std::vector<bool> has_child(label_maps[coarse].size(), false);
		for (std::size_t i = 0; i < parent.size(); i++)
		{
			if (!parent[i])
				throw ConfigError("inconsistent nesting map: '" + label_maps[fine].name(i) + "' has no parent");
			out[i] = *parent[i];
			has_child[out[i]] = true;
		}
		for (std::size_t c = 0; c < has_child.size(); c++)
			if (!has_child[c])
				throw ConfigError("inconsistent nesting map: '" + label_maps[coarse].name(c) + "' has no fine label");
		return out;
	}

	void GeneratorSpec::validate() const
	{
		if (tasks.empty() || tasks.size() != label_maps.size())
			throw ConfigError("generator spec needs at least one task with labels");
		if (classes.empty())
			throw ConfigError("generator spec declares no classes");
		if (!(separation > 0.0))
			throw ConfigError("separation factor must be positive");
		if (payload_sigma < 0.0 || length_sigma < 0.0)
			throw ConfigError("noise scales must be non-negative");
		if (flows_per_class == 0)
			throw ConfigError("flows_per_class must be positive");
		if (min_packets == 0 || min_packets > max_packets)
			throw ConfigError("invalid packet count range");
		extraction.validate();
		std::set<std::string> names;
		for (const ClassSpec &c : classes)
		{
			if (c.name.empty() || !names.insert(c.name).second)
				throw ConfigError("class names must be unique and non-empty");
			if (c.labels.size() != tasks.size())
				throw ConfigError("class '" + c.name + "' needs one label per task");
			for (std::size_t t = 0; t < tasks.size(); t++)
				if (!label_maps[t].find(c.labels[t]))
					throw ConfigError("class '" + c.name + "' uses unknown label '" + c.labels[t] + "' for task '" + tasks[t] + "'");
		}
		if (nesting)
		{
			const auto parent = parent_map();
			const std::size_t coarse = task_index(nesting->coarse_task), fine = task_index(nesting->fine_task);
			if (coarse == fine)
				throw ConfigError("inconsistent nesting map: coarse and fine task coincide");
			for (const ClassSpec &c : classes)
				if (parent[label_maps[fine].index_of(c.labels[fine])] != label_maps[coarse].index_of(c.labels[coarse]))
					throw ConfigError("inconsistent nesting map: class '" + c.name + "' has coarse label '" + c.labels[coarse] + "' but its fine label '"
							+ c.labels[fine] + "' nests elsewhere");
		}
	}

	std::vector<ClassProfile> build_profiles(const GeneratorSpec &spec)
	{
		spec.validate();
		const std::size_t nb = spec.extraction.payload_bytes, np = spec.extraction.packets;
		const double half = spec.separation / 2.0;
		std::vector<ClassProfile> out;
		for (std::size_t c = 0; c < spec.classes.size(); c++)
		{
			const ClassSpec &cs = spec.classes[c];
			nn::CounterStream rng(nn::derive_seed(spec.seed, 0x70726f66ULL * 1000003ULL + c));
			ClassProfile p;
			p.name = cs.name;
			p.domain = cs.domain;
			for (std::size_t t = 0; t < spec.tasks.size(); t++)
				p.labels.push_back(spec.label_maps[t].index_of(cs.labels[t]));
			p.payload_sigma = spec.payload_sigma;
			p.payload_mean.resize(nb);
			for (double &m : p.payload_mean)
				m = byte_center + sign(rng) * half * spec.payload_sigma;
			p.length_sigma = spec.length_sigma;
			p.length_mean.resize(np);
			for (double &m : p.length_mean)
				m = length_center + sign(rng) * half * spec.length_sigma;
			p.window_mean = window_center + sign(rng) * half * window_sigma;
			p.window_sigma = window_sigma;
			p.iat_log_mean = iat_log_center + sign(rng) * half * iat_log_sigma;
			p.iat_log_sigma = iat_log_sigma;
			p.forward_probability.resize(np);
			for (double &f : p.forward_probability)
				f = rng.next_uniform() < 0.5 ? 0.2 : 0.8;
			p.min_packets = spec.min_packets;
			p.max_packets = spec.max_packets;
			p.validate();
			out.push_back(std::move(p));
		}
		return out;
	}

	GeneratedData generate_dataset(const GeneratorSpec &spec)
	{
		const auto profiles = build_profiles(spec);
		GeneratedData out { expert::LabeledDataset(spec.tasks, spec.label_maps, spec.extraction.dimension()), { } };
		const ingest::Endpoint server { ingest::Address::v4(192, 168, 100, 1), 443 };
		std::size_t serial = 0;
		for (std::size_t c = 0; c < profiles.size(); c++)
		{
			const ClassProfile &p = profiles[c];
			for (std::size_t k = 0; k < spec.flows_per_class; k++, serial++)
			{
				nn::CounterStream rng(nn::derive_seed(spec.seed, (std::uint64_t(c) << 32) | k));
				const std::size_t packets = p.min_packets + rng.next_below(p.max_packets - p.min_packets + 1);
				const ingest::Endpoint client { ingest::Address::v4(10, std::uint8_t(c & 0xff), std::uint8_t((k >> 8) & 0xff), std::uint8_t(k & 0xff)),
						std::uint16_t(20000 + (serial % 40000)) };

				// payload bytes are drawn for the whole concatenated stream, then cut into packets
				std::vector<std::size_t> lengths(packets);
				std::size_t total = 0;
				for (std::size_t i = 0; i < packets; i++)
				{
					const double mean = i < p.length_mean.size() ? p.length_mean[i] : length_center;
					lengths[i] = static_cast<std::size_t>(std::clamp(std::round(mean + p.length_sigma * rng.next_normal()), 0.0, max_length));
					total += lengths[i];
				}
				std::vector<std::uint8_t> stream(total);
				for (std::size_t b = 0; b < total; b++)
				{
					const double mean = b < p.payload_mean.size() ? p.payload_mean[b] : byte_center;
					stream[b] = static_cast<std::uint8_t>(std::clamp(std::round(mean + p.payload_sigma * rng.next_normal()), 0.0, 255.0));
				}

				std::vector<ingest::Packet> list;
				double t = 0.0;
				std::size_t offset = 0;
				for (std::size_t i = 0; i < packets; i++)
				{
					const double fwd = i < p.forward_probability.size() ? p.forward_probability[i] : 0.5;
					const bool forward = i == 0 || rng.next_uniform() < fwd;
					if (i > 0)
						t += std::exp(p.iat_log_mean + p.iat_log_sigma * rng.next_normal());
					ingest::Packet pk;
					pk.timestamp = t;
					pk.src = forward ? client : server;
					pk.dst = forward ? server : client;
					pk.protocol = p.protocol;
					pk.tcp_window = static_cast<std::uint16_t>(std::clamp(std::round(p.window_mean + p.window_sigma * rng.next_normal()), 0.0, 65535.0));
					pk.payload.assign(stream.begin() + static_cast<std::ptrdiff_t>(offset), stream.begin() + static_cast<std::ptrdiff_t>(offset + lengths[i]));
					offset += lengths[i];
					list.push_back(std::move(pk));
				}
				ingest::FlowRecord record { cs_flow_id(p.name, k), ingest::make_flow(std::move(list)) };
				const ingest::FeatureVector fv = ingest::extract_features(record.flow, spec.extraction);
				out.dataset.add(expert::Sample { std::vector<double>(fv.flat().begin(), fv.flat().end()), p.labels, p.domain, record.flow_id });
				out.flows.push_back(std::move(record));
			}
		}
		return out;
	}
}
