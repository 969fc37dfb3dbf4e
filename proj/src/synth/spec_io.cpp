#include <snake/synth/generator.hpp>
#include <snake/error.hpp>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace snake::synth
{
	namespace
	{
		namespace pt = boost::property_tree;

		std::string trim(std::string s)
		{
			const auto first = s.find_first_not_of(" \t");
			if (first == std::string::npos)
				return { };
			const auto last = s.find_last_not_of(" \t");
			return s.substr(first, last - first + 1);
		}

		std::vector<std::string> split_list(const std::string &text)
		{
			std::vector<std::string> out;
			std::stringstream ss(text);
			std::string item;
			while (std::getline(ss, item, ','))
			{
				item = trim(item);
				if (!item.empty())
					out.push_back(item);
			}
			return out;
		}

		std::pair<std::string, std::string> split_pair(const std::string &item)
		{
			const auto colon = item.find(':');
			if (colon == std::string::npos)
				throw ConfigError("expected 'key:value', got '" + item + "'");
			return { trim(item.substr(0, colon)), trim(item.substr(colon + 1)) };
		}

		template<typename T>
		T get_value(const pt::ptree &section, const std::string &key, T fallback)
		{
			try
			{
				return section.get<T>(pt::ptree::path_type(key, '\0'), fallback);
			} catch (const pt::ptree_error &e)
			{
				throw ConfigError("bad value for '" + key + "': " + e.what());
			}
		}

		const std::set<std::string> generator_keys = { "seed", "flows_per_class", "separation", "payload_sigma", "length_sigma", "min_packets", "max_packets",
				"payload_bytes", "packets", "iat_scale" };
	}

	GeneratorSpec parse_generator_spec(const std::string &text)
	{
		pt::ptree tree;
		try
		{
			std::istringstream in(text);
			pt::read_ini(in, tree);
		} catch (const pt::ini_parser_error &e)
		{
			throw ConfigError(std::string("generator spec: ") + e.what());
		}

		GeneratorSpec spec;
		std::vector<std::pair<std::string, const pt::ptree*>> class_sections;
		for (const auto &[name, section] : tree)
		{
			if (name == "generator")
			{
				for (const auto &[key, value] : section)
					if (!generator_keys.contains(key))
						throw ConfigError("generator spec: unknown key '" + key + "' in [generator]");
				spec.seed = get_value<std::uint64_t>(section, "seed", spec.seed);
				spec.flows_per_class = get_value<std::size_t>(section, "flows_per_class", spec.flows_per_class);
				spec.separation = get_value<double>(section, "separation", spec.separation);
				spec.payload_sigma = get_value<double>(section, "payload_sigma", spec.payload_sigma);
				spec.length_sigma = get_value<double>(section, "length_sigma", spec.length_sigma);
				spec.min_packets = get_value<std::size_t>(section, "min_packets", spec.min_packets);
				spec.max_packets = get_value<std::size_t>(section, "max_packets", spec.max_packets);
				spec.extraction.payload_bytes = get_value<std::size_t>(section, "payload_bytes", spec.extraction.payload_bytes);
				spec.extraction.packets = get_value<std::size_t>(section, "packets", spec.extraction.packets);
				spec.extraction.header_scales[ingest::InterArrival] = get_value<double>(section, "iat_scale",
						spec.extraction.header_scales[ingest::InterArrival]);
			}
			else if (name.rfind("task.", 0) == 0)
			{
				spec.tasks.push_back(name.substr(5));
				spec.label_maps.emplace_back(split_list(get_value<std::string>(section, "labels", "")));
			}
			else if (name.rfind("class.", 0) == 0)
				class_sections.emplace_back(name.substr(6), &section);
			else if (name == "nesting")
			{
				Nesting n;
				n.coarse_task = get_value<std::string>(section, "coarse", "");
				n.fine_task = get_value<std::string>(section, "fine", "");
				for (const auto &item : split_list(get_value<std::string>(section, "map", "")))
					n.parent.push_back(split_pair(item));
				if (n.coarse_task.empty() || n.fine_task.empty())
					throw ConfigError("generator spec: [nesting] needs coarse and fine");
				spec.nesting = std::move(n);
			}
			else
				throw ConfigError("generator spec: unknown section [" + name + "]");
		}

		for (const auto &[class_name, section] : class_sections)
		{
			ClassSpec c;
			c.name = class_name;
			c.domain = get_value<std::string>(*section, "domain", c.domain);
			c.labels.assign(spec.tasks.size(), "");
			for (const auto &item : split_list(get_value<std::string>(*section, "labels", "")))
			{
				const auto [task, label] = split_pair(item);
				c.labels.at(spec.task_index(task)) = label;
			}
			// a coarse label may be left implicit when the fine label nests under it
			if (spec.nesting)
			{
				const std::size_t coarse = spec.task_index(spec.nesting->coarse_task), fine = spec.task_index(spec.nesting->fine_task);
				if (c.labels[coarse].empty())
					for (const auto &[f, parent] : spec.nesting->parent)
						if (f == c.labels[fine])
							c.labels[coarse] = parent;
			}
			for (std::size_t t = 0; t < spec.tasks.size(); t++)
				if (c.labels[t].empty())
					throw ConfigError("class '" + class_name + "' has no label for task '" + spec.tasks[t] + "'");
			spec.classes.push_back(std::move(c));
		}
		spec.validate();
		return spec;
	}

	GeneratorSpec load_generator_spec(const std::filesystem::path &path)
	{
		std::ifstream in(path);
		if (!in)
			throw ConfigError("cannot open generator spec '" + path.string() + "'");
		std::stringstream ss;
		ss << in.rdbuf();
		return parse_generator_spec(ss.str());
	}

	std::vector<std::string> preset_names()
	{
		return { "separable3", "mode1", "mode2", "mode3" };
	}

	std::string preset_spec_text(std::string_view name)
	{
		std::ostringstream s;
		if (name == "separable3")
		{
			s << "[generator]\nseed = 1\nflows_per_class = 200\nseparation = 3.0\n\n";
			s << "[task.app]\nlabels = chat,email,streaming\n\n";
			for (const char *c : { "chat", "email", "streaming" })
				s << "[class." << c << "]\nlabels = app:" << c << "\n\n";
		}
		else if (name == "mode1")
		{
			s << "[generator]\nseed = 2\nflows_per_class = 250\nseparation = 3.0\n\n";
			s << "[task.encap]\nlabels = vpn,nonvpn\n\n[task.app]\nlabels = chat,email,streaming\n\n";
			for (const char *e : { "vpn", "nonvpn" })
				for (const char *a : { "chat", "email", "streaming" })
					s << "[class." << e << "_" << a << "]\nlabels = encap:" << e << ",app:" << a << "\n\n";
		}
		else if (name == "mode2")
		{
			s << "[generator]\nseed = 3\nflows_per_class = 100\nseparation = 3.0\n\n";
			s << "[task.app]\nlabels = a0,a1,a2,a3,a4,a5,b0,b1,b2,b3\n\n";
			for (int i = 0; i < 6; i++)
				s << "[class.a" << i << "]\nlabels = app:a" << i << "\ndomain = A\n\n";
			for (int i = 0; i < 4; i++)
				s << "[class.b" << i << "]\nlabels = app:b" << i << "\ndomain = B\n\n";
		}
		else if (name == "mode3")
		{
			s << "[generator]\nseed = 4\nflows_per_class = 80\nseparation = 3.0\n\n";
			s << "[task.coarse]\nlabels = benign,malicious\n\n[task.fine]\nlabels = t0,t1,t2,t3,t4,t5,t6,t7,t8,t9\n\n";
			s << "[nesting]\ncoarse = coarse\nfine = fine\nmap = ";
			for (int i = 0; i < 10; i++)
				s << (i ? "," : "") << "t" << i << ":" << (i % 2 ? "malicious" : "benign");
			s << "\n\n";
			for (int i = 0; i < 10; i++)
				s << "[class.t" << i << "]\nlabels = fine:t" << i << "\ndomain = " << (i < 5 ? "D1" : "D2") << "\n\n";
		}
		else
			throw ConfigError("unknown preset '" + std::string(name) + "'");
		return s.str();
	}

	void write_labels_csv(const expert::LabeledDataset &data, const std::filesystem::path &path)
	{
		std::ofstream out(path);
		if (!out)
			throw FormatError("cannot write '" + path.string() + "'");
		out << "flow_id,task_id,label\n";
		for (const expert::Sample &s : data.samples())
		{
			for (std::size_t t = 0; t < data.task_count(); t++)
				out << s.flow_id << ',' << data.task_ids()[t] << ',' << data.label_map(t).name(s.labels[t]) << '\n';
			out << s.flow_id << ',' << domain_column << ',' << s.domain << '\n';
		}
	}

	void write_generated(const GeneratedData &data, const std::filesystem::path &flows_path, const std::filesystem::path &labels_path)
	{
		ingest::write_flow_records(flows_path, data.flows);
		write_labels_csv(data.dataset, labels_path);
	}

	expert::LabeledDataset dataset_from_records(const std::vector<ingest::FlowRecord> &flows, const std::filesystem::path &labels_path,
			const ingest::ExtractionConfig &cfg, const GeneratorSpec *spec)
	{
		std::ifstream in(labels_path);
		if (!in)
			throw FormatError("cannot open labels '" + labels_path.string() + "'");
		std::map<std::string, std::map<std::string, std::string>> by_flow;
		std::vector<std::string> task_order;
		std::map<std::string, std::set<std::string>> names;
		std::string line;
		std::size_t line_no = 0;
		while (std::getline(in, line))
		{
			line_no++;
			if (!line.empty() && line.back() == '\r')
				line.pop_back();
			if (line.empty() || (line_no == 1 && line == "flow_id,task_id,label"))
				continue;
			const auto c1 = line.find(','), c2 = line.find(',', c1 == std::string::npos ? c1 : c1 + 1);
			if (c1 == std::string::npos || c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos)
				throw FormatError("labels CSV line " + std::to_string(line_no) + ": expected flow_id,task_id,label");
			const std::string flow = line.substr(0, c1), task = line.substr(c1 + 1, c2 - c1 - 1), label = line.substr(c2 + 1);
			if (flow.empty() || task.empty() || label.empty())
				throw FormatError("labels CSV line " + std::to_string(line_no) + ": empty field");
			if (!by_flow[flow].emplace(task, label).second)
				throw FormatError("labels CSV line " + std::to_string(line_no) + ": duplicate label for flow '" + flow + "' task '" + task + "'");
			if (task != domain_column)
			{
				if (!names.contains(task))
					task_order.push_back(task);
				names[task].insert(label);
			}
		}

		std::vector<std::string> tasks;
		std::vector<expert::LabelMap> maps;
		if (spec)
		{
			tasks = spec->tasks;
			maps = spec->label_maps;
		}
		else
		{
			tasks = task_order;
			for (const auto &t : tasks)
				maps.emplace_back(std::vector<std::string>(names[t].begin(), names[t].end()));
		}
		if (tasks.empty())
			throw DataError("labels CSV declares no tasks");

		expert::LabeledDataset out(tasks, maps, cfg.dimension());
		for (const ingest::FlowRecord &r : flows)
		{
			const auto it = by_flow.find(r.flow_id);
			if (it == by_flow.end())
				throw DataError("flow '" + r.flow_id + "' has no labels");
			expert::Sample s;
			for (std::size_t t = 0; t < tasks.size(); t++)
			{
				const auto label = it->second.find(tasks[t]);
				if (label == it->second.end())
					throw DataError("flow '" + r.flow_id + "' lacks a label for task '" + tasks[t] + "'");
				s.labels.push_back(maps[t].index_of(label->second));
			}
			const auto domain = it->second.find(std::string(domain_column));
			s.domain = domain == it->second.end() ? "default" : domain->second;
			s.flow_id = r.flow_id;
			const ingest::FeatureVector fv = ingest::extract_features(r.flow, cfg);
			s.features.assign(fv.flat().begin(), fv.flat().end());
			out.add(std::move(s));
		}
		return out;
	}
}
