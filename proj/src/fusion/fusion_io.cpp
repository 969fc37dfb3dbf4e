#include <snake/fusion/fusion.hpp>
#include <snake/error.hpp>
#include <snake/io/container.hpp>

namespace snake::fusion
{
	namespace
	{
		nlohmann::json relation_header(const TaskRelation &r)
		{
			nlohmann::json j = { { "mode", fusion_mode_name(r.mode) }, { "experts", r.experts }, { "tasks", r.task_ids } };
			if (r.mode == FusionMode::Expansion)
			{
				j["union_labels"] = r.union_labels.names();
				j["source_maps"] = r.source_maps;
			}
			if (r.mode == FusionMode::Refinement)
			{
				j["coarse_labels"] = r.coarse_labels.names();
				j["fine_labels"] = r.fine_labels.names();
				j["parent"] = r.parent;
			}
			return j;
		}

		TaskRelation relation_from(const nlohmann::json &j)
		{
			TaskRelation r;
			r.mode = parse_fusion_mode(j.at("mode").get<std::string>());
			r.experts = j.at("experts").get<std::vector<std::size_t>>();
			r.task_ids = j.at("tasks").get<std::vector<std::string>>();
			if (r.mode == FusionMode::Expansion)
			{
				r.union_labels = expert::LabelMap(j.at("union_labels").get<std::vector<std::string>>());
				r.source_maps = j.at("source_maps").get<std::vector<std::vector<std::size_t>>>();
			}
			if (r.mode == FusionMode::Refinement)
			{
				r.coarse_labels = expert::LabelMap(j.at("coarse_labels").get<std::vector<std::string>>());
				r.fine_labels = expert::LabelMap(j.at("fine_labels").get<std::vector<std::string>>());
				r.parent = j.at("parent").get<std::vector<std::size_t>>();
			}
			return r;
		}
	}

	void save_fused(const FusedModel &model, const std::filesystem::path &path)
	{
		model.validate();
		io::Container c;
		c.header["kind"] = "fused";
		nlohmann::json experts = nlohmann::json::array(), gates = nlohmann::json::array(), towers = nlohmann::json::array(), relations =
				nlohmann::json::array();
		for (std::size_t j = 0; j < model.experts.size(); j++)
		{
			experts.push_back(expert::expert_header(model.experts[j]));
			expert::add_expert_tensors(c, "expert" + std::to_string(j) + "/", model.experts[j]);
		}
		for (std::size_t k = 0; k < model.task_count(); k++)
		{
			const GateConfig &g = model.gates[k];
			nlohmann::json gj = { { "task", g.task_id }, { "mode", gate_mode_name(g.mode) }, { "experts", g.expert_count }, { "subset", g.subset } };
			if (g.mode == GateMode::Trainable)
			{
				gj["set"] = g.gate_linear.name();
				c.add_params("gate" + std::to_string(k) + "/", g.gate_linear);
			}
			else
				gj["delta"] = g.fixed_delta;
			gates.push_back(std::move(gj));
			const Tower &t = model.towers[k];
			towers.push_back( { { "task", t.task_id }, { "labels", t.labels.names() }, { "dropout", t.dropout_rate }, { "set", t.layers.name() } });
			c.add_params("tower" + std::to_string(k) + "/", t.layers);
		}
		for (const TaskRelation &r : model.relations)
			relations.push_back(relation_header(r));
		c.header["experts"] = std::move(experts);
		c.header["gates"] = std::move(gates);
		c.header["towers"] = std::move(towers);
		c.header["relations"] = std::move(relations);
		c.header["loss_weights"] = model.loss_weights;
		io::write_container(path, c);
	}

	FusedModel load_fused(const std::filesystem::path &path)
	{
		const io::Container c = io::read_container(path);
		if (c.header.value("kind", "") != "fused")
			throw FormatError("'" + path.string() + "' is not a fused model");
		FusedModel m;
		try
		{
			const auto &experts = c.header.at("experts");
			for (std::size_t j = 0; j < experts.size(); j++)
				m.experts.push_back(expert::expert_from_container(c, experts[j], "expert" + std::to_string(j) + "/"));
			const auto &gates = c.header.at("gates");
			const auto &towers = c.header.at("towers");
			if (gates.size() != towers.size())
				throw FormatError("fused model lists " + std::to_string(gates.size()) + " gates for " + std::to_string(towers.size()) + " towers");
			for (std::size_t k = 0; k < gates.size(); k++)
			{
				GateConfig g;
				g.task_id = gates[k].at("task").get<std::string>();
				g.mode = parse_gate_mode(gates[k].at("mode").get<std::string>());
				g.expert_count = gates[k].at("experts").get<std::size_t>();
				g.subset = gates[k].at("subset").get<std::vector<std::size_t>>();
				if (g.mode == GateMode::Trainable)
					g.gate_linear = c.params("gate" + std::to_string(k) + "/", gates[k].at("set").get<std::string>());
				else
					g.fixed_delta = gates[k].at("delta").get<std::vector<double>>();
				m.gates.push_back(std::move(g));

				Tower t;
				t.task_id = towers[k].at("task").get<std::string>();
				t.labels = expert::LabelMap(towers[k].at("labels").get<std::vector<std::string>>());
				t.dropout_rate = towers[k].at("dropout").get<double>();
				t.layers = c.params("tower" + std::to_string(k) + "/", towers[k].at("set").get<std::string>());
				m.towers.push_back(std::move(t));
			}
			for (const auto &r : c.header.at("relations"))
				m.relations.push_back(relation_from(r));
			m.loss_weights = c.header.at("loss_weights").get<std::vector<double>>();
		} catch (const nlohmann::json::exception &e)
		{
			throw FormatError("fused model header is malformed: " + std::string(e.what()));
		}
		try
		{
			m.validate();
		} catch (const FormatError&)
		{
			throw;
		} catch (const Error &e)
		{
			throw FormatError("fused model is inconsistent: " + std::string(e.what()));
		}
		return m;
	}
}
