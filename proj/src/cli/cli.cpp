#include <snake/cli/cli.hpp>
#include <snake/error.hpp>
#include <snake/eval/diagnostics.hpp>
#include <snake/eval/metrics.hpp>
#include <snake/expert/expert.hpp>
#include <snake/fusion/fusion.hpp>
#include <snake/ingest/flow.hpp>
#include <snake/ingest/flow_record.hpp>
#include <snake/ingest/pcap.hpp>
#include <snake/io/container.hpp>
#include <snake/io/feature_file.hpp>
#include <snake/nn/kernels.hpp>
#include <snake/synth/generator.hpp>

#include <CLI11.hpp>
#include <boost/version.hpp>
#include <json.hpp>
#include <openssl/opensslv.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>

#ifndef SNAKE_VERSION
#define SNAKE_VERSION "0.0.0"
#endif

namespace snake::cli
{
	namespace
	{
		/// Thrown for argument problems found after CLI11 parsing.
		class UsageError : public Error
		{
			public:
				using Error::Error;
		};

		std::string number(double v)
		{
			char buf[32];
			const auto r = std::to_chars(buf, buf + sizeof buf, v);
			return std::string(buf, r.ptr);
		}

		std::string csv_field(const std::string &s)
		{
			if (s.find_first_of(",\"\n") == std::string::npos)
				return s;
			std::string q = "\"";
			for (char c : s)
			{
				if (c == '"')
					q += '"';
				q += c;
			}
			return q + "\"";
		}

		void require_parent(const std::filesystem::path &p, const char *what)
		{
			const auto parent = p.parent_path();
			if (!parent.empty() && !std::filesystem::is_directory(parent))
				throw UsageError(std::string(what) + ": directory '" + parent.string() + "' does not exist");
		}

		void require_file(const std::filesystem::path &p, const char *what)
		{
			if (!std::filesystem::is_regular_file(p))
				throw UsageError(std::string(what) + ": file '" + p.string() + "' not found");
		}

		std::vector<std::string> split_list(const std::string &s)
		{
			std::vector<std::string> out;
			std::string item;
			std::istringstream in(s);
			while (std::getline(in, item, ','))
				if (!item.empty())
					out.push_back(item);
			return out;
		}

		nn::EncoderShape encoder_shape(const Settings &s)
		{
			nn::EncoderShape shape { s.count("encoder.tokens"), s.count("encoder.width"), s.count("encoder.heads"), s.count("encoder.feed_forward") };
			shape.validate();
			return shape;
		}

		ingest::ExtractionConfig extraction(const Settings &s)
		{
			ingest::ExtractionConfig cfg;
			cfg.payload_bytes = s.count("features.payload_bytes");
			cfg.packets = s.count("features.packets");
			cfg.validate();
			return cfg;
		}

		eval::SplitRatios split_ratios(const Settings &s)
		{
			eval::SplitRatios r { s.real("split.train"), s.real("split.validation"), s.real("split.test") };
			r.validate();
			return r;
		}

		nn::TrainConfig finetune_config(const Settings &s, fusion::FusionMode mode, std::uint64_t seed)
		{
			const std::string base = "finetune." + std::string(fusion::fusion_mode_name(mode)) + ".";
			nn::TrainConfig cfg;
			cfg.learning_rate = s.real(base + "learning_rate");
			cfg.batch_size = s.count(base + "batch_size");
			cfg.epochs = s.count(base + "epochs");
			cfg.dropout_rate = s.real("tower.dropout");
			cfg.seed = seed;
			cfg.validate();
			return cfg;
		}

		expert::LabeledDataset load_dataset(const std::filesystem::path &path)
		{
			return io::read_feature_file(path).dataset();
		}

		/// Split seed shared by every command, so train-expert, fuse and eval agree on
		/// which samples are held out.
		eval::Split split_for(const RunConfig &rc, const expert::LabeledDataset &data)
		{
			return eval::split_dataset(data, split_ratios(rc.settings), rc.seed);
		}

		const expert::LabeledDataset& pick_split(const eval::Split &split, const std::string &which, const expert::LabeledDataset &all)
		{
			if (which == "train")
				return split.train;
			if (which == "validation")
				return split.validation;
			if (which == "test")
				return split.test;
			return all;
		}

		/// Re-expresses `task` of `data` in `target` label order; labels unknown to
		/// `target` are an error.
		expert::LabeledDataset align_task(const expert::LabeledDataset &data, const std::string &task, const expert::LabelMap &target)
		{
			const std::size_t t = data.task_index(task);
			const auto &have = data.label_map(t);
			if (have == target)
				return data;
			std::vector<std::size_t> map;
			for (const auto &name : have.names())
			{
				const auto idx = target.find(name);
				map.push_back(idx ? *idx : target.size());
			}
			auto known = data.filter([&](const expert::Sample &s)
			{	return map[s.labels[t]] < target.size();});
			if (known.size() != data.size())
				throw DataError("task '" + task + "' has samples with labels the model does not know");
			for (std::size_t &m : map)
				if (m == target.size())
					m = 0;
			return known.relabel(task, target, map);
		}

		expert::LabeledDataset align_fused(const fusion::FusedModel &m, expert::LabeledDataset data)
		{
			for (std::size_t k = 0; k < m.task_count(); k++)
				data = align_task(data, m.towers[k].task_id, m.towers[k].labels);
			return data;
		}

		std::string read_kind(const std::filesystem::path &path)
		{
			return io::read_container(path).header.value("kind", "");
		}

		std::string iso_time()
		{
			const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
			std::tm tm { };
			gmtime_r(&t, &tm);
			char buf[32];
			std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
			return buf;
		}

		void append_log(const RunConfig &rc, std::span<const std::string> args, int status, std::ostream &err)
		{
			std::ofstream log(rc.log, std::ios::app);
			if (!log)
			{
				err << "warning: cannot append to log '" << rc.log.string() << "'\n";
				return;
			}
			std::string joined;
			for (const auto &a : args)
				joined += (joined.empty() ? "" : " ") + a;
			log << iso_time() << " command=" << (rc.command.empty() ? "-" : rc.command) << " seed=" << rc.seed << " config_sha256=" << rc.settings.hash()
					<< " status=" << status << " " << version_string() << " args=\"" << joined << "\"\n";
		}

		// ---- gen ----

		struct GenArgs
		{
				std::string spec;
				std::string preset;
				std::optional<std::uint64_t> seed;
				std::size_t flows_per_class = 0;
				std::string out;
		};

		void cmd_gen(RunConfig &rc, const GenArgs &a, std::ostream &out)
		{
			if (a.spec.empty() == a.preset.empty())
				throw UsageError("gen: give exactly one of --spec or --preset");
			if (!a.spec.empty())
				require_file(a.spec, "--spec");
			auto spec = a.spec.empty() ? synth::parse_generator_spec(synth::preset_spec_text(a.preset)) : synth::load_generator_spec(a.spec);
			if (a.seed)
				spec.seed = *a.seed;
			if (a.flows_per_class)
				spec.flows_per_class = a.flows_per_class;
			rc.seed = spec.seed;
			spec.validate();
			const std::filesystem::path dir = a.out;
			std::filesystem::create_directories(dir);
			rc.paths["out"] = dir;
			const auto data = synth::generate_dataset(spec);
			synth::write_generated(data, dir / "flows.tsv", dir / "labels.csv");
			io::write_feature_file(dir / "features.snkf", io::FeatureTable::from_dataset(data.dataset, spec.extraction.payload_bytes, spec.extraction.packets));
			out << "generated " << data.dataset.size() << " flows (seed " << spec.seed << ") into " << dir.string() << "\n";
		}

		// ---- ingest ----

		struct IngestArgs
		{
				std::string input;
				std::string format = "auto";
				std::string labels;
				std::string spec;
				std::string flows_out;
				std::string out;
		};

		bool looks_like_pcap(const std::filesystem::path &p)
		{
			std::ifstream in(p, std::ios::binary);
			unsigned char m[4] = { };
			in.read(reinterpret_cast<char*>(m), 4);
			if (in.gcount() != 4)
				return false;
			const std::uint32_t le = m[0] | (m[1] << 8) | (m[2] << 16) | (static_cast<std::uint32_t>(m[3]) << 24);
			const std::uint32_t be = m[3] | (m[2] << 8) | (m[1] << 16) | (static_cast<std::uint32_t>(m[0]) << 24);
			for (std::uint32_t v : { le, be })
				if (v == 0xa1b2c3d4 || v == 0xa1b23c4d)
					return true;
			return false;
		}

		void cmd_ingest(RunConfig &rc, const IngestArgs &a, std::ostream &out)
		{
			require_file(a.input, "--input");
			require_parent(a.out, "--out");
			if (!a.labels.empty())
				require_file(a.labels, "--labels");
			if (!a.spec.empty())
				require_file(a.spec, "--spec");
			if (!a.flows_out.empty())
				require_parent(a.flows_out, "--flows-out");
			if (a.format != "auto" && a.format != "pcap" && a.format != "flows")
				throw UsageError("--format must be auto, pcap or flows");
			rc.paths["input"] = a.input;
			rc.paths["out"] = a.out;

			std::optional<synth::GeneratorSpec> spec;
			if (!a.spec.empty())
				spec = synth::load_generator_spec(a.spec);
			const auto cfg = spec ? spec->extraction : extraction(rc.settings);
			const bool pcap = a.format == "pcap" || (a.format == "auto" && looks_like_pcap(a.input));

			std::vector<ingest::FlowRecord> records;
			if (pcap)
			{
				const auto capture = ingest::read_pcap(a.input);
				const auto assembled = ingest::assemble_flows(capture.packets);
				for (const auto &f : assembled.flows)
					records.push_back( { ingest::default_flow_id(f), f });
				out << "pcap: " << capture.packets.size() << " packets, " << capture.malformed << " malformed, " << capture.ignored << " ignored, "
						<< assembled.skipped << " skipped\n";
			}
			else
			{
				auto read = ingest::read_flow_records(std::filesystem::path(a.input));
				records = std::move(read.records);
				if (read.skipped)
					out << "flow records: " << read.skipped << " malformed lines skipped\n";
			}
			if (!a.flows_out.empty())
			{
				std::ofstream f(a.flows_out);
				if (!f)
					throw FormatError("cannot write '" + a.flows_out + "'");
				ingest::write_flow_records(f, records);
			}

			io::FeatureTable table;
			if (!a.labels.empty())
				table = io::FeatureTable::from_dataset(synth::dataset_from_records(records, a.labels, cfg, spec ? &*spec : nullptr), cfg.payload_bytes, cfg.packets);
			else
			{
				table.payload_bytes = cfg.payload_bytes;
				table.packets = cfg.packets;
				for (const auto &r : records)
				{
					const auto fv = ingest::extract_features(r.flow, cfg);
					table.samples.push_back( { std::vector<double>(fv.flat().begin(), fv.flat().end()), { }, "default", r.flow_id });
				}
			}
			io::write_feature_file(a.out, table);
			out << "wrote " << table.samples.size() << " feature vectors (" << (table.labelled() ? "labelled" : "unlabelled") << ") to " << a.out << "\n";
		}

		// ---- train-expert ----

		struct TrainArgs
		{
				std::string data;
				std::string task;
				std::string id;
				std::string labels;
				std::vector<std::string> domains;
				std::string out;
				std::string trace;
				std::string metrics;
		};

		void cmd_train(RunConfig &rc, const TrainArgs &a, std::ostream &out)
		{
			require_file(a.data, "--data");
			require_parent(a.out, "--out");
			if (!a.trace.empty())
				require_parent(a.trace, "--trace");
			if (!a.metrics.empty())
				require_parent(a.metrics, "--metrics");
			rc.paths["data"] = a.data;
			rc.paths["out"] = a.out;
			const Settings &s = rc.settings;

			auto data = load_dataset(a.data).select_task(a.task);
			if (!a.domains.empty())
				data = data.filter([&](const expert::Sample &x)
				{	return std::find(a.domains.begin(), a.domains.end(), x.domain) != a.domains.end();});
			if (!a.labels.empty())
				data = data.restrict_labels(a.task, expert::LabelMap(split_list(a.labels)));
			if (data.empty())
				throw DataError("no samples left for task '" + a.task + "' after filtering");
			const auto split = split_for(rc, data);
			for (const auto &w : split.warnings)
				out << "warning: " << w << "\n";

			nn::TrainConfig cfg;
			cfg.learning_rate = s.real("expert.learning_rate");
			cfg.batch_size = s.count("expert.batch_size");
			cfg.epochs = s.count("expert.epochs");
			cfg.dropout_rate = s.real("expert.dropout");
			cfg.seed = rc.seed;
			cfg.validate();
			expert::ExpertOptions opt;
			opt.id = a.id.empty() ? a.task : a.id;
			opt.shape = encoder_shape(s);
			opt.hidden = s.count("expert.hidden");
			if (opt.shape.input_dim() != data.feature_dim())
				throw ConfigError("encoder reads " + std::to_string(opt.shape.input_dim()) + " features but the data has " + std::to_string(data.feature_dim()));
			opt.on_epoch = [&](const expert::EpochStats &e)
			{
				out << "epoch " << e.epoch << " train_loss " << number(e.train_loss) << " val_loss " << number(e.val_loss) << " val_acc " << number(e.val_accuracy)
						<< "\n";
			};
			const auto result = expert::train_expert(split.train, split.validation.empty() ? nullptr : &split.validation, cfg, opt);
			expert::save_expert(result.model, a.out);
			if (!a.trace.empty())
				expert::write_loss_trace_csv(a.trace, result.trace);
			if (!split.test.empty())
			{
				const auto m = eval::evaluate(result.model, split.test);
				out << "test accuracy " << number(m.accuracy) << " macro_f1 " << number(m.macro_f1) << " on " << m.total << " flows\n";
				if (!a.metrics.empty())
					eval::write_metrics_csv(a.metrics, { { result.model.task_id, m } });
			}
		}

		// ---- fuse ----

		struct FuseArgs
		{
				std::string mode;
				std::vector<std::string> experts;
				std::string data;
				std::string out;
				std::string task;
				std::string coarse_task;
				std::string fine_task;
				std::vector<std::string> alpha;
				bool unfreeze = false;
				std::string trace;
		};

		/// Fine -> coarse index map read off the labelled data; a fine label seen under
		/// two coarse labels, or never seen, is an error.
		std::vector<std::size_t> observed_parent(const expert::LabeledDataset &d, std::size_t coarse, std::size_t fine)
		{
			const std::size_t none = d.label_map(coarse).size();
			std::vector<std::size_t> parent(d.label_map(fine).size(), none);
			for (const auto &s : d.samples())
			{
				std::size_t &p = parent[s.labels[fine]];
				if (p != none && p != s.labels[coarse])
					throw ConfigError("non-nested label maps: fine label '" + d.label_map(fine).name(s.labels[fine]) + "' appears under two coarse labels");
				p = s.labels[coarse];
			}
			for (std::size_t f = 0; f < parent.size(); f++)
				if (parent[f] == none)
					throw ConfigError("non-nested label maps: fine label '" + d.label_map(fine).name(f) + "' has no samples to place it");
			return parent;
		}

		void write_finetune_csv(const std::filesystem::path &path, const std::vector<std::string> &tasks, const std::vector<fusion::FineTuneEpoch> &trace)
		{
			std::ofstream f(path);
			if (!f)
				throw FormatError("cannot write '" + path.string() + "'");
			f << "epoch,train_loss,val_loss";
			for (const auto &t : tasks)
				f << ",train_loss_" << t << ",val_loss_" << t << ",val_acc_" << t;
			f << "\n";
			for (const auto &e : trace)
			{
				f << e.epoch << ',' << number(e.train_loss) << ',' << number(e.val_loss);
				for (std::size_t k = 0; k < tasks.size(); k++)
				{
					f << ',' << number(e.train_task_loss[k]);
					f << ',' << (k < e.val_task_loss.size() ? number(e.val_task_loss[k]) : "nan");
					f << ',' << (k < e.val_accuracy.size() ? number(e.val_accuracy[k]) : "nan");
				}
				f << "\n";
			}
		}

		void cmd_fuse(RunConfig &rc, const FuseArgs &a, std::ostream &out)
		{
			const auto mode = fusion::parse_fusion_mode(a.mode);
			for (const auto &e : a.experts)
				require_file(e, "--experts");
			require_file(a.data, "--data");
			require_parent(a.out, "--out");
			if (!a.trace.empty())
				require_parent(a.trace, "--trace");
			rc.paths["data"] = a.data;
			rc.paths["out"] = a.out;

			std::vector<expert::ExpertModel> experts;
			for (const auto &e : a.experts)
				experts.push_back(expert::load_expert(e));
			std::vector<std::size_t> all(experts.size());
			std::iota(all.begin(), all.end(), std::size_t(0));
			const auto data = load_dataset(a.data);

			fusion::TaskRelation rel;
			switch (mode)
			{
				case fusion::FusionMode::Independent:
					rel = fusion::TaskRelation::independent(all, experts);
					break;
				case fusion::FusionMode::Expansion:
				{
					std::string task = a.task.empty() ? experts.front().task_id : a.task;
					rel = fusion::TaskRelation::expansion(task, all, experts);
					break;
				}
				case fusion::FusionMode::Refinement:
				{
					if (a.coarse_task.empty() || a.fine_task.empty())
						throw UsageError("fuse --mode III needs --coarse-task and --fine-task");
					const std::size_t c = data.task_index(a.coarse_task);
					const std::size_t f = data.task_index(a.fine_task);
					rel = fusion::TaskRelation::refinement(a.coarse_task, data.label_map(c), a.fine_task, data.label_map(f), observed_parent(data, c, f), all);
					break;
				}
			}

			fusion::FusionOptions fo;
			fo.seed = rc.seed;
			fo.tower_hidden = rc.settings.count("tower.hidden");
			fo.tower_dropout = rc.settings.real("tower.dropout");
			for (const auto &item : a.alpha)
			{
				const auto eq = item.find('=');
				if (eq == std::string::npos)
					throw UsageError("--alpha expects task=weight, got '" + item + "'");
				double w = 0.0;
				const std::string v = item.substr(eq + 1);
				const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), w);
				if (ec != std::errc() || end != v.data() + v.size() || !(w >= 0.0))
					throw UsageError("--alpha weight for '" + item.substr(0, eq) + "' must be a non-negative number");
				fo.loss_weights.emplace_back(item.substr(0, eq), w);
			}
			auto model = fusion::configure_fusion(std::move(experts), { rel }, fo);
			const auto aligned = align_fused(model, data);
			const auto split = split_for(rc, aligned);
			for (const auto &w : split.warnings)
				out << "warning: " << w << "\n";

			fusion::FineTuneOptions opt;
			opt.unfreeze_experts = a.unfreeze;
			opt.on_epoch = [&](const fusion::FineTuneEpoch &e)
			{
				out << "epoch " << e.epoch << " train_loss " << number(e.train_loss) << " val_loss " << number(e.val_loss) << "\n";
			};
			const auto trace = fusion::fine_tune(model, split.train, split.validation.empty() ? nullptr : &split.validation, finetune_config(rc.settings, mode, rc.seed),
					opt);
			fusion::save_fused(model, a.out);
			if (!a.trace.empty())
				write_finetune_csv(a.trace, model.task_ids(), trace);
			out << "fused " << model.experts.size() << " experts into " << model.task_count() << " task(s), mode " << fusion::fusion_mode_name(mode) << "\n";
			if (!split.test.empty())
				for (std::size_t k = 0; k < model.task_count(); k++)
				{
					const auto m = eval::evaluate(model, split.test, model.towers[k].task_id);
					out << "test accuracy " << model.towers[k].task_id << " " << number(m.accuracy) << "\n";
				}
		}

		// ---- classify ----

		struct ClassifyArgs
		{
				std::string model;
				std::string data;
				std::string out;
		};

		void cmd_classify(RunConfig &rc, const ClassifyArgs &a, std::ostream &out)
		{
			require_file(a.model, "--model");
			require_file(a.data, "--data");
			require_parent(a.out, "--out");
			rc.paths["model"] = a.model;
			rc.paths["data"] = a.data;
			rc.paths["out"] = a.out;
			const auto model = fusion::load_fused(a.model);
			const auto table = io::read_feature_file(a.data);
			if (table.dimension() != model.input_dim())
				throw DimensionError("model reads " + std::to_string(model.input_dim()) + " features, file holds " + std::to_string(table.dimension()));
			nn::Tensor inputs = nn::Tensor::matrix(table.samples.size(), table.dimension());
			for (std::size_t i = 0; i < table.samples.size(); i++)
				std::copy(table.samples[i].features.begin(), table.samples[i].features.end(), inputs.row(i).begin());
			const auto results = table.samples.empty() ? std::vector<fusion::Classification> { } : fusion::classify_batch(model, inputs);

			std::ostringstream csv;
			csv << "flow_id";
			for (const auto &t : model.towers)
				csv << ',' << csv_field(t.task_id);
			for (const auto &t : model.towers)
				csv << ',' << csv_field(t.task_id + "_confidence");
			csv << "\n";
			for (std::size_t i = 0; i < results.size(); i++)
			{
				csv << csv_field(table.samples[i].flow_id);
				for (std::size_t k = 0; k < model.task_count(); k++)
					csv << ',' << csv_field(model.towers[k].labels.name(results[i].labels[k]));
				for (std::size_t k = 0; k < model.task_count(); k++)
					csv << ',' << number(results[i].confidences[k][results[i].labels[k]]);
				csv << "\n";
			}
			io::write_file(a.out, csv.str());
			out << "classified " << results.size() << " flows over " << model.task_count() << " task(s)\n";
		}

		// ---- eval ----

		struct EvalArgs
		{
				std::string model;
				std::string data;
				std::string split = "test";
				std::string out;
				std::string confusion;
		};

		void cmd_eval(RunConfig &rc, const EvalArgs &a, std::ostream &out)
		{
			require_file(a.model, "--model");
			require_file(a.data, "--data");
			require_parent(a.out, "--out");
			if (!a.confusion.empty())
				require_parent(a.confusion + "x", "--confusion-prefix");
			rc.paths["model"] = a.model;
			rc.paths["data"] = a.data;
			rc.paths["out"] = a.out;
			const auto data = load_dataset(a.data);
			std::vector<std::pair<std::string, eval::Metrics>> rows;
			std::vector<expert::LabelMap> maps;
			const std::string kind = read_kind(a.model);
			if (kind == "expert")
			{
				const auto m = expert::load_expert(a.model);
				const auto own = data.select_task(m.task_id).restrict_labels(m.task_id, m.label_map);
				const auto split = split_for(rc, own);
				rows.emplace_back(m.task_id, eval::evaluate(m, pick_split(split, a.split, own)));
				maps.push_back(m.label_map);
			}
			else if (kind == "fused")
			{
				const auto m = fusion::load_fused(a.model);
				const auto aligned = align_fused(m, data);
				const auto split = split_for(rc, aligned);
				for (const auto &t : m.towers)
				{
					rows.emplace_back(t.task_id, eval::evaluate(m, pick_split(split, a.split, aligned), t.task_id));
					maps.push_back(t.labels);
				}
			}
			else
				throw FormatError("'" + a.model + "' is neither an expert nor a fused model");
			eval::write_metrics_csv(a.out, rows);
			for (std::size_t i = 0; i < rows.size(); i++)
			{
				out << rows[i].first << ": accuracy " << number(rows[i].second.accuracy) << " macro_precision " << number(rows[i].second.macro_precision)
						<< " macro_f1 " << number(rows[i].second.macro_f1) << " (" << rows[i].second.total << " flows)\n";
				if (!a.confusion.empty())
					eval::write_confusion_csv(a.confusion + rows[i].first + ".csv", rows[i].second, maps[i]);
			}
		}

		// ---- diag ----

		struct ConvergenceArgs
		{
				std::string model;
				std::string data;
				std::string task;
				std::string out;
		};

		void cmd_convergence(RunConfig &rc, const ConvergenceArgs &a, std::ostream &out)
		{
			require_file(a.model, "--model");
			require_file(a.data, "--data");
			if (!a.out.empty())
				require_parent(a.out, "--out");
			rc.paths["model"] = a.model;
			rc.paths["data"] = a.data;
			const Settings &s = rc.settings;
			const auto model = fusion::load_fused(a.model);
			const std::string task = a.task.empty() ? model.towers.front().task_id : a.task;
			const auto aligned = align_fused(model, load_dataset(a.data));
			const auto split = split_for(rc, aligned);
			std::vector<std::size_t> rows(std::min(s.count("convergence.samples"), split.train.size()));
			std::iota(rows.begin(), rows.end(), std::size_t(0));
			eval::TowerDescentOptions opt;
			opt.steps = s.count("convergence.steps");
			opt.probes = s.count("convergence.probes");
			opt.probe_scale = s.real("convergence.probe_scale");
			opt.step_fraction = s.real("convergence.step_fraction");
			opt.restarts = s.count("convergence.restarts");
			opt.seed = rc.seed;
			const auto run = eval::tower_gradient_descent(model, split.train.subset(rows), task, opt);
			if (!a.out.empty())
				eval::write_convergence_csv(a.out, run.trace, run.report);
			out << "task " << task << ", " << rows.size() << " samples, " << opt.steps << " full-batch steps, " << run.attempts << " attempt(s)\n" << eval::format_convergence(run.report);
		}

		struct AnomalyArgs
		{
				std::string model;
				std::string data;
				std::string trace;
				std::string task;
				std::string split = "test";
				std::string out;
		};

		std::vector<double> read_trace_losses(const std::filesystem::path &path)
		{
			std::ifstream in(path);
			if (!in)
				throw FormatError("cannot read '" + path.string() + "'");
			std::string line;
			if (!std::getline(in, line))
				throw FormatError("'" + path.string() + "' is empty");
			const auto header = split_list(line);
			const auto col = std::find(header.begin(), header.end(), "train_loss");
			if (col == header.end())
				throw FormatError("'" + path.string() + "' has no train_loss column");
			const std::size_t idx = static_cast<std::size_t>(col - header.begin());
			std::vector<double> losses;
			while (std::getline(in, line))
			{
				if (line.empty())
					continue;
				std::vector<std::string> cells;
				std::string cell;
				std::istringstream ls(line);
				while (std::getline(ls, cell, ','))
					cells.push_back(cell);
				if (cells.size() <= idx)
					throw FormatError("short row in '" + path.string() + "'");
				double v = 0.0;
				const auto [end, ec] = std::from_chars(cells[idx].data(), cells[idx].data() + cells[idx].size(), v);
				if (ec != std::errc() || end != cells[idx].data() + cells[idx].size())
					throw FormatError("bad loss value '" + cells[idx] + "' in '" + path.string() + "'");
				losses.push_back(v);
			}
			return losses;
		}

		void cmd_anomaly(RunConfig &rc, const AnomalyArgs &a, std::ostream &out)
		{
			require_file(a.model, "--model");
			require_file(a.data, "--data");
			require_file(a.trace, "--trace");
			if (!a.out.empty())
				require_parent(a.out, "--out");
			rc.paths["model"] = a.model;
			rc.paths["data"] = a.data;
			rc.paths["trace"] = a.trace;
			const Settings &s = rc.settings;
			const auto losses = read_trace_losses(a.trace);
			const auto model = fusion::load_fused(a.model);
			const std::string task = a.task.empty() ? model.towers.front().task_id : a.task;
			const auto aligned = align_fused(model, load_dataset(a.data));
			const auto split = split_for(rc, aligned);
			const auto &part = pick_split(split, a.split, aligned);
			const auto pred = eval::fused_predictions(model, part, task);
			const auto truth = part.labels(part.task_index(task));
			std::vector<std::string> domains;
			for (const auto &smp : part.samples())
				domains.push_back(smp.domain);
			eval::AnomalyOptions opt;
			opt.grace_epochs = s.count("anomaly.grace_epochs");
			opt.gap_threshold = s.real("anomaly.gap_threshold");
			opt.relative_tolerance = s.real("anomaly.relative_tolerance");
			const auto report = eval::detect_gate_anomaly(losses, eval::per_domain_accuracy(truth, pred, domains), opt);
			const std::string text = eval::format_anomaly(report);
			out << text;
			if (!a.out.empty())
				io::write_file(a.out, text);
		}
	}

	std::string version_string()
	{
		std::ostringstream s;
		s << "snake=" << SNAKE_VERSION << " compiler=\"" << __VERSION__ << "\" nlohmann_json=" << NLOHMANN_JSON_VERSION_MAJOR << '.' << NLOHMANN_JSON_VERSION_MINOR
				<< '.' << NLOHMANN_JSON_VERSION_PATCH << " cli11=" << CLI11_VERSION << " boost=" << BOOST_LIB_VERSION << " openssl=\"" << OPENSSL_VERSION_TEXT
				<< "\" kernels=" << nn::kernels::backend_name(nn::kernels::active().backend);
		return s.str();
	}

	int run(std::span<const std::string> args, std::ostream &out, std::ostream &err)
	{
		CLI::App app { "Multi-task traffic classification with fused expert models", "snake" };
		app.require_subcommand(1);
		app.set_version_flag("--version", std::string(SNAKE_VERSION));
		std::string config_path;
		std::string log_path = "snake.log";
		std::optional<std::uint64_t> seed;
		app.add_option("--config", config_path, "Sectioned key-value config file overriding defaults");
		app.add_option("--log", log_path, "Log file receiving one reproducibility line per run");
		app.add_option("--seed", seed, "Run seed (overrides [run] seed)");

		GenArgs gen;
		auto *gen_cmd = app.add_subcommand("gen", "Generate a labelled synthetic dataset");
		gen_cmd->add_option("--spec", gen.spec, "Generator spec file");
		gen_cmd->add_option("--preset", gen.preset, "Built-in spec: separable3, mode1, mode2, mode3");
		gen_cmd->add_option("--seed", gen.seed, "Generator seed (overrides the spec)");
		gen_cmd->add_option("--flows-per-class", gen.flows_per_class, "Override flows per class");
		gen_cmd->add_option("--out", gen.out, "Output directory")->required();

		IngestArgs ing;
		auto *ing_cmd = app.add_subcommand("ingest", "Turn a pcap or flow-record file into a feature file");
		ing_cmd->add_option("--input", ing.input, "pcap or flow-record file")->required();
		ing_cmd->add_option("--format", ing.format, "auto, pcap or flows");
		ing_cmd->add_option("--labels", ing.labels, "flow_id,task_id,label CSV");
		ing_cmd->add_option("--spec", ing.spec, "Generator spec fixing label order and feature geometry");
		ing_cmd->add_option("--flows-out", ing.flows_out, "Also write the assembled flows as flow records");
		ing_cmd->add_option("--out", ing.out, "Feature file to write")->required();

		TrainArgs tr;
		auto *tr_cmd = app.add_subcommand("train-expert", "Train one expert on one task");
		tr_cmd->add_option("--data", tr.data, "Feature file")->required();
		tr_cmd->add_option("--task", tr.task, "Task to learn")->required();
		tr_cmd->add_option("--id", tr.id, "Expert id (default: task)");
		tr_cmd->add_option("--labels", tr.labels, "Comma-separated label subset, in output order");
		tr_cmd->add_option("--domain", tr.domains, "Keep only samples from this domain (repeatable)");
		tr_cmd->add_option("--out", tr.out, "Expert model file")->required();
		tr_cmd->add_option("--trace", tr.trace, "Loss trace CSV");
		tr_cmd->add_option("--metrics", tr.metrics, "Test-split metrics CSV");

		FuseArgs fu;
		auto *fu_cmd = app.add_subcommand("fuse", "Configure gates and towers over experts and fine-tune");
		fu_cmd->add_option("--mode", fu.mode, "Task relation: I, II or III")->required();
		fu_cmd->add_option("--experts", fu.experts, "Expert model files")->required()->expected(1, -1);
		fu_cmd->add_option("--data", fu.data, "Labelled feature file for fine-tuning")->required();
		fu_cmd->add_option("--out", fu.out, "Fused model file")->required();
		fu_cmd->add_option("--task", fu.task, "Mode II union task id (default: first expert's task)");
		fu_cmd->add_option("--coarse-task", fu.coarse_task, "Mode III coarse task");
		fu_cmd->add_option("--fine-task", fu.fine_task, "Mode III fine task");
		fu_cmd->add_option("--alpha", fu.alpha, "Loss weight task=value (repeatable)");
		fu_cmd->add_flag("--unfreeze-experts", fu.unfreeze, "Let fine-tuning update expert parameters");
		fu_cmd->add_option("--trace", fu.trace, "Fine-tune trace CSV");

		ClassifyArgs cl;
		auto *cl_cmd = app.add_subcommand("classify", "Per-flow multi-attribute classification");
		cl_cmd->add_option("--model", cl.model, "Fused model file")->required();
		cl_cmd->add_option("--data", cl.data, "Feature file")->required();
		cl_cmd->add_option("--out", cl.out, "Predictions CSV")->required();

		EvalArgs ev;
		auto *ev_cmd = app.add_subcommand("eval", "Accuracy, macro precision/recall/F1 and confusion matrices");
		ev_cmd->add_option("--model", ev.model, "Expert or fused model file")->required();
		ev_cmd->add_option("--data", ev.data, "Labelled feature file")->required();
		ev_cmd->add_option("--split", ev.split, "train, validation, test or all")->check(CLI::IsMember( { "train", "validation", "test", "all" }));
		ev_cmd->add_option("--out", ev.out, "Metrics CSV")->required();
		ev_cmd->add_option("--confusion-prefix", ev.confusion, "Write <prefix><task>.csv confusion matrices");

		auto *diag = app.add_subcommand("diag", "Training diagnostics");
		diag->require_subcommand(1);
		ConvergenceArgs cv;
		auto *cv_cmd = diag->add_subcommand("convergence", "Full-batch tower descent against the convergence bound");
		cv_cmd->add_option("--model", cv.model, "Fused model file")->required();
		cv_cmd->add_option("--data", cv.data, "Labelled feature file")->required();
		cv_cmd->add_option("--task", cv.task, "Task whose tower is trained (default: first)");
		cv_cmd->add_option("--out", cv.out, "Per-step loss/gap/bound CSV");
		AnomalyArgs an;
		auto *an_cmd = diag->add_subcommand("gate-anomaly", "Flag rising fine-tune loss or a per-domain accuracy gap");
		an_cmd->add_option("--model", an.model, "Fused model file")->required();
		an_cmd->add_option("--data", an.data, "Labelled feature file with domains")->required();
		an_cmd->add_option("--trace", an.trace, "Fine-tune trace CSV from fuse")->required();
		an_cmd->add_option("--task", an.task, "Task to score per domain (default: first)");
		an_cmd->add_option("--split", an.split, "train, validation, test or all")->check(CLI::IsMember( { "train", "validation", "test", "all" }));
		an_cmd->add_option("--out", an.out, "Report text file");

		RunConfig rc;
		std::vector<const char*> argv = { "snake" };
		for (const auto &a : args)
			argv.push_back(a.c_str());
		int status = 0;
		try
		{
			app.parse(static_cast<int>(argv.size()), argv.data());
			rc.log = log_path;
			if (!config_path.empty())
			{
				require_file(config_path, "--config");
				rc.settings.load(config_path);
				rc.paths["config"] = config_path;
			}
			if (seed)
				rc.settings.set("run.seed", std::to_string(*seed));
			rc.seed = rc.settings.u64("run.seed");

			if (gen_cmd->parsed())
			{
				rc.command = "gen";
				cmd_gen(rc, gen, out);
			}
			else if (ing_cmd->parsed())
			{
				rc.command = "ingest";
				cmd_ingest(rc, ing, out);
			}
			else if (tr_cmd->parsed())
			{
				rc.command = "train-expert";
				cmd_train(rc, tr, out);
			}
			else if (fu_cmd->parsed())
			{
				rc.command = "fuse";
				cmd_fuse(rc, fu, out);
			}
			else if (cl_cmd->parsed())
			{
				rc.command = "classify";
				cmd_classify(rc, cl, out);
			}
			else if (ev_cmd->parsed())
			{
				rc.command = "eval";
				cmd_eval(rc, ev, out);
			}
			else if (cv_cmd->parsed())
			{
				rc.command = "diag convergence";
				cmd_convergence(rc, cv, out);
			}
			else if (an_cmd->parsed())
			{
				rc.command = "diag gate-anomaly";
				cmd_anomaly(rc, an, out);
			}
		} catch (const CLI::CallForHelp&)
		{
			out << app.help();
			return 0;
		} catch (const CLI::CallForAllHelp&)
		{
			out << app.help("", CLI::AppFormatMode::All);
			return 0;
		} catch (const CLI::CallForVersion&)
		{
			out << SNAKE_VERSION << "\n";
			return 0;
		} catch (const CLI::ParseError &e)
		{
			err << "usage error: " << e.what() << "\nrun 'snake --help' for usage\n";
			status = 2;
		} catch (const UsageError &e)
		{
			err << "usage error: " << e.what() << "\n";
			status = 2;
		} catch (const ConfigError &e)
		{
			err << "config error: " << e.what() << "\n";
			status = 2;
		} catch (const std::exception &e)
		{
			err << "error: " << e.what() << "\n";
			status = 1;
		}
		rc.log = log_path;
		append_log(rc, args, status, err);
		return status;
	}

	int run(int argc, const char *const *argv)
	{
		std::vector<std::string> args(argv + 1, argv + argc);
		return run(args, std::cout, std::cerr);
	}
}
