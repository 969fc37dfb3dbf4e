#include <snake/expert/expert.hpp>
#include <snake/error.hpp>
#include <snake/io/container.hpp>
#include <snake/nn/functional.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

namespace snake::expert
{
	namespace
	{
		constexpr std::size_t inference_chunk = 256;

		/// Applies `fn` to row blocks of `inputs` and stacks the results.
		template<typename Fn>
		nn::Tensor chunked(const nn::Tensor &inputs, std::size_t out_cols, Fn fn)
		{
			const std::size_t rows = inputs.rows(), cols = inputs.cols();
			nn::Tensor out = nn::Tensor::matrix(rows, out_cols);
			for (std::size_t start = 0; start < rows; start += inference_chunk)
			{
				const std::size_t n = std::min(inference_chunk, rows - start);
				nn::Tensor block = nn::Tensor::matrix(n, cols);
				std::memcpy(block.ptr(), inputs.ptr() + start * cols, n * cols * sizeof(double));
				const nn::Tensor result = fn(block);
				std::memcpy(out.ptr() + start * out_cols, result.ptr(), n * out_cols * sizeof(double));
			}
			return out;
		}

		void check_input(const ExpertModel &model, std::size_t cols)
		{
			if (cols != model.input_dim())
				throw DimensionError("expert '" + model.id + "' expects " + std::to_string(model.input_dim()) + " features, got " + std::to_string(cols));
		}

		nn::Tensor softmax_rows(const nn::Tensor &logits)
		{
			nn::Tensor out = logits;
			for (std::size_t r = 0; r < logits.rows(); r++)
			{
				const auto p = nn::softmax(logits.row(r));
				std::copy(p.begin(), p.end(), out.ptr() + r * logits.cols());
			}
			return out;
		}
	}

	void ExpertModel::validate() const
	{
		nn::check_encoder_params(encoder, shape);
		const auto expect = [&](const char *name, std::vector<std::size_t> dims)
		{
			if (!head.contains(name) || head.get(name).shape() != dims)
				throw FormatError("expert '" + id + "' head tensor '" + name + "' has the wrong shape");
		};
		expect("w1", { hidden, input_dim() });
		expect("b1", { hidden });
		expect("w2", { n_target(), hidden });
		expect("b2", { n_target() });
		if (head.tensor_count() != 4)
			throw FormatError("expert '" + id + "' head has unexpected tensors");
	}

	ExpertModel make_expert(std::string id, std::string task_id, LabelMap labels, std::uint64_t seed, const nn::EncoderShape &shape, std::size_t hidden)
	{
		if (labels.size() < 2)
			throw DataError("degenerate task");
		ExpertModel m;
		m.id = std::move(id);
		m.task_id = std::move(task_id);
		m.shape = shape;
		m.hidden = hidden;
		m.encoder = nn::make_encoder_params(m.id + ".encoder", shape, nn::derive_seed(seed, 1));
		m.head = nn::make_dense_head_params(m.id + ".head", shape.input_dim(), hidden, labels.size(), nn::derive_seed(seed, 2));
		m.label_map = std::move(labels);
		return m;
	}

	TrainResult train_expert(const LabeledDataset &train, const LabeledDataset *validation, const nn::TrainConfig &cfg, const ExpertOptions &options)
	{
		cfg.validate();
		if (train.task_count() != 1)
			throw DataError("expert training needs a single-task dataset, got " + std::to_string(train.task_count()) + " tasks");
		if (train.feature_dim() != options.shape.input_dim())
			throw DimensionError("dataset dimension " + std::to_string(train.feature_dim()) + " does not match encoder input " + std::to_string(options.shape.input_dim()));
		const auto counts = train.class_counts(0);
		if (std::count_if(counts.begin(), counts.end(), [](std::size_t c)
		{	return c > 0;}) < 2)
			throw DataError("degenerate task");
		if (validation && (validation->task_count() != 1 || validation->label_map(0) != train.label_map(0)))
			throw DataError("validation set must share the training task and labels");

		TrainResult result;
		result.model = make_expert(options.id, train.task_ids()[0], train.label_map(0), cfg.seed, options.shape, options.hidden);
		ExpertModel &model = result.model;
		nn::AdamState adam;
		std::vector<nn::ParamSet*> sets = { &model.encoder, &model.head };

		const nn::Tensor all_features = train.features();
		const std::vector<std::size_t> all_labels = train.labels(0);
		std::vector<std::size_t> order(train.size());
		std::iota(order.begin(), order.end(), 0);
		const std::size_t dim = train.feature_dim();

		for (std::size_t epoch = 1; epoch <= cfg.epochs; epoch++)
		{
			nn::CounterStream shuffler(nn::derive_seed(cfg.seed, 0x5348000000ULL + epoch));
			nn::shuffle(std::span<std::size_t>(order), shuffler);
			double loss_sum = 0.0;
			std::size_t batches = 0;
			for (std::size_t start = 0; start < order.size(); start += cfg.batch_size)
			{
				const std::size_t n = std::min(cfg.batch_size, order.size() - start);
				nn::Tensor x = nn::Tensor::matrix(n, dim);
				std::vector<std::size_t> y(n);
				for (std::size_t i = 0; i < n; i++)
				{
					std::memcpy(x.ptr() + i * dim, all_features.ptr() + order[start + i] * dim, dim * sizeof(double));
					y[i] = all_labels[order[start + i]];
				}
				nn::Tape tape;
				nn::CounterStream dropout(nn::derive_seed(cfg.seed, (epoch << 32) + batches));
				const nn::Var h = nn::encoder_forward(tape, model.encoder, model.shape, tape.constant(x), true, dropout, cfg.dropout_rate);
				const nn::Var logits = nn::dense_head_forward(tape, model.head, h, true, dropout, cfg.dropout_rate);
				const nn::Var loss = nn::ops::softmax_cross_entropy(logits, y);
				const double value = tape.value(loss)[0];
				if (!std::isfinite(value))
					throw Error("training loss became non-finite at epoch " + std::to_string(epoch));
				const nn::Gradients grads = tape.backward(loss);
				nn::adam_step(sets, grads, adam, cfg.learning_rate);
				loss_sum += value;
				batches++;
			}
			EpochStats stats;
			stats.epoch = epoch;
			stats.train_loss = loss_sum / static_cast<double>(batches);
			stats.val_loss = std::numeric_limits<double>::quiet_NaN();
			stats.val_accuracy = std::numeric_limits<double>::quiet_NaN();
			if (validation && !validation->empty())
				std::tie(stats.val_loss, stats.val_accuracy) = expert_loss_accuracy(model, *validation);
			result.trace.push_back(stats);
			if (options.on_epoch)
				options.on_epoch(stats);
		}
		return result;
	}

	nn::Tensor expert_representations(const ExpertModel &model, const nn::Tensor &inputs)
	{
		check_input(model, inputs.cols());
		return chunked(inputs, model.input_dim(), [&](const nn::Tensor &block)
		{
			return nn::encode_batch(model.encoder, model.shape, block);
		});
	}

	std::vector<double> expert_representation(const ExpertModel &model, std::span<const double> x)
	{
		check_input(model, x.size());
		const nn::Tensor out = nn::encode_batch(model.encoder, model.shape, nn::Tensor( { 1, x.size() }, std::vector<double>(x.begin(), x.end())));
		return std::vector<double>(out.data().begin(), out.data().end());
	}

	std::vector<double> expert_predict(const ExpertModel &model, std::span<const double> x, std::vector<double> *hidden_out)
	{
		check_input(model, x.size());
		nn::Tape tape;
		nn::CounterStream stream(0);
		const nn::Var input = tape.constant(nn::Tensor( { 1, x.size() }, std::vector<double>(x.begin(), x.end())));
		const nn::Var h = nn::encoder_forward(tape, model.encoder, model.shape, input, false, stream, 0.0);
		const nn::Var logits = nn::dense_head_forward(tape, model.head, h, false, stream, 0.0);
		if (hidden_out)
			hidden_out->assign(tape.value(h).data().begin(), tape.value(h).data().end());
		return nn::softmax(tape.value(logits).data());
	}

	nn::Tensor expert_predict_batch(const ExpertModel &model, const nn::Tensor &inputs)
	{
		check_input(model, inputs.cols());
		return chunked(inputs, model.n_target(), [&](const nn::Tensor &block)
		{
			return softmax_rows(nn::dense_head_logits(model.head, nn::encode_batch(model.encoder, model.shape, block)));
		});
	}

	std::pair<double, double> expert_loss_accuracy(const ExpertModel &model, const LabeledDataset &data)
	{
		if (data.empty())
			throw DataError("empty evaluation set");
		const std::size_t task = data.task_index(model.task_id);
		if (data.label_map(task) != model.label_map)
			throw DataError("evaluation labels differ from the expert's label map");
		const nn::Tensor probs = expert_predict_batch(model, data.features());
		const auto labels = data.labels(task);
		double loss = 0.0;
		std::size_t correct = 0;
		for (std::size_t i = 0; i < labels.size(); i++)
		{
			loss += nn::cross_entropy(probs.row(i), labels[i]);
			correct += nn::argmax(probs.row(i)) == labels[i];
		}
		const double n = static_cast<double>(labels.size());
		return { loss / n, static_cast<double>(correct) / n };
	}

	nlohmann::json expert_header(const ExpertModel &model)
	{
		return { { "id", model.id }, { "task", model.task_id }, { "labels", model.label_map.names() }, { "hidden", model.hidden }, { "encoder", { {
				"tokens", model.shape.tokens }, { "width", model.shape.width }, { "heads", model.shape.heads }, { "feed_forward", model.shape.feed_forward } } },
				{ "encoder_set", model.encoder.name() }, { "head_set", model.head.name() }, { "frozen", model.frozen() } };
	}

	void add_expert_tensors(io::Container &c, const std::string &prefix, const ExpertModel &model)
	{
		c.add_params(prefix + "encoder/", model.encoder);
		c.add_params(prefix + "head/", model.head);
	}

	ExpertModel expert_from_container(const io::Container &c, const nlohmann::json &header, const std::string &prefix)
	{
		ExpertModel m;
		try
		{
			m.id = header.at("id").get<std::string>();
			m.task_id = header.at("task").get<std::string>();
			m.label_map = LabelMap(header.at("labels").get<std::vector<std::string>>());
			m.hidden = header.at("hidden").get<std::size_t>();
			const auto &e = header.at("encoder");
			m.shape.tokens = e.at("tokens").get<std::size_t>();
			m.shape.width = e.at("width").get<std::size_t>();
			m.shape.heads = e.at("heads").get<std::size_t>();
			m.shape.feed_forward = e.at("feed_forward").get<std::size_t>();
			m.encoder = c.params(prefix + "encoder/", header.at("encoder_set").get<std::string>());
			m.head = c.params(prefix + "head/", header.at("head_set").get<std::string>());
			m.set_frozen(header.at("frozen").get<bool>());
		} catch (const nlohmann::json::exception &ex)
		{
			throw FormatError("expert header is malformed: " + std::string(ex.what()));
		} catch (const ConfigError &ex)
		{
			throw FormatError("expert header is malformed: " + std::string(ex.what()));
		}
		try
		{
			m.validate();
		} catch (const FormatError&)
		{
			throw;
		} catch (const Error &ex)
		{
			throw FormatError("expert '" + m.id + "' does not match its declared geometry: " + ex.what());
		}
		return m;
	}

	void save_expert(const ExpertModel &model, const std::filesystem::path &path)
	{
		model.validate();
		io::Container c;
		c.header = expert_header(model);
		c.header["kind"] = "expert";
		add_expert_tensors(c, "", model);
		io::write_container(path, c);
	}

	ExpertModel load_expert(const std::filesystem::path &path)
	{
		const io::Container c = io::read_container(path);
		if (c.header.value("kind", "") != "expert")
			throw FormatError("'" + path.string() + "' is not an expert model");
		return expert_from_container(c, c.header, "");
	}

	void write_loss_trace_csv(const std::filesystem::path &path, const std::vector<EpochStats> &trace)
	{
		std::ofstream out(path);
		if (!out)
			throw FormatError("cannot write '" + path.string() + "'");
		out.precision(17);
		out << "epoch,train_loss,val_loss,val_acc\n";
		for (const EpochStats &s : trace)
			out << s.epoch << ',' << s.train_loss << ',' << s.val_loss << ',' << s.val_accuracy << '\n';
	}
}
