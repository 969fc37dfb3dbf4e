#include <snake/eval/metrics.hpp>
#include <snake/error.hpp>
#include <snake/nn/functional.hpp>
#include <snake/nn/random.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

namespace snake::eval
{
	void SplitRatios::validate() const
	{
		if (train < 0.0 || validation < 0.0 || test < 0.0)
			throw ConfigError("split ratios must be non-negative");
		if (std::abs(train + validation + test - 1.0) > 1e-9)
			throw ConfigError("split ratios must sum to 1");
	}

	std::array<std::vector<std::size_t>, 3> split_indices(const expert::LabeledDataset &data, const SplitRatios &ratios, std::uint64_t seed,
			std::vector<std::string> *warnings)
	{
		ratios.validate();
		const std::size_t n = data.size();
		std::map<std::vector<std::size_t>, std::vector<std::size_t>> classes;
		for (std::size_t i = 0; i < n; i++)
			classes[data[i].labels].push_back(i);

		// each sample gets a position in [0,1); cutting the sorted positions at the
		// ratio boundaries spreads every class evenly across the three parts
		nn::CounterStream rng(nn::derive_seed(seed, 0x73706c6974ULL));
		std::vector<std::pair<double, std::size_t>> keyed;
		keyed.reserve(n);
		for (auto &[labels, members] : classes)
		{
			nn::shuffle(std::span<std::size_t>(members), rng);
			if (members.size() < 3)
			{
				if (warnings)
				{
					std::string name;
					for (std::size_t t = 0; t < labels.size(); t++)
						name += (t ? "/" : "") + data.label_map(t).name(labels[t]);
					warnings->push_back("class " + name + " has " + std::to_string(members.size()) + " samples; placed without stratification");
				}
				for (std::size_t i : members)
					keyed.emplace_back(rng.next_uniform(), i);
				continue;
			}
			const double offset = rng.next_uniform();
			for (std::size_t r = 0; r < members.size(); r++)
				keyed.emplace_back((static_cast<double>(r) + offset) / static_cast<double>(members.size()), members[r]);
		}
		std::sort(keyed.begin(), keyed.end());

		const std::size_t n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.train));
		const std::size_t n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios.validation)));
		std::array<std::vector<std::size_t>, 3> out;
		for (std::size_t i = 0; i < keyed.size(); i++)
			out[i < n_train ? 0 : (i < n_train + n_val ? 1 : 2)].push_back(keyed[i].second);
		for (auto &part : out)
			std::sort(part.begin(), part.end());
		return out;
	}

	Split split_dataset(const expert::LabeledDataset &data, const SplitRatios &ratios, std::uint64_t seed)
	{
		Split s;
		const auto idx = split_indices(data, ratios, seed, &s.warnings);
		s.train = data.subset(idx[0]);
		s.validation = data.subset(idx[1]);
		s.test = data.subset(idx[2]);
		return s;
	}

	Metrics compute_metrics(std::span<const std::size_t> truth, std::span<const std::size_t> predicted, std::size_t classes)
	{
		if (truth.size() != predicted.size())
			throw DimensionError("truth and prediction counts differ");
		if (truth.empty())
			throw DataError("cannot compute metrics on an empty set");
		Metrics m;
		m.total = truth.size();
		m.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
		for (std::size_t i = 0; i < truth.size(); i++)
		{
			if (truth[i] >= classes || predicted[i] >= classes)
				throw DataError("label index out of range in metrics");
			m.confusion[truth[i]][predicted[i]]++;
		}
		std::size_t correct = 0, included = 0;
		m.included.assign(classes, false);
		for (std::size_t c = 0; c < classes; c++)
		{
			correct += m.confusion[c][c];
			std::size_t row = 0, col = 0;
			for (std::size_t k = 0; k < classes; k++)
			{
				row += m.confusion[c][k];
				col += m.confusion[k][c];
			}
			if (row == 0 && col == 0)
				continue;
			m.included[c] = true;
			included++;
			const double tp = static_cast<double>(m.confusion[c][c]);
			const double precision = col ? tp / static_cast<double>(col) : 0.0;
			const double recall = row ? tp / static_cast<double>(row) : 0.0;
			m.macro_precision += precision;
			m.macro_recall += recall;
			m.macro_f1 += precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
		}
		m.accuracy = static_cast<double>(correct) / static_cast<double>(m.total);
		m.macro_precision /= static_cast<double>(included);
		m.macro_recall /= static_cast<double>(included);
		m.macro_f1 /= static_cast<double>(included);
		return m;
	}

	Metrics evaluate(const expert::ExpertModel &model, const expert::LabeledDataset &test)
	{
		if (test.empty())
			throw DataError("empty test set");
		const std::size_t task = test.task_index(model.task_id);
		if (test.label_map(task) != model.label_map)
			throw DataError("test labels differ from the expert's label map");
		const nn::Tensor probs = expert::expert_predict_batch(model, test.features());
		std::vector<std::size_t> predicted(test.size());
		for (std::size_t i = 0; i < predicted.size(); i++)
			predicted[i] = nn::argmax(probs.row(i));
		return compute_metrics(test.labels(task), predicted, model.n_target());
	}

	std::vector<std::size_t> fused_predictions(const fusion::FusedModel &model, const expert::LabeledDataset &data, const std::string &task_id)
	{
		const std::size_t k = model.task_index(task_id);
		const auto probs = fusion::fused_probabilities(model, data.features());
		std::vector<std::size_t> predicted(data.size());
		for (std::size_t i = 0; i < predicted.size(); i++)
			predicted[i] = nn::argmax(probs[k].row(i));
		return predicted;
	}

	Metrics evaluate(const fusion::FusedModel &model, const expert::LabeledDataset &test, const std::string &task_id)
	{
		if (test.empty())
			throw DataError("empty test set");
		const std::size_t k = model.task_index(task_id);
		const std::size_t task = test.task_index(task_id);
		if (test.label_map(task) != model.towers[k].labels)
			throw DataError("test labels differ from the tower's label map");
		return compute_metrics(test.labels(task), fused_predictions(model, test, task_id), model.towers[k].labels.size());
	}

	void write_metrics_csv(const std::filesystem::path &path, const std::vector<std::pair<std::string, Metrics>> &rows)
	{
		std::ofstream out(path);
		if (!out)
			throw FormatError("cannot write '" + path.string() + "'");
		out.precision(17);
		out << "task,samples,accuracy,macro_precision,macro_recall,macro_f1\n";
		for (const auto &[task, m] : rows)
			out << task << ',' << m.total << ',' << m.accuracy << ',' << m.macro_precision << ',' << m.macro_recall << ',' << m.macro_f1 << '\n';
	}

	void write_confusion_csv(const std::filesystem::path &path, const Metrics &m, const expert::LabelMap &labels)
	{
		std::ofstream out(path);
		if (!out)
			throw FormatError("cannot write '" + path.string() + "'");
		out << "truth";
		for (const auto &n : labels.names())
			out << ',' << n;
		out << '\n';
		for (std::size_t r = 0; r < m.confusion.size(); r++)
		{
			out << labels.name(r);
			for (std::size_t v : m.confusion[r])
				out << ',' << v;
			out << '\n';
		}
	}
}
