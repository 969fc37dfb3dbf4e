#include <snake/eval/diagnostics.hpp>
#include <snake/error.hpp>
#include <snake/nn/ops.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace snake::eval
{
	namespace
	{
		/// Slack on alpha <= 1/c_hat so an exact 1/c step is not rejected by rounding.
		constexpr double step_slack = 1e-9;

		double distance_squared(std::span<const double> a, std::span<const double> b)
		{
			if (a.size() != b.size())
				throw DimensionError("parameter snapshots differ in length");
			double s = 0.0;
			for (std::size_t i = 0; i < a.size(); i++)
			{
				const double d = a[i] - b[i];
				s += d * d;
			}
			return s;
		}
	}

	double estimate_lipschitz(const std::vector<std::vector<double>> &snapshots, const std::vector<std::vector<double>> &gradients)
	{
		if (snapshots.size() < 2)
			throw DataError("Lipschitz estimate needs at least two snapshots");
		if (gradients.size() != snapshots.size())
			throw DimensionError("one gradient per snapshot required");
		double best = 0.0;
		bool any = false;
		for (std::size_t a = 0; a < snapshots.size(); a++)
			for (std::size_t b = a + 1; b < snapshots.size(); b++)
			{
				const double dw = distance_squared(snapshots[a], snapshots[b]);
				if (dw == 0.0)
					continue;
				any = true;
				best = std::max(best, std::sqrt(distance_squared(gradients[a], gradients[b]) / dw));
			}
		if (!any)
			throw DataError("all parameter snapshots are identical");
		return best;
	}

	double estimate_lipschitz(const GradientFn &gradient, const std::vector<std::vector<double>> &snapshots)
	{
		if (snapshots.size() < 2)
			throw DataError("Lipschitz estimate needs at least two snapshots");
		std::vector<std::vector<double>> grads;
		grads.reserve(snapshots.size());
		for (const auto &w : snapshots)
		{
			grads.push_back(gradient(w));
			if (grads.back().size() != w.size())
				throw DimensionError("gradient length differs from the parameter vector");
		}
		return estimate_lipschitz(snapshots, grads);
	}

	double estimate_lipschitz(const GradientFn &gradient, const std::vector<nn::ParamSet> &snapshots)
	{
		std::vector<std::vector<double>> flat;
		for (const nn::ParamSet &s : snapshots)
			flat.push_back(s.flatten());
		return estimate_lipschitz(gradient, flat);
	}

	std::string_view verdict_name(Verdict v) noexcept
	{
		switch (v)
		{
			case Verdict::Pass:
				return "PASS";
			case Verdict::Violation:
				return "VIOLATION";
			case Verdict::AssumptionsNotMet:
				return "ASSUMPTIONS-NOT-MET";
		}
		return "?";
	}

	ConvergenceReport check_convergence(const LossTrace &trace, double c_hat, const std::vector<std::vector<double>> &snapshots)
	{
		if (trace.losses.empty())
			throw DataError("empty loss trace");
		if (snapshots.size() != trace.losses.size())
			throw DataError("one parameter snapshot per recorded loss required");
		if (!(c_hat > 0.0) || !std::isfinite(c_hat))
			throw DataError("Lipschitz estimate must be positive and finite");
		if (!(trace.learning_rate > 0.0))
			throw DataError("learning rate must be positive");

		ConvergenceReport r;
		r.c_hat = c_hat;
		r.alpha = trace.learning_rate;
		const std::size_t T = trace.losses.size() - 1;
		for (std::size_t t = 1; t <= T; t++)
			if (!(trace.losses[t] <= trace.losses[t - 1]))
				r.increases.push_back(t);

		const std::size_t best = static_cast<std::size_t>(std::min_element(trace.losses.begin(), trace.losses.end()) - trace.losses.begin());
		double farthest = 0.0;
		for (const auto &w : snapshots)
			farthest = std::max(farthest, distance_squared(w, snapshots[best]));
		r.z_hat = farthest > 0.0 ? 1.0 / farthest : std::numeric_limits<double>::infinity();
		r.bound_defined = r.alpha <= (1.0 + step_slack) / c_hat;

		for (std::size_t t = 1; t <= T; t++)
			r.gaps.push_back(trace.losses[t] - trace.losses[best]);
		if (r.bound_defined)
		{
			const double shrink = std::max(0.0, 1.0 - c_hat * r.alpha / 2.0);
			for (std::size_t t = 1; t <= T; t++)
			{
				const double bound = 1.0 / (static_cast<double>(t) * r.z_hat * r.alpha * shrink);
				r.bound_curve.push_back(bound);
				if (r.gaps[t - 1] > bound)
					r.bound_breaches.push_back(t);
			}
		}

		if (!trace.full_batch_gd)
		{
			r.verdict = Verdict::AssumptionsNotMet;
			r.note = "trace is not full-batch gradient descent; monotonicity reported for reference only";
		}
		else if (!r.increases.empty())
		{
			r.verdict = Verdict::Violation;
			r.note = "loss increased at " + std::to_string(r.increases.size()) + " step(s)";
		}
		else if (!r.bound_defined)
		{
			r.verdict = Verdict::AssumptionsNotMet;
			r.note = "step size exceeds 1/c_hat; the bound is undefined";
		}
		else if (!r.bound_breaches.empty())
		{
			r.verdict = Verdict::Violation;
			r.note = "gap to the best iterate exceeds the bound at " + std::to_string(r.bound_breaches.size()) + " step(s)";
		}
		else
		{
			r.verdict = Verdict::Pass;
			r.note = "best iterate used in place of the unknown optimum";
		}
		return r;
	}

	AnomalyReport detect_gate_anomaly(std::span<const double> epoch_losses, const std::vector<DomainAccuracy> &per_domain, const AnomalyOptions &options)
	{
		if (epoch_losses.size() < options.grace_epochs + 1)
			throw DataError("anomaly detection needs at least " + std::to_string(options.grace_epochs + 1) + " epochs, got "
					+ std::to_string(epoch_losses.size()));
		AnomalyReport r;
		r.per_domain = per_domain;
		double running_min = std::numeric_limits<double>::infinity();
		for (std::size_t e = 1; e <= epoch_losses.size(); e++)
		{
			const double loss = epoch_losses[e - 1];
			if (!std::isfinite(loss))
				throw DataError("non-finite loss at epoch " + std::to_string(e));
			if (e > options.grace_epochs && loss > running_min + options.relative_tolerance * std::abs(running_min))
				r.loss_increase_epochs.push_back(e);
			running_min = std::min(running_min, loss);
		}
		if (per_domain.size() >= 2)
		{
			r.gap_checked = true;
			const auto [lo, hi] = std::minmax_element(per_domain.begin(), per_domain.end(), [](const DomainAccuracy &a, const DomainAccuracy &b)
			{	return a.accuracy < b.accuracy;});
			r.gap = hi->accuracy - lo->accuracy;
		}
		else
			r.notes.push_back("fewer than two domains; accuracy gap check skipped");
		if (!r.loss_increase_epochs.empty())
			r.notes.push_back("loss rose after the grace period");
		if (r.gap_checked && r.gap > options.gap_threshold)
			r.notes.push_back("per-domain accuracy gap above threshold");
		r.flagged = !r.loss_increase_epochs.empty() || (r.gap_checked && r.gap > options.gap_threshold);
		return r;
	}

	std::vector<DomainAccuracy> per_domain_accuracy(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
			std::span<const std::string> domains)
	{
		if (truth.size() != predicted.size() || truth.size() != domains.size())
			throw DimensionError("truth, prediction and domain columns differ in length");
		std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
		for (std::size_t i = 0; i < truth.size(); i++)
		{
			auto &[correct, total] = counts[domains[i]];
			correct += truth[i] == predicted[i];
			total++;
		}
		std::vector<DomainAccuracy> out;
		for (const auto &[domain, c] : counts)
			out.push_back(DomainAccuracy { domain, static_cast<double>(c.first) / static_cast<double>(c.second), c.second });
		return out;
	}

	void write_convergence_csv(const std::filesystem::path &path, const LossTrace &trace, const ConvergenceReport &report)
	{
		std::ofstream out(path);
		if (!out)
			throw FormatError("cannot write '" + path.string() + "'");
		out.precision(17);
		out << "step,loss,gap,bound\n";
		for (std::size_t t = 0; t < trace.losses.size(); t++)
		{
			out << t << ',' << trace.losses[t] << ',';
			if (t > 0)
			{
				out << report.gaps[t - 1] << ',';
				if (report.bound_defined)
					out << report.bound_curve[t - 1];
			}
			else
				out << ',';
			out << '\n';
		}
	}

	std::string format_convergence(const ConvergenceReport &r)
	{
		std::ostringstream s;
		s.precision(6);
		s << "verdict: " << verdict_name(r.verdict) << "\n";
		s << "c_hat: " << r.c_hat << "  alpha: " << r.alpha << "  alpha*c_hat: " << r.alpha * r.c_hat << "\n";
		s << "z_hat: " << r.z_hat << "  bound defined: " << (r.bound_defined ? "yes" : "no") << "\n";
		s << "loss increases: " << r.increases.size() << "  bound breaches: " << r.bound_breaches.size() << "\n";
		s << "note: " << r.note << "\n";
		return s.str();
	}

	std::string format_anomaly(const AnomalyReport &r)
	{
		std::ostringstream s;
		s.precision(4);
		s << "flagged: " << (r.flagged ? "yes" : "no") << "\n";
		s << "loss increase epochs:";
		for (std::size_t e : r.loss_increase_epochs)
			s << ' ' << e;
		s << "\n";
		for (const auto &d : r.per_domain)
			s << "domain " << d.domain << ": accuracy " << d.accuracy << " over " << d.samples << " samples\n";
		if (r.gap_checked)
			s << "accuracy gap: " << r.gap << "\n";
		for (const auto &n : r.notes)
			s << "note: " << n << "\n";
		return s.str();
	}
}

namespace snake::eval
{
	TowerDescentRun tower_gradient_descent(const fusion::FusedModel &model, const expert::LabeledDataset &data, std::string_view task_id,
			const TowerDescentOptions &options)
	{
		if (options.steps == 0)
			throw ConfigError("gradient descent needs at least one step");
		if (!(options.step_fraction > 0.0))
			throw ConfigError("step fraction must be positive");
		if (data.empty())
			throw DataError("gradient descent needs a non-empty batch");
		const std::size_t k = model.task_index(task_id);
		const std::size_t dt = data.task_index(task_id);
		if (data.label_map(dt) != model.towers[k].labels)
			throw DataError("dataset labels for task '" + std::string(task_id) + "' differ from the model's");

		const nn::Tensor inputs = data.features();
		const std::vector<std::size_t> labels = data.labels(dt);
		std::vector<nn::Tensor> reps;
		for (const auto &e : model.experts)
			reps.push_back(expert::expert_representations(e, inputs));

		fusion::FusedModel work = model;
		nn::ParamSet &tower = work.towers[k].layers;
		auto evaluate = [&](std::span<const double> w, std::vector<double> *grad)
		{
			tower.unflatten(w);
			nn::Tape tape;
			nn::CounterStream unused(0);
			const auto logits = fusion::record_fused_logits(tape, work, inputs, &reps, false, unused);
			const nn::Var loss = nn::ops::softmax_cross_entropy(logits[k], labels);
			const double value = tape.value(loss)[0];
			if (grad)
				*grad = nn::flatten_gradients(tower, tape.backward(loss));
			return value;
		};

		// Probes follow a finite-difference power iteration, so the pairs (w0, probe)
		// approach the direction of largest curvature.
		const std::vector<double> w0 = tower.flatten();
		double norm0 = 0.0;
		for (double v : w0)
			norm0 += v * v;
		const double radius = options.probe_scale * std::max(std::sqrt(norm0), 1e-12);
		nn::CounterStream rng(nn::derive_seed(options.seed, 0x6c6970));
		std::vector<double> direction(w0.size());
		for (double &v : direction)
			v = rng.next_normal();
		std::vector<std::vector<double>> points = { w0 }, grads(1);
		evaluate(w0, &grads[0]);
		for (std::size_t p = 0; p < options.probes; p++)
		{
			double dn = 0.0;
			for (double v : direction)
				dn += v * v;
			dn = std::sqrt(dn);
			if (dn == 0.0)
				break;
			std::vector<double> w = w0;
			for (std::size_t i = 0; i < w.size(); i++)
				w[i] += radius * direction[i] / dn;
			grads.emplace_back();
			evaluate(w, &grads.back());
			for (std::size_t i = 0; i < w.size(); i++)
				direction[i] = grads.back()[i] - grads[0][i];
			points.push_back(std::move(w));
		}

		// A run whose own iterates reveal alpha > 1/c_hat restarts from w0 with the
		// larger estimate; every point seen so far stays in the estimate.
		TowerDescentRun run;
		run.c_probe = estimate_lipschitz(points, grads);
		for (run.attempts = 1;; run.attempts++)
		{
			const double alpha = options.step_fraction / run.c_probe;
			run.trace = LossTrace { { }, alpha, true };
			run.snapshots.clear();
			std::vector<double> w = w0;
			for (std::size_t t = 0; t <= options.steps; t++)
			{
				std::vector<double> g;
				run.trace.losses.push_back(evaluate(w, &g));
				run.snapshots.push_back(w);
				if (t > 0)
				{
					points.push_back(w);
					grads.push_back(g);
				}
				if (t < options.steps)
					for (std::size_t i = 0; i < w.size(); i++)
						w[i] -= alpha * g[i];
			}
			run.c_hat = estimate_lipschitz(points, grads);
			if (alpha * run.c_hat <= 1.0 || run.attempts > options.restarts)
				break;
			run.c_probe = run.c_hat;
		}
		run.report = check_convergence(run.trace, run.c_hat, run.snapshots);
		return run;
	}
}
