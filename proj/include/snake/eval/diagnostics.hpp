#pragma once

#include <snake/expert/dataset.hpp>
#include <snake/fusion/fusion.hpp>
#include <snake/nn/params.hpp>

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace snake::eval
{
	/// Gradient of a fixed-batch loss at a flat parameter vector.
	using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

	/// max over snapshot pairs of |grad(a) - grad(b)| / |a - b|; identical pairs are
	/// skipped. Throws DataError with fewer than two snapshots or when all coincide.
	double estimate_lipschitz(const GradientFn &gradient, const std::vector<std::vector<double>> &snapshots);
	double estimate_lipschitz(const GradientFn &gradient, const std::vector<nn::ParamSet> &snapshots);
	/// Same estimate from precomputed (parameters, gradient) pairs.
	double estimate_lipschitz(const std::vector<std::vector<double>> &snapshots, const std::vector<std::vector<double>> &gradients);

	struct LossTrace
	{
			std::vector<double> losses; ///< L(w^t) for t = 0..T
			double learning_rate = 0.0;
			bool full_batch_gd = true; ///< false for Adam or minibatch traces
	};

	enum class Verdict
	{
		Pass,
		Violation,
		AssumptionsNotMet
	};
	std::string_view verdict_name(Verdict v) noexcept;

	struct ConvergenceReport
	{
			double c_hat = 0.0;
			double z_hat = 0.0; ///< 1 / max_t |w^t - w_best|^2, best iterate standing in for the optimum
			double alpha = 0.0;
			bool bound_defined = false; ///< alpha <= 1/c_hat
			std::vector<double> bound_curve; ///< entry t-1 holds the bound at step t
			std::vector<double> gaps; ///< entry t-1 holds L(w^t) - L(w_best)
			std::vector<std::size_t> increases; ///< steps t with L(w^t) > L(w^{t-1})
			std::vector<std::size_t> bound_breaches; ///< steps t with gap above the bound
			Verdict verdict = Verdict::Pass;
			std::string note;
	};

	/// `snapshots` holds w^0..w^T alongside the trace. Throws DataError on an empty
	/// trace or mismatched lengths.
	ConvergenceReport check_convergence(const LossTrace &trace, double c_hat, const std::vector<std::vector<double>> &snapshots);

	struct TowerDescentOptions
	{
			std::size_t steps = 50;
			/// Power-iteration probes around the initial tower for the first c_hat estimate.
			std::size_t probes = 20;
			/// Probe distance relative to the norm of the initial weights.
			double probe_scale = 0.01;
			/// alpha = step_fraction / c_hat.
			double step_fraction = 0.5;
			/// Restarts allowed when the iterates show alpha > 1/c_hat.
			std::size_t restarts = 4;
			std::uint64_t seed = 0;
	};

	struct TowerDescentRun
	{
			LossTrace trace;
			std::vector<std::vector<double>> snapshots; ///< tower weights w^0..w^T
			double c_probe = 0.0; ///< estimate that set alpha
			double c_hat = 0.0; ///< estimate over probes and iterates, used for the verdict
			std::size_t attempts = 0; ///< descent runs, 1 + restarts used
			ConvergenceReport report;
	};

	/// Full-batch plain gradient descent on one task's tower with experts and gates
	/// fixed, eval mode (no dropout), followed by check_convergence.
	TowerDescentRun tower_gradient_descent(const fusion::FusedModel &model, const expert::LabeledDataset &data, std::string_view task_id,
			const TowerDescentOptions &options = { });

	struct DomainAccuracy
	{
			std::string domain;
			double accuracy = 0.0;
			std::size_t samples = 0;
	};

	struct AnomalyOptions
	{
			std::size_t grace_epochs = 4;
			double gap_threshold = 0.15;
			/// An epoch counts as an increase when its loss exceeds the running minimum
			/// by more than this fraction.
			double relative_tolerance = 1e-3;
	};

	struct AnomalyReport
	{
			std::vector<std::size_t> loss_increase_epochs; ///< 1-based, after the grace period
			std::vector<DomainAccuracy> per_domain;
			double gap = 0.0;
			bool gap_checked = false;
			bool flagged = false;
			std::vector<std::string> notes;
	};

	/// `epoch_losses[e-1]` is the fine-tune loss of epoch e. Throws DataError with fewer
	/// than grace_epochs + 1 epochs.
	AnomalyReport detect_gate_anomaly(std::span<const double> epoch_losses, const std::vector<DomainAccuracy> &per_domain, const AnomalyOptions &options = { });

	/// Accuracy grouped by domain for given truth/prediction/domain columns.
	std::vector<DomainAccuracy> per_domain_accuracy(std::span<const std::size_t> truth, std::span<const std::size_t> predicted,
			std::span<const std::string> domains);

	void write_convergence_csv(const std::filesystem::path &path, const LossTrace &trace, const ConvergenceReport &report);
	std::string format_convergence(const ConvergenceReport &report);
	std::string format_anomaly(const AnomalyReport &report);
}
