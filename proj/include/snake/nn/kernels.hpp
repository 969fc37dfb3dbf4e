#pragma once

#include <cstddef>
#include <span>
#include <string_view>

/*
 * Data-parallel inner loops of the network. Every kernel has a scalar reference
 * implementation; vectorized variants (AVX2+FMA on x86-64, NEON on AArch64) are
 * selected once at runtime from the CPU features. The environment variable
 * SNAKE_KERNELS=scalar|avx2|neon overrides the choice.
 *
 * Vector variants reassociate sums, so results agree with the scalar reference
 * to rounding, not bit-for-bit. Within one process the selected table is fixed,
 * which keeps training runs bit-reproducible.
 */
namespace snake::nn::kernels
{
	enum class Backend
	{
		Scalar,
		Avx2,
		Neon
	};

	struct KernelTable
	{
			Backend backend;
			/// sum_i a[i] * b[i]
			double (*dot)(const double *a, const double *b, std::size_t n);
			/// y += alpha * x
			void (*axpy)(double alpha, const double *x, double *y, std::size_t n);
			/// x *= alpha
			void (*scale)(double alpha, double *x, std::size_t n);
			/// y += x
			void (*add)(const double *x, double *y, std::size_t n);
	};

	std::string_view backend_name(Backend b) noexcept;
	bool is_supported(Backend b) noexcept;
	const KernelTable& table(Backend b);

	const KernelTable& active() noexcept;
	/// Switch the process-wide kernel table. Throws if the CPU lacks the instruction set.
	void select(Backend b);

	inline double dot(std::span<const double> a, std::span<const double> b) noexcept
	{
		return active().dot(a.data(), b.data(), a.size());
	}
	inline void axpy(double alpha, std::span<const double> x, std::span<double> y) noexcept
	{
		active().axpy(alpha, x.data(), y.data(), x.size());
	}
	inline void scale(double alpha, std::span<double> x) noexcept
	{
		active().scale(alpha, x.data(), x.size());
	}
	inline void add(std::span<const double> x, std::span<double> y) noexcept
	{
		active().add(x.data(), y.data(), x.size());
	}

	namespace scalar
	{
		double dot(const double *a, const double *b, std::size_t n) noexcept;
		void axpy(double alpha, const double *x, double *y, std::size_t n) noexcept;
		void scale(double alpha, double *x, std::size_t n) noexcept;
		void add(const double *x, double *y, std::size_t n) noexcept;
	}
	namespace avx2
	{
		double dot(const double *a, const double *b, std::size_t n) noexcept;
		void axpy(double alpha, const double *x, double *y, std::size_t n) noexcept;
		void scale(double alpha, double *x, std::size_t n) noexcept;
		void add(const double *x, double *y, std::size_t n) noexcept;
	}
	namespace neon
	{
		double dot(const double *a, const double *b, std::size_t n) noexcept;
		void axpy(double alpha, const double *x, double *y, std::size_t n) noexcept;
		void scale(double alpha, double *x, std::size_t n) noexcept;
		void add(const double *x, double *y, std::size_t n) noexcept;
	}
}
