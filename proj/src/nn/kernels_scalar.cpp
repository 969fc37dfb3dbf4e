#include <snake/nn/kernels.hpp>

namespace snake::nn::kernels::scalar
{
	double dot(const double *a, const double *b, std::size_t n) noexcept
	{
		double result = 0.0;
		for (std::size_t i = 0; i < n; i++)
			result += a[i] * b[i];
		return result;
	}
	void axpy(double alpha, const double *x, double *y, std::size_t n) noexcept
	{
		for (std::size_t i = 0; i < n; i++)
			y[i] += alpha * x[i];
	}
	void scale(double alpha, double *x, std::size_t n) noexcept
	{
		for (std::size_t i = 0; i < n; i++)
			x[i] *= alpha;
	}
	void add(const double *x, double *y, std::size_t n) noexcept
	{
		for (std::size_t i = 0; i < n; i++)
			y[i] += x[i];
	}
}
