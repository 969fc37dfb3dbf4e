#include <snake/nn/kernels.hpp>

#if defined(__aarch64__)
#  include <arm_neon.h>

namespace snake::nn::kernels::neon
{
	double dot(const double *a, const double *b, std::size_t n) noexcept
	{
		float64x2_t acc0 = vdupq_n_f64(0.0);
		float64x2_t acc1 = vdupq_n_f64(0.0);
		std::size_t i = 0;
		for (; i + 4 <= n; i += 4)
		{
			acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
			acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
		}
		double result = vaddvq_f64(vaddq_f64(acc0, acc1));
		for (; i < n; i++)
			result += a[i] * b[i];
		return result;
	}
	void axpy(double alpha, const double *x, double *y, std::size_t n) noexcept
	{
		const float64x2_t a = vdupq_n_f64(alpha);
		std::size_t i = 0;
		for (; i + 2 <= n; i += 2)
			vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), a, vld1q_f64(x + i)));
		for (; i < n; i++)
			y[i] += alpha * x[i];
	}
	void scale(double alpha, double *x, std::size_t n) noexcept
	{
		const float64x2_t a = vdupq_n_f64(alpha);
		std::size_t i = 0;
		for (; i + 2 <= n; i += 2)
			vst1q_f64(x + i, vmulq_f64(a, vld1q_f64(x + i)));
		for (; i < n; i++)
			x[i] *= alpha;
	}
	void add(const double *x, double *y, std::size_t n) noexcept
	{
		std::size_t i = 0;
		for (; i + 2 <= n; i += 2)
			vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vld1q_f64(x + i)));
		for (; i < n; i++)
			y[i] += x[i];
	}
}
#endif
