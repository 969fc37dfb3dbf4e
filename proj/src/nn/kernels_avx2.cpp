#include <snake/nn/kernels.hpp>

#if defined(__x86_64__) || defined(_M_X64)
#  include <immintrin.h>

// Compiled with -mavx2 -mfma; only reached through the dispatch table after a CPUID check.
namespace snake::nn::kernels::avx2
{
	namespace
	{
		inline double horizontal_sum(__m256d v) noexcept
		{
			const __m128d lo = _mm256_castpd256_pd128(v);
			const __m128d hi = _mm256_extractf128_pd(v, 1);
			const __m128d pair = _mm_add_pd(lo, hi);
			return _mm_cvtsd_f64(_mm_add_sd(pair, _mm_unpackhi_pd(pair, pair)));
		}
	}

	double dot(const double *a, const double *b, std::size_t n) noexcept
	{
		__m256d acc0 = _mm256_setzero_pd();
		__m256d acc1 = _mm256_setzero_pd();
		__m256d acc2 = _mm256_setzero_pd();
		__m256d acc3 = _mm256_setzero_pd();
		std::size_t i = 0;
		for (; i + 16 <= n; i += 16)
		{
			acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
			acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
			acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), acc2);
			acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), acc3);
		}
		for (; i + 4 <= n; i += 4)
			acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
		double result = horizontal_sum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
		for (; i < n; i++)
			result += a[i] * b[i];
		return result;
	}
	void axpy(double alpha, const double *x, double *y, std::size_t n) noexcept
	{
		const __m256d a = _mm256_set1_pd(alpha);
		std::size_t i = 0;
		for (; i + 8 <= n; i += 8)
		{
			_mm256_storeu_pd(y + i, _mm256_fmadd_pd(a, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
			_mm256_storeu_pd(y + i + 4, _mm256_fmadd_pd(a, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
		}
		for (; i + 4 <= n; i += 4)
			_mm256_storeu_pd(y + i, _mm256_fmadd_pd(a, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
		for (; i < n; i++)
			y[i] += alpha * x[i];
	}
	void scale(double alpha, double *x, std::size_t n) noexcept
	{
		const __m256d a = _mm256_set1_pd(alpha);
		std::size_t i = 0;
		for (; i + 4 <= n; i += 4)
			_mm256_storeu_pd(x + i, _mm256_mul_pd(a, _mm256_loadu_pd(x + i)));
		for (; i < n; i++)
			x[i] *= alpha;
	}
	void add(const double *x, double *y, std::size_t n) noexcept
	{
		std::size_t i = 0;
		for (; i + 4 <= n; i += 4)
			_mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
		for (; i < n; i++)
			y[i] += x[i];
	}
}
#endif
