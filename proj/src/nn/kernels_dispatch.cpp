#include <snake/nn/kernels.hpp>
#include <snake/error.hpp>

#include <atomic>
#include <cstdlib>
#include <string>

namespace snake::nn::kernels
{
	namespace
	{
		constexpr KernelTable scalar_table { Backend::Scalar, scalar::dot, scalar::axpy, scalar::scale, scalar::add };
#if defined(__x86_64__) || defined(_M_X64)
		constexpr KernelTable avx2_table { Backend::Avx2, avx2::dot, avx2::axpy, avx2::scale, avx2::add };
#endif
#if defined(__aarch64__)
		constexpr KernelTable neon_table { Backend::Neon, neon::dot, neon::axpy, neon::scale, neon::add };
#endif

		Backend detect_best() noexcept
		{
			if (is_supported(Backend::Avx2))
				return Backend::Avx2;
			if (is_supported(Backend::Neon))
				return Backend::Neon;
			return Backend::Scalar;
		}

		Backend initial_backend() noexcept
		{
			if (const char *env = std::getenv("SNAKE_KERNELS"))
			{
				const std::string value(env);
				if (value == "scalar")
					return Backend::Scalar;
				if (value == "avx2" && is_supported(Backend::Avx2))
					return Backend::Avx2;
				if (value == "neon" && is_supported(Backend::Neon))
					return Backend::Neon;
			}
			return detect_best();
		}

		std::atomic<const KernelTable*>& current() noexcept
		{
			static std::atomic<const KernelTable*> instance { &table(initial_backend()) };
			return instance;
		}
	}

	std::string_view backend_name(Backend b) noexcept
	{
		switch (b)
		{
			case Backend::Scalar:
				return "scalar";
			case Backend::Avx2:
				return "avx2";
			case Backend::Neon:
				return "neon";
		}
		return "unknown";
	}

	bool is_supported(Backend b) noexcept
	{
		switch (b)
		{
			case Backend::Scalar:
				return true;
			case Backend::Avx2:
#if defined(__x86_64__) || defined(_M_X64)
				return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
				return false;
#endif
			case Backend::Neon:
#if defined(__aarch64__)
				return true;
#else
				return false;
#endif
		}
		return false;
	}

	const KernelTable& table(Backend b)
	{
		if (!is_supported(b))
			throw ConfigError("kernel backend '" + std::string(backend_name(b)) + "' is not supported on this CPU");
		switch (b)
		{
#if defined(__x86_64__) || defined(_M_X64)
			case Backend::Avx2:
				return avx2_table;
#endif
#if defined(__aarch64__)
			case Backend::Neon:
				return neon_table;
#endif
			default:
				return scalar_table;
		}
	}

	const KernelTable& active() noexcept
	{
		return *current().load(std::memory_order_relaxed);
	}
	void select(Backend b)
	{
		current().store(&table(b), std::memory_order_relaxed);
	}
}
