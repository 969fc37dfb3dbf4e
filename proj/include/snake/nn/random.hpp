#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <utility>

namespace snake::nn
{
	/// SplitMix64 finalizer; a bijective 64-bit mix.
	constexpr std::uint64_t mix64(std::uint64_t x) noexcept
	{
		x += 0x9e3779b97f4a7c15ULL;
		x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
		x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
		return x ^ (x >> 31);
	}

	/// Derives an independent seed for a named sub-stream.
	constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept
	{
		return mix64(seed ^ mix64(stream + 0x632be59bd9b4e019ULL));
	}

	/// Counter-based uniform stream: value k is a pure function of (seed, k), so any
	/// draw can be reproduced without replaying the ones before it.
	class CounterStream
	{
		public:
			explicit CounterStream(std::uint64_t seed = 0) noexcept :
					m_seed(seed)
			{
			}
			/// Uniform double in [0, 1).
			double next_uniform() noexcept
			{
				return static_cast<double>(mix64(m_seed ^ mix64(m_counter++)) >> 11) * 0x1.0p-53;
			}
			/// Uniform integer in [0, n); n > 0.
			std::uint64_t next_below(std::uint64_t n) noexcept
			{
				return static_cast<std::uint64_t>(next_uniform() * static_cast<double>(n)) % n;
			}
			/// Standard normal by Box-Muller; consumes two draws.
			double next_normal() noexcept
			{
				const double u1 = 1.0 - next_uniform();
				const double u2 = next_uniform();
				return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
			}
			std::uint64_t seed() const noexcept
			{
				return m_seed;
			}
			std::uint64_t counter() const noexcept
			{
				return m_counter;
			}

		private:
			std::uint64_t m_seed = 0;
			std::uint64_t m_counter = 0;
	};

	/// Fisher-Yates shuffle driven by a CounterStream.
	template<typename T>
	void shuffle(std::span<T> items, CounterStream &rng) noexcept
	{
		for (std::size_t i = items.size(); i > 1; i--)
			std::swap(items[i - 1], items[static_cast<std::size_t>(rng.next_below(i))]);
	}
}
