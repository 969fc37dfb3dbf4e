#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace snake::ingest
{
	enum class Protocol : std::uint8_t
	{
		TCP = 6,
		UDP = 17
	};

	std::string_view protocol_name(Protocol p) noexcept;
	Protocol parse_protocol(std::string_view name);

	/// IPv4 or IPv6 address. IPv4 is stored in the first four bytes; ordering puts
	/// every IPv4 address before every IPv6 address.
	struct Address
	{
			bool is_v6 = false;
			std::array<std::uint8_t, 16> bytes {};

			static Address v4(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) noexcept;
			static Address parse(std::string_view text);
			std::string to_string() const;

			friend auto operator<=>(const Address&, const Address&) = default;
	};

	struct Endpoint
	{
			Address ip;
			std::uint16_t port = 0;

			friend auto operator<=>(const Endpoint&, const Endpoint&) = default;
	};

	struct Packet
	{
			double timestamp = 0.0; ///< seconds since capture start
			Endpoint src;
			Endpoint dst;
			Protocol protocol = Protocol::TCP;
			std::vector<std::uint8_t> payload; ///< transport-layer payload only
			std::uint16_t tcp_window = 0; ///< meaningful for TCP only
	};
}
