#include <snake/ingest/packet.hpp>
#include <snake/error.hpp>

#include <arpa/inet.h>

#include <cstring>

namespace snake::ingest
{
	std::string_view protocol_name(Protocol p) noexcept
	{
		return p == Protocol::TCP ? "TCP" : "UDP";
	}
	Protocol parse_protocol(std::string_view name)
	{
		if (name == "TCP" || name == "tcp")
			return Protocol::TCP;
		if (name == "UDP" || name == "udp")
			return Protocol::UDP;
		throw FormatError("unknown transport protocol '" + std::string(name) + "'");
	}

	Address Address::v4(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) noexcept
	{
		Address result;
		result.bytes[0] = a;
		result.bytes[1] = b;
		result.bytes[2] = c;
		result.bytes[3] = d;
		return result;
	}

	Address Address::parse(std::string_view text)
	{
		const std::string s(text);
		Address result;
		if (inet_pton(AF_INET, s.c_str(), result.bytes.data()) == 1)
			return result;
		if (inet_pton(AF_INET6, s.c_str(), result.bytes.data()) == 1)
		{
			result.is_v6 = true;
			return result;
		}
		throw FormatError("invalid IP address '" + s + "'");
	}

	std::string Address::to_string() const
	{
		char buffer[INET6_ADDRSTRLEN] = { };
		inet_ntop(is_v6 ? AF_INET6 : AF_INET, bytes.data(), buffer, sizeof(buffer));
		return buffer;
	}
}
