#pragma once

#include <snake/ingest/packet.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace snake::ingest
{
	struct PcapReadResult
	{
			std::vector<Packet> packets; ///< TCP/UDP packets, timestamps relative to the earliest record
			std::size_t malformed = 0; ///< truncated or inconsistent records, skipped
			std::size_t ignored = 0; ///< well-formed but not IPv4/IPv6 TCP/UDP
			std::uint32_t link_type = 0;
	};

	/// Parses a classic libpcap capture (magic a1b2c3d4 / a1b23c4d, either byte order).
	/// Supported link types: Ethernet (1, with 802.1Q tags), raw IP (101, 228, 229),
	/// Linux cooked (113). A bad global header throws FormatError; bad records are
	/// skipped and counted.
	PcapReadResult parse_pcap(std::span<const std::uint8_t> bytes);
	PcapReadResult read_pcap(const std::filesystem::path &path);
}
