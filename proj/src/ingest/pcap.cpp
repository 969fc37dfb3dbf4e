#include <snake/ingest/pcap.hpp>
#include <snake/error.hpp>

#include <fstream>
#include <iterator>
#include <algorithm>

namespace snake::ingest
{
	namespace
	{
		constexpr std::uint32_t magic_micro = 0xa1b2c3d4;
		constexpr std::uint32_t magic_nano = 0xa1b23c4d;

		constexpr std::uint32_t link_ethernet = 1;
		constexpr std::uint32_t link_raw = 101;
		constexpr std::uint32_t link_linux_sll = 113;
		constexpr std::uint32_t link_ipv4 = 228;
		constexpr std::uint32_t link_ipv6 = 229;

		std::uint16_t be16(const std::uint8_t *p) noexcept
		{
			return static_cast<std::uint16_t>((p[0] << 8) | p[1]);
		}

		class Reader
		{
			public:
				Reader(std::span<const std::uint8_t> bytes, bool swapped) :
						m_bytes(bytes),
						m_swapped(swapped)
				{
				}
				std::uint32_t u32(std::size_t offset) const noexcept
				{
					const std::uint8_t *p = m_bytes.data() + offset;
					if (m_swapped)
						return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) | p[3];
					return (std::uint32_t(p[3]) << 24) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[1]) << 8) | p[0];
				}
			private:
				std::span<const std::uint8_t> m_bytes;
				bool m_swapped;
		};

		enum class Outcome
		{
			Packet,
			Ignored,
			Malformed
		};

		/// Decodes an IP datagram into `out`.
		Outcome parse_ip(std::span<const std::uint8_t> ip, Packet &out)
		{
			if (ip.empty())
				return Outcome::Malformed;
			const int version = ip[0] >> 4;
			std::uint8_t proto = 0;
			std::size_t header_len = 0, total_len = 0;
			if (version == 4)
			{
				if (ip.size() < 20)
					return Outcome::Malformed;
				header_len = std::size_t(ip[0] & 0x0f) * 4;
				total_len = be16(ip.data() + 2);
				if (header_len < 20 || total_len < header_len || total_len > ip.size())
					return Outcome::Malformed;
				// later fragments carry no transport header
				if ((be16(ip.data() + 6) & 0x1fff) != 0)
					return Outcome::Ignored;
				proto = ip[9];
				out.src.ip = Address::v4(ip[12], ip[13], ip[14], ip[15]);
				out.dst.ip = Address::v4(ip[16], ip[17], ip[18], ip[19]);
			}
			else if (version == 6)
			{
				if (ip.size() < 40)
					return Outcome::Malformed;
				header_len = 40;
				total_len = 40 + std::size_t(be16(ip.data() + 4));
				if (total_len > ip.size())
					return Outcome::Malformed;
				proto = ip[6];
				out.src.ip.is_v6 = true;
				out.dst.ip.is_v6 = true;
				std::copy_n(ip.data() + 8, 16, out.src.ip.bytes.begin());
				std::copy_n(ip.data() + 24, 16, out.dst.ip.bytes.begin());
			}
			else
				return Outcome::Ignored;

			const std::span<const std::uint8_t> transport = ip.subspan(header_len, total_len - header_len);
			if (proto == static_cast<std::uint8_t>(Protocol::TCP))
			{
				if (transport.size() < 20)
					return Outcome::Malformed;
				const std::size_t offset = std::size_t(transport[12] >> 4) * 4;
				if (offset < 20 || offset > transport.size())
					return Outcome::Malformed;
				out.protocol = Protocol::TCP;
				out.src.port = be16(transport.data());
				out.dst.port = be16(transport.data() + 2);
				out.tcp_window = be16(transport.data() + 14);
				out.payload.assign(transport.begin() + static_cast<std::ptrdiff_t>(offset), transport.end());
				return Outcome::Packet;
			}
			if (proto == static_cast<std::uint8_t>(Protocol::UDP))
			{
				if (transport.size() < 8)
					return Outcome::Malformed;
				const std::size_t udp_len = be16(transport.data() + 4);
				if (udp_len < 8 || udp_len > transport.size())
					return Outcome::Malformed;
				out.protocol = Protocol::UDP;
				out.src.port = be16(transport.data());
				out.dst.port = be16(transport.data() + 2);
				out.tcp_window = 0;
				out.payload.assign(transport.begin() + 8, transport.begin() + static_cast<std::ptrdiff_t>(udp_len));
				return Outcome::Packet;
			}
			return Outcome::Ignored;
		}

		Outcome parse_frame(std::uint32_t link_type, std::span<const std::uint8_t> frame, Packet &out)
		{
			switch (link_type)
			{
				case link_ethernet:
				{
					std::size_t offset = 12;
					if (frame.size() < offset + 2)
						return Outcome::Malformed;
					std::uint16_t ether_type = be16(frame.data() + offset);
					while (ether_type == 0x8100 || ether_type == 0x88a8)
					{
						offset += 4;
						if (frame.size() < offset + 2)
							return Outcome::Malformed;
						ether_type = be16(frame.data() + offset);
					}
					offset += 2;
					if (ether_type != 0x0800 && ether_type != 0x86dd)
						return Outcome::Ignored;
					return parse_ip(frame.subspan(offset), out);
				}
				case link_linux_sll:
				{
					if (frame.size() < 16)
						return Outcome::Malformed;
					const std::uint16_t ether_type = be16(frame.data() + 14);
					if (ether_type != 0x0800 && ether_type != 0x86dd)
						return Outcome::Ignored;
					return parse_ip(frame.subspan(16), out);
				}
				case link_raw:
				case link_ipv4:
				case link_ipv6:
					return parse_ip(frame, out);
				default:
					return Outcome::Ignored;
			}
		}
	}

	PcapReadResult parse_pcap(std::span<const std::uint8_t> bytes)
	{
		if (bytes.size() < 24)
			throw FormatError("pcap: file shorter than the 24-byte global header");
		const std::uint32_t raw_magic = std::uint32_t(bytes[0]) | (std::uint32_t(bytes[1]) << 8) | (std::uint32_t(bytes[2]) << 16)
				| (std::uint32_t(bytes[3]) << 24);
		bool swapped = false, nano = false;
		if (raw_magic == magic_micro || raw_magic == magic_nano)
			nano = raw_magic == magic_nano;
		else if (Reader(bytes, true).u32(0) == magic_micro || Reader(bytes, true).u32(0) == magic_nano)
		{
			swapped = true;
			nano = Reader(bytes, true).u32(0) == magic_nano;
		}
		else
			throw FormatError("pcap: unrecognized magic number");
		const Reader reader(bytes, swapped);

		PcapReadResult result;
		result.link_type = reader.u32(20) & 0x0fffffff;
		const double fraction_scale = nano ? 1e-9 : 1e-6;
		std::size_t offset = 24;
		while (offset < bytes.size())
		{
			if (bytes.size() - offset < 16)
			{
				result.malformed++;
				break;
			}
			const double ts = static_cast<double>(reader.u32(offset)) + static_cast<double>(reader.u32(offset + 4)) * fraction_scale;
			const std::size_t captured = reader.u32(offset + 8);
			offset += 16;
			if (captured > bytes.size() - offset)
			{
				result.malformed++;
				break;
			}
			const auto frame = bytes.subspan(offset, captured);
			offset += captured;

			Packet p;
			p.timestamp = ts;
			switch (parse_frame(result.link_type, frame, p))
			{
				case Outcome::Packet:
					result.packets.push_back(std::move(p));
					break;
				case Outcome::Ignored:
					result.ignored++;
					break;
				case Outcome::Malformed:
					result.malformed++;
					break;
			}
		}
		// rebase on the earliest record so out-of-order captures stay non-negative
		double origin = 0.0;
		for (std::size_t i = 0; i < result.packets.size(); ++i)
			origin = i == 0 ? result.packets[i].timestamp : std::min(origin, result.packets[i].timestamp);
		for (Packet &p : result.packets)
			p.timestamp -= origin;
		return result;
	}

	PcapReadResult read_pcap(const std::filesystem::path &path)
	{
		std::ifstream in(path, std::ios::binary);
		if (!in)
			throw FormatError("cannot open capture '" + path.string() + "'");
		const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
		return parse_pcap(bytes);
	}
}
