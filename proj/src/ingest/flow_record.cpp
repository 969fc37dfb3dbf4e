#include <snake/ingest/flow_record.hpp>
#include <snake/error.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string_view>

namespace snake::ingest
{
	namespace
	{
		std::vector<std::string_view> split(std::string_view text, char sep)
		{
			std::vector<std::string_view> parts;
			std::size_t start = 0;
			while (true)
			{
				const std::size_t pos = text.find(sep, start);
				parts.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
				if (pos == std::string_view::npos)
					break;
				start = pos + 1;
			}
			return parts;
		}

		template<typename T>
		T parse_number(std::string_view text, const char *what)
		{
			T value { };
			const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
			if (ec != std::errc() || ptr != text.data() + text.size())
				throw FormatError(std::string("flow record: bad ") + what + " '" + std::string(text) + "'");
			return value;
		}

		int hex_digit(char c)
		{
			if (c >= '0' && c <= '9')
				return c - '0';
			if (c >= 'a' && c <= 'f')
				return c - 'a' + 10;
			if (c >= 'A' && c <= 'F')
				return c - 'A' + 10;
			throw FormatError("flow record: bad hex digit");
		}

		std::uint16_t parse_port(std::string_view text)
		{
			const unsigned long v = parse_number<unsigned long>(text, "port");
			if (v > 65535)
				throw FormatError("flow record: port out of range");
			return static_cast<std::uint16_t>(v);
		}

		void append_double(std::string &out, double v)
		{
			char buffer[32];
			const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), v);
			out.append(buffer, ptr);
		}
	}

	std::string default_flow_id(const Flow &flow)
	{
		const Endpoint &other = flow.forward == flow.key.low ? flow.key.high : flow.key.low;
		return std::string(protocol_name(flow.key.protocol)) + "-" + flow.forward.ip.to_string() + ":" + std::to_string(flow.forward.port) + "-"
				+ other.ip.to_string() + ":" + std::to_string(other.port);
	}

	FlowRecord parse_flow_record(const std::string &line)
	{
		std::string_view text(line);
		if (!text.empty() && text.back() == '\r')
			text.remove_suffix(1);
		const auto fields = split(text, '\t');
		if (fields.size() < 7)
			throw FormatError("flow record: expected an id, a five-tuple and at least one packet");
		FlowRecord record;
		record.flow_id = std::string(fields[0]);
		if (record.flow_id.empty())
			throw FormatError("flow record: empty flow id");
		const Protocol protocol = parse_protocol(fields[1]);
		const Endpoint a { Address::parse(fields[2]), parse_port(fields[3]) };
		const Endpoint b { Address::parse(fields[4]), parse_port(fields[5]) };

		std::vector<Packet> packets;
		packets.reserve(fields.size() - 6);
		for (std::size_t i = 6; i < fields.size(); ++i)
		{
			const auto parts = split(fields[i], ',');
			if (parts.size() != 4 && parts.size() != 5)
				throw FormatError("flow record: packet tuple needs ts,dir,len,window[,hex]");
			Packet p;
			p.protocol = protocol;
			p.timestamp = parse_number<double>(parts[0], "timestamp");
			if (!std::isfinite(p.timestamp) || p.timestamp < 0.0)
				throw FormatError("flow record: negative or non-finite timestamp");
			const int dir = parse_number<int>(parts[1], "direction");
			if (dir != 0 && dir != 1)
				throw FormatError("flow record: direction must be 0 or 1");
			p.src = dir == 0 ? a : b;
			p.dst = dir == 0 ? b : a;
			const std::size_t len = parse_number<std::size_t>(parts[2], "length");
			const unsigned long window = parse_number<unsigned long>(parts[3], "window");
			if (window > 65535)
				throw FormatError("flow record: window out of range");
			p.tcp_window = protocol == Protocol::TCP ? static_cast<std::uint16_t>(window) : 0;
			if (parts.size() == 5 && !parts[4].empty())
			{
				const std::string_view hex = parts[4];
				if (hex.size() != 2 * len)
					throw FormatError("flow record: payload hex does not match length");
				p.payload.resize(len);
				for (std::size_t k = 0; k < len; ++k)
					p.payload[k] = static_cast<std::uint8_t>(hex_digit(hex[2 * k]) * 16 + hex_digit(hex[2 * k + 1]));
			}
			else
				p.payload.assign(len, 0);
			packets.push_back(std::move(p));
		}
		record.flow = make_flow(std::move(packets));
		// the record names the forward endpoint explicitly
		record.flow.forward = a;
		return record;
	}

	std::string format_flow_record(const FlowRecord &record, bool with_payload)
	{
		static constexpr char digits[] = "0123456789abcdef";
		const Flow &flow = record.flow;
		if (flow.packets.empty())
			throw DataError("empty flow");
		const Endpoint a = flow.forward;
		const Endpoint b = flow.key.low == a ? flow.key.high : flow.key.low;
		std::string line = record.flow_id;
		line += '\t';
		line += protocol_name(flow.key.protocol);
		line += '\t' + a.ip.to_string() + '\t' + std::to_string(a.port);
		line += '\t' + b.ip.to_string() + '\t' + std::to_string(b.port);
		for (const Packet &p : flow.packets)
		{
			line += '\t';
			append_double(line, p.timestamp);
			line += flow.is_forward(p) ? ",0," : ",1,";
			line += std::to_string(p.payload.size());
			line += ',';
			line += std::to_string(p.tcp_window);
			if (with_payload)
			{
				line += ',';
				for (std::uint8_t byte : p.payload)
				{
					line += digits[byte >> 4];
					line += digits[byte & 0x0f];
				}
			}
		}
		return line;
	}

	FlowRecordReadResult read_flow_records(std::istream &in)
	{
		FlowRecordReadResult result;
		std::string line;
		while (std::getline(in, line))
		{
			if (line.empty() || line[0] == '#')
				continue;
			try
			{
				result.records.push_back(parse_flow_record(line));
			} catch (const FormatError&)
			{
				result.skipped++;
			}
		}
		return result;
	}

	FlowRecordReadResult read_flow_records(const std::filesystem::path &path)
	{
		std::ifstream in(path);
		if (!in)
			throw FormatError("cannot open flow records '" + path.string() + "'");
		return read_flow_records(in);
	}

	void write_flow_records(std::ostream &out, const std::vector<FlowRecord> &records, bool with_payload)
	{
		for (const FlowRecord &r : records)
			out << format_flow_record(r, with_payload) << '\n';
	}

	void write_flow_records(const std::filesystem::path &path, const std::vector<FlowRecord> &records, bool with_payload)
	{
		std::ofstream out(path);
		if (!out)
			throw FormatError("cannot write flow records '" + path.string() + "'");
		write_flow_records(out, records, with_payload);
	}
}
