#pragma once

#include <snake/ingest/packet.hpp>

#include <compare>
#include <cstddef>
#include <span>
#include <vector>

namespace snake::ingest
{
	/// Bidirectional five-tuple with the smaller (ip, port) endpoint first, so a
	/// packet and its reversed-direction twin share one key.
	struct FlowKey
	{
			Endpoint low;
			Endpoint high;
			Protocol protocol = Protocol::TCP;

			static FlowKey of(const Packet &p) noexcept;
			friend auto operator<=>(const FlowKey&, const FlowKey&) = default;
	};

	struct Flow
	{
			FlowKey key;
			std::vector<Packet> packets; ///< ordered by timestamp, stable for ties
			Endpoint forward; ///< source of the first packet; direction 0

			bool is_forward(const Packet &p) const noexcept
			{
				return p.src == forward;
			}
	};

	struct AssemblyResult
	{
			std::vector<Flow> flows; ///< in order of first appearance in the capture
			std::size_t skipped = 0; ///< malformed packet records dropped
	};

	/// Groups packets into bidirectional flows. The whole capture is one epoch; there
	/// is no idle-timeout splitting. Packets with a negative or non-finite timestamp
	/// are skipped and counted.
	AssemblyResult assemble_flows(std::span<const Packet> packets);

	/// Builds a flow from packets that already share one key; forward endpoint is the
	/// source of the earliest packet.
	Flow make_flow(std::vector<Packet> packets);
}
