#include <snake/ingest/flow.hpp>

#include <algorithm>
#include <cmath>
#include <map>

namespace snake::ingest
{
	FlowKey FlowKey::of(const Packet &p) noexcept
	{
		FlowKey key;
		key.protocol = p.protocol;
		if (p.src <= p.dst)
		{
			key.low = p.src;
			key.high = p.dst;
		}
		else
		{
			key.low = p.dst;
			key.high = p.src;
		}
		return key;
	}

	Flow make_flow(std::vector<Packet> packets)
	{
		Flow flow;
		std::stable_sort(packets.begin(), packets.end(), [](const Packet &a, const Packet &b)
		{	return a.timestamp < b.timestamp;});
		if (!packets.empty())
		{
			flow.key = FlowKey::of(packets.front());
			flow.forward = packets.front().src;
		}
		flow.packets = std::move(packets);
		return flow;
	}

	AssemblyResult assemble_flows(std::span<const Packet> packets)
	{
		AssemblyResult result;
		std::map<FlowKey, std::size_t> index;
		std::vector<std::vector<Packet>> groups;
		for (const Packet &p : packets)
		{
			if (!std::isfinite(p.timestamp) || p.timestamp < 0.0 || (p.protocol != Protocol::TCP && p.protocol != Protocol::UDP))
			{
				result.skipped++;
				continue;
			}
			const auto [it, inserted] = index.try_emplace(FlowKey::of(p), groups.size());
			if (inserted)
				groups.emplace_back();
			groups[it->second].push_back(p);
		}
		result.flows.reserve(groups.size());
		for (auto &g : groups)
			result.flows.push_back(make_flow(std::move(g)));
		return result;
	}
}
