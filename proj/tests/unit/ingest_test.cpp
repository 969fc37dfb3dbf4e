#include <snake/ingest/features.hpp>
#include <snake/ingest/flow.hpp>
#include <snake/ingest/flow_record.hpp>
#include <snake/ingest/pcap.hpp>
#include <snake/error.hpp>

#include <support/oracles.hpp>
#include <support/pcap_builder.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

using namespace snake::ingest;
using snake::testing::brute_force_groups;

namespace
{
	Endpoint ep(std::uint8_t last, std::uint16_t port)
	{
		return Endpoint { Address::v4(10, 0, 0, last), port };
	}

	Packet pkt(double ts, Endpoint src, Endpoint dst, std::size_t len = 0, Protocol proto = Protocol::TCP, std::uint16_t window = 1000)
	{
		Packet p;
		p.timestamp = ts;
		p.src = src;
		p.dst = dst;
		p.protocol = proto;
		p.payload.assign(len, 0x41);
		p.tcp_window = window;
		return p;
	}

	Flow sample_flow(std::mt19937_64 &rng, std::size_t packets, Protocol proto = Protocol::TCP)
	{
		std::uniform_int_distribution<int> byte(0, 255), len(0, 200), coin(0, 1);
		std::uniform_real_distribution<double> gap(0.0, 0.3);
		const Endpoint a = ep(1, 40000), b = ep(2, 443);
		std::vector<Packet> list;
		double t = 0.0;
		for (std::size_t i = 0; i < packets; i++)
		{
			const bool fwd = i == 0 || coin(rng) == 0;
			Packet p = pkt(t, fwd ? a : b, fwd ? b : a, 0, proto, static_cast<std::uint16_t>(byte(rng) * 200));
			p.payload.resize(static_cast<std::size_t>(len(rng)));
			for (auto &x : p.payload)
				x = static_cast<std::uint8_t>(byte(rng));
			list.push_back(p);
			t += gap(rng);
		}
		return make_flow(list);
	}
}

TEST(FlowAssembly, EmptyCapture)
{
	const auto result = assemble_flows({});
	EXPECT_TRUE(result.flows.empty());
	EXPECT_EQ(result.skipped, 0u);
}

TEST(FlowAssembly, FourPacketsTwoFlows)
{
	const Endpoint A = ep(1, 1000), B = ep(2, 80), C = ep(3, 2000), D = ep(4, 53);
	const std::vector<Packet> packets = { pkt(0.0, A, B), pkt(0.1, B, A), pkt(0.2, A, B), pkt(0.3, C, D) };
	const auto result = assemble_flows(packets);
	const auto oracle = brute_force_groups(packets);
	ASSERT_EQ(result.flows.size(), oracle.size());
	ASSERT_EQ(result.flows.size(), 2u);
	EXPECT_EQ(result.flows[0].packets.size(), 3u);
	EXPECT_EQ(result.flows[1].packets.size(), 1u);
}

TEST(FlowAssembly, ReversedTwinSharesKeyAndFlipsDirection)
{
	const Endpoint A = ep(7, 5555), B = ep(3, 443);
	const Packet first = pkt(0.0, A, B, 10), second = pkt(0.5, B, A, 10);
	EXPECT_EQ(FlowKey::of(first), FlowKey::of(second));
	const std::vector<Packet> packets = { first, second };
	const auto result = assemble_flows(packets);
	ASSERT_EQ(result.flows.size(), 1u);
	const FeatureVector fv = extract_features(result.flows[0]);
	EXPECT_EQ(fv.hdr(0, Direction), 0.0);
	EXPECT_EQ(fv.hdr(1, Direction), 1.0);
}

TEST(FlowAssembly, SkipsBadTimestampsAndCounts)
{
	const Endpoint A = ep(1, 1), B = ep(2, 2);
	const std::vector<Packet> packets = { pkt(0.0, A, B), pkt(-1.0, A, B), pkt(std::numeric_limits<double>::quiet_NaN(), B, A), pkt(0.3, B, A) };
	const auto result = assemble_flows(packets);
	EXPECT_EQ(result.skipped, 2u);
	ASSERT_EQ(result.flows.size(), 1u);
	EXPECT_EQ(result.flows[0].packets.size(), 2u);
}

TEST(FlowAssembly, StableTimeOrder)
{
	const Endpoint A = ep(1, 1), B = ep(2, 2);
	std::vector<Packet> packets = { pkt(0.5, A, B, 1), pkt(0.1, B, A, 2), pkt(0.5, A, B, 3), pkt(0.1, A, B, 4) };
	const auto result = assemble_flows(packets);
	ASSERT_EQ(result.flows.size(), 1u);
	std::vector<std::size_t> lengths;
	for (const auto &p : result.flows[0].packets)
		lengths.push_back(p.payload.size());
	EXPECT_EQ(lengths, (std::vector<std::size_t> { 2, 4, 1, 3 }));
	EXPECT_EQ(result.flows[0].forward, B);
}

TEST(FlowAssemblyProperty, PartitionMatchesBruteForceOracle)
{
	std::mt19937_64 rng(17);
	for (int trial = 0; trial < 100; trial++)
	{
		std::uniform_int_distribution<int> count(0, 100), host(1, 4), port(1, 3), proto(0, 1);
		std::uniform_real_distribution<double> ts(0.0, 10.0);
		std::vector<Packet> packets(static_cast<std::size_t>(count(rng)));
		for (std::size_t i = 0; i < packets.size(); i++)
		{
			packets[i] = pkt(ts(rng), ep(static_cast<std::uint8_t>(host(rng)), static_cast<std::uint16_t>(port(rng))),
					ep(static_cast<std::uint8_t>(host(rng)), static_cast<std::uint16_t>(port(rng))), i, proto(rng) ? Protocol::TCP : Protocol::UDP);
		}
		const auto result = assemble_flows(packets);
		const auto oracle = brute_force_groups(packets);
		ASSERT_EQ(result.flows.size(), oracle.size()) << "trial " << trial;

		// payload length is the packet's index, so it identifies the packet
		std::multiset<std::set<std::size_t>> ours, theirs;
		std::size_t total = 0;
		for (const Flow &f : result.flows)
		{
			std::set<std::size_t> ids;
			for (const Packet &p : f.packets)
			{
				ids.insert(p.payload.size());
				EXPECT_EQ(FlowKey::of(p), f.key);
			}
			EXPECT_TRUE(std::is_sorted(f.packets.begin(), f.packets.end(), [](const Packet &a, const Packet &b)
			{	return a.timestamp < b.timestamp;}));
			total += f.packets.size();
			ours.insert(ids);
		}
		for (const auto &g : oracle)
			theirs.insert(std::set<std::size_t>(g.begin(), g.end()));
		EXPECT_EQ(total, packets.size());
		EXPECT_EQ(ours, theirs) << "trial " << trial;
	}
}

TEST(Features, PayloadNormalizationEndpoints)
{
	Packet p = pkt(0.0, ep(1, 1), ep(2, 2));
	p.payload = { 0x00, 0xff, 0x80 };
	const FeatureVector fv = extract_features(make_flow( { p }));
	EXPECT_EQ(fv.pay()[0], 0.0);
	EXPECT_EQ(fv.pay()[1], 1.0);
	EXPECT_DOUBLE_EQ(fv.pay()[2], 128.0 / 255.0);
	EXPECT_EQ(fv.pay()[3], 0.0);
}

TEST(Features, UdpWindowColumnZero)
{
	std::mt19937_64 rng(3);
	const Flow flow = sample_flow(rng, 12, Protocol::UDP);
	const FeatureVector fv = extract_features(flow);
	for (std::size_t r = 0; r < fv.packets(); r++)
		EXPECT_EQ(fv.hdr(r, TcpWindow), 0.0);
}

TEST(Features, TwoPacketFlowPadding)
{
	const Endpoint A = ep(1, 1), B = ep(2, 2);
	const Flow flow = make_flow( { pkt(1.0, A, B, 100, Protocol::TCP, 65535), pkt(1.25, B, A, 1500, Protocol::TCP, 0) });
	const FeatureVector fv = extract_features(flow);
	EXPECT_EQ(fv.hdr(0, InterArrival), 0.0);
	EXPECT_DOUBLE_EQ(fv.hdr(0, PayloadLength), 100.0 / 1500.0);
	EXPECT_EQ(fv.hdr(0, TcpWindow), 1.0);
	EXPECT_DOUBLE_EQ(fv.hdr(1, InterArrival), 0.25);
	EXPECT_EQ(fv.hdr(1, PayloadLength), 1.0);
	for (std::size_t r = 2; r < 32; r++)
		for (std::size_t c = 0; c < header_fields; c++)
			EXPECT_EQ(fv.hdr(r, c), 0.0);
}

TEST(Features, EmptyFlowRejected)
{
	try
	{
		(void) extract_features(Flow { });
		FAIL() << "expected DataError";
	} catch (const snake::DataError &e)
	{
		EXPECT_STREQ(e.what(), "empty flow");
	}
}

TEST(Features, InvalidConfigRejected)
{
	std::mt19937_64 rng(1);
	const Flow flow = sample_flow(rng, 2);
	ExtractionConfig cfg;
	cfg.packets = 0;
	EXPECT_THROW((void) extract_features(flow, cfg), snake::ConfigError);
	cfg = ExtractionConfig { };
	cfg.header_scales[InterArrival] = 0.0;
	EXPECT_THROW((void) extract_features(flow, cfg), snake::ConfigError);
}

TEST(FeaturesProperty, LengthExactnessAndRanges)
{
	std::mt19937_64 rng(11);
	std::uniform_int_distribution<std::size_t> count(1, 80), nb(1, 900), np(1, 40);
	for (int trial = 0; trial < 100; trial++)
	{
		ExtractionConfig cfg;
		if (trial % 2 == 1)
		{
			cfg.payload_bytes = nb(rng);
			cfg.packets = np(rng);
		}
		const Flow flow = sample_flow(rng, count(rng), trial % 3 == 0 ? Protocol::UDP : Protocol::TCP);
		const FeatureVector fv = extract_features(flow, cfg);
		ASSERT_EQ(fv.flat().size(), cfg.payload_bytes + 4 * cfg.packets);
		for (double v : fv.flat())
		{
			EXPECT_GE(v, 0.0);
			EXPECT_LE(v, 1.0);
		}
		for (std::size_t r = 0; r < cfg.packets; r++)
		{
			const double d = fv.hdr(r, Direction);
			EXPECT_TRUE(d == 0.0 || d == 1.0);
			if (r >= flow.packets.size())
			{
				for (std::size_t c = 0; c < header_fields; c++)
					EXPECT_EQ(fv.hdr(r, c), 0.0);
			}
		}
	}
}

TEST(FeaturesProperty, MonotoneTruncation)
{
	std::mt19937_64 rng(5);
	for (int trial = 0; trial < 50; trial++)
	{
		Flow flow = sample_flow(rng, 40);
		std::size_t total = 0;
		for (const auto &p : flow.packets)
			total += p.payload.size();
		ASSERT_GT(total, 784u);
		const FeatureVector before = extract_features(flow);
		flow.packets.back().payload.insert(flow.packets.back().payload.end(), 500, 0x7f);
		Packet extra = flow.packets.back();
		extra.timestamp += 1.0;
		flow.packets.push_back(extra);
		const FeatureVector after = extract_features(flow);
		EXPECT_TRUE(std::equal(before.pay().begin(), before.pay().end(), after.pay().begin()));
	}
}

TEST(FeaturesProperty, DirectionSymmetry)
{
	std::mt19937_64 rng(23);
	for (int trial = 0; trial < 50; trial++)
	{
		Flow flow = sample_flow(rng, 1 + trial % 40);
		const FeatureVector before = extract_features(flow);
		flow.forward = flow.forward == flow.key.low ? flow.key.high : flow.key.low;
		const FeatureVector after = extract_features(flow);
		EXPECT_TRUE(std::equal(before.pay().begin(), before.pay().end(), after.pay().begin()));
		for (std::size_t r = 0; r < before.packets(); r++)
		{
			for (std::size_t c = 0; c < 3; c++)
				EXPECT_EQ(before.hdr(r, c), after.hdr(r, c));
			if (r < flow.packets.size())
			{
				EXPECT_EQ(after.hdr(r, Direction), 1.0 - before.hdr(r, Direction));
			}
			else
			{
				EXPECT_EQ(after.hdr(r, Direction), 0.0);
			}
		}
	}
}

TEST(Pcap, EthernetLittleEndianMicroseconds)
{
	using snake::testing::PcapBuilder;
	PcapBuilder b(1);
	b.record(100, 500000, PcapBuilder::ipv4_frame(true, { 10, 0, 0, 1 }, 40000, { 10, 0, 0, 2 }, 443, { 1, 2, 3 }, 8192));
	b.record(100, 750000, PcapBuilder::ipv4_frame(true, { 10, 0, 0, 2 }, 443, { 10, 0, 0, 1 }, 40000, { 4, 5 }, 1024));
	b.record(101, 0, PcapBuilder::ipv4_frame(false, { 10, 0, 0, 3 }, 5353, { 10, 0, 0, 4 }, 53, { 9 }));
	const auto result = parse_pcap(b.bytes());
	EXPECT_EQ(result.malformed, 0u);
	ASSERT_EQ(result.packets.size(), 3u);
	EXPECT_EQ(result.packets[0].timestamp, 0.0);
	EXPECT_NEAR(result.packets[1].timestamp, 0.25, 1e-9);
	EXPECT_EQ(result.packets[0].tcp_window, 8192);
	EXPECT_EQ(result.packets[0].payload, (std::vector<std::uint8_t> { 1, 2, 3 }));
	EXPECT_EQ(result.packets[2].protocol, Protocol::UDP);
	EXPECT_EQ(result.packets[2].dst.port, 53);
	EXPECT_EQ(result.packets[0].src.ip.to_string(), "10.0.0.1");
	const auto flows = assemble_flows(result.packets);
	EXPECT_EQ(flows.flows.size(), 2u);
}

TEST(Pcap, BigEndianNanosecondsRawIp)
{
	using snake::testing::PcapBuilder;
	PcapBuilder b(101, true, true);
	b.record(5, 0, PcapBuilder::ipv4_frame(false, { 1, 1, 1, 1 }, 1, { 2, 2, 2, 2 }, 2, { 0xff }, 0, false));
	b.record(5, 1000, PcapBuilder::ipv4_frame(false, { 2, 2, 2, 2 }, 2, { 1, 1, 1, 1 }, 1, { }, 0, false));
	const auto result = parse_pcap(b.bytes());
	ASSERT_EQ(result.packets.size(), 2u);
	EXPECT_NEAR(result.packets[1].timestamp, 1e-6, 1e-12);
	EXPECT_TRUE(result.packets[1].payload.empty());
}

TEST(Pcap, MalformedRecordsSkippedAndCounted)
{
	using snake::testing::PcapBuilder;
	PcapBuilder b(1);
	b.record(0, 0, PcapBuilder::ipv4_frame(true, { 1, 1, 1, 1 }, 1, { 2, 2, 2, 2 }, 2, { 1 }));
	auto broken = PcapBuilder::ipv4_frame(true, { 1, 1, 1, 1 }, 1, { 2, 2, 2, 2 }, 2, { 1 });
	broken.resize(20);
	b.record(0, 1, broken);
	b.record(0, 2, { 0xaa, 0xbb });
	b.raw( { 1, 2, 3 });
	const auto result = parse_pcap(b.bytes());
	EXPECT_EQ(result.packets.size(), 1u);
	EXPECT_EQ(result.malformed, 3u);
}

TEST(Pcap, BadGlobalHeaderThrows)
{
	EXPECT_THROW((void) parse_pcap(std::vector<std::uint8_t>(10, 0)), snake::FormatError);
	EXPECT_THROW((void) parse_pcap(std::vector<std::uint8_t>(24, 0)), snake::FormatError);
}

TEST(FlowRecords, RoundTripPreservesFeatures)
{
	std::mt19937_64 rng(99);
	std::vector<FlowRecord> records;
	for (int i = 0; i < 20; i++)
		records.push_back(FlowRecord { "f" + std::to_string(i), sample_flow(rng, 1 + static_cast<std::size_t>(i), i % 2 ? Protocol::UDP : Protocol::TCP) });
	std::stringstream ss;
	write_flow_records(ss, records);
	const auto back = read_flow_records(ss);
	EXPECT_EQ(back.skipped, 0u);
	ASSERT_EQ(back.records.size(), records.size());
	for (std::size_t i = 0; i < records.size(); i++)
	{
		EXPECT_EQ(back.records[i].flow_id, records[i].flow_id);
		EXPECT_EQ(back.records[i].flow.forward, records[i].flow.forward);
		EXPECT_EQ(back.records[i].flow.key, records[i].flow.key);
		EXPECT_EQ(extract_features(back.records[i].flow), extract_features(records[i].flow));
	}
}

TEST(FlowRecords, MalformedLinesSkipped)
{
	std::stringstream ss;
	ss << "a\tTCP\t10.0.0.1\t1\t10.0.0.2\t2\t0,0,2,100,0102\n";
	ss << "b\tTCP\t10.0.0.1\t1\n";
	ss << "c\tICMP\t10.0.0.1\t1\t10.0.0.2\t2\t0,0,0,0\n";
	ss << "d\tUDP\t::1\t1\t::2\t2\t0,1,3,0\n";
	ss << "e\tTCP\t10.0.0.1\t1\t10.0.0.2\t2\t0,0,2,100,01\n";
	const auto result = read_flow_records(ss);
	EXPECT_EQ(result.skipped, 3u);
	ASSERT_EQ(result.records.size(), 2u);
	EXPECT_EQ(result.records[0].flow.packets[0].payload, (std::vector<std::uint8_t> { 1, 2 }));
	EXPECT_EQ(result.records[1].flow.packets[0].payload.size(), 3u);
	EXPECT_TRUE(result.records[1].flow.key.low.ip.is_v6);
	// dir 1 on the only packet: source is endpoint b, forward stays a
	const FeatureVector fv = extract_features(result.records[1].flow);
	EXPECT_EQ(fv.hdr(0, Direction), 1.0);
}
