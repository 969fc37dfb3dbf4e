#pragma once

#include <snake/ingest/flow.hpp>

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace snake::ingest
{
	/// Text flow record, one flow per line:
	///   flow_id TAB proto TAB ip_a TAB port_a TAB ip_b TAB port_b {TAB ts,dir,len,window[,hex]}
	/// Endpoint a is the forward endpoint; dir 0 means a to b. A missing hex field
	/// stands for `len` zero bytes.
	struct FlowRecord
	{
			std::string flow_id;
			Flow flow;
	};

	struct FlowRecordReadResult
	{
			std::vector<FlowRecord> records;
			std::size_t skipped = 0; ///< malformed lines
	};

	/// "<PROTO>-<fwd ip>:<port>-<other ip>:<port>", forward endpoint first.
	std::string default_flow_id(const Flow &flow);

	FlowRecordReadResult read_flow_records(std::istream &in);
	FlowRecordReadResult read_flow_records(const std::filesystem::path &path);

	/// Parses one line; throws FormatError on malformed input.
	FlowRecord parse_flow_record(const std::string &line);
	std::string format_flow_record(const FlowRecord &record, bool with_payload = true);

	void write_flow_records(std::ostream &out, const std::vector<FlowRecord> &records, bool with_payload = true);
	void write_flow_records(const std::filesystem::path &path, const std::vector<FlowRecord> &records, bool with_payload = true);
}
