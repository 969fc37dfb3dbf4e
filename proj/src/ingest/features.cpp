#include <snake/ingest/features.hpp>
#include <snake/error.hpp>

#include <algorithm>
#include <string>

namespace snake::ingest
{
	void ExtractionConfig::validate() const
	{
		if (payload_bytes == 0 || packets == 0)
			throw ConfigError("payload byte and packet budgets must be positive");
		for (double s : header_scales)
			if (!(s > 0.0))
				throw ConfigError("header normalization scales must be positive");
	}

	FeatureVector::FeatureVector(std::size_t payload_bytes, std::size_t packets) :
			m_payload_bytes(payload_bytes),
			m_packets(packets),
			m_flat(payload_bytes + header_fields * packets, 0.0)
	{
	}
	FeatureVector::FeatureVector(std::size_t payload_bytes, std::size_t packets, std::vector<double> flat) :
			m_payload_bytes(payload_bytes),
			m_packets(packets),
			m_flat(std::move(flat))
	{
		if (m_flat.size() != payload_bytes + header_fields * packets)
			throw DimensionError("feature vector of length " + std::to_string(m_flat.size()) + " for Nb=" + std::to_string(payload_bytes) + ", Np="
					+ std::to_string(packets));
	}
	std::span<const double> FeatureVector::hdr_row(std::size_t packet) const
	{
		return std::span<const double>(m_flat).subspan(m_payload_bytes + packet * header_fields, header_fields);
	}

	FeatureVector extract_features(const Flow &flow, const ExtractionConfig &cfg)
	{
		cfg.validate();
		if (flow.packets.empty())
			throw DataError("empty flow");
		FeatureVector fv(cfg.payload_bytes, cfg.packets);

		std::size_t filled = 0;
		for (const Packet &p : flow.packets)
		{
			for (std::size_t i = 0; i < p.payload.size() && filled < cfg.payload_bytes; i++)
				fv.pay_at(filled++) = static_cast<double>(p.payload[i]) / 255.0;
			if (filled == cfg.payload_bytes)
				break;
		}

		const auto clamp01 = [](double v)
		{
			return std::clamp(v, 0.0, 1.0);
		};
		const std::size_t rows = std::min(cfg.packets, flow.packets.size());
		for (std::size_t r = 0; r < rows; r++)
		{
			const Packet &p = flow.packets[r];
			const double window = p.protocol == Protocol::TCP ? static_cast<double>(p.tcp_window) : 0.0;
			const double iat = r == 0 ? 0.0 : p.timestamp - flow.packets[r - 1].timestamp;
			fv.hdr_at(r, PayloadLength) = clamp01(static_cast<double>(p.payload.size()) / cfg.header_scales[PayloadLength]);
			fv.hdr_at(r, TcpWindow) = clamp01(window / cfg.header_scales[TcpWindow]);
			fv.hdr_at(r, InterArrival) = clamp01(iat / cfg.header_scales[InterArrival]);
			fv.hdr_at(r, Direction) = (flow.is_forward(p) ? 0.0 : 1.0) / cfg.header_scales[Direction];
		}
		return fv;
	}
}
