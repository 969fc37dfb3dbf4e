#pragma once

#include <snake/ingest/flow.hpp>

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace snake::ingest
{
	/// Header columns, in order.
	enum HeaderField : std::size_t
	{
		PayloadLength = 0,
		TcpWindow = 1,
		InterArrival = 2,
		Direction = 3
	};
	inline constexpr std::size_t header_fields = 4;

	struct ExtractionConfig
	{
			std::size_t payload_bytes = 784; ///< Nb
			std::size_t packets = 32; ///< Np
			/// Divisors for payload length, TCP window, inter-arrival seconds, direction.
			std::array<double, header_fields> header_scales = { 1500.0, 65535.0, 1.0, 1.0 };

			std::size_t dimension() const noexcept
			{
				return payload_bytes + header_fields * packets;
			}
			void validate() const;
	};

	/// PAY (Nb bytes scaled to [0,1]) followed by HDR (Np rows x 4 columns), flattened.
	class FeatureVector
	{
		public:
			FeatureVector() = default;
			FeatureVector(std::size_t payload_bytes, std::size_t packets);
			FeatureVector(std::size_t payload_bytes, std::size_t packets, std::vector<double> flat);

			std::span<const double> flat() const noexcept
			{
				return m_flat;
			}
			std::span<const double> pay() const noexcept
			{
				return std::span<const double>(m_flat).first(m_payload_bytes);
			}
			std::span<const double> hdr_row(std::size_t packet) const;
			double hdr(std::size_t packet, std::size_t field) const
			{
				return m_flat[m_payload_bytes + packet * header_fields + field];
			}
			std::size_t payload_bytes() const noexcept
			{
				return m_payload_bytes;
			}
			std::size_t packets() const noexcept
			{
				return m_packets;
			}
			std::size_t dimension() const noexcept
			{
				return m_flat.size();
			}

			double& pay_at(std::size_t i)
			{
				return m_flat[i];
			}
			double& hdr_at(std::size_t packet, std::size_t field)
			{
				return m_flat[m_payload_bytes + packet * header_fields + field];
			}

			friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

		private:
			std::size_t m_payload_bytes = 0;
			std::size_t m_packets = 0;
			std::vector<double> m_flat;
	};

	/// Throws DataError("empty flow") for a flow without packets.
	FeatureVector extract_features(const Flow &flow, const ExtractionConfig &cfg = { });
}
