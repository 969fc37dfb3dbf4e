#pragma once

#include <snake/nn/params.hpp>
#include <snake/nn/tensor.hpp>

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace snake::io
{
	inline constexpr std::uint32_t container_version = 1;

	struct NamedTensor
	{
			std::string name;
			nn::Tensor value;
	};

	/// Model container: "SNKE", u32 version, u64 header length, JSON header, then
	/// fp64 little-endian tensors in the order the header's "tensors" list declares.
	struct Container
	{
			nlohmann::json header = nlohmann::json::object();
			std::vector<NamedTensor> tensors;

			const nn::Tensor& tensor(const std::string &name) const;
			/// Appends every tensor of `set` as "<prefix><param>".
			void add_params(const std::string &prefix, const nn::ParamSet &set);
			/// Rebuilds a ParamSet from tensors named "<prefix><param>", in stored order.
			nn::ParamSet params(const std::string &prefix, const std::string &set_name) const;
	};

	std::string encode_container(const Container &c);
	/// Throws FormatError on bad magic, unsupported version, malformed header,
	/// truncation or trailing bytes.
	Container decode_container(const std::string &bytes);

	void write_container(const std::filesystem::path &path, const Container &c);
	Container read_container(const std::filesystem::path &path);

	std::string read_file(const std::filesystem::path &path);
	/// Writes through a temporary file and renames, so a failed write leaves no partial file.
	void write_file(const std::filesystem::path &path, const std::string &bytes);

	void append_le(std::string &out, std::uint32_t v);
	void append_le(std::string &out, std::uint64_t v);
	void append_le(std::string &out, double v);
	std::uint32_t load_le32(const char *p) noexcept;
	std::uint64_t load_le64(const char *p) noexcept;
	double load_le_double(const char *p) noexcept;
}
