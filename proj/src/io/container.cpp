#include <snake/io/container.hpp>
#include <snake/error.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace snake::io
{
	namespace
	{
		constexpr char magic[4] = { 'S', 'N', 'K', 'E' };
		constexpr std::size_t preamble = 4 + 4 + 8;
	}

	void append_le(std::string &out, std::uint32_t v)
	{
		for (int i = 0; i < 4; i++)
			out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
	}
	void append_le(std::string &out, std::uint64_t v)
	{
		for (int i = 0; i < 8; i++)
			out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
	}
	void append_le(std::string &out, double v)
	{
		append_le(out, std::bit_cast<std::uint64_t>(v));
	}
	std::uint32_t load_le32(const char *p) noexcept
	{
		std::uint32_t v = 0;
		for (int i = 3; i >= 0; i--)
			v = (v << 8) | static_cast<unsigned char>(p[i]);
		return v;
	}
	std::uint64_t load_le64(const char *p) noexcept
	{
		std::uint64_t v = 0;
		for (int i = 7; i >= 0; i--)
			v = (v << 8) | static_cast<unsigned char>(p[i]);
		return v;
	}
	double load_le_double(const char *p) noexcept
	{
		return std::bit_cast<double>(load_le64(p));
	}

	const nn::Tensor& Container::tensor(const std::string &name) const
	{
		for (const NamedTensor &t : tensors)
			if (t.name == name)
				return t.value;
		throw FormatError("container has no tensor '" + name + "'");
	}

	void Container::add_params(const std::string &prefix, const nn::ParamSet &set)
	{
		for (const auto &e : set.entries())
			tensors.push_back(NamedTensor { prefix + e.name, e.value });
	}

	nn::ParamSet Container::params(const std::string &prefix, const std::string &set_name) const
	{
		nn::ParamSet set(set_name);
		for (const NamedTensor &t : tensors)
			if (t.name.compare(0, prefix.size(), prefix) == 0)
				set.add(t.name.substr(prefix.size()), t.value);
		if (set.tensor_count() == 0)
			throw FormatError("container has no tensors under '" + prefix + "'");
		return set;
	}

	std::string encode_container(const Container &c)
	{
		nlohmann::json header = c.header;
		nlohmann::json list = nlohmann::json::array();
		for (const NamedTensor &t : c.tensors)
			list.push_back( { { "name", t.name }, { "shape", t.value.shape() } });
		header["tensors"] = std::move(list);
		const std::string text = header.dump();

		std::string out(magic, 4);
		append_le(out, container_version);
		append_le(out, static_cast<std::uint64_t>(text.size()));
		out += text;
		for (const NamedTensor &t : c.tensors)
			for (double v : t.value.data())
				append_le(out, v);
		return out;
	}

	Container decode_container(const std::string &bytes)
	{
		if (bytes.size() < 4 || std::memcmp(bytes.data(), magic, 4) != 0)
			throw FormatError("not a model file: bad magic (expected SNKE)");
		if (bytes.size() < preamble)
			throw FormatError("model file truncated inside the preamble");
		const std::uint32_t version = load_le32(bytes.data() + 4);
		if (version != container_version)
			throw FormatError("unsupported model file version " + std::to_string(version) + " (this build reads version " + std::to_string(container_version) + ")");
		const std::uint64_t header_len = load_le64(bytes.data() + 8);
		if (header_len > bytes.size() - preamble)
			throw FormatError("model file truncated inside the header");

		Container c;
		try
		{
			c.header = nlohmann::json::parse(bytes.begin() + preamble, bytes.begin() + static_cast<std::ptrdiff_t>(preamble + header_len));
		} catch (const nlohmann::json::exception &e)
		{
			throw FormatError(std::string("model file header is not valid JSON: ") + e.what());
		}
		if (!c.header.is_object() || !c.header.contains("tensors") || !c.header["tensors"].is_array())
			throw FormatError("model file header lacks a tensor list");

		std::size_t offset = preamble + header_len;
		std::vector<std::pair<std::string, std::vector<std::size_t>>> declared;
		std::size_t expected = offset;
		try
		{
			for (const auto &t : c.header["tensors"])
			{
				auto shape = t.at("shape").get<std::vector<std::size_t>>();
				expected += nn::volume(shape) * sizeof(double);
				declared.emplace_back(t.at("name").get<std::string>(), std::move(shape));
			}
		} catch (const nlohmann::json::exception &e)
		{
			throw FormatError(std::string("model file tensor list is malformed: ") + e.what());
		}
		if (bytes.size() < expected)
			throw FormatError("model file truncated: expected " + std::to_string(expected) + " bytes, found " + std::to_string(bytes.size()));
		if (bytes.size() > expected)
			throw FormatError("model file has " + std::to_string(bytes.size() - expected) + " trailing bytes");

		for (auto &[name, shape] : declared)
		{
			nn::Tensor value(shape);
			for (double &v : value.data())
			{
				v = load_le_double(bytes.data() + offset);
				offset += sizeof(double);
			}
			c.tensors.push_back(NamedTensor { std::move(name), std::move(value) });
		}
		c.header.erase("tensors");
		return c;
	}

	std::string read_file(const std::filesystem::path &path)
	{
		std::ifstream in(path, std::ios::binary);
		if (!in)
			throw FormatError("cannot open '" + path.string() + "'");
		return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
	}

	void write_file(const std::filesystem::path &path, const std::string &bytes)
	{
		std::filesystem::path tmp = path;
		tmp += ".tmp";
		{
			std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
			if (!out)
				throw FormatError("cannot write '" + path.string() + "'");
			out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
			if (!out)
				throw FormatError("write to '" + path.string() + "' failed");
		}
		std::filesystem::rename(tmp, path);
	}

	void write_container(const std::filesystem::path &path, const Container &c)
	{
		write_file(path, encode_container(c));
	}

	Container read_container(const std::filesystem::path &path)
	{
		return decode_container(read_file(path));
	}
}
