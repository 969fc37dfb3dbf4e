#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace snake::cli
{
	/// Sectioned key-value settings; every key has a built-in default.
	class Settings
	{
		public:
			/// All defaults.
			Settings();

			/// Overlays a config file. Throws ConfigError for unknown sections or keys
			/// and for values that do not parse.
			void load(const std::filesystem::path &path);
			void load_text(const std::string &text);

			double real(const std::string &key) const;
			std::size_t count(const std::string &key) const;
			std::uint64_t u64(const std::string &key) const;
			void set(const std::string &key, const std::string &value);

			/// "section.key = value" lines in key order.
			std::string canonical() const;
			/// Hex SHA-256 of canonical().
			std::string hash() const;

			const std::map<std::string, std::string>& values() const noexcept
			{
				return m_values;
			}

		private:
			std::map<std::string, std::string> m_values;
	};

	/// Default config file text, with every recognised key.
	std::string default_config_text();

	struct RunConfig
	{
			std::string command;
			Settings settings;
			std::uint64_t seed = 0;
			std::map<std::string, std::filesystem::path> paths;
			std::filesystem::path log = "snake.log";
	};

	/// Hex SHA-256 of a byte string.
	std::string sha256_hex(const std::string &bytes);

	/// Library versions recorded in the reproducibility line.
	std::string version_string();

	/// Runs one command line (args exclude the program name). Returns the exit status:
	/// 0 success, 2 usage or configuration error, 1 any other failure.
	int run(std::span<const std::string> args, std::ostream &out, std::ostream &err);
	int run(int argc, const char *const *argv);
}
