#include <snake/cli/cli.hpp>
#include <snake/error.hpp>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace snake::cli
{
	namespace
	{
		namespace pt = boost::property_tree;

		enum class Kind
		{
			Real,
			Count
		};

		struct Default
		{
				const char *key;
				const char *value;
				Kind kind;
		};

		constexpr Default defaults[] = {
				{ "run.seed", "0", Kind::Count },
				{ "features.payload_bytes", "784", Kind::Count },
				{ "features.packets", "32", Kind::Count },
				{ "encoder.tokens", "24", Kind::Count },
				{ "encoder.width", "38", Kind::Count },
				{ "encoder.heads", "2", Kind::Count },
				{ "encoder.feed_forward", "152", Kind::Count },
				{ "expert.learning_rate", "0.001", Kind::Real },
				{ "expert.batch_size", "32", Kind::Count },
				{ "expert.epochs", "50", Kind::Count },
				{ "expert.dropout", "0.2", Kind::Real },
				{ "expert.hidden", "256", Kind::Count },
				{ "split.train", "0.75", Kind::Real },
				{ "split.validation", "0.10", Kind::Real },
				{ "split.test", "0.15", Kind::Real },
				{ "tower.hidden", "256", Kind::Count },
				{ "tower.dropout", "0.2", Kind::Real },
				{ "finetune.I.learning_rate", "0.0001", Kind::Real },
				{ "finetune.I.batch_size", "128", Kind::Count },
				{ "finetune.I.epochs", "5", Kind::Count },
				{ "finetune.II.learning_rate", "0.001", Kind::Real },
				{ "finetune.II.batch_size", "128", Kind::Count },
				{ "finetune.II.epochs", "10", Kind::Count },
				{ "finetune.III.learning_rate", "0.001", Kind::Real },
				{ "finetune.III.batch_size", "128", Kind::Count },
				{ "finetune.III.epochs", "10", Kind::Count },
				{ "convergence.samples", "200", Kind::Count },
				{ "convergence.steps", "50", Kind::Count },
				{ "convergence.probes", "20", Kind::Count },
				{ "convergence.probe_scale", "0.01", Kind::Real },
				{ "convergence.step_fraction", "0.5", Kind::Real },
				{ "convergence.restarts", "4", Kind::Count },
				{ "anomaly.grace_epochs", "4", Kind::Count },
				{ "anomaly.gap_threshold", "0.15", Kind::Real },
				{ "anomaly.relative_tolerance", "0.001", Kind::Real } };

		const Default* find_default(const std::string &key)
		{
			for (const Default &d : defaults)
				if (key == d.key)
					return &d;
			return nullptr;
		}

		std::string trim(const std::string &s)
		{
			const auto a = s.find_first_not_of(" \t\r");
			if (a == std::string::npos)
				return { };
			return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
		}

		double parse_real(const std::string &key, const std::string &text)
		{
			double v = 0.0;
			const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
			if (ec != std::errc() || end != text.data() + text.size() || !std::isfinite(v))
				throw ConfigError("setting '" + key + "' expects a number, got '" + text + "'");
			return v;
		}

		std::uint64_t parse_count(const std::string &key, const std::string &text)
		{
			std::uint64_t v = 0;
			const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
			if (ec != std::errc() || end != text.data() + text.size())
				throw ConfigError("setting '" + key + "' expects a non-negative integer, got '" + text + "'");
			return v;
		}
	}

	Settings::Settings()
	{
		for (const Default &d : defaults)
			m_values[d.key] = d.value;
	}

	void Settings::set(const std::string &key, const std::string &value)
	{
		const Default *d = find_default(key);
		if (!d)
			throw ConfigError("unknown setting '" + key + "'");
		const std::string v = trim(value);
		if (d->kind == Kind::Real)
			parse_real(key, v);
		else
			parse_count(key, v);
		m_values[key] = v;
	}

	void Settings::load_text(const std::string &text)
	{
		pt::ptree tree;
		try
		{
			std::istringstream in(text);
			pt::read_ini(in, tree);
		} catch (const pt::ini_parser_error &e)
		{
			throw ConfigError(std::string("config: ") + e.what());
		}
		for (const auto &[section, body] : tree)
		{
			if (body.empty())
				throw ConfigError("config: key '" + section + "' outside a section");
			for (const auto &[key, value] : body)
				set(section + "." + key, value.data());
		}
	}

	void Settings::load(const std::filesystem::path &path)
	{
		std::ifstream in(path);
		if (!in)
			throw ConfigError("cannot read config file '" + path.string() + "'");
		std::ostringstream text;
		text << in.rdbuf();
		load_text(text.str());
	}

	double Settings::real(const std::string &key) const
	{
		const auto it = m_values.find(key);
		if (it == m_values.end())
			throw ConfigError("unknown setting '" + key + "'");
		return parse_real(key, it->second);
	}

	std::uint64_t Settings::u64(const std::string &key) const
	{
		const auto it = m_values.find(key);
		if (it == m_values.end())
			throw ConfigError("unknown setting '" + key + "'");
		return parse_count(key, it->second);
	}

	std::size_t Settings::count(const std::string &key) const
	{
		return static_cast<std::size_t>(u64(key));
	}

	std::string Settings::canonical() const
	{
		std::string s;
		for (const auto &[k, v] : m_values)
			s += k + " = " + v + "\n";
		return s;
	}

	std::string Settings::hash() const
	{
		return sha256_hex(canonical());
	}

	std::string default_config_text()
	{
		std::string out;
		std::string current;
		for (const Default &d : defaults)
		{
			const std::string key = d.key;
			const auto dot = key.rfind('.');
			const std::string section = key.substr(0, dot);
			if (section != current)
			{
				out += (current.empty() ? "[" : "\n[") + section + "]\n";
				current = section;
			}
			out += key.substr(dot + 1) + " = " + d.value + "\n";
		}
		return out;
	}

	std::string sha256_hex(const std::string &bytes)
	{
		unsigned char digest[EVP_MAX_MD_SIZE];
		unsigned int len = 0;
		if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
			throw Error("SHA-256 computation failed");
		static constexpr char hex[] = "0123456789abcdef";
		std::string out;
		for (unsigned int i = 0; i < len; i++)
		{
			out.push_back(hex[digest[i] >> 4]);
			out.push_back(hex[digest[i] & 15]);
		}
		return out;
	}
}
