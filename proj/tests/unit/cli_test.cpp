#include <snake/cli/cli.hpp>
#include <snake/error.hpp>
#include <snake/fusion/fusion.hpp>
#include <snake/io/container.hpp>
#include <snake/io/feature_file.hpp>

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace snake;
namespace fs = std::filesystem;

namespace
{
	/// 16 payload bytes + 2 packets = 24 features, matching a 4 x 6 encoder.
	const char *tiny_spec = "[generator]\nseed = 7\nflows_per_class = 30\nseparation = 3.0\npayload_bytes = 16\npackets = 2\n\n"
			"[task.encap]\nlabels = vpn,nonvpn\n\n[task.app]\nlabels = chat,email,streaming\n\n"
			"[class.vpn_chat]\nlabels = encap:vpn,app:chat\n\n[class.vpn_email]\nlabels = encap:vpn,app:email\n\n"
			"[class.nonvpn_streaming]\nlabels = encap:nonvpn,app:streaming\n\n[class.nonvpn_chat]\nlabels = encap:nonvpn,app:chat\n";

	const char *tiny_config = "[features]\npayload_bytes = 16\npackets = 2\n\n"
			"[encoder]\ntokens = 4\nwidth = 6\nheads = 2\nfeed_forward = 8\n\n"
			"[expert]\nepochs = 3\nhidden = 12\nbatch_size = 16\n\n[tower]\nhidden = 10\n\n"
			"[finetune.I]\nepochs = 5\nbatch_size = 32\n";

	struct Workspace
	{
			fs::path dir;

			explicit Workspace(const std::string &name)
			{
				dir = fs::temp_directory_path() / ("snake_cli_" + name);
				fs::remove_all(dir);
				fs::create_directories(dir);
				std::ofstream(dir / "spec.ini") << tiny_spec;
				std::ofstream(dir / "snake.ini") << tiny_config;
			}
			~Workspace()
			{
				fs::remove_all(dir);
			}
			std::string at(const std::string &name) const
			{
				return (dir / name).string();
			}
	};

	struct Outcome
	{
			int status;
			std::string out;
			std::string err;
	};

	Outcome snake_run(const Workspace &w, std::vector<std::string> args)
	{
		std::vector<std::string> full = { "--config", w.at("snake.ini"), "--log", w.at("snake.log") };
		full.insert(full.end(), args.begin(), args.end());
		std::ostringstream out, err;
		const int status = cli::run(full, out, err);
		return { status, out.str(), err.str() };
	}

	void expect_ok(const Outcome &o)
	{
		EXPECT_EQ(o.status, 0) << o.err;
	}

	/// gen, two experts, Mode I fusion, classify and eval inside `w`.
	void pipeline(const Workspace &w)
	{
		expect_ok(snake_run(w, { "gen", "--spec", w.at("spec.ini"), "--out", w.at("data") }));
		const std::string features = w.at("data/features.snkf");
		expect_ok(snake_run(w, { "train-expert", "--data", features, "--task", "encap", "--out", w.at("e1.snke"), "--trace", w.at("e1.csv") }));
		expect_ok(snake_run(w, { "train-expert", "--data", features, "--task", "app", "--out", w.at("e2.snke") }));
		expect_ok(snake_run(w, { "fuse", "--mode", "I", "--experts", w.at("e1.snke"), w.at("e2.snke"), "--data", features, "--out", w.at("fused.snke"), "--trace",
				w.at("ft.csv") }));
		expect_ok(snake_run(w, { "classify", "--model", w.at("fused.snke"), "--data", features, "--out", w.at("pred.csv") }));
		expect_ok(snake_run(w, { "eval", "--model", w.at("fused.snke"), "--data", features, "--out", w.at("metrics.csv"), "--confusion-prefix", w.at("conf_") }));
	}

	const std::vector<std::string> pipeline_outputs = { "data/flows.tsv", "data/labels.csv", "data/features.snkf", "e1.snke", "e1.csv", "e2.snke", "fused.snke", "ft.csv",
			"pred.csv", "metrics.csv", "conf_encap.csv", "conf_app.csv" };
}

TEST(Cli, UsageErrorsExitTwo)
{
	Workspace w("usage");
	EXPECT_EQ(snake_run(w, { }).status, 2);
	EXPECT_EQ(snake_run(w, { "frobnicate" }).status, 2);
	EXPECT_EQ(snake_run(w, { "gen", "--out", w.at("x"), "--bogus" }).status, 2);
	EXPECT_EQ(snake_run(w, { "gen", "--out", w.at("x") }).status, 2);
	EXPECT_EQ(snake_run(w, { "gen", "--preset", "mode1", "--spec", w.at("spec.ini"), "--out", w.at("x") }).status, 2);
	EXPECT_EQ(snake_run(w, { "train-expert", "--data", w.at("missing.snkf"), "--task", "a", "--out", w.at("e.snke") }).status, 2);
	EXPECT_EQ(snake_run(w, { "classify", "--model", w.at("spec.ini"), "--data", w.at("spec.ini"), "--out", w.at("nodir/p.csv") }).status, 2);
	EXPECT_FALSE(fs::exists(w.at("x")));

	std::ofstream(w.at("snake.ini")) << "[expert]\nepochs_typo = 3\n";
	const auto bad = snake_run(w, { "gen", "--spec", w.at("spec.ini"), "--out", w.at("x") });
	EXPECT_EQ(bad.status, 2);
	EXPECT_NE(bad.err.find("epochs_typo"), std::string::npos);

	std::ifstream log(w.at("snake.log"));
	std::size_t lines = 0;
	for (std::string line; std::getline(log, line); lines++)
		EXPECT_NE(line.find("status=2"), std::string::npos) << line;
	EXPECT_EQ(lines, 8u);
}

TEST(Cli, RuntimeFailureExitsOne)
{
	Workspace w("runtime");
	std::ofstream(w.at("junk.snke")) << "not a model";
	expect_ok(snake_run(w, { "gen", "--spec", w.at("spec.ini"), "--out", w.at("data") }));
	const auto o = snake_run(w, { "classify", "--model", w.at("junk.snke"), "--data", w.at("data/features.snkf"), "--out", w.at("p.csv") });
	EXPECT_EQ(o.status, 1);
	EXPECT_NE(o.err.find("magic"), std::string::npos);
}

TEST(Cli, GenDeterministicAndSeeded)
{
	Workspace w("gen");
	expect_ok(snake_run(w, { "gen", "--spec", w.at("spec.ini"), "--out", w.at("a") }));
	expect_ok(snake_run(w, { "gen", "--spec", w.at("spec.ini"), "--out", w.at("b") }));
	expect_ok(snake_run(w, { "gen", "--spec", w.at("spec.ini"), "--seed", "8", "--out", w.at("c") }));
	for (const char *f : { "flows.tsv", "labels.csv", "features.snkf" })
	{
		EXPECT_EQ(io::read_file(w.dir / "a" / f), io::read_file(w.dir / "b" / f)) << f;
	}
	EXPECT_EQ(io::read_file(w.dir / "a" / "labels.csv"), io::read_file(w.dir / "c" / "labels.csv"));
	EXPECT_NE(io::read_file(w.dir / "a" / "flows.tsv"), io::read_file(w.dir / "c" / "flows.tsv"));
	EXPECT_NE(io::read_file(w.dir / "a" / "features.snkf"), io::read_file(w.dir / "c" / "features.snkf"));
	const auto table = io::read_feature_file(w.dir / "a" / "features.snkf");
	EXPECT_EQ(table.samples.size(), 120u);
	EXPECT_EQ(table.dimension(), 24u);
}

TEST(Cli, IngestReproducesGeneratedFeatures)
{
	Workspace w("ingest");
	expect_ok(snake_run(w, { "gen", "--spec", w.at("spec.ini"), "--out", w.at("data") }));
	expect_ok(snake_run(w, { "ingest", "--input", w.at("data/flows.tsv"), "--labels", w.at("data/labels.csv"), "--spec", w.at("spec.ini"), "--out",
			w.at("again.snkf") }));
	EXPECT_EQ(io::read_feature_file(w.at("again.snkf")), io::read_feature_file(w.at("data/features.snkf")));

	expect_ok(snake_run(w, { "ingest", "--input", w.at("data/flows.tsv"), "--out", w.at("bare.snkf") }));
	const auto bare = io::read_feature_file(w.at("bare.snkf"));
	EXPECT_FALSE(bare.labelled());
	EXPECT_EQ(bare.samples.size(), 120u);
	EXPECT_EQ(bare.dimension(), 24u);
}

TEST(Cli, ModeOnePipelineAndByteIdenticalRerun)
{
	Workspace a("rerun_a");
	Workspace b("rerun_b");
	pipeline(a);
	pipeline(b);

	const auto model = fusion::load_fused(a.at("fused.snke"));
	ASSERT_EQ(model.gates.size(), 2u);
	for (const auto &g : model.gates)
		EXPECT_EQ(g.mode, fusion::GateMode::Default);

	std::ifstream pred(a.at("pred.csv"));
	std::string header;
	std::getline(pred, header);
	EXPECT_EQ(header, "flow_id,encap,app,encap_confidence,app_confidence");
	std::size_t rows = 0;
	for (std::string line; std::getline(pred, line);)
		rows++;
	EXPECT_EQ(rows, 120u);

	for (const auto &f : pipeline_outputs)
	{
		ASSERT_TRUE(fs::exists(a.dir / f)) << f;
		EXPECT_EQ(io::read_file(a.dir / f), io::read_file(b.dir / f)) << f;
	}
}

TEST(Cli, LogRecordsSeedAndConfigHash)
{
	Workspace w("log");
	expect_ok(snake_run(w, { "--seed", "42", "gen", "--spec", w.at("spec.ini"), "--out", w.at("data") }));
	cli::Settings s;
	s.load(w.at("snake.ini"));
	std::ifstream log(w.at("snake.log"));
	std::string line;
	std::getline(log, line);
	EXPECT_NE(line.find("command=gen"), std::string::npos);
	EXPECT_NE(line.find("seed=7"), std::string::npos);
	EXPECT_NE(line.find("status=0"), std::string::npos);
	EXPECT_NE(line.find("nlohmann_json="), std::string::npos);
	s.set("run.seed", "42");
	EXPECT_NE(line.find("config_sha256=" + s.hash()), std::string::npos);
}

TEST(Settings, DefaultsCanonicalAndHash)
{
	cli::Settings s;
	EXPECT_EQ(s.count("encoder.tokens"), 24u);
	EXPECT_EQ(s.count("encoder.width"), 38u);
	EXPECT_DOUBLE_EQ(s.real("expert.learning_rate"), 1e-3);
	EXPECT_DOUBLE_EQ(s.real("finetune.I.learning_rate"), 1e-4);
	EXPECT_DOUBLE_EQ(s.real("split.train") + s.real("split.validation") + s.real("split.test"), 1.0);

	cli::Settings parsed;
	parsed.load_text(cli::default_config_text());
	EXPECT_EQ(parsed.canonical(), s.canonical());
	EXPECT_EQ(parsed.hash(), s.hash());
	EXPECT_EQ(s.hash().size(), 64u);

	parsed.load_text("[expert]\nepochs = 7\n");
	EXPECT_EQ(parsed.count("expert.epochs"), 7u);
	EXPECT_NE(parsed.hash(), s.hash());
}

TEST(Settings, BadInputRejected)
{
	cli::Settings s;
	EXPECT_THROW(s.load_text("[nosuch]\nx = 1\n"), ConfigError);
	EXPECT_THROW(s.load_text("[expert]\nepochs = many\n"), ConfigError);
	EXPECT_THROW(s.load_text("[expert]\nepochs = -3\n"), ConfigError);
	EXPECT_THROW(s.load_text("[expert]\nlearning_rate = 1e-3x\n"), ConfigError);
	EXPECT_THROW(s.real("nosuch.key"), ConfigError);
	EXPECT_THROW(s.load("/nonexistent/snake.ini"), ConfigError);
}

TEST(Settings, Sha256KnownVectors)
{
	EXPECT_EQ(cli::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
	EXPECT_EQ(cli::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
