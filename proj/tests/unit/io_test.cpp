#include <snake/error.hpp>
#include <snake/io/container.hpp>
#include <snake/io/feature_file.hpp>
#include <snake/nn/random.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

using namespace snake;

namespace
{
	io::FeatureTable random_table(std::uint64_t seed, std::size_t n, bool labelled)
	{
		nn::CounterStream rng(seed);
		io::FeatureTable t;
		t.payload_bytes = 1 + rng.next_below(6);
		t.packets = 1 + rng.next_below(3);
		if (labelled)
		{
			t.task_ids = { "encap", "app" };
			t.label_maps = { expert::LabelMap( { "vpn", "plain" }), expert::LabelMap( { "chat", "mail", "video" }) };
		}
		for (std::size_t i = 0; i < n; i++)
		{
			expert::Sample s;
			s.features.resize(t.dimension());
			for (double &v : s.features)
				v = rng.next_normal();
			if (labelled)
				s.labels = { rng.next_below(2), rng.next_below(3) };
			s.domain = rng.next_below(2) ? "A" : "B";
			s.flow_id = "flow-" + std::to_string(seed) + "-" + std::to_string(i);
			t.samples.push_back(std::move(s));
		}
		return t;
	}

	std::string error_of(const std::string &bytes)
	{
		try
		{
			io::decode_feature_table(bytes);
		} catch (const FormatError &e)
		{
			return e.what();
		}
		return "";
	}
}

TEST(FeatureFileProperty, RoundTripIsExact)
{
	for (std::uint64_t seed = 1; seed <= 30; seed++)
	{
		const auto t = random_table(seed, seed % 7, seed % 3 != 0);
		const auto back = io::decode_feature_table(io::encode_feature_table(t));
		EXPECT_EQ(back, t) << "seed " << seed;
		EXPECT_EQ(io::encode_feature_table(back), io::encode_feature_table(t));
	}
}

TEST(FeatureFile, ExtremeValuesSurvive)
{
	auto t = random_table(3, 2, true);
	t.samples[0].features[0] = std::numeric_limits<double>::denorm_min();
	t.samples[0].features[1 % t.dimension()] = -0.0;
	t.samples[1].features[0] = std::numeric_limits<double>::max();
	const auto back = io::decode_feature_table(io::encode_feature_table(t));
	EXPECT_EQ(back.samples[0].features[0], std::numeric_limits<double>::denorm_min());
	EXPECT_EQ(back.samples[1].features[0], std::numeric_limits<double>::max());
}

TEST(FeatureFile, DatasetConversion)
{
	const auto t = random_table(5, 6, true);
	const auto d = t.dataset();
	EXPECT_EQ(d.size(), 6u);
	EXPECT_EQ(d.feature_dim(), t.dimension());
	EXPECT_EQ(d.task_ids(), t.task_ids);
	EXPECT_EQ(io::FeatureTable::from_dataset(d, t.payload_bytes, t.packets), t);
	EXPECT_THROW(io::FeatureTable::from_dataset(d, t.payload_bytes + 1, t.packets), Error);
	EXPECT_THROW(random_table(5, 6, false).dataset(), DataError);
}

TEST(FeatureFile, CorruptInputsRejected)
{
	const std::string good = io::encode_feature_table(random_table(9, 4, true));
	std::string bad = good;
	bad[0] = 'X';
	EXPECT_NE(error_of(bad).find("magic"), std::string::npos);
	bad = good;
	bad[4] = 7;
	EXPECT_NE(error_of(bad).find("version"), std::string::npos);
	EXPECT_NE(error_of(good.substr(0, 10)).find("truncated"), std::string::npos);
	EXPECT_NE(error_of(good.substr(0, good.size() - 1)).find("truncated"), std::string::npos);
	EXPECT_NE(error_of(good + "z").find("trailing"), std::string::npos);

	// label index 3 for a two-label task
	std::string out_of_range = good;
	const std::size_t last_sample = good.size() - 2 * 4;
	out_of_range[last_sample] = 3;
	EXPECT_NE(error_of(out_of_range).find("out of range"), std::string::npos);
}

TEST(FeatureFile, DiskRoundTrip)
{
	const auto path = std::filesystem::temp_directory_path() / "snake_io_test.snkf";
	const auto t = random_table(11, 5, true);
	io::write_feature_file(path, t);
	EXPECT_EQ(io::read_feature_file(path), t);
	std::filesystem::remove(path);
	EXPECT_THROW(io::read_feature_file(path), FormatError);
}

TEST(Container, RoundTripAndErrors)
{
	io::Container c;
	c.header["kind"] = "test";
	nn::Tensor a = nn::Tensor::matrix(2, 3);
	for (std::size_t i = 0; i < a.data().size(); i++)
		a.data()[i] = 0.5 * static_cast<double>(i) - 1.0;
	c.tensors.push_back( { "a", a });
	const std::string bytes = io::encode_container(c);
	const auto back = io::decode_container(bytes);
	EXPECT_EQ(back.header.value("kind", ""), "test");
	EXPECT_EQ(back.tensor("a"), a);
	EXPECT_THROW(back.tensor("b"), FormatError);
	EXPECT_THROW(io::decode_container(bytes.substr(0, bytes.size() - 8)), FormatError);
	EXPECT_THROW(io::decode_container(bytes + "x"), FormatError);
	std::string bad = bytes;
	bad[1] = 'Q';
	EXPECT_THROW(io::decode_container(bad), FormatError);
}
