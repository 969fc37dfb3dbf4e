#pragma once

#include <stdexcept>
#include <string>

namespace snake
{
	class Error : public std::runtime_error
	{
		public:
			using std::runtime_error::runtime_error;
	};

	/// Tensor or vector extents that do not agree.
	class DimensionError : public Error
	{
		public:
			using Error::Error;
	};

	/// Invalid user configuration: gate subsets, fusion relations, config files.
	class ConfigError : public Error
	{
		public:
			using Error::Error;
	};

	/// Malformed or incompatible on-disk artifact.
	class FormatError : public Error
	{
		public:
			using Error::Error;
	};

	/// Data that violates a precondition (empty flow, degenerate task, missing labels).
	class DataError : public Error
	{
		public:
			using Error::Error;
	};
}
