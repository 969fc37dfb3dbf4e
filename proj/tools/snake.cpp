#include <snake/cli/cli.hpp>

int main(int argc, char **argv)
{
	return snake::cli::run(argc, argv);
}
