#include <cstdio>
#include <exception>

#include "master/cli/commands.hpp"
#include "master/util/error.hpp"

int main(int argc, char** argv) {
  try {
    return master::cli::run_cli(argc, argv);
  } catch (const master::Error& e) {
    std::fprintf(stderr, "error[%s]: %s\n", e.code().c_str(), e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error[internal]: %s\n", e.what());
    return 1;
  }
}
