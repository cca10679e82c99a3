#include "cli.hpp"

int main(int argc, char** argv) {
  return avemdpo::cli::run({argv + 1, argv + argc});
}
