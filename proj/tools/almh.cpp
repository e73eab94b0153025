#include "almh/cli.hpp"

int main(int argc, char** argv) {
  try {
    return almh::cli::run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return almh::cli::kInternal;
  }
}
