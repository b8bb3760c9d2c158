#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include "mcm/numerics/runtime.hpp"

int main(int argc, char** argv) {
  mcm::configure_allocator();
  doctest::Context context(argc, argv);
  return context.run();
}
