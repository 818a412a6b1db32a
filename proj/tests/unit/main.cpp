#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "paramshift/runtime.hpp"

int main(int argc, char** argv) {
  paramshift::configure_allocator();
  doctest::Context context(argc, argv);
  return context.run();
}
