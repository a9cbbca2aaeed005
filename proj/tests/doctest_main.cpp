#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "kamg/runtime.hpp"

int main(int argc, char** argv) {
  kamg::tune_allocator_for_tensor_churn();
  return doctest::Context(argc, argv).run();
}
