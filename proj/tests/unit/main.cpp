#define DOCTEST_CONFIG_IMPLEMENT
#include <spdlog/spdlog.h>

#include "doctest.h"

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::warn);
  doctest::Context context(argc, argv);
  return context.run();
}
