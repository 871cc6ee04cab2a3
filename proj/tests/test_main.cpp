// Copyright 2026 ChannelLift Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest_compat.hpp"

#include "channellift/common.hpp"

int main(int argc, char** argv) {
  channellift::configure_determinism();
  torch::manual_seed(0);
  return doctest::Context(argc, argv).run();
}
