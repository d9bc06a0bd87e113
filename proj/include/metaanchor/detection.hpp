// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

#include "metaanchor/anchors.hpp"
#include "metaanchor/boxes.hpp"

namespace metaanchor {

struct Detection {
  Box box;             // corner form, pixels
  double score = 0.0;  // sigmoid probability
  int class_id = 0;
  AnchorEncoding source_anchor;
  std::size_t anchor_index = 0;  // position of source_anchor in the queried list
  int level = 0;
};

}  // namespace metaanchor
