// Internal graph-construction helper shared by the op translation units.
#pragma once

#include <memory>

#include "morphseg/tensor.hpp"

namespace morphseg::ad::detail {

std::shared_ptr<Node> new_node(Shape shape,
                               std::vector<std::shared_ptr<Node>> inputs);

}  // namespace morphseg::ad::detail
