#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "trajtrack/geometry.hpp"

namespace trajtrack {

struct FrameRecord {
  std::size_t frame = 0;
  Box3D box{};
  bool occluded = false;

  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

/// Ground-truth track of one object; frames are contiguous from 0.
struct SequenceRecord {
  std::string sequence_id;
  std::vector<FrameRecord> frames;

  friend bool operator==(const SequenceRecord&, const SequenceRecord&) = default;
};

}  // namespace trajtrack
