#include "emonas/labels.hpp"

#include <string>

#include "emonas/errors.hpp"

namespace emonas {

int parse_emotion(std::string_view name) {
  for (std::size_t i = 0; i < kEmotionNames.size(); ++i) {
    if (kEmotionNames[i] == name) return static_cast<int>(i);
  }
  throw ValueError("unknown emotion label '" + std::string(name) + "'");
}

std::string_view emotion_name(int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= kEmotionNames.size()) {
    throw ValueError("emotion label " + std::to_string(label) + " out of range");
  }
  return kEmotionNames[static_cast<std::size_t>(label)];
}

}  // namespace emonas
