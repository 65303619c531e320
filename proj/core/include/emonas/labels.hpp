#pragma once

#include <array>
#include <cstddef>
#include <string_view>

namespace emonas {

/// The four emotion classes, in class-index order.
inline constexpr std::array<std::string_view, 4> kEmotionNames = {"neutral", "angry", "happy",
                                                                   "sad"};
inline constexpr std::size_t kNumEmotions = kEmotionNames.size();

/// Class index of a name; throws ValueError on anything else.
int parse_emotion(std::string_view name);
std::string_view emotion_name(int label);

}  // namespace emonas
