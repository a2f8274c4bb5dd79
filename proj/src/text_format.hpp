#ifndef TIPPING_SRC_TEXT_FORMAT_HPP
#define TIPPING_SRC_TEXT_FORMAT_HPP

#include <fmt/format.h>

#include <string>

namespace tipping::detail {

// Shortest round-trip text with at least one decimal: 12 -> "12.0", 1.25 -> "1.25".
inline std::string amount(double value) {
  std::string text = fmt::format("{}", value);
  if (text.find_first_of(".eEn") == std::string::npos) text += ".0";
  return text;
}

// Fixed two decimals without a negative zero.
inline std::string two_decimals(double value) {
  std::string text = fmt::format("{:.2f}", value);
  if (text == "-0.00") text = "0.00";
  return text;
}

}  // namespace tipping::detail

#endif
