#pragma once

#include <string>
#include <string_view>

namespace t3d::service {

std::string base64_encode(std::string_view bytes);
/// Standard alphabet with padding; whitespace is not accepted. Throws InvalidArgument on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace t3d::service
