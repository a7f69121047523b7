#pragma once

#include <string>
#include <string_view>

namespace explkit {

/// Porter (1980) suffix-stripping stemmer, following the reference C
/// implementation. Input is expected lowercase; words of length <= 2 are
/// returned unchanged.
std::string porter_stem(std::string_view word);

}  // namespace explkit
