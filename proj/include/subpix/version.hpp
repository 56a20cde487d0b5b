#ifndef SUBPIX_VERSION_HPP
#define SUBPIX_VERSION_HPP

namespace subpix {

inline constexpr const char* kVersion = "subpix-v0.1.0";

}  // namespace subpix

#endif  // SUBPIX_VERSION_HPP
