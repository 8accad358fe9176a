#pragma once

namespace dsk {

// `git describe` of the source tree at configure time, or "unknown".
const char* git_describe();

}  // namespace dsk
