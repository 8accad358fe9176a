#include "dsk/version.hpp"

namespace dsk {

const char* git_describe() { return DSK_GIT_DESCRIBE; }

}  // namespace dsk
